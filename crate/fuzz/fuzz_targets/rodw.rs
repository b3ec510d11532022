#![no_main]

use libfuzzer_sys::fuzz_target;
use rodforge_nn::checkpoint::{load_model, read_tensors};
use rodforge_nn::ModelConfig;

fuzz_target!(|data: &[u8]| {
    let _ = read_tensors(data);
    let cfg = ModelConfig {
        snippet_len: 4,
        chirps: 2,
        channel_div: 32,
        stages: 1,
        front_kernel: [3, 3, 3],
        body_kernel: [3, 3, 3],
        up_kernel: 4,
        inception_lengths: [1, 3, 5],
        offset_kernel: [1, 3, 3],
        ..ModelConfig::default()
    };
    let _ = load_model(data, cfg);
});
