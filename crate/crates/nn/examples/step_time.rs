//! Times forward and forward+backward passes of the default network.
//!
//! `cargo run --release -p rodforge-nn --example step_time -- [H] [steps] [desk]`

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rodforge_nn::train::{loss_and_grads, sgd_step};
use rodforge_nn::{ModelConfig, Reduction, RodnetModel, Tensor};

fn main() {
    let mut args = std::env::args().skip(1);
    let hw: usize = args.next().map_or(32, |a| a.parse().expect("H"));
    let steps: usize = args.next().map_or(3, |a| a.parse().expect("steps"));
    let desk = args.next().is_some_and(|a| a == "desk");
    let cfg = if desk {
        ModelConfig {
            front_kernel: [3, 3, 3],
            body_kernel: [5, 3, 3],
            up_kernel: 4,
            offset_kernel: [1, 3, 3],
            ..ModelConfig::default()
        }
    } else {
        ModelConfig::default()
    };
    let mut model = RodnetModel::<f32>::new(cfg.clone()).expect("config");
    println!("parameters: {}", model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::uniform(&[2, cfg.snippet_len, cfg.chirps, hw, hw], 1.0, &mut rng);
    let y = Tensor::full(&[cfg.classes, cfg.snippet_len, hw, hw], 0.1);
    let t = Instant::now();
    model.forward(&x).expect("forward");
    println!("forward: {:.3}s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    for _ in 0..steps {
        let (_, g) = loss_and_grads(&model, &x, &y, Reduction::Sum).expect("step");
        sgd_step(&mut model, &g, 1e-4).expect("update");
    }
    println!("train step: {:.3}s", t.elapsed().as_secs_f64() / steps as f64);
}
