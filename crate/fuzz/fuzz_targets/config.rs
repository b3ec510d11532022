#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use rodforge_core::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = PipelineConfig::from_text(text, Path::new("fuzz.cfg"), Path::new(".")) {
        let again = PipelineConfig::from_text(&cfg.canonical(), Path::new("fuzz.cfg"), Path::new(".")).unwrap();
        assert_eq!(again.hash(), cfg.hash());
    }
});
