#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use rodforge_core::formats::{format_scene, parse_scene};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(parsed) = parse_scene(text, Path::new("fuzz")) {
        let again = parse_scene(&format_scene(&parsed, ""), Path::new("fuzz")).unwrap();
        assert_eq!(again, parsed);
    }
});
