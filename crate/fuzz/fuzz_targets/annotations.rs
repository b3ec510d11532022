#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use rodforge_core::formats::{format_annotations, parse_annotations};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(parsed) = parse_annotations(text, Path::new("fuzz")) {
        let again = parse_annotations(&format_annotations(&parsed, ""), Path::new("fuzz")).unwrap();
        assert_eq!(again, parsed);
    }
});
