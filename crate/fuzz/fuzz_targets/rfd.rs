#![no_main]

use libfuzzer_sys::fuzz_target;
use rodforge_core::formats::{parse_rfd, write_rfd};

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = parse_rfd(data) {
        let mut again = Vec::new();
        write_rfd(&mut again, &t).unwrap();
        assert_eq!(again, data);
    }
});
