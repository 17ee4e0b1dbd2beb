#![no_main]
use libfuzzer_sys::fuzz_target;
use ttaverify::manifest::parse_index;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(index) = parse_index(text) {
            assert!(index.dim > 0);
        }
    }
});
