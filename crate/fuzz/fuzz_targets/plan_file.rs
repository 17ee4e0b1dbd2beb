#![no_main]
use libfuzzer_sys::fuzz_target;
use ttaverify::records::{parse_plan_file, write_lines};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(plans) = parse_plan_file(text) {
            assert_eq!(parse_plan_file(&write_lines(&plans)).unwrap(), plans);
        }
    }
});
