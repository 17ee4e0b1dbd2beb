#![no_main]
use libfuzzer_sys::fuzz_target;
use ttaverify::records::{parse_score_file, write_lines};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(scores) = parse_score_file(text) {
            assert!(scores.iter().all(|s| (-1.0..=1.0).contains(&s.score)));
            assert_eq!(parse_score_file(&write_lines(&scores)).unwrap(), scores);
        }
    }
});
