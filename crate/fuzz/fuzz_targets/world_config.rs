#![no_main]
use libfuzzer_sys::fuzz_target;
use ttaverify::synthworld::SyntheticWorldConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = SyntheticWorldConfig::parse(text) {
            let back = SyntheticWorldConfig::parse(&cfg.to_text()).unwrap();
            assert_eq!(back.to_text(), cfg.to_text());
            let _ = cfg.validate();
        }
    }
});
