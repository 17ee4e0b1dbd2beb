#![no_main]
use libfuzzer_sys::fuzz_target;
use ttaverify_cli::parse_seeds;

fuzz_target!(|data: &[u8]| {
    // Bounded so huge ranges do not exhaust memory.
    if data.len() > 32 {
        return;
    }
    if let Ok(spec) = std::str::from_utf8(data) {
        if let Some((a, b)) = spec.split_once("..") {
            let lo = a.trim().parse::<u64>().unwrap_or(0);
            let hi = b.trim_start_matches('=').trim().parse::<u64>().unwrap_or(0);
            if hi.saturating_sub(lo) > 100_000 {
                return;
            }
        }
        if let Ok(seeds) = parse_seeds(spec) {
            assert!(!seeds.is_empty());
        }
    }
});
