#![no_main]
use libfuzzer_sys::fuzz_target;
use ttaverify::protocol::compare_runs;
use ttaverify_cli::report::parse_verify_report;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(report) = parse_verify_report(text) {
            let run = report.result.to_run();
            let delta = compare_runs(&run, &run).unwrap();
            assert_eq!(delta.mean_delta_pp, 0.0);
        }
    }
});
