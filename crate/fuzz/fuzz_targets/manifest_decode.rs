#![no_main]
use libfuzzer_sys::fuzz_target;
use ttaverify::manifest::{decode, encode};

// Input layout: index text, a NUL byte, then the blob.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else {
        return;
    };
    let Ok(text) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    if let Ok(m) = decode(text, &data[split + 1..]) {
        let (text, blob) = encode(&m).expect("a decoded manifest re-encodes");
        let again = decode(&text, &blob).expect("re-encoded manifest decodes");
        assert_eq!(again.samples, m.samples);
        assert_eq!(again.pairs, m.pairs);
    }
});
