#![no_main]
use libfuzzer_sys::fuzz_target;
use ttaverify::manifest::{decode_blob, BLOB_HEADER_LEN};

fuzz_target!(|data: &[u8]| {
    if let Ok(blob) = decode_blob(data) {
        // A decoded blob accounts for every payload byte.
        assert_eq!(BLOB_HEADER_LEN + blob.vector_count() * blob.dim * 4, data.len());
        for i in 0..blob.vector_count() {
            assert_eq!(blob.vector(i).map(<[f32]>::len), Some(blob.dim));
        }
    }
});
