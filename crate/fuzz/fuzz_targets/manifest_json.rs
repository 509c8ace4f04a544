#![no_main]

use libfuzzer_sys::fuzz_target;
use mfbm_cli::manifest::RunManifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = RunManifest::from_json(text) {
            // anything accepted must survive a round trip
            assert_eq!(RunManifest::from_json(&m.to_json()).as_ref(), Ok(&m));
        }
    }
});
