#![no_main]

use libfuzzer_sys::fuzz_target;
use mfbm_cli::formats::parse_variogram_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_variogram_csv(data) {
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r.lag > 0.0 && r.lag.is_finite() && r.value.is_finite()));
    }
});
