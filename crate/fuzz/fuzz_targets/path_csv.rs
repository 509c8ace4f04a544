#![no_main]

use libfuzzer_sys::fuzz_target;
use mfbm_cli::formats::parse_path_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = parse_path_csv(data) {
        assert_eq!(p.values.len(), p.grid.cells() + 1);
        assert_eq!(p.values[0], 0.0);
    }
});
