//! The file parsers on the checked-in fuzz corpus and on arbitrary input.

use std::path::PathBuf;

use proptest::prelude::*;

use mfbm_cli::formats::{parse_path_csv, parse_variogram_csv};
use mfbm_cli::manifest::RunManifest;

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {}", dir.display());
    files.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn corpus_seeds_parse() {
    for seed in corpus("manifest_json") {
        let m = RunManifest::from_json(std::str::from_utf8(&seed).unwrap()).unwrap();
        assert_eq!(RunManifest::from_json(&m.to_json()).unwrap(), m);
    }
    for seed in corpus("variogram_csv") {
        assert!(parse_variogram_csv(&seed).unwrap().len() >= 2);
    }
    for seed in corpus("path_csv") {
        let p = parse_path_csv(&seed).unwrap();
        assert_eq!(p.values.len(), p.grid.cells() + 1);
    }
}

proptest! {
    #[test]
    fn parsers_never_panic(data in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = parse_path_csv(&data);
        let _ = parse_variogram_csv(&data);
        if let Ok(text) = std::str::from_utf8(&data) {
            let _ = RunManifest::from_json(text);
        }
    }

    #[test]
    fn numeric_csv_rows_never_panic(rows in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 0..20)) {
        let mut text = String::from("t,x\n");
        let mut vario = String::from("lag,value\n");
        for (a, b) in &rows {
            text.push_str(&format!("{a},{b}\n"));
            vario.push_str(&format!("{a},{b}\n"));
        }
        if let Ok(p) = parse_path_csv(text.as_bytes()) {
            prop_assert_eq!(p.values[0], 0.0);
        }
        if let Ok(v) = parse_variogram_csv(vario.as_bytes()) {
            prop_assert!(v.iter().all(|r| r.lag > 0.0));
        }
    }
}
