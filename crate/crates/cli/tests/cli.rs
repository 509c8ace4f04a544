use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn mfbm(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mfbm"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = mfbm(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn code(out: &Path, args: &[&str]) -> i32 {
    mfbm(out, args).status.code().expect("exit code")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn flat_kernels_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["solve-kernel", "--kind", "L", "--H", "1.0", "--T", "1", "--s", "1", "--n", "128"]);
    let l = column(&dir.path().join("kernel.csv"), "value");
    assert_eq!(l.len(), 128);
    assert!(l.iter().all(|v| (v + 0.5).abs() < 1e-12));

    ok(dir.path(), &["solve-kernel", "--kind", "g", "--H", "1.0", "--t", "1", "--n", "128"]);
    let g = column(&dir.path().join("kernel.csv"), "value");
    assert!(g.iter().all(|v| (v - 0.5).abs() < 1e-12));
}

#[test]
fn csv_layout_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--H", "0.85", "--n", "64", "--seed", "2"]);
    let bytes = std::fs::read(dir.path().join("path.csv")).unwrap();
    assert!(bytes.starts_with(b"t,fbm,bm,mixed\n"));
    assert!(!bytes.contains(&b'\r'));
    assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 66);
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["tool"], "mfbm");
    assert_eq!(m["command"]["name"], "simulate");
    assert_eq!(m["outputs"], serde_json::json!(["path.csv"]));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["solve-kernel", "--kind", "L", "--H", "0.7", "--s", "1", "--n", "128"]), 1);
    assert_eq!(code(d, &["solve-kernel", "--kind", "L", "--H", "0.85", "--s", "1", "--n", "100"]), 1);
    assert_eq!(code(d, &["solve-kernel", "--kind", "L", "--H", "0.85", "--s", "2", "--n", "128"]), 1);
    assert_eq!(code(d, &["solve-kernel", "--kind", "D", "--H", "0.85", "--s", "1", "--t", "0.5", "--n", "128"]), 1);
    assert_eq!(code(d, &["audit-bounds", "--H", "0.85", "--sweep", "256,128"]), 1);
    assert_eq!(code(d, &["variogram", "--H", "0.85", "--n", "256"]), 1);
    assert_eq!(code(d, &["holder", "--input", "/nonexistent/variogram.csv", "--H", "0.85"]), 1);
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(code(d, &[]), 1);
    assert_eq!(code(d, &["--manifest", "/nonexistent/manifest.json"]), 1);
    assert_eq!(code(d, &["--threads", "0", "simulate", "--H", "0.85", "--n", "64"]), 1);
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["simulate", "--help"]), 0);
    assert!(!d.join("manifest.json").exists());
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let again = dir.path().join("again");
    ok(&first, &["--threads", "1", "decompose", "--H", "0.85", "--n", "128", "--seed", "3"]);
    let manifest = first.join("manifest.json");
    ok(&again, &["--threads", "2", "--manifest", manifest.to_str().unwrap()]);
    for name in ["decomposition.csv", "decomposition.json"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(again.join(name)).unwrap(), "{name}");
    }
    let (a, b) = (json(&manifest), json(&again.join("manifest.json")));
    assert_eq!(a["command"], b["command"]);
    assert_eq!(b["threads"], 2);
}

#[test]
fn flat_decomposition_residual_is_small() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["decompose", "--H", "1.0", "--n", "512", "--seed", "8"]);
    let report = json(&dir.path().join("decomposition.json"));
    assert!(report["relative_residual"].as_f64().unwrap() <= 0.02, "{report}");
    let csv = dir.path().join("decomposition.csv");
    let (header, _) = read_csv(&csv);
    assert_eq!(header, ["t", "X", "phi", "M", "bbar", "residual"]);
}

#[test]
fn decompose_reads_a_simulated_path() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let dec = dir.path().join("dec");
    let direct = dir.path().join("direct");
    ok(&sim, &["simulate", "--H", "0.85", "--n", "256", "--seed", "4"]);
    let input = sim.join("path.csv");
    ok(&dec, &["decompose", "--H", "0.85", "--input", input.to_str().unwrap()]);
    ok(&direct, &["decompose", "--H", "0.85", "--n", "256", "--seed", "4"]);
    let x_file = column(&dec.join("decomposition.csv"), "X");
    let x_direct = column(&direct.join("decomposition.csv"), "X");
    let r_file = column(&dec.join("decomposition.csv"), "residual");
    let r_direct = column(&direct.join("decomposition.csv"), "residual");
    assert_eq!(x_file, x_direct);
    for (a, b) in r_file.iter().zip(&r_direct) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_path_decomposes_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("zero.csv");
    let mut text = String::from("t,x\n");
    for i in 0..=64 {
        text.push_str(&format!("{},0\n", i as f64 / 64.0));
    }
    std::fs::write(&input, text).unwrap();
    ok(dir.path(), &["decompose", "--H", "0.85", "--input", input.to_str().unwrap()]);
    let r = column(&dir.path().join("decomposition.csv"), "residual");
    assert!(r.iter().all(|&v| v == 0.0));
}

#[test]
fn holder_recovers_a_synthetic_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("power.csv");
    let mut text = String::from("lag,value\n");
    for k in 1..=7 {
        let lag = 0.5 / 2f64.powi(k);
        text.push_str(&format!("{lag},{}\n", 3.0 * lag.powf(0.4)));
    }
    std::fs::write(&input, text).unwrap();
    ok(dir.path(), &["holder", "--input", input.to_str().unwrap(), "--H", "0.85"]);
    let fit = &json(&dir.path().join("fit.json"))[0];
    assert!((fit["slope"].as_f64().unwrap() - 0.4).abs() < 1e-12, "{fit}");
    assert!((fit["target"].as_f64().unwrap() - 0.4).abs() < 1e-12);
    assert!((fit["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn variogram_methods_agree_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["variogram", "--H", "0.85", "--n", "512", "--lags", "5", "--method", "all", "--paths", "300",
          "--window-min", "0.01", "--window-max", "0.3", "--svg"],
    );
    let (header, rows) = read_csv(&d.join("variogram.csv"));
    assert_eq!(header, ["lag", "value", "log_lag", "log_value", "method", "stderr"]);
    let pick = |m: &str| -> Vec<f64> { rows.iter().filter(|r| r[4] == m).map(|r| r[1].parse().unwrap()).collect() };
    let (gram, reduced, mc) = (pick("gram"), pick("reduced"), pick("monte-carlo"));
    assert_eq!((gram.len(), reduced.len(), mc.len()), (5, 5, 5));
    for (g, r) in gram.iter().zip(&reduced) {
        assert!((g - r).abs() / r <= 0.02, "gram {g} reduced {r}");
    }
    let fits = json(&d.join("fit.json"));
    assert_eq!(fits.as_array().unwrap().len(), 3);
    let svg = std::fs::read_to_string(d.join("variogram.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("stroke-dasharray"));

    // the variogram file feeds straight back into `holder`
    let refit = d.join("refit");
    let input = d.join("variogram.csv");
    ok(&refit, &["holder", "--input", input.to_str().unwrap(), "--H", "0.85", "--method", "reduced",
                 "--window-min", "0.01", "--window-max", "0.3"]);
    let a = &fits.as_array().unwrap().iter().find(|f| f["method"] == "reduced").unwrap()["slope"];
    let b = &json(&refit.join("fit.json"))[0]["slope"];
    assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn flat_audit_ratios_are_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["audit-bounds", "--H", "1.0", "--sweep", "64,128,256"]);
    let report = json(&dir.path().join("bounds.json"));
    let parts = report["parts"].as_array().unwrap();
    assert_eq!(parts.len(), 4);
    for p in parts {
        assert!((p["stability_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-10, "{p}");
    }
}
