//! Execution of each subcommand. Commands produce their output files in
//! memory; the caller writes them together with the manifest.

use serde::Serialize;

use mfbm_core::decomposition::{quadratic_variation, Decomposer, PathRef};
use mfbm_core::gaussian_paths::PathSimulator;
use mfbm_core::kernel_solve::KernelSolver;
use mfbm_core::regularity::{
    audit_lemma_bounds, build_variogram, fit_power_law, BoundReport, HolderFit, Variogram, VariogramConfig,
};
use mfbm_core::{Alpha, Grid};

use crate::args::{
    AuditArgs, Command, DecomposeArgs, HolderArgs, KernelChoice, SimulateArgs, SolveKernelArgs, VariogramArgs,
};
use crate::error::{CliError, CliResult};
use crate::formats::{csv_bytes, fmt_f64, json_bytes, parse_path_csv, parse_variogram_csv};
use crate::plot::variogram_svg;

/// Files and console lines produced by one command.
#[derive(Debug, Default)]
pub struct Products {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
}

impl Products {
    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn say(&mut self, line: String) {
        self.summary.push(line);
    }
}

pub fn run_command(cmd: &Command) -> CliResult<Products> {
    match cmd {
        Command::SolveKernel(a) => solve_kernel(a),
        Command::Simulate(a) => simulate(a),
        Command::Decompose(a) => decompose(a),
        Command::Variogram(a) => variogram(a),
        Command::Holder(a) => holder(a),
        Command::AuditBounds(a) => audit_bounds(a),
    }
}

fn solve_kernel(a: &SolveKernelArgs) -> CliResult<Products> {
    let grid = Grid::new(a.horizon, a.n)?;
    let solver = KernelSolver::new(grid, Alpha::from_hurst(a.hurst)?);
    let field = match a.kind {
        KernelChoice::L => solver.solve_l(a.s.unwrap_or_default())?,
        KernelChoice::G => solver.solve_g(a.t.unwrap_or_default())?,
        KernelChoice::D => {
            let l_t = solver.solve_l(a.t.unwrap_or_default())?;
            solver.solve_d(a.s.unwrap_or_default(), &l_t)?
        }
    };
    let rows = field
        .midpoints()
        .into_iter()
        .zip(field.values())
        .map(|(r, v)| vec![fmt_f64(r), fmt_f64(*v)]);
    let mut out = Products::default();
    out.file("kernel.csv", csv_bytes(&["r", "value"], rows));
    let (lo, hi) = field
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    out.say(format!(
        "{:?} kernel on [0, {}] with {} cells: values in [{lo:.6e}, {hi:.6e}]",
        a.kind,
        field.upper(),
        field.values().len()
    ));
    Ok(out)
}

fn simulate(a: &SimulateArgs) -> CliResult<Products> {
    let grid = Grid::new(a.horizon, a.n)?;
    let sim = PathSimulator::new(grid, a.hurst)?;
    let mut out = Products::default();
    let times = grid.nodes();
    if a.paths == 1 {
        let p = sim.path(a.seed, a.path_index);
        let rows = (0..times.len())
            .map(|i| vec![fmt_f64(times[i]), fmt_f64(p.fbm[i]), fmt_f64(p.bm[i]), fmt_f64(p.mixed[i])]);
        out.file("path.csv", csv_bytes(&["t", "fbm", "bm", "mixed"], rows));
        out.say(format!("one path, {} cells, fBm by {}", a.n, sim.sampler().method_name()));
        return Ok(out);
    }
    // sums of x and x² per component and node, accumulated in path order
    let width = times.len();
    let mut acc = vec![0.0; 6 * width];
    const CHUNK: u64 = 256;
    let end = a.path_index + a.paths as u64;
    let mut start = a.path_index;
    while start < end {
        let stop = (start + CHUNK).min(end);
        let paths: Vec<_> = {
            use rayon::prelude::*;
            (start..stop).into_par_iter().map(|i| sim.path(a.seed, i)).collect()
        };
        for p in &paths {
            for (c, comp) in [&p.fbm, &p.bm, &p.mixed].into_iter().enumerate() {
                for (i, x) in comp.iter().enumerate() {
                    acc[2 * c * width + i] += x;
                    acc[(2 * c + 1) * width + i] += x * x;
                }
            }
        }
        start = stop;
    }
    let n = a.paths as f64;
    let rows = (0..width).map(|i| {
        let mut row = vec![fmt_f64(times[i])];
        for c in 0..3 {
            let s = acc[2 * c * width + i];
            let ss = acc[(2 * c + 1) * width + i];
            let mean = s / n;
            let var = ((ss - s * mean) / (n - 1.0)).max(0.0);
            row.push(fmt_f64(mean));
            row.push(fmt_f64(var));
        }
        row
    });
    let header = ["t", "mean_fbm", "var_fbm", "mean_bm", "var_bm", "mean_mixed", "var_mixed"];
    out.file("ensemble.csv", csv_bytes(&header, rows));
    out.say(format!("{} paths, {} cells, fBm by {}", a.paths, a.n, sim.sampler().method_name()));
    Ok(out)
}

#[derive(Serialize)]
struct DecompositionSummary {
    cells: usize,
    decimation: usize,
    max_abs_residual: f64,
    max_abs_x: f64,
    relative_residual: f64,
    bbar_quadratic_variation: f64,
    min_g_diagonal: f64,
}

fn decompose(a: &DecomposeArgs) -> CliResult<Products> {
    let (grid, values, path_ref) = match &a.input {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            let data = parse_path_csv(&bytes).map_err(|m| CliError::format(path, m))?;
            if data.grid.cells() > 4096 {
                return Err(CliError::format(path, "paths longer than 4096 cells are not supported"));
            }
            (data.grid, data.values, PathRef::default())
        }
        None => {
            let grid = Grid::new(a.horizon, a.n.unwrap_or_default())?;
            let p = PathSimulator::new(grid, a.hurst)?.path(a.seed, a.path_index);
            let r = PathRef::of(&p);
            (grid, p.mixed, r)
        }
    };
    if a.decimation > grid.cells() {
        return Err(CliError::usage(format!("--decimation exceeds the {} cells of the path", grid.cells())));
    }
    let solver = KernelSolver::new(grid, Alpha::from_hurst(a.hurst)?);
    let dec = Decomposer::new(&solver, a.decimation)?;
    let (drift, inn) = dec.decompose(&values, path_ref)?;
    let times = inn.times();
    let rows = (0..times.len()).map(|j| {
        let k = inn.t_subset[j];
        vec![
            fmt_f64(times[j]),
            fmt_f64(values[k]),
            fmt_f64(drift.phi[j]),
            fmt_f64(inn.m_values[j]),
            fmt_f64(inn.bbar[j]),
            fmt_f64(inn.residual[j]),
        ]
    });
    let mut out = Products::default();
    out.file("decomposition.csv", csv_bytes(&["t", "X", "phi", "M", "bbar", "residual"], rows));
    let max_abs_x = values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let max_abs_residual = inn.max_abs_residual();
    let summary = DecompositionSummary {
        cells: grid.cells(),
        decimation: a.decimation,
        max_abs_residual,
        max_abs_x,
        relative_residual: if max_abs_x > 0.0 { max_abs_residual / max_abs_x } else { 0.0 },
        bbar_quadratic_variation: quadratic_variation(&inn.bbar),
        min_g_diagonal: dec.kernels().diagonal().iter().cloned().fold(f64::INFINITY, f64::min),
    };
    out.file("decomposition.json", json_bytes(&summary));
    out.say(format!(
        "max |X − B̄ + ∫φ| = {max_abs_residual:.6e} ({:.4}% of max |X|)",
        100.0 * summary.relative_residual
    ));
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub method: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub target: f64,
    pub window: [f64; 2],
    pub slope_stderr: f64,
    pub points: usize,
}

impl FitRecord {
    fn new(method: &str, fit: &HolderFit) -> Self {
        Self {
            method: method.to_string(),
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            target: fit.target,
            window: [fit.lag_window.0, fit.lag_window.1],
            slope_stderr: fit.slope_stderr,
            points: fit.points,
        }
    }
}

fn variogram(a: &VariogramArgs) -> CliResult<Products> {
    let mut curves: Vec<(Variogram, HolderFit)> = Vec::new();
    for method in a.method.methods() {
        let config = VariogramConfig {
            hurst: a.hurst,
            horizon: a.horizon,
            base_point: a.t0.unwrap_or(a.horizon / 2.0),
            lag_count: a.lags,
            cells: a.n,
            method,
            paths: a.paths,
            seed: a.seed,
        };
        let v = build_variogram(&config)?;
        let fit = v.fit(a.window())?;
        curves.push((v, fit));
    }
    let rows = curves.iter().flat_map(|(v, _)| {
        (0..v.lags.len()).map(move |k| {
            vec![
                fmt_f64(v.lags[k]),
                fmt_f64(v.values[k]),
                fmt_f64(v.lags[k].ln()),
                fmt_f64(v.values[k].ln()),
                v.method.to_string(),
                fmt_f64(v.stderr[k]),
            ]
        })
    });
    let mut out = Products::default();
    let header = ["lag", "value", "log_lag", "log_value", "method", "stderr"];
    out.file("variogram.csv", csv_bytes(&header, rows));
    let fits: Vec<FitRecord> = curves.iter().map(|(v, f)| FitRecord::new(v.method.as_str(), f)).collect();
    out.file("fit.json", json_bytes(&fits));
    if a.svg {
        let refs: Vec<(&Variogram, &HolderFit)> = curves.iter().map(|(v, f)| (v, f)).collect();
        out.file("variogram.svg", variogram_svg(&refs).into_bytes());
    }
    for f in &fits {
        out.say(format!(
            "{}: slope {:.4} ± {:.4} (target {:.4}), R² {:.5}, {} lags",
            f.method, f.slope, f.slope_stderr, f.target, f.r_squared, f.points
        ));
    }
    Ok(out)
}

fn holder(a: &HolderArgs) -> CliResult<Products> {
    let bytes = std::fs::read(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let rows = parse_variogram_csv(&bytes).map_err(|m| CliError::format(&a.input, m))?;
    let method = a.method.clone().or_else(|| rows[0].method.clone());
    let picked: Vec<_> = rows
        .iter()
        .filter(|r| method.is_none() || r.method == method)
        .collect();
    if picked.is_empty() {
        return Err(CliError::usage(format!("no rows for method {}", method.unwrap_or_default())));
    }
    let lags: Vec<f64> = picked.iter().map(|r| r.lag).collect();
    let values: Vec<f64> = picked.iter().map(|r| r.value).collect();
    let lo = a.window_min.unwrap_or_else(|| lags.iter().cloned().fold(f64::INFINITY, f64::min));
    let hi = a.window_max.unwrap_or_else(|| lags.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let fit = fit_power_law(&lags, &values, (lo, hi), 4.0 * a.hurst - 3.0)?;
    let name = method.unwrap_or_else(|| "input".to_string());
    let record = FitRecord::new(&name, &fit);
    let mut out = Products::default();
    out.say(format!(
        "{name}: slope {:.4} ± {:.4} (target {:.4}), R² {:.5}, {} lags",
        fit.slope, fit.slope_stderr, fit.target, fit.r_squared, fit.points
    ));
    out.file("fit.json", json_bytes(&vec![record]));
    Ok(out)
}

#[derive(Serialize)]
struct AuditFile<'a> {
    hurst: f64,
    alpha: f64,
    s: f64,
    t: f64,
    parts: &'a [BoundReport],
}

fn audit_bounds(a: &AuditArgs) -> CliResult<Products> {
    let alpha = Alpha::from_hurst(a.hurst)?;
    let audit = audit_lemma_bounds(alpha, a.s, a.t, &a.sweep)?;
    let mut out = Products::default();
    let file = AuditFile { hurst: a.hurst, alpha: audit.alpha, s: audit.s, t: audit.t, parts: &audit.parts };
    out.file("bounds.json", json_bytes(&file));
    for p in &audit.parts {
        out.say(format!("part {}: stability ratio {:.6}", p.lemma_part.as_str(), p.stability_ratio));
    }
    Ok(out)
}
