//! Second moments of the drift derivative, variograms and Hölder fits.
//!
//! For `s ≤ t` the cross moment of `φ_s = ∫ L(r, s) dX_r` follows from the
//! covariance of `X`:
//!
//! ```text
//! E φ_s φ_t = ∫_0^s L(r,s)L(r,t) dr + c_H ∫_0^s ∫_0^t L(r,s)L(r',t)|r − r'|^{−α} dr' dr
//! ```
//!
//! ("Gram" form). Using the `L`-equation on the inner integral collapses the
//! variogram `V(s, t) = E(φ_t − φ_s)²` to `−b(I₁ + I₂ + I₃)` with
//!
//! ```text
//! I₁ = ∫_0^s (L(τ,t) − L(τ,s))(t − τ)^{−α} dτ
//! I₂ = ∫_0^s L(τ,s)((s − τ)^{−α} − (t − τ)^{−α}) dτ
//! I₃ = ∫_s^t L(τ,t)(t − τ)^{−α} dτ
//! ```
//!
//! ("reduced" form). Integrands that carry the endpoint singularity of
//! `L(·, u)` twice are integrated on the last two cells against the model
//! `a(u − τ)^{−α} + b` fitted through the last two midpoints.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_paths::{substream, Component, PathSimulator};
use crate::kernel_solve::{KernelField, KernelKind, KernelSolver};
use crate::quadrature::{moment, Alpha, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gram,
    Reduced,
    MonteCarlo,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Gram => "gram",
            Method::Reduced => "reduced",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gram" => Ok(Method::Gram),
            "reduced" => Ok(Method::Reduced),
            "monte-carlo" | "monte_carlo" | "mc" => Ok(Method::MonteCarlo),
            other => Err(Error::invalid(format!("unknown variogram method `{other}`"))),
        }
    }
}

fn check_l(field: &KernelField) -> Result<()> {
    if field.kind() != KernelKind::L {
        return Err(Error::invalid("second moments need L fields"));
    }
    Ok(())
}

fn check_pair(l_s: &KernelField, l_t: &KernelField) -> Result<()> {
    check_l(l_s)?;
    check_l(l_t)?;
    if l_s.grid() != l_t.grid() || l_s.alpha() != l_t.alpha() {
        return Err(Error::invalid("kernel fields live on different grids"));
    }
    if l_s.upper() > l_t.upper() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "need s ≤ t, got s = {}, t = {}",
            l_s.upper(),
            l_t.upper()
        )));
    }
    Ok(())
}

fn check_times(s: f64, t: f64, l_s: &KernelField, l_t: &KernelField) -> Result<()> {
    let tol = 1e-9 * l_s.grid().step();
    if (l_s.upper() - s).abs() > tol || (l_t.upper() - t).abs() > tol {
        return Err(Error::invalid(format!(
            "fields solved for ({}, {}) but ({s}, {t}) requested",
            l_s.upper(),
            l_t.upper()
        )));
    }
    Ok(())
}

fn same_upper(a: &KernelField, b: &KernelField) -> bool {
    (a.upper() - b.upper()).abs() <= 1e-12 * b.upper()
}

/// `∫_0^u L(r, u)² dr` with the endpoint rule on the last two cells.
fn brownian_diagonal(l: &KernelField) -> f64 {
    let p = l.partition();
    let v = l.values();
    match l.tail() {
        Some(tail) => {
            let k = v.len();
            let body: f64 = (0..k - 2).map(|i| p.width(i) * v[i] * v[i]).sum();
            body + tail.product_integral(&tail, l.tail_width())
        }
        None => (0..v.len()).map(|i| p.width(i) * v[i] * v[i]).sum(),
    }
}

/// `E φ_s φ_t` in Gram form for the fields `L(·, s)` and `L(·, t)`, `s ≤ t`.
///
/// The Brownian term is a midpoint sum (endpoint rule when `s = t`); the
/// fractional term integrates `L(·, t)` exactly against the kernel and takes
/// the outer integral at the midpoints of `L(·, s)`.
pub fn cross_moment_gram(l_s: &KernelField, l_t: &KernelField) -> Result<f64> {
    check_pair(l_s, l_t)?;
    let p = l_s.partition();
    let mids = p.midpoints();
    let vs = l_s.values();
    let brownian = if same_upper(l_s, l_t) {
        brownian_diagonal(l_s)
    } else {
        let lt: Vec<f64> = mids.iter().map(|&m| l_t.value_at(m)).collect::<Result<_>>()?;
        (0..vs.len()).map(|i| p.width(i) * vs[i] * lt[i]).sum()
    };
    // collect before summing so the result does not depend on the pool size
    let terms: Vec<f64> = mids
        .par_iter()
        .enumerate()
        .map(|(i, &m)| p.width(i) * vs[i] * l_t.integral_term(m))
        .collect();
    let fractional: f64 = terms.iter().sum();
    Ok(brownian + fractional)
}

/// `E(φ_t − φ_s)²` from three Gram cross moments.
pub fn second_moment_gram(s: f64, t: f64, l_s: &KernelField, l_t: &KernelField) -> Result<f64> {
    check_pair(l_s, l_t)?;
    check_times(s, t, l_s, l_t)?;
    if same_upper(l_s, l_t) {
        return Ok(0.0);
    }
    let tt = cross_moment_gram(l_t, l_t)?;
    let ss = cross_moment_gram(l_s, l_s)?;
    let st = cross_moment_gram(l_s, l_t)?;
    Ok(tt + ss - 2.0 * st)
}

/// `E(φ_t − φ_s)² = −b(I₁ + I₂ + I₃)` and its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedMoment {
    pub value: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

/// `∫_0^u L(τ, u)(u − τ)^{−α} dτ` with the endpoint rule.
fn endpoint_moment(l: &KernelField) -> f64 {
    let p = l.partition();
    let v = l.values();
    let u = l.upper();
    let al = l.alpha();
    let body = |k: usize| -> f64 {
        (0..k)
            .map(|j| {
                let (a, b) = p.cell(j);
                v[j] * moment(a, b, u, al)
            })
            .sum()
    };
    match l.tail() {
        Some(tail) => body(v.len() - 2) + tail.kernel_integral(l.tail_width()),
        None => body(v.len()),
    }
}

/// `∫_0^{min(s, u)} L(τ, u)(t − τ)^{−α} dτ` with `L` piecewise constant.
fn clipped_moment(l: &KernelField, s: f64, t: f64) -> f64 {
    let p = l.partition();
    let v = l.values();
    let al = l.alpha();
    (0..v.len())
        .map_while(|j| {
            let (a, b) = p.cell(j);
            (a < s).then(|| v[j] * moment(a, b.min(s), t, al))
        })
        .sum()
}

/// The reduced form for `s < t`.
pub fn second_moment_reduced(
    s: f64,
    t: f64,
    l_s: &KernelField,
    l_t: &KernelField,
) -> Result<ReducedMoment> {
    check_pair(l_s, l_t)?;
    check_times(s, t, l_s, l_t)?;
    if same_upper(l_s, l_t) {
        return Err(Error::invalid(format!("reduced form needs s < t, got s = t = {s}")));
    }
    let (s, t) = (l_s.upper(), l_t.upper());
    let a_s = endpoint_moment(l_s);
    let a_t = endpoint_moment(l_t);
    let x = clipped_moment(l_s, s, t);
    let j = clipped_moment(l_t, s, t);
    let i1 = j - x;
    let i2 = a_s - x;
    let i3 = a_t - j;
    let value = -l_s.alpha().b_coeff() * (i1 + i2 + i3);
    Ok(ReducedMoment { value, i1, i2, i3 })
}

/// Exact variogram of the flat kernel (`H = 1`), where `φ_t = −X_t/(1 + t)`.
pub fn flat_variogram(s: f64, t: f64) -> f64 {
    t / (1.0 + t) - s / (1.0 + s)
}

/// Lags `t0·2^{−k}`, `k = 1..=count`.
pub fn lag_sequence(base_point: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| base_point * 0.5_f64.powi(k as i32)).collect()
}

/// Parameters of a variogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramConfig {
    pub hurst: f64,
    pub horizon: f64,
    pub base_point: f64,
    pub lag_count: usize,
    pub cells: usize,
    pub method: Method,
    /// Monte Carlo only.
    pub paths: usize,
    /// Monte Carlo only.
    pub seed: u64,
}

impl VariogramConfig {
    /// `t0 = T/2` and six lags.
    pub fn new(hurst: f64, horizon: f64, cells: usize, method: Method) -> Self {
        Self {
            hurst,
            horizon,
            base_point: horizon / 2.0,
            lag_count: 6,
            cells,
            method,
            paths: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variogram {
    pub h: f64,
    pub base_point: f64,
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    /// Monte Carlo standard errors; zero for deterministic methods.
    pub stderr: Vec<f64>,
    pub method: Method,
    pub grid: Grid,
}

impl Variogram {
    /// `[16 h_grid, t0/4]`.
    pub fn default_window(&self) -> (f64, f64) {
        (16.0 * self.grid.step(), self.base_point / 4.0)
    }

    pub fn fit(&self, window: (f64, f64)) -> Result<HolderFit> {
        fit_holder(self, window)
    }
}

/// Smallest lag must cover at least this many grid cells.
pub const MIN_LAG_CELLS: f64 = 8.0;

pub fn build_variogram(config: &VariogramConfig) -> Result<Variogram> {
    let alpha = Alpha::from_hurst(config.hurst)?;
    let grid = Grid::new(config.horizon, config.cells)?;
    let t0 = config.base_point;
    if config.lag_count == 0 {
        return Err(Error::invalid("variogram needs at least one lag"));
    }
    if !(t0 > 0.0 && t0 < config.horizon) {
        return Err(Error::invalid(format!("base point {t0} outside (0, {})", config.horizon)));
    }
    let lags = lag_sequence(t0, config.lag_count);
    if t0 + lags[0] > config.horizon * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "largest lag {} runs past the horizon {}",
            lags[0], config.horizon
        )));
    }
    let smallest = *lags.last().unwrap();
    if smallest < MIN_LAG_CELLS * grid.step() * (1.0 - 1e-12) {
        return Err(Error::invalid(format!(
            "smallest lag {smallest} spans fewer than {MIN_LAG_CELLS} cells of width {}",
            grid.step()
        )));
    }
    let (values, stderr) = match config.method {
        Method::Gram | Method::Reduced => {
            let solver = KernelSolver::new(grid, alpha);
            let l0 = solver.solve_l(t0)?;
            let values = lags
                .par_iter()
                .map(|&d| {
                    let l = solver.solve_l(t0 + d)?;
                    match config.method {
                        Method::Gram => second_moment_gram(l0.upper(), l.upper(), &l0, &l),
                        _ => second_moment_reduced(l0.upper(), l.upper(), &l0, &l).map(|r| r.value),
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            let zeros = vec![0.0; values.len()];
            (values, zeros)
        }
        Method::MonteCarlo => {
            if config.paths < 2 {
                return Err(Error::invalid("Monte Carlo variogram needs at least two paths"));
            }
            let mut times = vec![t0];
            times.extend(lags.iter().map(|d| t0 + d));
            let sampler = DriftSampler::new(grid, config.hurst, &times)?;
            let samples = sampler.ensemble(config.seed, config.paths);
            (1..times.len())
                .map(|k| {
                    let inc: Vec<f64> = samples.iter().map(|p| p[k] - p[0]).collect();
                    sample_variance(&inc)
                })
                .unzip()
        }
    };
    Ok(Variogram { h: config.hurst, base_point: t0, lags, values, stderr, method: config.method, grid })
}

/// Unbiased sample variance and its Gaussian standard error
/// `var·sqrt(2/(N − 1))`.
pub fn sample_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var, var * (2.0 / (n - 1.0)).sqrt())
}

/// Least-squares fit of `log V` against `log δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `4H − 3`.
    pub target: f64,
    pub lag_window: (f64, f64),
    pub slope_stderr: f64,
    pub points: usize,
}

impl HolderFit {
    /// `|slope − x|` in units of the slope standard error.
    pub fn separation_from(&self, x: f64) -> f64 {
        let d = (self.slope - x).abs();
        if self.slope_stderr > 0.0 {
            d / self.slope_stderr
        } else if d > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

/// Minimum number of lags inside the fitting window.
pub const MIN_FIT_POINTS: usize = 4;

pub fn fit_holder(v: &Variogram, window: (f64, f64)) -> Result<HolderFit> {
    fit_power_law(&v.lags, &v.values, window, 4.0 * v.h - 3.0)
}

/// OLS of `log values` on `log lags` over lags inside `window`.
pub fn fit_power_law(lags: &[f64], values: &[f64], window: (f64, f64), target: f64) -> Result<HolderFit> {
    if lags.len() != values.len() {
        return Err(Error::invalid("lags and values differ in length"));
    }
    let (lo, hi) = window;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::invalid(format!("degenerate lag window ({lo}, {hi})")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&d, &v) in lags.iter().zip(values) {
        if d >= lo * (1.0 - 1e-9) && d <= hi * (1.0 + 1e-9) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("variogram value {v} at lag {d} is not positive")));
            }
            xs.push(d.ln());
            ys.push(v.ln());
        }
    }
    let m = xs.len();
    if m < MIN_FIT_POINTS {
        return Err(Error::invalid(format!(
            "window ({lo}, {hi}) holds {m} lags, need at least {MIN_FIT_POINTS}"
        )));
    }
    let mf = m as f64;
    let xm = xs.iter().sum::<f64>() / mf;
    let ym = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("all lags in the window coincide"));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    let slope_stderr = (ss_res / (mf - 2.0) / sxx).sqrt();
    Ok(HolderFit { slope, intercept, r_squared, target, lag_window: window, slope_stderr, points: m })
}

/// Number of halvings in the graded Brownian-bridge refinement of the last
/// cell before each evaluation time.
pub const BRIDGE_LEVELS: usize = 24;

#[derive(Debug, Clone)]
struct EvalWeights {
    node: usize,
    /// Cell averages of `L(·, t)` on all cells of `[0, t]`.
    cells: Vec<f64>,
    /// Averages on the graded sub-intervals of the last cell, ordered
    /// towards `t`; widths `h/2, h/4, …, h/2^L, h/2^L`.
    bridge: Vec<f64>,
}

/// Monte Carlo sampler of `(φ_{t_1}, …, φ_{t_m})` along simulated paths.
///
/// The weights are cell averages of `L(·, t)`: the singular part of the
/// right-hand side is averaged exactly and the smooth remainder is taken at
/// the midpoint. Inside the last cell before `t` the Brownian component is
/// refined by an exact Brownian bridge on a geometric sub-grid, so the
/// square-integrable singularity is resolved.
#[derive(Debug, Clone)]
pub struct DriftSampler {
    simulator: PathSimulator,
    times: Vec<f64>,
    weights: Vec<EvalWeights>,
}

fn average_l(field: &KernelField, a: f64, b: f64) -> f64 {
    let al = field.alpha();
    let c = al.c_coeff();
    let u = field.upper();
    let singular = -c * moment(a, b, u, al) / (b - a);
    singular - field.integral_term(0.5 * (a + b))
}

impl DriftSampler {
    /// Evaluation times must be grid nodes at least two cells from 0.
    pub fn new(grid: Grid, hurst: f64, times: &[f64]) -> Result<Self> {
        let alpha = Alpha::from_hurst(hurst)?;
        let solver = KernelSolver::new(grid, alpha);
        let h = grid.step();
        let weights = times
            .par_iter()
            .map(|&t| {
                let k = grid
                    .node_index(t)
                    .filter(|&k| k >= 2)
                    .ok_or_else(|| Error::invalid(format!("evaluation time {t} is not a grid node ≥ 2h")))?;
                let field = solver.solve_l(grid.node(k))?;
                let p = field.partition();
                let cells = (0..k)
                    .map(|i| {
                        let (a, b) = p.cell(i);
                        let m = p.midpoint(i);
                        let al = field.alpha();
                        let avg_rhs = -al.c_coeff() * moment(a, b, field.upper(), al) / (b - a);
                        field.values()[i] + (avg_rhs - field.rhs(m))
                    })
                    .collect();
                let u = field.upper();
                let mut bridge = Vec::with_capacity(BRIDGE_LEVELS + 1);
                for j in 0..=BRIDGE_LEVELS {
                    let far = h * 0.5_f64.powi(j as i32);
                    let near = if j == BRIDGE_LEVELS { 0.0 } else { far / 2.0 };
                    bridge.push(average_l(&field, u - far, u - near));
                }
                Ok(EvalWeights { node: k, cells, bridge })
            })
            .collect::<Result<Vec<_>>>()?;
        let simulator = PathSimulator::new(grid, hurst)?;
        Ok(Self { simulator, times: times.to_vec(), weights })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `φ` at every evaluation time along path `index` of stream `seed`.
    pub fn sample(&self, seed: u64, index: u64) -> Vec<f64> {
        let path = self.simulator.path(seed, index);
        let mut rng = substream(seed, Component::Bridge, index);
        let h = self.simulator.grid().step();
        self.weights
            .iter()
            .map(|w| {
                let k = w.node;
                let fbm: f64 = (0..k).map(|i| w.cells[i] * (path.fbm[i + 1] - path.fbm[i])).sum();
                let bm: f64 = (0..k - 1).map(|i| w.cells[i] * (path.bm[i + 1] - path.bm[i])).sum();
                // bridge from distance h to distance 0 before t
                let target = path.bm[k];
                let mut cur = path.bm[k - 1];
                let mut dist = h;
                let mut last = 0.0;
                for (j, wj) in w.bridge.iter().enumerate() {
                    let next = if j == BRIDGE_LEVELS {
                        target
                    } else {
                        let step = dist / 2.0;
                        let rest = dist - step;
                        let mean = cur + step / dist * (target - cur);
                        let sd = (step * rest / dist).sqrt();
                        dist = rest;
                        mean + sd * rng.sample::<f64, _>(StandardNormal)
                    };
                    last += wj * (next - cur);
                    cur = next;
                }
                fbm + bm + last
            })
            .collect()
    }

    /// Paths `0..count`, identical for any thread count.
    pub fn ensemble(&self, seed: u64, count: usize) -> Vec<Vec<f64>> {
        (0..count as u64).into_par_iter().map(|p| self.sample(seed, p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LemmaPart {
    #[serde(rename = "i")]
    I,
    #[serde(rename = "ii")]
    Ii,
    #[serde(rename = "iii")]
    Iii,
    #[serde(rename = "composite")]
    Composite,
}

impl LemmaPart {
    pub fn as_str(&self) -> &'static str {
        match self {
            LemmaPart::I => "i",
            LemmaPart::Ii => "ii",
            LemmaPart::Iii => "iii",
            LemmaPart::Composite => "composite",
        }
    }
}

/// Discrete solution-bound constants for one part across a grid sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lemma_part: LemmaPart,
    pub grid_sizes: Vec<usize>,
    pub constants: Vec<f64>,
    /// `max/min` of `constants`.
    pub stability_ratio: f64,
    /// Analytic upper envelope for the constant, where one is known.
    pub envelope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaAudit {
    pub alpha: f64,
    pub s: f64,
    pub t: f64,
    pub parts: Vec<BoundReport>,
}

/// `max_i |num_i| / env_i`; 1 when the envelope vanishes identically and the
/// numerator does too.
fn ratio_constant(num: &[f64], env: &[f64]) -> Result<f64> {
    let env_max = env.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    let num_max = num.iter().fold(0.0_f64, |m, q| m.max(q.abs()));
    if env_max == 0.0 {
        if num_max <= 1e-14 {
            return Ok(1.0);
        }
        return Err(Error::numerical("solution nonzero for a vanishing right-hand side"));
    }
    Ok(num
        .iter()
        .zip(env)
        .filter(|(_, e)| **e > 0.0)
        .fold(0.0_f64, |m, (q, e)| m.max(q.abs() / e)))
}

fn audit_one(alpha: Alpha, s: f64, t: f64, n: usize) -> Result<[f64; 4]> {
    let grid = Grid::new(t, n)?;
    let solver = KernelSolver::new(grid, alpha);
    let al = alpha.value();
    let kern = move |x: f64| if alpha.is_flat() { 1.0 } else { x.powf(-al) };

    let g = solver.solve_g(s)?;
    let c1 = ratio_constant(g.values(), &vec![1.0; g.values().len()])?;

    let l = solver.solve_l(s)?;
    let mids = l.midpoints();
    let weighted: Vec<f64> = mids.iter().zip(l.values()).map(|(m, v)| v * (s - m).powf(al)).collect();
    let c2 = ratio_constant(&weighted, &vec![alpha.c_coeff(); mids.len()])?;

    let f = move |r: f64| kern(s - r) - kern(t - r);
    let q = solver.solve_q(s, std::sync::Arc::new(move |r| if alpha.is_flat() { 0.0 } else { f(r) }))?;
    let env3: Vec<f64> = mids.iter().map(|&m| if alpha.is_flat() { 0.0 } else { f(m) }).collect();
    let c3 = ratio_constant(q.values(), &env3)?;

    let l_t = solver.solve_l(t)?;
    let d = solver.solve_d(s, &l_t)?;
    let spread = (t - s).powf(1.0 - al) / (1.0 - al);
    let env4: Vec<f64> = mids
        .iter()
        .map(|&m| {
            let base = if alpha.is_flat() { 0.0 } else { f(m) };
            base + spread * kern(s - m)
        })
        .collect();
    let c4 = ratio_constant(d.values(), &env4)?;
    Ok([c1, c2, c3, c4])
}

/// Fitted constants of the solution bounds for bounded, `L`-type and
/// difference-type right-hand sides, plus the composite bound on
/// `|L(·, t) − L(·, s)|`, for each grid size in `n_sweep` on `[0, t]`.
pub fn audit_lemma_bounds(alpha: Alpha, s: f64, t: f64, n_sweep: &[usize]) -> Result<LemmaAudit> {
    if n_sweep.is_empty() || n_sweep.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid sweep must be non-empty and strictly increasing"));
    }
    if !(s > 0.0 && s < t && t.is_finite()) {
        return Err(Error::invalid(format!("need 0 < s < t, got s = {s}, t = {t}")));
    }
    let rows = n_sweep
        .par_iter()
        .map(|&n| audit_one(alpha, s, t, n))
        .collect::<Result<Vec<_>>>()?;
    let al = alpha.value();
    let parts = [LemmaPart::I, LemmaPart::Ii, LemmaPart::Iii, LemmaPart::Composite]
        .iter()
        .enumerate()
        .map(|(p, &part)| {
            let constants: Vec<f64> = rows.iter().map(|r| r[p]).collect();
            let max = constants.iter().cloned().fold(f64::MIN, f64::max);
            let min = constants.iter().cloned().fold(f64::MAX, f64::min);
            let envelope = (part == LemmaPart::I).then(|| 2.0 * t.powf(1.0 - al) / (1.0 - 2.0 * al) + 1.0);
            BoundReport {
                lemma_part: part,
                grid_sizes: n_sweep.to_vec(),
                constants,
                stability_ratio: max / min,
                envelope,
            }
        })
        .collect();
    Ok(LemmaAudit { alpha: al, s, t, parts })
}
