//! Pathwise Doob–Meyer objects along a discretely observed path `X`:
//!
//! * the drift derivative `φ_s = ∫_0^s L(r, s) dX_r`,
//! * the martingale `M_t = ∫_0^t g(s, t) dX_s`,
//! * the innovation `B̄_t = ∫_0^t dM_s / g(s, s)`,
//! * the residual `X_t − B̄_t + ∫_0^t φ_s ds`, which vanishes in the limit.
//!
//! Stochastic integrals are left-point Riemann sums with the kernel taken at
//! cell midpoints. Kernels are solved on a decimated subset of nodes and
//! `∫φ` is the trapezoid rule on that subset.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_paths::SamplePath;
use crate::kernel_solve::{KernelField, KernelSolver};
use crate::quadrature::Grid;

/// Default spacing, in cells, of the nodes at which kernels are solved.
pub const DEFAULT_DECIMATION: usize = 8;

/// Node indices `0, d, 2d, …`, always ending at `n`.
pub fn decimated_subset(cells: usize, decimation: usize) -> Result<Vec<usize>> {
    if decimation == 0 || decimation > cells {
        return Err(Error::invalid(format!("decimation {decimation} outside 1..={cells}")));
    }
    let mut out: Vec<usize> = (0..=cells).step_by(decimation).collect();
    if *out.last().unwrap() != cells {
        out.push(cells);
    }
    Ok(out)
}

/// `L(·, t_k)` for every nonzero node of `subset`, solved in parallel.
pub fn solve_l_fields(solver: &KernelSolver, subset: &[usize]) -> Result<BTreeMap<usize, KernelField>> {
    solve_fields(solver, subset, |s, t| s.solve_l(t))
}

/// `g(·, t_k)` for every nonzero node of `subset`, solved in parallel.
pub fn solve_g_fields(solver: &KernelSolver, subset: &[usize]) -> Result<BTreeMap<usize, KernelField>> {
    solve_fields(solver, subset, |s, t| s.solve_g(t))
}

fn solve_fields<F>(solver: &KernelSolver, subset: &[usize], solve: F) -> Result<BTreeMap<usize, KernelField>>
where
    F: Fn(&KernelSolver, f64) -> Result<KernelField> + Sync,
{
    let grid = solver.grid();
    check_subset(grid, subset)?;
    subset
        .par_iter()
        .filter(|&&k| k > 0)
        .map(|&k| solve(solver, grid.node(k)).map(|f| (k, f)))
        .collect()
}

fn check_subset(grid: &Grid, subset: &[usize]) -> Result<()> {
    if subset.is_empty() || subset[0] != 0 {
        return Err(Error::invalid("node subset must start at 0"));
    }
    if subset.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("node subset must be strictly increasing"));
    }
    if *subset.last().unwrap() > grid.cells() {
        return Err(Error::invalid("node subset exceeds the grid"));
    }
    Ok(())
}

fn check_values(grid: &Grid, values: &[f64]) -> Result<()> {
    if values.len() != grid.cells() + 1 {
        return Err(Error::invalid(format!(
            "path has {} values, grid has {} nodes",
            values.len(),
            grid.cells() + 1
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("path contains non-finite values"));
    }
    Ok(())
}

/// Identity of the path a result was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PathRef {
    pub seed: Option<u64>,
    pub path_index: Option<u64>,
}

impl PathRef {
    pub fn of(path: &SamplePath) -> Self {
        Self { seed: Some(path.seed), path_index: Some(path.path_index) }
    }
}

/// `φ` on a subset of nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPath {
    pub grid: Grid,
    pub s_subset: Vec<usize>,
    pub phi: Vec<f64>,
    pub path_ref: PathRef,
}

impl DriftPath {
    pub fn times(&self) -> Vec<f64> {
        self.s_subset.iter().map(|&k| self.grid.node(k)).collect()
    }

    /// `∫_0^t φ ds` for the piecewise-linear interpolant of `φ`.
    pub fn integral_to(&self, t: f64) -> Result<f64> {
        let times = self.times();
        let last = *times.last().unwrap();
        if !(t >= 0.0 && t <= last * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!("t = {t} outside the drift subset [0, {last}]")));
        }
        let mut acc = 0.0;
        for w in 0..times.len() - 1 {
            let (a, b) = (times[w], times[w + 1]);
            let (fa, fb) = (self.phi[w], self.phi[w + 1]);
            if t >= b {
                acc += 0.5 * (b - a) * (fa + fb);
            } else {
                if t > a {
                    let ft = fa + (fb - fa) * (t - a) / (b - a);
                    acc += 0.5 * (t - a) * (fa + ft);
                }
                break;
            }
        }
        Ok(acc)
    }
}

/// `φ_{s_k} = Σ_i L(m_i, s_k)(X_{i+1} − X_i)` for each `k` in `subset`.
///
/// `values` are the path values at all grid nodes and `fields` holds
/// `L(·, s_k)` keyed by node index; index 0 needs no field.
pub fn compute_phi(
    values: &[f64],
    grid: &Grid,
    fields: &BTreeMap<usize, KernelField>,
    subset: &[usize],
    path_ref: PathRef,
) -> Result<DriftPath> {
    check_subset(grid, subset)?;
    check_values(grid, values)?;
    let dx: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let phi = subset
        .iter()
        .map(|&k| {
            if k == 0 {
                return Ok(0.0);
            }
            let field = fields.get(&k).ok_or(Error::MissingField(k))?;
            check_field(field, grid, k)?;
            Ok(field.values().iter().zip(&dx).map(|(l, d)| l * d).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DriftPath { grid: *grid, s_subset: subset.to_vec(), phi, path_ref })
}

/// [`compute_phi`] on the mixed component of a simulated path.
pub fn compute_phi_path(
    path: &SamplePath,
    fields: &BTreeMap<usize, KernelField>,
    subset: &[usize],
) -> Result<DriftPath> {
    compute_phi(&path.mixed, &path.grid, fields, subset, PathRef::of(path))
}

fn check_field(field: &KernelField, grid: &Grid, k: usize) -> Result<()> {
    if field.grid() != grid || field.s_index() != Some(k) {
        return Err(Error::invalid(format!("kernel field does not belong to node {k} of this grid")));
    }
    Ok(())
}

/// `M`, `B̄` and the decomposition residual on a subset of nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationPath {
    pub grid: Grid,
    pub t_subset: Vec<usize>,
    pub m_values: Vec<f64>,
    pub bbar: Vec<f64>,
    pub residual: Vec<f64>,
}

impl InnovationPath {
    pub fn times(&self) -> Vec<f64> {
        self.t_subset.iter().map(|&k| self.grid.node(k)).collect()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }
}

/// The `g` kernels of a subset in the compact form needed per path: the
/// midpoint values of `g(·, t_k)` and the endpoint value `g(t_k, t_k)`.
#[derive(Debug, Clone)]
pub struct InnovationKernels {
    grid: Grid,
    subset: Vec<usize>,
    rows: Vec<Vec<f64>>,
    diag: Vec<f64>,
}

impl InnovationKernels {
    /// Fails with a numerical error when some `g(t, t) ≤ 0`.
    pub fn new(grid: &Grid, fields: &BTreeMap<usize, KernelField>, subset: &[usize]) -> Result<Self> {
        check_subset(grid, subset)?;
        let mut rows = Vec::with_capacity(subset.len());
        let mut diag = Vec::with_capacity(subset.len());
        for &k in subset {
            if k == 0 {
                rows.push(Vec::new());
                diag.push(1.0);
                continue;
            }
            let field = fields.get(&k).ok_or(Error::MissingField(k))?;
            check_field(field, grid, k)?;
            let gtt = field.nystrom_eval(grid.node(k))?;
            if !(gtt > 0.0) {
                return Err(Error::numerical(format!("g(t, t) = {gtt} is not positive at t = {}", grid.node(k))));
            }
            rows.push(field.values().to_vec());
            diag.push(gtt);
        }
        Ok(Self { grid: *grid, subset: subset.to_vec(), rows, diag })
    }

    /// Solves the `g` kernels on `subset` and packs them.
    pub fn solve(solver: &KernelSolver, subset: &[usize]) -> Result<Self> {
        let fields = solve_g_fields(solver, subset)?;
        Self::new(solver.grid(), &fields, subset)
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// `g(t_k, t_k)` for each subset node (1 at `t = 0` by convention).
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// `M_{t_k} = Σ_i g(m_i, t_k) ΔX_i`.
    pub fn martingale(&self, values: &[f64]) -> Result<Vec<f64>> {
        check_values(&self.grid, values)?;
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().zip(values.windows(2)).map(|(g, w)| g * (w[1] - w[0])).sum())
            .collect())
    }

    /// `B̄` from `M` with right-endpoint normalisation
    /// `ΔB̄_k = (M_{t_{k+1}} − M_{t_k}) / g(t_{k+1}, t_{k+1})`.
    pub fn innovation_from_martingale(&self, m: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(m.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..m.len() {
            acc += (m[k] - m[k - 1]) / self.diag[k];
            out.push(acc);
        }
        out
    }

    /// `M`, `B̄` and the residual `X − B̄ + ∫φ` on this subset; `drift` may
    /// live on a different subset as long as it reaches the last node.
    pub fn innovation(&self, values: &[f64], drift: &DriftPath) -> Result<InnovationPath> {
        if drift.grid != self.grid {
            return Err(Error::invalid("drift path belongs to a different grid"));
        }
        let m_values = self.martingale(values)?;
        let bbar = self.innovation_from_martingale(&m_values);
        let residual = self
            .subset
            .iter()
            .zip(&bbar)
            .map(|(&k, b)| Ok(values[k] - b + drift.integral_to(self.grid.node(k))?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(InnovationPath { grid: self.grid, t_subset: self.subset.clone(), m_values, bbar, residual })
    }
}

/// [`InnovationKernels::innovation`] from a map of `g` fields.
pub fn compute_innovation(
    values: &[f64],
    grid: &Grid,
    g_fields: &BTreeMap<usize, KernelField>,
    subset: &[usize],
    drift: &DriftPath,
) -> Result<InnovationPath> {
    InnovationKernels::new(grid, g_fields, subset)?.innovation(values, drift)
}

/// `Σ (v_{k+1} − v_k)²`.
pub fn quadratic_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

/// All kernels needed to decompose paths on one grid.
#[derive(Debug, Clone)]
pub struct Decomposer {
    grid: Grid,
    subset: Vec<usize>,
    l_fields: BTreeMap<usize, KernelField>,
    kernels: InnovationKernels,
}

impl Decomposer {
    pub fn new(solver: &KernelSolver, decimation: usize) -> Result<Self> {
        let grid = *solver.grid();
        let subset = decimated_subset(grid.cells(), decimation)?;
        let l_fields = solve_l_fields(solver, &subset)?;
        let kernels = InnovationKernels::solve(solver, &subset)?;
        Ok(Self { grid, subset, l_fields, kernels })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn kernels(&self) -> &InnovationKernels {
        &self.kernels
    }

    pub fn decompose(&self, values: &[f64], path_ref: PathRef) -> Result<(DriftPath, InnovationPath)> {
        let drift = compute_phi(values, &self.grid, &self.l_fields, &self.subset, path_ref)?;
        let innovation = self.kernels.innovation(values, &drift)?;
        Ok((drift, innovation))
    }

    pub fn decompose_path(&self, path: &SamplePath) -> Result<(DriftPath, InnovationPath)> {
        if path.grid != self.grid {
            return Err(Error::invalid("path grid differs from the decomposer grid"));
        }
        self.decompose(&path.mixed, PathRef::of(path))
    }
}
