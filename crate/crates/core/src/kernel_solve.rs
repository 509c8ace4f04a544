//! Product-integration Nyström solver for second-kind equations of the form
//!
//! ```text
//! Q(r) + b ∫_0^u Q(τ) |r − τ|^{−α} dτ = f(r),   0 < r < u,
//! ```
//!
//! with piecewise-constant `Q`, collocation at cell midpoints and exact
//! kernel moments. The right-hand sides of interest are
//!
//! * `L`: `f(r) = −c_H (u − r)^{−α}`, the kernel of the drift derivative;
//! * `g`: `f ≡ 1`, the martingale kernel;
//! * `D`: the difference `L(·, t) − L(·, s)` on `[0, s]`;
//! * `Q`: anything the caller supplies.
//!
//! Upper limits on grid nodes share one Cholesky factorization (the systems
//! are leading blocks of `I + c_H W`); other upper limits get a dedicated LU
//! solve on a partition with a final partial cell.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, PrefixCholesky, RESIDUAL_TOL};
use crate::quadrature::{build_weight_matrix, moment, Alpha, Grid, Partition, SingularTail, WeightMatrix};

/// Right-hand side of a Nyström system, evaluable off the grid.
pub type Rhs = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    L,
    G,
    D,
    Q,
}

/// Piecewise-constant solution of one Nyström system.
#[derive(Clone)]
pub struct KernelField {
    kind: KernelKind,
    alpha: Alpha,
    grid: Grid,
    partition: Partition,
    values: Vec<f64>,
    aux: Option<(f64, f64)>,
    rhs: Rhs,
}

impl fmt::Debug for KernelField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelField")
            .field("kind", &self.kind)
            .field("alpha", &self.alpha.value())
            .field("upper", &self.upper())
            .field("cells", &self.values.len())
            .field("aux", &self.aux)
            .finish()
    }
}

impl KernelField {
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn alpha(&self) -> &Alpha {
        &self.alpha
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Upper limit `u` of the equation.
    pub fn upper(&self) -> f64 {
        self.partition.upper()
    }

    /// Grid index of the upper limit, when it is a node.
    pub fn s_index(&self) -> Option<usize> {
        self.partition.node_index()
    }

    /// Solution values at the partition midpoints.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.partition.midpoints()
    }

    /// `(s, t)` for difference fields.
    pub fn aux(&self) -> Option<(f64, f64)> {
        self.aux
    }

    pub fn rhs(&self, r: f64) -> f64 {
        (self.rhs)(r)
    }

    /// `b ∫_0^u Q(τ)|r − τ|^{−α} dτ` with the piecewise-constant solution.
    pub fn integral_term(&self, r: f64) -> f64 {
        let p = &self.partition;
        let sum: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let (a, b) = p.cell(j);
                v * moment(a, b, r, &self.alpha)
            })
            .sum();
        self.alpha.b_coeff() * sum
    }

    /// Natural Nyström interpolant `Q(r) = f(r) − b ∫ Q(τ)|r − τ|^{−α} dτ`.
    pub fn nystrom_eval(&self, r: f64) -> Result<f64> {
        let u = self.upper();
        if !(r >= 0.0 && r <= u * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!("evaluation point {r} outside [0, {u}]")));
        }
        let f = self.rhs(r);
        if !f.is_finite() {
            return Err(Error::invalid(format!("right-hand side is singular at r = {r}")));
        }
        Ok(f - self.integral_term(r))
    }

    /// Solution value at `r`: the stored value when `r` is a collocation
    /// midpoint, otherwise the Nyström interpolant.
    pub fn value_at(&self, r: f64) -> Result<f64> {
        let p = &self.partition;
        let h = self.grid.step();
        let i = (r / h).floor() as usize;
        if i < self.values.len() && (p.midpoint(i) - r).abs() <= 1e-12 * h {
            return Ok(self.values[i]);
        }
        self.nystrom_eval(r)
    }

    /// Two-term model `a(u − τ)^{−α} + b` through the two midpoints closest
    /// to the upper limit.
    pub fn tail(&self) -> Option<SingularTail> {
        let k = self.values.len();
        if k < 3 {
            return None;
        }
        let u = self.upper();
        let p = &self.partition;
        SingularTail::fit(
            &self.alpha,
            (u - p.midpoint(k - 1), self.values[k - 1]),
            (u - p.midpoint(k - 2), self.values[k - 2]),
        )
    }

    /// Width covered by [`KernelField::tail`], i.e. the last two cells.
    pub fn tail_width(&self) -> f64 {
        let k = self.values.len();
        self.upper() - self.partition.edges()[k - 2]
    }

    /// Cell averages with the last two cells taken from the endpoint model.
    pub fn cell_profile(&self) -> Vec<f64> {
        let mut out = self.values.clone();
        if let Some(tail) = self.tail() {
            let k = out.len();
            let u = self.upper();
            for j in [k - 2, k - 1] {
                let (a, b) = self.partition.cell(j);
                out[j] = tail.integral(u - b, u - a) / (b - a);
            }
        }
        out
    }
}

/// Shared state for all solves on one grid: the weight matrix and, lazily,
/// the Cholesky factor of `I + b W`.
pub struct KernelSolver {
    grid: Grid,
    alpha: Alpha,
    weights: Arc<WeightMatrix>,
    factor: OnceLock<Option<PrefixCholesky>>,
}

impl fmt::Debug for KernelSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSolver")
            .field("grid", &self.grid)
            .field("alpha", &self.alpha.value())
            .finish()
    }
}

impl KernelSolver {
    pub fn new(grid: Grid, alpha: Alpha) -> Self {
        let weights = Arc::new(build_weight_matrix(&grid, &alpha));
        Self { grid, alpha, weights, factor: OnceLock::new() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn alpha(&self) -> &Alpha {
        &self.alpha
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    fn factor(&self) -> Option<&PrefixCholesky> {
        self.factor
            .get_or_init(|| {
                let n = self.grid.cells();
                let b = self.alpha.b_coeff();
                let w = &self.weights;
                let m = DMatrix::from_fn(n, n, |i, j| {
                    let d = if i == j { 1.0 } else { 0.0 };
                    d + b * w.get(i, j)
                });
                PrefixCholesky::new(m)
            })
            .as_ref()
    }

    fn node_residual(&self, x: &[f64], rhs: &[f64]) -> Vec<f64> {
        let b = self.alpha.b_coeff();
        let k = x.len();
        (0..k)
            .map(|i| {
                let row = &self.weights.row(i)[..k];
                let wx: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                rhs[i] - x[i] - b * wx
            })
            .collect()
    }

    fn solve_node_aligned(&self, k: usize, rhs: &[f64]) -> Result<Vec<f64>> {
        let scale = linalg::max_abs(rhs).max(f64::MIN_POSITIVE);
        let Some(chol) = self.factor() else {
            let b = self.alpha.b_coeff();
            let w = &self.weights;
            let m = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.0 } + b * w.get(i, j));
            return linalg::lu_solve(&m, rhs);
        };
        debug_assert!(k <= chol.size());
        let mut x = chol.solve_prefix(rhs);
        let r = self.node_residual(&x, rhs);
        if linalg::max_abs(&r) > RESIDUAL_TOL * scale {
            let dx = chol.solve_prefix(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            let r = self.node_residual(&x, rhs);
            if linalg::max_abs(&r) > RESIDUAL_TOL * scale {
                return Err(Error::numerical("Nyström residual above tolerance after refinement"));
            }
        }
        Ok(x)
    }

    fn solve_partition(&self, partition: &Partition, rhs: &[f64]) -> Result<Vec<f64>> {
        if let Some(k) = partition.node_index() {
            return self.solve_node_aligned(k, rhs);
        }
        let k = partition.len();
        let b = self.alpha.b_coeff();
        let mids = partition.midpoints();
        let m = DMatrix::from_fn(k, k, |i, j| {
            let (lo, hi) = partition.cell(j);
            let d = if i == j { 1.0 } else { 0.0 };
            d + b * moment(lo, hi, mids[i], &self.alpha)
        });
        linalg::lu_solve(&m, rhs)
    }

    fn solve_kind(
        &self,
        kind: KernelKind,
        upper: f64,
        rhs: Rhs,
        aux: Option<(f64, f64)>,
    ) -> Result<KernelField> {
        let partition = Partition::up_to(&self.grid, upper)?;
        let f: Vec<f64> = partition.midpoints().into_iter().map(|m| rhs(m)).collect();
        if let Some(bad) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "right-hand side not finite at midpoint {}",
                partition.midpoint(bad)
            )));
        }
        let values = self.solve_partition(&partition, &f)?;
        Ok(KernelField { kind, alpha: self.alpha, grid: self.grid, partition, values, aux, rhs })
    }

    /// Generic equation with a caller-supplied right-hand side.
    pub fn solve_q(&self, upper: f64, rhs: Rhs) -> Result<KernelField> {
        self.solve_kind(KernelKind::Q, upper, rhs, None)
    }

    /// `L(·, s)`: right-hand side `−c_H (s − r)^{−α}`.
    pub fn solve_l(&self, s: f64) -> Result<KernelField> {
        let alpha = self.alpha;
        let c = alpha.c_coeff();
        let s = self.snap(s);
        let rhs: Rhs = Arc::new(move |r: f64| {
            if alpha.is_flat() {
                -c
            } else if r >= s {
                f64::INFINITY
            } else {
                -c * (s - r).powf(-alpha.value())
            }
        });
        self.solve_kind(KernelKind::L, s, rhs, None)
    }

    /// `g(·, t)`: right-hand side `1`.
    pub fn solve_g(&self, t: f64) -> Result<KernelField> {
        let t = self.snap(t);
        self.solve_kind(KernelKind::G, t, Arc::new(|_| 1.0), None)
    }

    /// `D = L(·, t) − L(·, s)` on `[0, s]` from its own equation, given the
    /// solved `L(·, t)`.
    pub fn solve_d(&self, s: f64, l_t: &KernelField) -> Result<KernelField> {
        if l_t.kind() != KernelKind::L {
            return Err(Error::invalid("solve_d needs an L field for the later time"));
        }
        let t = l_t.upper();
        let s = self.snap(s);
        if s > t + 1e-12 * t {
            return Err(Error::invalid(format!("solve_d needs s ≤ t, got s = {s}, t = {t}")));
        }
        let partition = Partition::up_to(&self.grid, s)?;
        if (t - s).abs() <= 1e-9 * self.grid.step() {
            let values = vec![0.0; partition.len()];
            return Ok(KernelField {
                kind: KernelKind::D,
                alpha: self.alpha,
                grid: self.grid,
                partition,
                values,
                aux: Some((s, t)),
                rhs: Arc::new(|_| 0.0),
            });
        }
        // L(·, t) on [s, t] as (lo, hi, value) pieces
        let profile = l_t.cell_profile();
        let tp = l_t.partition();
        let pieces: Vec<(f64, f64, f64)> = (0..tp.len())
            .filter_map(|j| {
                let (a, b) = tp.cell(j);
                (b > s).then(|| (a.max(s), b, profile[j]))
            })
            .filter(|(a, b, _)| b > a)
            .collect();
        let alpha = self.alpha;
        let b = alpha.b_coeff();
        let rhs: Rhs = Arc::new(move |r: f64| {
            if r >= s && !alpha.is_flat() {
                return f64::INFINITY;
            }
            let tail: f64 = pieces.iter().map(|&(lo, hi, v)| v * moment(lo, hi, r, &alpha)).sum();
            b * (alpha.kernel(s - r) - alpha.kernel(t - r)) - b * tail
        });
        self.solve_kind(KernelKind::D, s, rhs, Some((s, t)))
    }

    /// Max relative discrepancy between `L(r, s)` and the central difference
    /// `(g(r, s+dt) − g(r, s−dt)) / (2 dt g(s, s))` over midpoints
    /// `r ≤ 0.9 s`.
    pub fn check_l_from_g(&self, s: f64, dt: f64) -> Result<f64> {
        let s = self.snap(s);
        if !(dt > 0.0 && s - dt >= 0.9 * s && s + dt <= self.grid.horizon() * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!("difference step {dt} incompatible with s = {s}")));
        }
        let l = self.solve_l(s)?;
        let g_up = self.solve_g(s + dt)?;
        let g_down = self.solve_g(s - dt)?;
        let g_s = self.solve_g(s)?;
        let gss = g_s.nystrom_eval(s)?;
        if gss <= 0.0 {
            return Err(Error::numerical(format!("g(s, s) = {gss} is not positive")));
        }
        let mut worst = 0.0_f64;
        for (i, m) in l.midpoints().into_iter().enumerate() {
            if m > 0.9 * s {
                break;
            }
            let fd = (g_up.value_at(m)? - g_down.value_at(m)?) / (2.0 * dt * gss);
            let li = l.values()[i];
            worst = worst.max((fd - li).abs() / li.abs());
        }
        Ok(worst)
    }

    fn snap(&self, u: f64) -> f64 {
        match self.grid.node_index(u) {
            Some(k) => self.grid.node(k),
            None => u,
        }
    }
}

fn node_time(grid: &Grid, index: usize) -> Result<f64> {
    if index == 0 || index > grid.cells() {
        return Err(Error::invalid(format!("node index {index} outside 1..={}", grid.cells())));
    }
    Ok(grid.node(index))
}

pub fn solve_q(grid: &Grid, alpha: &Alpha, s_index: usize, rhs: Rhs) -> Result<KernelField> {
    let s = node_time(grid, s_index)?;
    KernelSolver::new(*grid, *alpha).solve_q(s, rhs)
}

pub fn solve_l(grid: &Grid, alpha: &Alpha, s_index: usize) -> Result<KernelField> {
    let s = node_time(grid, s_index)?;
    KernelSolver::new(*grid, *alpha).solve_l(s)
}

pub fn solve_g(grid: &Grid, alpha: &Alpha, t_index: usize) -> Result<KernelField> {
    let t = node_time(grid, t_index)?;
    KernelSolver::new(*grid, *alpha).solve_g(t)
}

pub fn solve_d(grid: &Grid, alpha: &Alpha, s_index: usize, t_index: usize) -> Result<KernelField> {
    let s = node_time(grid, s_index)?;
    let t = node_time(grid, t_index)?;
    let solver = KernelSolver::new(*grid, *alpha);
    let l_t = solver.solve_l(t)?;
    solver.solve_d(s, &l_t)
}

pub fn nystrom_eval(field: &KernelField, r: f64) -> Result<f64> {
    field.nystrom_eval(r)
}

pub fn check_l_from_g(grid: &Grid, alpha: &Alpha, s_index: usize, dt: f64) -> Result<f64> {
    let s = node_time(grid, s_index)?;
    KernelSolver::new(*grid, *alpha).check_l_from_g(s, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn solver(h: f64, n: usize) -> KernelSolver {
        KernelSolver::new(Grid::new(1.0, n).unwrap(), Alpha::from_hurst(h).unwrap())
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn flat_kernel_closed_forms() {
        let sv = solver(1.0, 64);
        for s in [0.25, 0.5, 1.0] {
            let l = sv.solve_l(s).unwrap();
            let g = sv.solve_g(s).unwrap();
            for (lv, gv) in l.values().iter().zip(g.values()) {
                assert!((lv + 1.0 / (1.0 + s)).abs() < 1e-12);
                assert!((gv - 1.0 / (1.0 + s)).abs() < 1e-12);
            }
            assert!((g.nystrom_eval(s).unwrap() - 1.0 / (1.0 + s)).abs() < 1e-12);
            assert!((l.nystrom_eval(s / 2.0).unwrap() + 1.0 / (1.0 + s)).abs() < 1e-12);
        }
        let l_t = sv.solve_l(1.0).unwrap();
        let d = sv.solve_d(0.5, &l_t).unwrap();
        for v in d.values() {
            assert!((v - (1.0 / 1.5 - 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn homogeneous_and_constant_rhs() {
        let sv = solver(0.85, 32);
        let q = sv.solve_q(1.0, Arc::new(|_| 0.0)).unwrap();
        assert!(q.values().iter().all(|v| *v == 0.0));
        let flat = solver(1.0, 32);
        let q = flat.solve_q(1.0, Arc::new(|_| 1.0)).unwrap();
        for v in q.values() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-13);
        }
    }

    #[test]
    fn equation_residual_holds() {
        let sv = solver(0.85, 128);
        let l = sv.solve_l(0.75).unwrap();
        let w = sv.weights();
        let b = sv.alpha().b_coeff();
        let k = l.values().len();
        let scale = linalg::max_abs(&l.midpoints().iter().map(|m| l.rhs(*m)).collect::<Vec<_>>());
        for i in 0..k {
            let wx: f64 = (0..k).map(|j| w.get(i, j) * l.values()[j]).sum();
            let res = l.values()[i] + b * wx - l.rhs(l.midpoints()[i]);
            assert!(res.abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn off_node_upper_limit_matches_interpolation() {
        let sv = solver(0.85, 256);
        let a = sv.solve_g(0.3).unwrap();
        assert_eq!(a.s_index(), None);
        let below = sv.solve_g(sv.grid().node(76)).unwrap();
        let above = sv.solve_g(sv.grid().node(77)).unwrap();
        let m = 0.1;
        let (x, lo, hi) = (a.value_at(m).unwrap(), below.value_at(m).unwrap(), above.value_at(m).unwrap());
        assert!(x <= lo && x >= hi, "{hi} ≤ {x} ≤ {lo}");
    }

    #[test]
    fn linearity_of_solution() {
        let sv = solver(0.9, 96);
        let al = *sv.alpha();
        let f1: Rhs = Arc::new(|r: f64| (3.0 * r).sin());
        let f2: Rhs = Arc::new(move |r: f64| (1.0 - r).powf(-al.value()));
        let f12: Rhs = {
            let (f1, f2) = (f1.clone(), f2.clone());
            Arc::new(move |r| f1(r) + f2(r))
        };
        let q1 = sv.solve_q(1.0, f1).unwrap();
        let q2 = sv.solve_q(1.0, f2).unwrap();
        let q12 = sv.solve_q(1.0, f12).unwrap();
        let sum: Vec<f64> = q1.values().iter().zip(q2.values()).map(|(a, b)| a + b).collect();
        assert!(max_diff(&sum, q12.values()) < 1e-10);
    }

    #[test]
    fn energy_form_nonnegative() {
        let sv = solver(0.8, 128);
        let w = sv.weights();
        for rhs in [
            Arc::new(|r: f64| (7.0 * r).cos()) as Rhs,
            Arc::new(|r: f64| r - 0.4) as Rhs,
        ] {
            let q = sv.solve_q(1.0, rhs).unwrap();
            let v = q.values();
            let form: f64 = (0..v.len())
                .map(|i| v[i] * (0..v.len()).map(|j| w.get(i, j) * v[j]).sum::<f64>())
                .sum();
            assert!(form >= -1e-10);
        }
    }

    #[test]
    fn l_is_negative_and_g_in_unit_interval() {
        let sv = solver(0.85, 256);
        let l = sv.solve_l(1.0).unwrap();
        assert!(l.values().iter().all(|v| *v < 0.0));
        let g = sv.solve_g(1.0).unwrap();
        assert!(g.values().iter().all(|v| *v > 0.0 && *v < 1.0));
        let gtt = g.nystrom_eval(1.0).unwrap();
        assert!(gtt > 0.0 && gtt < 1.0);
    }

    #[test]
    fn nystrom_rejects_singular_points() {
        let sv = solver(0.85, 32);
        let l = sv.solve_l(0.5).unwrap();
        assert!(l.nystrom_eval(0.5).is_err());
        assert!(l.nystrom_eval(0.7).is_err());
        assert!(l.nystrom_eval(-0.1).is_err());
        assert!(l.nystrom_eval(0.25).is_ok());
    }

    #[test]
    fn rhs_singular_at_midpoint_is_rejected() {
        let sv = solver(0.85, 8);
        let err = sv.solve_q(1.0, Arc::new(|r: f64| 1.0 / (r - 0.0625))).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn d_at_equal_times_is_zero() {
        let sv = solver(0.85, 64);
        let l = sv.solve_l(0.5).unwrap();
        let d = sv.solve_d(0.5, &l).unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
        assert!(sv.solve_d(0.75, &l).is_err());
    }

    #[test]
    fn flat_check_l_from_g() {
        let sv = solver(1.0, 256);
        let dt = 1.0 / 64.0;
        let disc = sv.check_l_from_g(0.5, dt).unwrap();
        let expected = dt * dt / (1.5 * 1.5 - dt * dt);
        assert!((disc - expected).abs() < 1e-9, "{disc} vs {expected}");
    }

    #[test]
    fn free_function_wrappers() {
        let g = Grid::new(1.0, 32).unwrap();
        let a = Alpha::new(0.0).unwrap();
        let l = solve_l(&g, &a, 16).unwrap();
        assert_eq!(l.s_index(), Some(16));
        assert!(solve_l(&g, &a, 0).is_err());
        assert!(solve_g(&g, &a, 33).is_err());
        let d = solve_d(&g, &a, 16, 32).unwrap();
        assert_relative_eq!(d.values()[0], 1.0 / 1.5 - 0.5, epsilon = 1e-12);
        assert!(check_l_from_g(&g, &a, 16, 1.0 / 32.0).is_ok());
        let q = solve_q(&g, &a, 32, Arc::new(|_| 1.0)).unwrap();
        assert_relative_eq!(nystrom_eval(&q, 1.0).unwrap(), 0.5, epsilon = 1e-12);
    }
}
