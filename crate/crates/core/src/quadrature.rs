//! Exact integration of the kernel `|r − τ|^{−α}` against piecewise-constant
//! densities on uniform grids.
//!
//! Every singular integral in the crate goes through the antiderivative
//! `sign(x)|x|^{1−α}/(1−α)`; nothing singular is ever sampled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel exponent `α = 2 − 2H` together with the derived constants.
///
/// `c_H = H(2H − 1)` and `b_α = (1 − α/2)(1 − α)` are the same number; both
/// accessors return one stored value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    value: f64,
    hurst: f64,
    coeff: f64,
}

impl Alpha {
    /// Builds from the exponent, `0 ≤ α < 1/2`.
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&value) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1/2), got {value}")));
        }
        let hurst = 1.0 - 0.5 * value;
        Ok(Self { value, hurst, coeff: hurst * (2.0 * hurst - 1.0) })
    }

    /// Kernel-only exponent `0 ≤ α < 1` for pure quadrature work. The Hurst
    /// accessors are meaningful only when `α < 1/2`.
    pub fn kernel_exponent(value: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&value) {
            return Err(Error::invalid(format!("kernel exponent must lie in [0, 1), got {value}")));
        }
        let hurst = 1.0 - 0.5 * value;
        Ok(Self { value, hurst, coeff: hurst * (2.0 * hurst - 1.0) })
    }

    /// Builds from the Hurst exponent, `3/4 < H ≤ 1`.
    pub fn from_hurst(hurst: f64) -> Result<Self> {
        if !(hurst > 0.75 && hurst <= 1.0) {
            return Err(Error::invalid(format!("H must lie in (3/4, 1], got {hurst}")));
        }
        let value = 2.0 - 2.0 * hurst;
        Ok(Self { value, hurst, coeff: hurst * (2.0 * hurst - 1.0) })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// `c_H = H(2H − 1)`.
    pub fn c_coeff(&self) -> f64 {
        self.coeff
    }

    /// `b_α = (1 − α/2)(1 − α)`, identical to [`Alpha::c_coeff`].
    pub fn b_coeff(&self) -> f64 {
        self.coeff
    }

    /// Antiderivative exponent `1 − α`.
    pub fn power(&self) -> f64 {
        1.0 - self.value
    }

    /// True on the `H = 1` edge where the kernel is constant.
    pub fn is_flat(&self) -> bool {
        self.value == 0.0
    }

    /// `x^{−α}` for `x > 0`.
    pub fn kernel(&self, x: f64) -> f64 {
        if self.is_flat() {
            1.0
        } else {
            x.abs().powf(-self.value)
        }
    }
}

/// Uniform partition of `[0, T]` into `n` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    horizon: f64,
    cells: usize,
}

impl Grid {
    pub fn new(horizon: f64, cells: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if cells < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 cells, got {cells}")));
        }
        Ok(Self { horizon, cells })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.cells {
            self.horizon
        } else {
            i as f64 * self.horizon / self.cells as f64
        }
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.horizon / self.cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| self.node(i)).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.midpoint(i)).collect()
    }

    /// Index of the node within `1e−9·h` of `t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let x = t / self.step();
        let k = x.round();
        if k < 0.0 || k > self.cells as f64 {
            return None;
        }
        ((x - k).abs() <= 1e-9).then_some(k as usize)
    }
}

/// Cells covering `[0, u]`: the uniform grid cells below `u`, plus one
/// partial cell when `u` is not a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    edges: Vec<f64>,
    node_index: Option<usize>,
}

impl Partition {
    pub fn up_to(grid: &Grid, upper: f64) -> Result<Self> {
        if !(upper > 0.0 && upper <= grid.horizon() * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!(
                "upper limit {upper} outside (0, {}]",
                grid.horizon()
            )));
        }
        if let Some(k) = grid.node_index(upper) {
            if k == 0 {
                return Err(Error::invalid("upper limit must be positive"));
            }
            let edges = (0..=k).map(|i| grid.node(i)).collect();
            return Ok(Self { edges, node_index: Some(k) });
        }
        let full = (upper / grid.step()).floor() as usize;
        let mut edges: Vec<f64> = (0..=full).map(|i| grid.node(i)).collect();
        edges.push(upper);
        Ok(Self { edges, node_index: None })
    }

    pub fn upper(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// Grid index of the upper limit when it is a node.
    pub fn node_index(&self) -> Option<usize> {
        self.node_index
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.midpoint(i)).collect()
    }
}

#[inline]
fn antiderivative(x: f64, power: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(power) / power
    }
}

/// Unchecked `∫_a^b |r − τ|^{−α} dτ`.
#[inline]
pub(crate) fn moment(a: f64, b: f64, r: f64, alpha: &Alpha) -> f64 {
    let p = alpha.power();
    if alpha.is_flat() {
        return b - a;
    }
    antiderivative(b - r, p) - antiderivative(a - r, p)
}

/// `∫_a^b |r − τ|^{−α} dτ` from the exact antiderivative, split at `τ = r`
/// when `r` lies inside the interval.
pub fn riesz_moment(a: f64, b: f64, r: f64, alpha: &Alpha) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && r.is_finite()) {
        return Err(Error::invalid("non-finite moment arguments"));
    }
    if b <= a {
        return Err(Error::invalid(format!("empty interval [{a}, {b}]")));
    }
    Ok(moment(a, b, r, alpha))
}

/// Product-integration weights `W_ij = ∫_{cell j} |m_i − τ|^{−α} dτ`.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    entries: Vec<f64>,
    n: usize,
    alpha: Alpha,
    grid: Grid,
}

impl WeightMatrix {
    pub fn alpha(&self) -> &Alpha {
        &self.alpha
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }
}

pub fn build_weight_matrix(grid: &Grid, alpha: &Alpha) -> WeightMatrix {
    let n = grid.cells();
    let nodes = grid.nodes();
    let mut entries = vec![0.0; n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let m = grid.midpoint(i);
        for (j, w) in row.iter_mut().enumerate() {
            *w = moment(nodes[j], nodes[j + 1], m, alpha);
        }
    });
    WeightMatrix { entries, n, alpha: *alpha, grid: *grid }
}

/// Two-term local model `f(τ) ≈ a·(e − τ)^{−α} + b` near an endpoint `e`,
/// fitted exactly through two samples. Integrals against the model are done
/// in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularTail {
    pub a: f64,
    pub b: f64,
    alpha: Alpha,
}

impl SingularTail {
    /// Fits the model through `(u₁, f₁)` and `(u₂, f₂)`, `u` being distance to
    /// the endpoint. Returns `None` for the flat kernel, where the two basis
    /// functions coincide.
    pub fn fit(alpha: &Alpha, (u1, f1): (f64, f64), (u2, f2): (f64, f64)) -> Option<Self> {
        if alpha.is_flat() {
            return None;
        }
        let k1 = alpha.kernel(u1);
        let k2 = alpha.kernel(u2);
        let det = k1 - k2;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let a = (f1 - f2) / det;
        let b = f1 - a * k1;
        Some(Self { a, b, alpha: *alpha })
    }

    fn pow_int(&self, exponent: f64, lo: f64, hi: f64) -> f64 {
        // ∫_lo^hi u^{exponent−1} du
        (hi.powf(exponent) - lo.powf(exponent)) / exponent
    }

    /// `∫_lo^hi f(u) du`.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        let p = self.alpha.power();
        self.a * self.pow_int(p, lo, hi) + self.b * (hi - lo)
    }

    /// `∫_0^w f(u)·u^{−α} du`.
    pub fn kernel_integral(&self, w: f64) -> f64 {
        let al = self.alpha.value();
        self.a * w.powf(1.0 - 2.0 * al) / (1.0 - 2.0 * al) + self.b * w.powf(1.0 - al) / (1.0 - al)
    }

    /// `∫_0^w f(u)·g(u) du` for another model `g` with the same endpoint.
    pub fn product_integral(&self, other: &SingularTail, w: f64) -> f64 {
        let al = self.alpha.value();
        self.a * other.a * w.powf(1.0 - 2.0 * al) / (1.0 - 2.0 * al)
            + (self.a * other.b + self.b * other.a) * w.powf(1.0 - al) / (1.0 - al)
            + self.b * other.b * w
    }
}

/// Exact `∫_0^T |m − τ|^{−α} dτ`, the row-sum target of [`WeightMatrix`].
pub fn full_moment(m: f64, horizon: f64, alpha: &Alpha) -> f64 {
    let p = alpha.power();
    (m.powf(p) + (horizon - m).powf(p)) / p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn alpha(v: f64) -> Alpha {
        Alpha::kernel_exponent(v).unwrap()
    }

    #[test]
    fn alpha_constants() {
        let a = Alpha::from_hurst(0.85).unwrap();
        assert_relative_eq!(a.value(), 0.3, epsilon = 1e-15);
        assert_eq!(a.b_coeff(), a.c_coeff());
        assert_relative_eq!(a.c_coeff(), 0.85 * 0.7, epsilon = 1e-15);
        let flat = Alpha::new(0.0).unwrap();
        assert_eq!(flat.hurst(), 1.0);
        assert_eq!(flat.c_coeff(), 1.0);
        assert!(Alpha::new(0.5).is_err());
        assert!(Alpha::new(-0.1).is_err());
        assert!(Alpha::from_hurst(0.75).is_err());
        assert!(Alpha::from_hurst(1.01).is_err());
    }

    #[test]
    fn alpha_hurst_range() {
        for v in [0.0, 0.1, 0.25, 0.499] {
            let h = alpha(v).hurst();
            assert!(h > 0.75 && h <= 1.0);
        }
    }

    #[test]
    fn riesz_moment_examples() {
        assert_relative_eq!(riesz_moment(0.0, 1.0, 1.0, &alpha(0.5)).unwrap(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(
            riesz_moment(0.0, 1.0, 0.5, &alpha(0.5)).unwrap(),
            2.0 * 2.0_f64.sqrt(),
            epsilon = 1e-15
        );
        assert_relative_eq!(riesz_moment(0.2, 0.7, 5.0, &alpha(0.0)).unwrap(), 0.5, epsilon = 1e-15);
        assert!(riesz_moment(1.0, 1.0, 0.0, &alpha(0.3)).is_err());
        assert!(riesz_moment(1.0, 0.5, 0.0, &alpha(0.3)).is_err());
    }

    #[test]
    fn weight_matrix_examples() {
        let g = Grid::new(1.0, 2).unwrap();
        let w = build_weight_matrix(&g, &alpha(0.0));
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(w.get(i, j), 0.5, epsilon = 1e-15);
            }
        }
        let w = build_weight_matrix(&g, &alpha(0.5));
        assert_relative_eq!(w.get(0, 0), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn row_sums_match_closed_form() {
        let g = Grid::new(1.0, 64).unwrap();
        let a = alpha(0.3);
        let w = build_weight_matrix(&g, &a);
        for i in 0..64 {
            let m = g.midpoint(i);
            let total: f64 = w.row(i).iter().sum();
            let exact = (m.powf(0.7) + (1.0 - m).powf(0.7)) / 0.7;
            assert_relative_eq!(total, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn weight_matrix_is_toeplitz_and_decreasing() {
        let g = Grid::new(2.0, 40).unwrap();
        let a = alpha(0.4);
        let w = build_weight_matrix(&g, &a);
        let h = g.step();
        for i in 0..40 {
            for j in 0..40 {
                let d = j as f64 - i as f64;
                let shifted = riesz_moment((d - 0.5) * h, (d + 0.5) * h, 0.0, &a).unwrap();
                assert!((w.get(i, j) - shifted).abs() <= 1e-14 * shifted.max(1.0));
                assert!((w.get(i, j) - w.get(j, i)).abs() <= 1e-12 * w.get(i, j));
            }
            for j in i..39 {
                assert!(w.get(i, j + 1) < w.get(i, j));
            }
            for j in 1..=i {
                assert!(w.get(i, j - 1) < w.get(i, j));
            }
        }
    }

    #[test]
    fn grid_nodes_and_midpoints() {
        let g = Grid::new(1.0, 8).unwrap();
        let nodes = g.nodes();
        assert_eq!(nodes.len(), 9);
        assert_eq!(nodes[8], 1.0);
        for (i, m) in g.midpoints().iter().enumerate() {
            assert!(*m > nodes[i] && *m < nodes[i + 1]);
        }
        assert_eq!(g.node_index(0.5), Some(4));
        assert_eq!(g.node_index(0.3), None);
        assert!(Grid::new(1.0, 1).is_err());
        assert!(Grid::new(0.0, 4).is_err());
    }

    #[test]
    fn partial_partition() {
        let g = Grid::new(1.0, 10).unwrap();
        let p = Partition::up_to(&g, 0.35).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.node_index(), None);
        assert_relative_eq!(p.width(3), 0.05, epsilon = 1e-15);
        let q = Partition::up_to(&g, 0.3 + 1e-13).unwrap();
        assert_eq!(q.node_index(), Some(3));
        assert_eq!(q.upper(), g.node(3));
        assert!(Partition::up_to(&g, 0.0).is_err());
        assert!(Partition::up_to(&g, 1.5).is_err());
    }

    #[test]
    fn tail_model_reproduces_itself() {
        let a = alpha(0.3);
        let f = |u: f64| 2.0 * u.powf(-0.3) - 0.7;
        let tail = SingularTail::fit(&a, (0.1, f(0.1)), (0.3, f(0.3))).unwrap();
        assert_relative_eq!(tail.a, 2.0, epsilon = 1e-12);
        assert_relative_eq!(tail.b, -0.7, epsilon = 1e-12);
        // ∫_0^w (2u^{-α} − 0.7)u^{-α} du
        let w: f64 = 0.4;
        let exact = 2.0 * w.powf(0.4) / 0.4 - 0.7 * w.powf(0.7) / 0.7;
        assert_relative_eq!(tail.kernel_integral(w), exact, epsilon = 1e-12);
        assert_relative_eq!(tail.product_integral(&tail, w), {
            4.0 * w.powf(0.4) / 0.4 - 2.8 * w.powf(0.7) / 0.7 + 0.49 * w
        }, epsilon = 1e-12);
        assert!(SingularTail::fit(&alpha(0.0), (0.1, 1.0), (0.2, 1.0)).is_none());
    }

    proptest! {
        #[test]
        fn moment_additive(a in 0.0f64..1.0, len1 in 0.01f64..1.0, len2 in 0.01f64..1.0,
                           r in -1.0f64..3.0, al in 0.0f64..0.49) {
            let al = alpha(al);
            let b = a + len1;
            let c = b + len2;
            let whole = riesz_moment(a, c, r, &al).unwrap();
            let parts = riesz_moment(a, b, r, &al).unwrap() + riesz_moment(b, c, r, &al).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1.0));
            prop_assert!(whole > 0.0);
        }

        #[test]
        fn row_sum_identity(n in 2usize..80, horizon in 0.1f64..5.0, al in 0.0f64..0.49) {
            let g = Grid::new(horizon, n).unwrap();
            let al = alpha(al);
            let w = build_weight_matrix(&g, &al);
            for i in 0..n {
                let total: f64 = w.row(i).iter().sum();
                let exact = full_moment(g.midpoint(i), horizon, &al);
                prop_assert!((total - exact).abs() <= 1e-12 * exact);
                prop_assert!(w.row(i).iter().all(|x| x.is_finite() && *x > 0.0));
            }
        }
    }
}
