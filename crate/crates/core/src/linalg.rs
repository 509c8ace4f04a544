//! Dense direct solvers behind the Nyström systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative max-norm residual accepted without refinement.
pub(crate) const RESIDUAL_TOL: f64 = 1e-10;

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Cholesky factor of an SPD matrix whose leading blocks are the systems of
/// interest: `A[..k, ..k] = L[..k, ..k] L[..k, ..k]ᵀ`.
#[derive(Debug, Clone)]
pub(crate) struct PrefixCholesky {
    factor: DMatrix<f64>,
    n: usize,
}

impl PrefixCholesky {
    pub(crate) fn new(matrix: DMatrix<f64>) -> Option<Self> {
        let n = matrix.nrows();
        let chol = matrix.cholesky()?;
        Some(Self { factor: chol.unpack(), n })
    }

    pub(crate) fn size(&self) -> usize {
        self.n
    }

    /// Solves the leading `k × k` system.
    pub(crate) fn solve_prefix(&self, rhs: &[f64]) -> Vec<f64> {
        let k = rhs.len();
        debug_assert!(k <= self.n);
        let data = self.factor.as_slice();
        let col = |j: usize| &data[j * self.n..j * self.n + k];
        let mut y = rhs.to_vec();
        for j in 0..k {
            let c = col(j);
            let yj = y[j] / c[j];
            y[j] = yj;
            for (yi, lij) in y[j + 1..k].iter_mut().zip(&c[j + 1..k]) {
                *yi -= lij * yj;
            }
        }
        for j in (0..k).rev() {
            let c = col(j);
            let dot: f64 = c[j + 1..k].iter().zip(&y[j + 1..k]).map(|(a, b)| a * b).sum();
            y[j] = (y[j] - dot) / c[j];
        }
        y
    }
}

/// Dense LU with partial pivoting and one step of iterative refinement when
/// the first residual is above tolerance.
pub(crate) fn lu_solve(matrix: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let lu = matrix.clone().lu();
    let b = DVector::from_column_slice(rhs);
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| Error::numerical("singular Nyström system"))?;
    let scale = max_abs(rhs).max(f64::MIN_POSITIVE);
    let r = &b - matrix * &x;
    if r.amax() > RESIDUAL_TOL * scale {
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    Ok(x.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            let d = (i as f64 - j as f64).abs();
            if i == j {
                2.0
            } else {
                0.5 / (1.0 + d)
            }
        })
    }

    #[test]
    fn prefix_solves_leading_blocks() {
        let a = spd(12);
        let chol = PrefixCholesky::new(a.clone()).unwrap();
        for k in [1, 5, 12] {
            let b: Vec<f64> = (0..k).map(|i| (i as f64).sin() + 1.0).collect();
            let x = chol.solve_prefix(&b);
            let block = a.view((0, 0), (k, k)).into_owned();
            let ax = &block * DVector::from_column_slice(&x);
            for i in 0..k {
                assert!((ax[i] - b[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn lu_matches_prefix() {
        let a = spd(9);
        let b: Vec<f64> = (0..9).map(|i| i as f64 - 3.0).collect();
        let x1 = lu_solve(&a, &b).unwrap();
        let x2 = PrefixCholesky::new(a).unwrap().solve_prefix(&b);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_lu_reports() {
        let a = DMatrix::<f64>::zeros(3, 3);
        assert!(lu_solve(&a, &[1.0, 2.0, 3.0]).is_err());
    }
}
