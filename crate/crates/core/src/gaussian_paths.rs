//! Exact simulation of fractional Brownian motion, Brownian motion and the
//! mixed process `X = B^H + B` on a uniform grid.
//!
//! fBm increments (fractional Gaussian noise) come from circulant embedding
//! of the increment autocovariance; a dense Cholesky factor is used when the
//! embedding has materially negative eigenvalues. At `H = 1` the fBm is the
//! rank-one process `ξ·t`.
//!
//! Seeding: the stream for component `c` of path `p` is ChaCha12 seeded with
//! `seed` and stream id `(p << 2) | c` (`c = 0` fBm, `1` Brownian motion,
//! `2` Brownian-bridge refinements).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Grid;

/// Covariance of the fractional Brownian motion with Hurst exponent `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbmCovariance {
    h: f64,
}

impl FbmCovariance {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::invalid(format!("Hurst exponent must lie in (0, 1], got {h}")));
        }
        Ok(Self { h })
    }

    pub fn hurst(&self) -> f64 {
        self.h
    }

    pub fn cov(&self, s: f64, t: f64) -> Result<f64> {
        if s < 0.0 || t < 0.0 {
            return Err(Error::invalid(format!("negative time in covariance ({s}, {t})")));
        }
        let e = 2.0 * self.h;
        Ok(0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e)))
    }
}

/// `½t^{2H} + ½s^{2H} − ½|t − s|^{2H}`.
pub fn fbm_cov(s: f64, t: f64, h: f64) -> Result<f64> {
    FbmCovariance::new(h)?.cov(s, t)
}

/// Autocovariance of unit-lag fBm increments of length `dt` at lag `k`.
pub fn fgn_autocov(k: usize, h: f64, dt: f64) -> f64 {
    let e = 2.0 * h;
    let k = k as f64;
    let lower = if k == 0.0 { 1.0 } else { (k - 1.0).powf(e) };
    0.5 * dt.powf(e) * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + lower)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Fbm = 0,
    Bm = 1,
    Bridge = 2,
}

/// Deterministic per-path, per-component random stream.
pub fn substream(seed: u64, component: Component, path: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((path << 2) | component as u64);
    rng
}

#[derive(Clone)]
enum Method {
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Cholesky { factor: DMatrix<f64> },
    RankOne,
}

/// Sampler of `n` consecutive fBm increments of length `dt`.
#[derive(Clone)]
pub struct FgnSampler {
    n: usize,
    h: f64,
    dt: f64,
    method: Method,
}

impl std::fmt::Debug for FgnSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FgnSampler")
            .field("n", &self.n)
            .field("h", &self.h)
            .field("method", &self.method_name())
            .finish()
    }
}

impl FgnSampler {
    pub fn new(n: usize, h: f64, dt: f64) -> Result<Self> {
        FbmCovariance::new(h)?;
        if n == 0 || !(dt > 0.0) {
            return Err(Error::invalid("sampler needs n ≥ 1 and dt > 0"));
        }
        if h == 1.0 {
            return Ok(Self { n, h, dt, method: Method::RankOne });
        }
        let m = 2 * n;
        let mut row: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); m];
        for j in 0..=n {
            row[j] = Complex::new(fgn_autocov(j, h, dt), 0.0);
        }
        for j in 1..n {
            row[m - j] = row[j];
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut row);
        let eig: Vec<f64> = row.iter().map(|c| c.re).collect();
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        if min < -1e-9 * max {
            return Self::cholesky(n, h, dt);
        }
        let sqrt_eig = eig.iter().map(|l| (l.max(0.0) / m as f64).sqrt()).collect();
        Ok(Self { n, h, dt, method: Method::Circulant { sqrt_eig, fft } })
    }

    /// Dense Cholesky sampler of the Toeplitz increment covariance.
    pub fn cholesky(n: usize, h: f64, dt: f64) -> Result<Self> {
        FbmCovariance::new(h)?;
        let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocov(i.abs_diff(j), h, dt));
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::numerical("fGn covariance is not positive definite"))?;
        Ok(Self { n, h, dt, method: Method::Cholesky { factor: chol.unpack() } })
    }

    pub fn method_name(&self) -> &'static str {
        match self.method {
            Method::Circulant { .. } => "circulant",
            Method::Cholesky { .. } => "cholesky",
            Method::RankOne => "rank-one",
        }
    }

    pub fn increments<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.method {
            Method::RankOne => {
                let xi: f64 = rng.sample(StandardNormal);
                vec![xi * self.dt; self.n]
            }
            Method::Cholesky { factor } => {
                let z = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
                (factor * z).as_slice().to_vec()
            }
            Method::Circulant { sqrt_eig, fft } => {
                let mut buf: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|a| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(a * re, a * im)
                    })
                    .collect();
                fft.process(&mut buf);
                buf[..self.n].iter().map(|c| c.re).collect()
            }
        }
    }
}

/// One seeded realization of `B^H`, `B` and `X = B^H + B` at the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub grid: Grid,
    pub h: f64,
    pub seed: u64,
    pub path_index: u64,
    pub fbm: Vec<f64>,
    pub bm: Vec<f64>,
    pub mixed: Vec<f64>,
}

impl SamplePath {
    /// The same path observed on every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<SamplePath> {
        let n = self.grid.cells();
        if factor == 0 || n % factor != 0 || n / factor < 2 {
            return Err(Error::invalid(format!("cannot coarsen {n} cells by {factor}")));
        }
        let grid = Grid::new(self.grid.horizon(), n / factor)?;
        let pick = |v: &[f64]| v.iter().step_by(factor).cloned().collect::<Vec<_>>();
        Ok(SamplePath {
            grid,
            h: self.h,
            seed: self.seed,
            path_index: self.path_index,
            fbm: pick(&self.fbm),
            bm: pick(&self.bm),
            mixed: pick(&self.mixed),
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.nodes()
    }
}

fn cumulative(increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for d in increments {
        acc += d;
        out.push(acc);
    }
    out
}

/// Reusable simulator for one `(grid, H)` pair.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    grid: Grid,
    h: f64,
    fgn: FgnSampler,
}

impl PathSimulator {
    pub fn new(grid: Grid, h: f64) -> Result<Self> {
        let fgn = FgnSampler::new(grid.cells(), h, grid.step())?;
        Ok(Self { grid, h, fgn })
    }

    pub fn with_sampler(grid: Grid, h: f64, fgn: FgnSampler) -> Result<Self> {
        if fgn.n != grid.cells() || (fgn.dt - grid.step()).abs() > 1e-15 * grid.step() || fgn.h != h {
            return Err(Error::invalid("sampler does not match grid"));
        }
        Ok(Self { grid, h, fgn })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sampler(&self) -> &FgnSampler {
        &self.fgn
    }

    pub fn path(&self, seed: u64, index: u64) -> SamplePath {
        let mut rng = substream(seed, Component::Fbm, index);
        let fbm = cumulative(&self.fgn.increments(&mut rng));
        let mut rng = substream(seed, Component::Bm, index);
        let sd = self.grid.step().sqrt();
        let dbm: Vec<f64> = (0..self.grid.cells())
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let bm = cumulative(&dbm);
        let mixed = fbm.iter().zip(&bm).map(|(a, b)| a + b).collect();
        SamplePath { grid: self.grid, h: self.h, seed, path_index: index, fbm, bm, mixed }
    }

    /// Paths `0..count`; identical output for any thread count.
    pub fn ensemble(&self, seed: u64, count: usize) -> Vec<SamplePath> {
        (0..count as u64).into_par_iter().map(|p| self.path(seed, p)).collect()
    }
}

pub fn simulate(grid: &Grid, h: f64, seed: u64) -> Result<SamplePath> {
    Ok(PathSimulator::new(*grid, h)?.path(seed, 0))
}
