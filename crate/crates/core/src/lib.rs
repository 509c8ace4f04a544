//! Numerical construction of the Doob–Meyer decomposition of the mixed
//! fractional Brownian motion `X = B^H + B` for `H ∈ (3/4, 1]`, and the
//! second-moment regularity of its drift derivative.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrature`] integrates the weakly singular kernel `|r − τ|^{−α}`
//!   exactly against piecewise-constant densities.
//! * [`kernel_solve`] solves the second-kind integral equations for the
//!   kernels `L`, `g`, `D` and the generic `Q` by a product-integration
//!   Nyström method.
//! * [`gaussian_paths`] simulates fBm, Brownian motion and their sum.
//! * [`decomposition`] builds the drift derivative `φ`, the martingale `M`
//!   and the innovation Brownian motion `B̄` along a path.
//! * [`regularity`] computes `E(φ_t − φ_s)²` deterministically and by Monte
//!   Carlo, fits Hölder exponents and audits the solution bounds.

pub mod decomposition;
pub mod error;
pub mod gaussian_paths;
pub mod kernel_solve;
mod linalg;
pub mod quadrature;
pub mod regularity;

pub use error::{Error, Result};
pub use quadrature::{Alpha, Grid};
