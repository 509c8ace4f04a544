//! Closed forms at H = 1, where the kernel is flat and `L(r, s) = −1/(1 + s)`.

use mfbm_core::decomposition::Decomposer;
use mfbm_core::gaussian_paths::PathSimulator;
use mfbm_core::kernel_solve::KernelSolver;
use mfbm_core::regularity::{build_variogram, flat_variogram, Method, VariogramConfig};
use mfbm_core::{Alpha, Grid};

fn flat(n: usize) -> KernelSolver {
    KernelSolver::new(Grid::new(1.0, n).unwrap(), Alpha::from_hurst(1.0).unwrap())
}

#[test]
fn flat_kernels_are_constant() {
    for n in [64, 256, 1024] {
        let solver = flat(n);
        for s in [0.25, 0.5, 1.0] {
            let l = solver.solve_l(s).unwrap();
            let g = solver.solve_g(s).unwrap();
            for (lv, gv) in l.values().iter().zip(g.values()) {
                assert!((lv + 1.0 / (1.0 + s)).abs() <= 1e-10);
                assert!((gv - 1.0 / (1.0 + s)).abs() <= 1e-10);
            }
            assert!((g.nystrom_eval(s).unwrap() - 1.0 / (1.0 + s)).abs() <= 1e-10);
        }
    }
}

#[test]
fn flat_variogram_curve() {
    for method in [Method::Gram, Method::Reduced] {
        let mut config = VariogramConfig::new(1.0, 1.0, 2048, method);
        config.lag_count = 7;
        let v = build_variogram(&config).unwrap();
        for (d, val) in v.lags.iter().zip(&v.values) {
            assert!((val - flat_variogram(0.5, 0.5 + d)).abs() <= 1e-10, "{method} lag {d}");
        }
    }
    assert!((flat_variogram(0.5, 1.0) - 1.0 / 6.0).abs() < 1e-15);
}

#[test]
fn flat_decomposition_reconstructs_path() {
    let solver = flat(1024);
    let dec = Decomposer::new(&solver, 8).unwrap();
    let sim = PathSimulator::new(*solver.grid(), 1.0).unwrap();
    for index in 0..3 {
        let path = sim.path(17, index);
        let (drift, inn) = dec.decompose_path(&path).unwrap();
        let scale = path.mixed.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!(inn.max_abs_residual() <= 0.02 * scale);
        for (&k, phi) in drift.s_subset.iter().zip(&drift.phi) {
            let s = solver.grid().node(k);
            assert!((phi + path.mixed[k] / (1.0 + s)).abs() <= 1e-8 * scale);
        }
    }
}
