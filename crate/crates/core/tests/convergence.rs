//! Self-convergence of the kernel solver and the second-moment formulas.

use mfbm_core::kernel_solve::KernelSolver;
use mfbm_core::regularity::{second_moment_gram, second_moment_reduced};
use mfbm_core::{Alpha, Grid};

fn solver(h: f64, n: usize) -> KernelSolver {
    KernelSolver::new(Grid::new(1.0, n).unwrap(), Alpha::from_hurst(h).unwrap())
}

#[test]
fn drift_kernel_matches_fine_grid() {
    let fine = solver(0.85, 2048).solve_l(1.0).unwrap();
    let l = solver(0.85, 512).solve_l(1.0).unwrap();
    let v = l.values();
    assert!(v.iter().all(|&x| x < 0.0));
    for (m, x) in l.midpoints().iter().zip(v) {
        let f = fine.value_at(*m).unwrap();
        assert!(((x - f) / f).abs() <= 5e-3, "r = {m}: {x} vs {f}");
    }
    let mids = l.midpoints();
    for i in 0..v.len() - 1 {
        if mids[i] >= 0.25 {
            assert!(v[i + 1] < v[i], "not decreasing at r = {}", mids[i]);
        }
    }
}

#[test]
fn reduced_form_self_converges() {
    let values: Vec<f64> = [128, 256, 512, 1024]
        .iter()
        .map(|&n| {
            let sv = solver(0.85, n);
            let a = sv.solve_l(0.5).unwrap();
            let b = sv.solve_l(0.6).unwrap();
            second_moment_reduced(0.5, 0.6, &a, &b).unwrap().value
        })
        .collect();
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in diffs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.5, "observed order {order} from {values:?}");
    }
}

#[test]
fn formulas_agree_off_node() {
    // t = 0.3 and 0.9 are not nodes at n = 512
    for h in [0.8, 0.9] {
        let sv = solver(h, 512);
        for (s, t) in [(0.25, 0.3), (0.5, 0.9)] {
            let a = sv.solve_l(s).unwrap();
            let b = sv.solve_l(t).unwrap();
            let g = second_moment_gram(s, t, &a, &b).unwrap();
            let r = second_moment_reduced(s, t, &a, &b).unwrap().value;
            assert!(g > 0.0 && (g - r).abs() / r <= 0.02, "H {h} ({s}, {t}): {g} vs {r}");
        }
    }
}

#[test]
fn derivative_identity_on_interior() {
    let sv = solver(0.85, 512);
    let e1 = sv.check_l_from_g(0.5, 1.0 / 64.0).unwrap();
    let e2 = sv.check_l_from_g(0.5, 1.0 / 128.0).unwrap();
    assert!(e1 <= 0.05 && e2 < e1, "{e1} {e2}");
}
