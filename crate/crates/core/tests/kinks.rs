//! At kink points the FD Hessian is unstable; the estimate must instead
//! contain the limits of Hessians from nearby smooth points whose gradient
//! approaches `xund`.

use valfun_core::battery::{instance, point_query};
use valfun_core::hessian::{hessian, HessianOptions};
use valfun_core::kernel::SolveOptions;
use valfun_core::oracle::{fd_hessian, HESS_STEP};

fn side_limits_inside(inst: &str, point: &str, dirs: &[&[f64]]) -> usize {
    let p = instance(inst).unwrap().problem;
    let q = point_query(&p, point).unwrap();
    let est = hessian(&p, &q, &HessianOptions::default()).unwrap();
    let so = SolveOptions::default();
    assert!(!fd_hessian(&p, &q.xbar, HESS_STEP, &so).unwrap().stable);
    let mut matched = 0;
    for d in dirs {
        let x: Vec<f64> = q.xbar.iter().zip(*d).map(|(a, b)| a + 1e-2 * b).collect();
        let fd = fd_hessian(&p, &x, HESS_STEP, &so).unwrap();
        if !fd.stable || fd.gradient.iter().zip(&q.xund).any(|(a, b)| (a - b).abs() > 0.05) {
            continue;
        }
        let hv = fd.hessian_times(&q.xstar);
        assert!(est.result.member(&hv, 1e-3).in_closure(), "{}:{} side {:?}: {:?}", inst, point, d, hv);
        matched += 1;
    }
    matched
}

#[test]
fn projection_kink_contains_both_sides() {
    assert_eq!(side_limits_inside("projection_kink", "degenerate", &[&[1.0], &[-1.0]]), 2);
}

#[test]
fn max_square_contains_both_sides() {
    assert_eq!(side_limits_inside("max_square", "degenerate", &[&[1.0], &[-1.0]]), 2);
}

#[test]
fn lp_rhs_kink_contains_the_matching_side() {
    let dirs: &[&[f64]] = &[&[1.0, 0.0], &[-1.0, 0.0], &[1.0, 1.0], &[1.0, -1.0]];
    assert!(side_limits_inside("lp_rhs_interval", "kink", dirs) >= 1);
}
