use valfun_core::battery::{instance, queries};
use valfun_core::hessian::{hessian, HessianOptions};
use valfun_core::kernel::SolveOptions;
use valfun_core::oracle::{fd_hessian, HESS_STEP};

#[test]
fn stable_fd_products_lie_in_the_estimates() {
    let opts = HessianOptions::default();
    let mut failures = Vec::new();
    let mut stable = 0;
    for bq in queries().unwrap() {
        let p = instance(bq.instance).unwrap().problem;
        let q = &bq.query;
        let fd = fd_hessian(&p, &q.xbar, HESS_STEP, &SolveOptions::default()).unwrap();
        let est = match hessian(&p, q, &opts) {
            Ok(e) => e,
            Err(e) => {
                failures.push(format!("{}:{}: {}", bq.instance, bq.point, e));
                continue;
            }
        };
        if fd.stable {
            stable += 1;
            let hv = fd.hessian_times(&q.xstar);
            if !est.result.member(&hv, 1e-3).in_closure() {
                failures.push(format!("{}:{}: {:?} not in estimate", bq.instance, bq.point, hv));
            }
        }
    }
    assert!(failures.is_empty(), "{:#?}", failures);
    assert!(stable >= 15, "only {} stable points", stable);
}

#[test]
fn empty_estimates_carry_a_diagnostic() {
    let p = instance("bilinear_box").unwrap().problem;
    let q = valfun_core::battery::point_query(&p, "kink").unwrap();
    let est = hessian(&p, &q, &HessianOptions::default()).unwrap();
    assert!(est.is_empty());
    assert!(est.diagnostic.is_some());
}

#[test]
fn verify_passes_on_every_battery_point() {
    let opts = HessianOptions::default();
    let mut bad = Vec::new();
    for bq in queries().unwrap() {
        let p = instance(bq.instance).unwrap().problem;
        let v = valfun_core::report::verify(&p, &bq.query, &opts).unwrap();
        if !v.passed {
            bad.push((bq.instance, bq.point.clone(), v.checks));
        }
    }
    assert!(bad.is_empty(), "{:#?}", bad);
}
