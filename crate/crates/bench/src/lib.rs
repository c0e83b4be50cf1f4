//! Shared fixtures for the benchmarks.

use valfun_core::battery::{instance, point_query};
use valfun_core::hessian::HessianQuery;
use valfun_core::ParametricProblem;

/// A battery problem together with the query at one of its named points.
pub fn fixture(name: &str, point: &str) -> (ParametricProblem, HessianQuery) {
    let p = instance(name).unwrap_or_else(|| panic!("no battery instance {}", name)).problem;
    let q = point_query(&p, point).expect("battery point is well formed");
    (p, q)
}
