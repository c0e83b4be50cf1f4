//! Curated test problems shipped with the crate. Each file carries named
//! query points; points without `xund` take the unique first-order
//! generator.

use crate::error::{Error, Result};
use crate::firstorder::first_order;
use crate::hessian::{CaseHint, HessianQuery};
use crate::kernel::{solve_value, SolveOptions};
use crate::model::{parse_problem, ParametricProblem, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Unperturbed,
    SingleSingle,
    SingleS,
    SingleLambda,
    LpLhs,
    LpLhsRhs,
}

macro_rules! battery_files {
    ($($name:literal => $fam:ident),* $(,)?) => {
        &[$(($name, include_str!(concat!("../battery/", $name, ".json")), Family::$fam)),*]
    };
}

const FILES: &[(&str, &str, Family)] = battery_files! {
    "sq_fit" => Unperturbed,
    "tracked_quadratic" => Unperturbed,
    "quartic" => Unperturbed,
    "box_projection_2d" => Unperturbed,
    "bilinear_box" => Unperturbed,
    "projection_kink" => Unperturbed,
    "cubic_flat" => Unperturbed,
    "pull_to_cut" => SingleSingle,
    "two_cuts" => SingleSingle,
    "max_square" => SingleSingle,
    "doubled_cut" => SingleS,
    "degenerate_lp_vertex" => SingleS,
    "cubic_flat_cut" => SingleLambda,
    "lp_interval" => LpLhs,
    "lp_square" => LpLhs,
    "lp_triangle" => LpLhs,
    "lp_diamond" => LpLhs,
    "lp_cube" => LpLhs,
    "lp_rhs_interval" => LpLhsRhs,
};

#[derive(Clone, Debug)]
pub struct Instance {
    pub name: &'static str,
    pub source: &'static str,
    pub family: Family,
    pub problem: ParametricProblem,
}

#[derive(Clone, Debug)]
pub struct BatteryQuery {
    pub instance: &'static str,
    pub point: String,
    pub family: Family,
    pub query: HessianQuery,
}

pub fn instances() -> Vec<Instance> {
    FILES
        .iter()
        .map(|&(name, source, family)| Instance {
            name,
            source,
            family,
            problem: parse_problem(source).unwrap_or_else(|e| panic!("battery file {}: {}", name, e)),
        })
        .collect()
}

pub fn instance(name: &str) -> Option<Instance> {
    instances().into_iter().find(|i| i.name == name)
}

/// Builds the Hessian query for a named point of a problem file.
pub fn point_query(problem: &ParametricProblem, point: &str) -> Result<HessianQuery> {
    let spec = problem
        .points
        .get(point)
        .ok_or_else(|| Error::Usage(format!("no point named `{}`", point)))?;
    let xund = match &spec.xund {
        Some(v) => v.clone(),
        None => {
            let opts = SolveOptions {
                pinned: spec.minimizers.clone(),
                ..SolveOptions::default()
            };
            let sol = solve_value(problem, &spec.x, &opts)?;
            let fo = first_order(problem, &sol, &Tolerances::default())?;
            fo.set.singleton_value(1e-9).ok_or_else(|| {
                Error::Usage(format!("point `{}` needs xund: the first-order estimate is not a singleton", point))
            })?
        }
    };
    let xstar = spec
        .xstar
        .clone()
        .ok_or_else(|| Error::Usage(format!("point `{}` has no xstar", point)))?;
    let case = match &spec.case {
        Some(s) => s.parse::<CaseHint>().map_err(Error::Usage)?,
        None => CaseHint::Auto,
    };
    Ok(HessianQuery {
        xbar: spec.x.clone(),
        xund,
        xstar,
        case,
    })
}

/// Every (instance, point) query, in file then point-name order.
pub fn queries() -> Result<Vec<BatteryQuery>> {
    let mut out = Vec::new();
    for inst in instances() {
        for point in inst.problem.points.keys() {
            out.push(BatteryQuery {
                instance: inst.name,
                point: point.clone(),
                family: inst.family,
                query: point_query(&inst.problem, point)?,
            });
        }
    }
    Ok(out)
}

/// A seeded random problem with a KKT point at `x = 0, y = 0` whose
/// partition has exactly `theta` degenerate indices, `nu` strongly active
/// ones and `eta` inactive ones. Constraints are affine with small integer
/// coefficients; `f = |y|^2 / 2 + c.y + x (h.y)` with `c` chosen so the
/// multiplier is stationary.
pub fn random_kkt_instance(seed: u64, m: usize, eta: usize, theta: usize, nu: usize) -> Result<(ParametricProblem, crate::model::KktPoint)> {
    use crate::expr::{self, Expr, Var};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let p = eta + theta + nu;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(p);
    while rows.len() < p {
        let r: Vec<f64> = (0..m).map(|_| rng.gen_range(-3i32..=3) as f64).collect();
        if r.iter().any(|&v| v != 0.0) {
            rows.push(r);
        }
    }
    let mut u = vec![0.0; p];
    for ui in u.iter_mut().skip(eta + theta) {
        *ui = rng.gen_range(1i32..=4) as f64 / 2.0;
    }
    let lin = |coef: &[f64]| -> Expr {
        let mut e = expr::constant(0.0);
        for (i, &c) in coef.iter().enumerate() {
            if c != 0.0 {
                e = expr::add(e, expr::mul(expr::constant(c), expr::var(Var::Y(i))));
            }
        }
        e
    };
    let c: Vec<f64> = (0..m).map(|i| -(0..p).map(|l| u[l] * rows[l][i]).sum::<f64>()).collect();
    let h: Vec<f64> = (0..m).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
    let mut f = lin(&c);
    for i in 0..m {
        f = expr::add(f, expr::mul(expr::constant(0.5), expr::pow(expr::var(Var::Y(i)), 2)));
    }
    f = expr::add(f, expr::mul(expr::var(Var::X(0)), lin(&h)));
    let g: Vec<Expr> = rows
        .iter()
        .enumerate()
        .map(|(l, r)| {
            let d = rng.gen_range(-1i32..=1) as f64;
            let mut e = expr::add(lin(r), expr::mul(expr::constant(d), expr::var(Var::X(0))));
            if l < eta {
                e = expr::sub(e, expr::constant(1.0));
            }
            e
        })
        .collect();
    let problem = ParametricProblem::new(&format!("random-kkt-{}", seed), 1, m, f, g)?;
    let kkt = crate::model::KktPoint::new(&problem, &[0.0], &vec![0.0; m], &u, &Tolerances::default())?;
    Ok((problem, kkt))
}
