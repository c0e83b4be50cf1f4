//! Versioned JSON reports and the analyses behind the `analyze` and
//! `verify` commands.

use serde::{Deserialize, Serialize};

use crate::coderiv::{check_cq_lambda, CqLambdaReport};
use crate::error::Result;
use crate::firstorder::{first_order, SubdiffEstimate};
use crate::hessian::{hessian, sensitivity_system, Form, HessianEstimate, HessianOptions, HessianQuery, Theorem};
use crate::hypothesis::HypothesisLog;
use crate::kernel::{check_licq, check_mfcq, multipliers, rational_to_string, solve_value, Certificate, LicqReport, MfcqReport};
use crate::model::{KktPoint, ParametricProblem, Partition, Tolerances};
use crate::oracle::{fd_gradient, fd_hessian, fd_jacobians, lp_lhs_oracle, lp_lhs_rhs_oracle, GRAD_STEP, HESS_STEP};

pub const SCHEMA: &str = "valfun-sens/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub problem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<String>,
    pub tolerances: Tolerances,
    pub body: Body,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Body {
    Analyze(Analysis),
    FirstOrder(SubdiffEstimate),
    Hessian(HessianEstimate),
    Verify(Verification),
}

impl Report {
    pub fn new(command: &str, problem: &ParametricProblem, point: Option<&str>, tol: &Tolerances, body: Body) -> Self {
        Report {
            schema: SCHEMA.into(),
            command: command.into(),
            problem: problem.name.clone(),
            point: point.map(str::to_string),
            tolerances: *tol,
            body,
        }
    }

    /// Pretty JSON with a trailing newline. Field order follows the struct
    /// definitions and floats print shortest-roundtrip, so equal inputs give
    /// identical bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerAnalysis {
    pub y: Vec<f64>,
    pub multiplier_vertices: Vec<Vec<f64>>,
    pub multiplier_rays: Vec<Vec<f64>>,
    /// Partition at the first multiplier vertex.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
    pub licq: LicqReport,
    pub mfcq: MfcqReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cq_lambda: Option<CqLambdaReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub x: Vec<f64>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_value: Option<String>,
    pub certificate: Certificate,
    pub singleton: bool,
    pub minimizers: Vec<MinimizerAnalysis>,
    pub hypotheses: HypothesisLog,
}

pub fn analyze(problem: &ParametricProblem, x: &[f64], opts: &HessianOptions) -> Result<Analysis> {
    let tol = &opts.tol;
    let sol = solve_value(problem, x, &opts.solve)?;
    let mut log = HypothesisLog::new();
    let mut out = Vec::new();
    for y in &sol.minimizers {
        let mp = multipliers(problem, x, y, tol, opts.solve.rational && problem.is_lp_in_y())?;
        let licq = check_licq(problem, x, y, tol)?;
        let mfcq = check_mfcq(problem, x, y, tol)?;
        log.check("licq", licq.holds, format!("y = {:?}, rank {}", y, licq.rank));
        log.check("mfcq", mfcq.holds, format!("y = {:?}", y));
        let (partition, cq) = match mp.vertices.first() {
            Some(u) => {
                let kkt = KktPoint::new(problem, x, y, u, tol)?;
                let cq = check_cq_lambda(problem, &kkt, opts.flavor, opts.cap).ok();
                (Some(kkt.partition), cq)
            }
            None => (None, None),
        };
        out.push(MinimizerAnalysis {
            y: y.clone(),
            multiplier_vertices: mp.vertices,
            multiplier_rays: mp.rays,
            partition,
            licq,
            mfcq,
            cq_lambda: cq,
        });
    }
    let detail = format!("{} minimizer(s), certificate {:?}", sol.minimizers.len(), sol.certificate);
    match (sol.singleton, sol.certificate) {
        (true, Certificate::ExactLp) => log.verified("solution-singleton", detail),
        (true, _) => log.asserted("solution-singleton", detail),
        (false, _) => log.failed("solution-singleton", detail),
    }
    Ok(Analysis {
        x: x.to_vec(),
        value: sol.value,
        exact_value: sol.exact_value,
        certificate: sol.certificate,
        singleton: sol.singleton,
        minimizers: out,
        hypotheses: log,
    })
}

pub fn first_order_at(problem: &ParametricProblem, x: &[f64], opts: &HessianOptions) -> Result<SubdiffEstimate> {
    let sol = solve_value(problem, x, &opts.solve)?;
    first_order(problem, &sol, &opts.tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The oracle does not apply here (e.g. FD unstable at a kink).
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            detail,
        }
    }

    fn skipped(name: &str, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            status: CheckStatus::Skipped,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub query: HessianQuery,
    pub theorem: Theorem,
    pub form: Form,
    pub hypotheses: HypothesisLog,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Compares the estimates at a query against every applicable oracle.
pub fn verify(problem: &ParametricProblem, q: &HessianQuery, opts: &HessianOptions) -> Result<Verification> {
    let so = &opts.solve;
    let est = hessian(problem, q, opts)?;
    let mut checks = Vec::new();

    let sub = first_order_at(problem, &q.xbar, opts)?;
    let fdg = fd_gradient(problem, &q.xbar, GRAD_STEP, so)?;
    checks.push(if fdg.stable {
        Check::new(
            "fd-gradient-in-subdifferential",
            sub.set.member(&fdg.gradient, 5e-4).in_closure(),
            format!("fd gradient {:?}", fdg.gradient),
        )
    } else {
        Check::skipped("fd-gradient-in-subdifferential", "one-sided slopes disagree")
    });

    let fdh = fd_hessian(problem, &q.xbar, HESS_STEP, so)?;
    let hv = fdh.hessian_times(&q.xstar);
    if fdh.stable {
        checks.push(Check::new(
            "fd-inclusion",
            est.result.member(&hv, 1e-3).in_closure(),
            format!("H_fd x* = {:?}", hv),
        ));
        if est.form == Form::Equality {
            let d = est.result.singleton_value(1e-9).map(|v| max_diff(&v, &hv));
            checks.push(Check::new(
                "equality-collapse",
                d.is_some_and(|d| d <= 1e-4),
                format!("singleton distance {:?}", d),
            ));
        }
    } else {
        checks.push(Check::skipped(
            "fd-inclusion",
            format!("FD Hessian unstable (halving/one-sided gap {:e})", fdh.error_bound),
        ));
    }

    if est.form == Form::Equality && !matches!(est.theorem, Theorem::LpLhs) {
        checks.push(sensitivity_check(problem, q, opts));
    }

    match est.theorem {
        Theorem::LpLhs | Theorem::LpLhsRhs => checks.push(lp_check(problem, q, opts)),
        _ => {}
    }

    let passed = checks.iter().all(|c| c.status != CheckStatus::Fail);
    Ok(Verification {
        query: q.clone(),
        theorem: est.theorem,
        form: est.form,
        hypotheses: est.hypotheses,
        checks,
        passed,
    })
}

fn sensitivity_check(problem: &ParametricProblem, q: &HessianQuery, opts: &HessianOptions) -> Check {
    let run = || -> Result<Option<f64>> {
        let sol = solve_value(problem, &q.xbar, &opts.solve)?;
        let y = &sol.minimizers[0];
        let mp = multipliers(problem, &q.xbar, y, &opts.tol, false)?;
        let Some(u) = mp.vertices.first() else {
            return Ok(None);
        };
        let kkt = KktPoint::new(problem, &q.xbar, y, u, &opts.tol)?;
        let Ok(s) = sensitivity_system(problem, &kkt, &opts.tol) else {
            return Ok(None);
        };
        let (ds, _) = fd_jacobians(problem, &q.xbar, 1e-4, &opts.solve)?;
        Ok(Some(max_diff(&s.ds.concat(), &ds.concat())))
    };
    match run() {
        Ok(Some(d)) => Check::new("sensitivity-vs-tracking", d <= 1e-4, format!("max |ds - ds_fd| = {:e}", d)),
        Ok(None) => Check::skipped("sensitivity-vs-tracking", "sensitivity system not applicable"),
        Err(e) => Check::skipped("sensitivity-vs-tracking", format!("tracking failed: {}", e)),
    }
}

fn lp_check(problem: &ParametricProblem, q: &HessianQuery, opts: &HessianOptions) -> Check {
    let run = || -> Result<(String, Option<String>)> {
        let x0 = vec![0.0; problem.n];
        let y0 = vec![0.0; problem.m];
        let a: Vec<Vec<f64>> = {
            let j = problem.jac_y_g(&x0, &y0)?;
            (0..j.nrows()).map(|r| j.row(r).iter().copied().collect()).collect()
        };
        let oracle = if problem.g_independent_of_x() {
            let b: Vec<f64> = problem.g_values(&x0, &y0)?.iter().map(|v| -v).collect();
            lp_lhs_oracle(&a, &b, &q.xbar)?
        } else {
            lp_lhs_rhs_oracle(&a, &q.xbar)?
        };
        let solve = crate::kernel::SolveOptions {
            rational: true,
            ..opts.solve.clone()
        };
        let sol = solve_value(problem, &q.xbar, &solve)?;
        Ok((rational_to_string(&oracle.value), sol.exact_value))
    };
    match run() {
        Ok((oracle, solved)) => Check::new(
            "lp-value-exact",
            solved.as_deref() == Some(oracle.as_str()),
            format!("oracle {} solver {:?}", oracle, solved),
        ),
        Err(e) => Check::new("lp-value-exact", false, format!("oracle failed: {}", e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::{instance, point_query};

    #[test]
    fn verify_passes_on_the_lp_instance() {
        let p = instance("lp_interval").unwrap().problem;
        let q = point_query(&p, "interior").unwrap();
        let v = verify(&p, &q, &HessianOptions::default()).unwrap();
        assert!(v.passed, "{:?}", v.checks);
        assert!(v.checks.iter().any(|c| c.name == "lp-value-exact" && c.status == CheckStatus::Pass));
    }

    #[test]
    fn analyze_bilinear_vertex() {
        let p = instance("lp_interval").unwrap().problem;
        let a = analyze(&p, &[0.5], &HessianOptions::default()).unwrap();
        let m = &a.minimizers[0];
        assert_eq!(m.y, vec![-1.0]);
        assert_eq!(m.partition.as_ref().unwrap().nu, vec![1]);
        assert!(m.licq.holds);
    }

    #[test]
    fn report_round_trips() {
        let p = instance("sq_fit").unwrap().problem;
        let a = analyze(&p, &[0.3], &HessianOptions::default()).unwrap();
        let r = Report::new("analyze", &p, Some("interior"), &Tolerances::default(), Body::Analyze(a));
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.to_json(), r.to_json());
        assert!(r.to_json().contains("\"schema\": \"valfun-sens/1\""));
    }
}
