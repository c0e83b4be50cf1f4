//! Generalized-Hessian estimates of the value function.
//!
//! Every estimate is assembled from three ingredients evaluated at a
//! minimizer `y` with multiplier `u`: the curvature term `hxx x*`, a
//! multiplier-coderivative term `zeta` (branches of the multiplier set at
//! the covector `grad_x g x*`), and a solution-map term realized either by
//! the sensitivity Jacobian or by coderivative branches of `S`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coderiv::{check_cq_lambda, delanoe_map, kkt_point, log_flag, mho, BranchFamily, Flavor, DEFAULT_BRANCH_CAP};
use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};
use crate::firstorder::first_order;
use crate::hypothesis::HypothesisLog;
use crate::kernel::{check_licq, check_mfcq, multipliers, solve_value, Certificate, MultiplierPolyhedron, SolveOptions, SolveResult};
use crate::lp::{LinearProgram, LpOutcome};
use crate::model::{KktPoint, LagrangianEval, ParametricProblem, Tolerances};
use crate::num::Rational;
use crate::setcalc::{caratheodory_supports, Affine, Membership, Piece, PolySet};

/// Tolerance of the selection conditions `grad_x f = x_` and
/// `grad_x L = x_`, and of the first-order membership check.
pub const SELECT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseHint {
    #[default]
    Auto,
    Unperturbed,
    SingleSingle,
    SingleS,
    SingleLambda,
    LpLhs,
    LpLhsRhs,
}

impl std::str::FromStr for CaseHint {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "auto" => CaseHint::Auto,
            "unperturbed" => CaseHint::Unperturbed,
            "single-single" => CaseHint::SingleSingle,
            "single-S" | "single-s" => CaseHint::SingleS,
            "single-lambda" | "single-λ" => CaseHint::SingleLambda,
            "lp-lhs" => CaseHint::LpLhs,
            "lp-lhs-rhs" => CaseHint::LpLhsRhs,
            other => return Err(format!("unknown case hint `{}`", other)),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    UnperturbedSingle,
    UnperturbedMulti,
    UnperturbedCaratheodory,
    SingleSingle,
    SingleS,
    SingleLambda,
    SingleLambdaCaratheodory,
    LpLhs,
    LpLhsRhs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    /// Built from the sensitivity Jacobians; the estimate is the Hessian.
    Equality,
    Inclusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnperturbedMode {
    Single,
    Multi,
    Caratheodory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianQuery {
    pub xbar: Vec<f64>,
    pub xund: Vec<f64>,
    pub xstar: Vec<f64>,
    #[serde(default)]
    pub case: CaseHint,
}

#[derive(Clone, Debug)]
pub struct HessianOptions {
    pub flavor: Flavor,
    pub cap: usize,
    pub tol: Tolerances,
    pub solve: SolveOptions,
    /// Use the sensitivity Jacobians when they exist. Turning this off
    /// yields the (looser) coderivative form of the same theorem.
    pub use_sensitivity: bool,
}

impl Default for HessianOptions {
    fn default() -> Self {
        HessianOptions {
            flavor: Flavor::M,
            cap: DEFAULT_BRANCH_CAP,
            tol: Tolerances::default(),
            solve: SolveOptions::default(),
            use_sensitivity: true,
        }
    }
}

/// A `(y, u)` pair (and Carathéodory weight) that generated pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    pub pieces: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianEstimate {
    pub query: HessianQuery,
    pub theorem: Theorem,
    pub form: Form,
    pub result: PolySet,
    pub hypotheses: HypothesisLog,
    pub supports: Vec<SupportEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl HessianEstimate {
    fn new(query: &HessianQuery, theorem: Theorem, n: usize) -> Self {
        HessianEstimate {
            query: query.clone(),
            theorem,
            form: Form::Inclusion,
            result: PolySet::empty(n),
            hypotheses: HypothesisLog::new(),
            supports: Vec::new(),
            diagnostic: None,
        }
    }

    fn empty_with(mut self, why: impl Into<String>) -> Self {
        self.result = PolySet::empty(self.result.dim);
        self.diagnostic = Some(why.into());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.result.is_empty_union()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    /// `grad s(x)`, m x n.
    pub ds: Vec<Vec<f64>>,
    /// `grad u(x)`, p x n.
    pub du: Vec<Vec<f64>>,
    pub residual: f64,
    pub condition: f64,
}

impl Sensitivity {
    fn ds_matrix(&self) -> DMatrix<f64> {
        let m = self.ds.len();
        let n = self.ds.first().map_or(0, Vec::len);
        DMatrix::from_fn(m, n, |i, j| self.ds[i][j])
    }
}

fn to_rows(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..mat.nrows()).map(|r| mat.row(r).iter().copied().collect()).collect()
}

/// Differentiates the KKT system along the parameter: with strict
/// complementarity and LICQ the Jacobians of the solution and multiplier
/// maps solve
/// `[hyy Jy^T; diag(u) Jy diag(g)] [ds; du] = -[hxy; diag(u) Jx]`.
pub fn sensitivity_system(problem: &ParametricProblem, kkt: &KktPoint, tol: &Tolerances) -> Result<Sensitivity> {
    if !kkt.partition.theta.is_empty() {
        return Err(Error::StrictComplementarity(kkt.partition.theta.clone()));
    }
    let licq = check_licq(problem, &kkt.x, &kkt.y, tol)?;
    if !licq.holds {
        return Err(Error::Degenerate(format!(
            "LICQ fails (rank {} of {} active rows)",
            licq.rank,
            licq.active.len()
        )));
    }
    let (n, m, p) = (problem.n, problem.m, problem.p());
    let e = problem.differentiate(&kkt.x, &kkt.y, &kkt.u)?;
    let k = m + p;
    let mut mat = DMatrix::zeros(k, k);
    mat.view_mut((0, 0), (m, m)).copy_from(&e.hyy);
    for l in 0..p {
        for i in 0..m {
            mat[(i, m + l)] = e.jac_y_g[(l, i)];
            mat[(m + l, i)] = kkt.u[l] * e.jac_y_g[(l, i)];
        }
        mat[(m + l, m + l)] = e.g[l];
    }
    let mut rhs = DMatrix::zeros(k, n);
    for j in 0..n {
        for i in 0..m {
            rhs[(i, j)] = -e.hxy[(i, j)];
        }
        for l in 0..p {
            rhs[(m + l, j)] = -kkt.u[l] * e.jac_x_g[(l, j)];
        }
    }
    let sv = mat.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if k > 0 && !(condition < 1e10) {
        return Err(Error::Degenerate(format!("sensitivity matrix condition number {:e}", condition)));
    }
    let sol = if k == 0 {
        DMatrix::zeros(0, n)
    } else {
        mat.clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("singular sensitivity matrix".into()))?
    };
    let residual = if k == 0 { 0.0 } else { (&mat * &sol - &rhs).amax() };
    if residual > 1e-9 * (1.0 + rhs.amax()) {
        return Err(Error::Degenerate(format!("sensitivity residual {:e}", residual)));
    }
    Ok(Sensitivity {
        ds: to_rows(&sol.rows(0, m).into_owned()),
        du: to_rows(&sol.rows(m, p).into_owned()),
        residual,
        condition,
    })
}

/// Branches realizing `D*S(x|y)`, one family per representative multiplier.
struct SolutionBranches {
    entries: Vec<(LagrangianEval, BranchFamily, String)>,
}

enum STerm<'a> {
    Gradient(DMatrix<f64>),
    Coderivative(&'a SolutionBranches),
}

fn solution_branches(
    problem: &ParametricProblem,
    x: &[f64],
    y: &[f64],
    opts: &HessianOptions,
    log: &mut HypothesisLog,
) -> Result<SolutionBranches> {
    let mf = check_mfcq(problem, x, y, &opts.tol)?;
    if !mf.holds {
        return Err(Error::Hypothesis(format!(
            "MFCQ fails at y = {:?}; witness {:?}",
            y,
            mf.witness.unwrap_or_default()
        )));
    }
    let mp = multipliers(problem, x, y, &opts.tol, false)?;
    if mp.is_empty() {
        return Err(Error::Hypothesis(format!("Lambda(x, y) is empty at y = {:?}", y)));
    }
    let mut entries = Vec::new();
    for (k, u) in mp.representatives(opts.tol.act).iter().enumerate() {
        let kkt = kkt_point(problem, x, y, u, &opts.tol, log)?;
        let fam = mho(problem, &kkt, &vec![0.0; problem.p()], opts.flavor, opts.cap)?;
        let e = problem.differentiate(x, y, u)?;
        entries.push((e, fam, format!("u'{}", k)));
    }
    Ok(SolutionBranches { entries })
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).iter().copied().collect()
}

/// Pieces of `hxx v + zeta_x + dS(zeta_y + hxy v)` with `zeta` ranging over
/// the images of `lam` branches (or zero when `lam` is `None`).
fn assemble(e: &LagrangianEval, lam: Option<&BranchFamily>, s: &STerm, v: &[f64], tag: &str) -> PolySet {
    let (n, m) = (e.x.len(), e.y.len());
    let base = mat_vec(&e.hxx, v);
    let couple = mat_vec(&e.hxy, v);
    let d1 = delanoe_map(e);
    let mut out = PolySet::empty(n);
    match (lam, s) {
        (None, STerm::Gradient(ds)) => {
            let extra = mat_vec(&ds.transpose(), &couple);
            let point: Vec<f64> = base.iter().zip(&extra).map(|(a, b)| a + b).collect();
            out.extend(PolySet::singleton(&point, format!("{} gradient", tag)));
        }
        (None, STerm::Coderivative(sb)) => {
            for (e2, fam2, t2) in &sb.entries {
                let d2 = delanoe_map(e2);
                for b2 in &fam2.branches {
                    let mut poly = b2.poly.clone();
                    for i in 0..m {
                        poly.add_eq(d2.matrix[n + i].clone(), -couple[i]);
                    }
                    out.push(Piece {
                        poly,
                        map: Affine {
                            matrix: d2.matrix[..n].to_vec(),
                            b: base.clone(),
                        },
                        provenance: format!("{} S:{}{}", tag, t2, b2.label()),
                    });
                }
            }
        }
        (Some(fam1), STerm::Gradient(ds)) => {
            let dst = ds.transpose();
            let extra = mat_vec(&dst, &couple);
            let b: Vec<f64> = base.iter().zip(&extra).map(|(a, c)| a + c).collect();
            let k1 = d1.matrix[0].len();
            let matrix: Vec<Vec<f64>> = (0..n)
                .map(|j| {
                    (0..k1)
                        .map(|c| d1.matrix[j][c] + (0..m).map(|i| dst[(j, i)] * d1.matrix[n + i][c]).sum::<f64>())
                        .collect()
                })
                .collect();
            for b1 in &fam1.branches {
                out.push(Piece {
                    poly: b1.poly.clone(),
                    map: Affine {
                        matrix: matrix.clone(),
                        b: b.clone(),
                    },
                    provenance: format!("{} L:{} gradient", tag, b1.label()),
                });
            }
        }
        (Some(fam1), STerm::Coderivative(sb)) => {
            for b1 in &fam1.branches {
                for (e2, fam2, t2) in &sb.entries {
                    let d2 = delanoe_map(e2);
                    for b2 in &fam2.branches {
                        let mut poly = b1.poly.product(&b2.poly);
                        for i in 0..m {
                            let row: Vec<f64> = d1.matrix[n + i].iter().chain(&d2.matrix[n + i]).copied().collect();
                            poly.add_eq(row, -couple[i]);
                        }
                        let matrix = (0..n)
                            .map(|j| d1.matrix[j].iter().chain(&d2.matrix[j]).copied().collect())
                            .collect();
                        out.push(Piece {
                            poly,
                            map: Affine {
                                matrix,
                                b: base.clone(),
                            },
                            provenance: format!("{} L:{} S:{}{}", tag, b1.label(), t2, b2.label()),
                        });
                    }
                }
            }
        }
    }
    out.prune_empty()
}

fn validate(problem: &ParametricProblem, q: &HessianQuery) -> Result<()> {
    for (name, v) in [("xbar", &q.xbar), ("xund", &q.xund), ("xstar", &q.xstar)] {
        if v.len() != problem.n {
            return Err(Error::Dimension(format!("{} has length {}, n = {}", name, v.len(), problem.n)));
        }
    }
    Ok(())
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(p, q)| (p - q).abs() <= tol)
}

fn log_singleton(log: &mut HypothesisLog, sol: &SolveResult) -> bool {
    let detail = format!("{} minimizer(s), certificate {:?}", sol.minimizers.len(), sol.certificate);
    match (sol.singleton, sol.certificate) {
        (true, Certificate::ExactLp) => log.verified("solution-singleton", detail),
        (true, _) => log.asserted("solution-singleton", detail),
        (false, _) => log.failed("solution-singleton", detail),
    }
    sol.singleton
}

/// Minimizers plus, on an LP face, the face point whose generator hits
/// `target` (generators are affine along the face when `f` is affine in y).
fn candidates(sol: &SolveResult, target: &[f64], gen: &dyn Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let mut out = sol.minimizers.clone();
    if sol.face.len() > 1 {
        let vals: Vec<Vec<f64>> = sol.face.iter().map(|y| gen(y)).collect::<Result<_>>()?;
        let k = vals.len();
        let mut lp = LinearProgram::new(k);
        lp.nonneg = vec![true; k];
        lp.eq(vec![1.0; k], 1.0);
        for (r, &t) in target.iter().enumerate() {
            lp.eq(vals.iter().map(|v| v[r]).collect(), t);
        }
        if let LpOutcome::Optimal { x: w, .. } = lp.solve() {
            let m = sol.face[0].len();
            let y: Vec<f64> = (0..m).map(|i| sol.face.iter().zip(&w).map(|(v, wk)| v[i] * wk).sum()).collect();
            if !out.iter().any(|z| close(z, &y, 1e-12)) {
                out.push(y);
            }
        }
    }
    Ok(out)
}

/// Solves at `xbar` and checks `xund` against the first-order estimate.
fn prepare(problem: &ParametricProblem, q: &HessianQuery, opts: &HessianOptions, est: &mut HessianEstimate) -> Result<Option<SolveResult>> {
    validate(problem, q)?;
    let sol = solve_value(problem, &q.xbar, &opts.solve)?;
    let fo = first_order(problem, &sol, &opts.tol)?;
    match fo.set.member(&q.xund, SELECT_TOL) {
        Membership::Outside { distance } => {
            est.diagnostic = Some(format!(
                "x_ = {:?} is not in the first-order estimate ({:?}) at distance {:e}",
                q.xund, fo.formula, distance
            ));
            Ok(None)
        }
        _ => {
            est.hypotheses.verified("xund-in-subdifferential", format!("{:?} estimate", fo.formula));
            Ok(Some(sol))
        }
    }
}

/// Feasible set independent of `x`: single, multi (concave-convex) or
/// Carathéodory mode.
pub fn hessian_unperturbed(problem: &ParametricProblem, q: &HessianQuery, mode: UnperturbedMode, opts: &HessianOptions) -> Result<HessianEstimate> {
    let theorem = match mode {
        UnperturbedMode::Single => Theorem::UnperturbedSingle,
        UnperturbedMode::Multi => Theorem::UnperturbedMulti,
        UnperturbedMode::Caratheodory => Theorem::UnperturbedCaratheodory,
    };
    let mut est = HessianEstimate::new(q, theorem, problem.n);
    if !problem.g_independent_of_x() {
        return Err(Error::WrongFormula("the constraints depend on x; the unperturbed case does not apply".into()));
    }
    est.hypotheses.verified("g-independent-of-x", "structural check");
    let Some(sol) = prepare(problem, q, opts, &mut est)? else {
        return Ok(est.empty_with_kept());
    };
    let x = &q.xbar;
    match mode {
        UnperturbedMode::Single => {
            if !log_singleton(&mut est.hypotheses, &sol) {
                return Err(Error::Hypothesis("S(x) is not a singleton; use multi or caratheodory mode".into()));
            }
            let y = &sol.minimizers[0];
            let mp = multipliers(problem, x, y, &opts.tol, false)?;
            if mp.is_empty() {
                return Err(Error::Hypothesis("no KKT multiplier at the minimizer".into()));
            }
            let u = &mp.vertices[0];
            let kkt = kkt_point(problem, x, y, u, &opts.tol, &mut est.hypotheses)?;
            let e = problem.differentiate(x, y, u)?;
            let sens = if opts.use_sensitivity && mp.is_singleton() {
                sensitivity_system(problem, &kkt, &opts.tol).ok()
            } else {
                None
            };
            let pieces = match sens {
                Some(s) => {
                    est.form = Form::Equality;
                    est.hypotheses.verified("s-differentiable", format!("sensitivity residual {:e}", s.residual));
                    assemble(&e, None, &STerm::Gradient(s.ds_matrix()), &q.xstar, "y0")
                }
                None => {
                    log_flag(&mut est.hypotheses, "convex-in-y", problem.quadratic_convex_in_y(), problem.assume.convex_in_y);
                    est.hypotheses.asserted("s-lipschitz", "Lipschitz continuity of s is assumed");
                    let sb = solution_branches(problem, x, y, opts, &mut est.hypotheses)?;
                    assemble(&e, None, &STerm::Coderivative(&sb), &q.xstar, "y0")
                }
            };
            est.supports.push(SupportEntry {
                y: y.clone(),
                u: Some(u.clone()),
                weight: None,
                pieces: pieces.pieces.len(),
            });
            est.result = pieces;
        }
        UnperturbedMode::Multi => {
            log_flag(&mut est.hypotheses, "concave-convex", problem.quadratic_concave_convex(), problem.assume.concave_convex);
            let gen = |y: &[f64]| problem.grad_x_f(x, y);
            for y in candidates(&sol, &q.xund, &gen)? {
                if !close(&gen(&y)?, &q.xund, SELECT_TOL) {
                    continue;
                }
                let pieces = unperturbed_piece(problem, x, &y, &q.xstar, opts, &mut est.hypotheses)?;
                est.supports.push(SupportEntry {
                    y: y.clone(),
                    u: None,
                    weight: None,
                    pieces: pieces.pieces.len(),
                });
                est.result.extend(pieces);
            }
            if est.supports.is_empty() {
                return Ok(est.empty_with("no minimizer y with grad_x f(x, y) = x_"));
            }
        }
        UnperturbedMode::Caratheodory => {
            let ys = sol.minimizers.clone();
            let gens: Vec<Vec<f64>> = ys.iter().map(|y| problem.grad_x_f(x, y)).collect::<Result<_>>()?;
            caratheodory(problem, q, opts, &mut est, &ys, &gens, &mut |y, v, log| unperturbed_piece(problem, x, y, v, opts, log))?;
        }
    }
    Ok(est)
}

impl HessianEstimate {
    fn empty_with_kept(self) -> Self {
        let why = self.diagnostic.clone().unwrap_or_default();
        self.empty_with(why)
    }
}

fn unperturbed_piece(problem: &ParametricProblem, x: &[f64], y: &[f64], v: &[f64], opts: &HessianOptions, log: &mut HypothesisLog) -> Result<PolySet> {
    let mp = multipliers(problem, x, y, &opts.tol, false)?;
    let u = mp
        .vertices
        .first()
        .cloned()
        .ok_or_else(|| Error::Hypothesis(format!("no KKT multiplier at y = {:?}", y)))?;
    let e = problem.differentiate(x, y, &u)?;
    let sb = solution_branches(problem, x, y, opts, log)?;
    Ok(assemble(&e, None, &STerm::Coderivative(&sb), v, &format!("y={:?}", y)))
}

type PieceFn<'a> = dyn FnMut(&[f64], &[f64], &mut HypothesisLog) -> Result<PolySet> + 'a;

/// Union over Carathéodory supports of `x_` by the generator values, of the
/// Minkowski sum over the support of the union over `Delta(s)` of
/// `piece(y, a_s x*)`.
fn caratheodory(
    problem: &ParametricProblem,
    q: &HessianQuery,
    _opts: &HessianOptions,
    est: &mut HessianEstimate,
    ys: &[Vec<f64>],
    gens: &[Vec<f64>],
    piece: &mut PieceFn,
) -> Result<()> {
    let n = problem.n;
    let supports = caratheodory_supports(gens, &q.xund, 1e-9);
    if supports.is_empty() {
        est.diagnostic = Some("no Carathéodory support of the generators reproduces x_".into());
        return Ok(());
    }
    if ys.len() > n + 1 {
        est.hypotheses.asserted(
            "support-enumeration",
            "only affinely independent supports are enumerated; dependent generator families may be under-covered",
        );
    }
    let mut qualification_ok = true;
    for cert in &supports {
        let mut sum = PolySet::singleton(&vec![0.0; n], "0");
        for (&s, &a) in cert.indices.iter().zip(&cert.weights) {
            let scaled: Vec<f64> = q.xstar.iter().map(|v| a * v).collect();
            let mut term = PolySet::empty(n);
            for (y, g) in ys.iter().zip(gens) {
                if !close(g, &gens[s], 1e-9) {
                    continue;
                }
                let p = piece(y, &scaled, &mut est.hypotheses)?;
                let zero = piece(y, &vec![0.0; n], &mut est.hypotheses)?;
                qualification_ok &= zero.singleton_value(1e-9).map_or(false, |v| v.iter().all(|c| c.abs() <= 1e-9));
                est.supports.push(SupportEntry {
                    y: y.clone(),
                    u: None,
                    weight: Some(a),
                    pieces: p.pieces.len(),
                });
                term.extend(p);
            }
            sum = sum.minkowski_sum(&term);
        }
        for p in &mut sum.pieces {
            p.provenance = format!("support {:?} a={:?}: {}", cert.indices, cert.weights, p.provenance);
        }
        est.result.extend(sum.prune_empty());
    }
    if qualification_ok {
        est.hypotheses.verified("support-qualification", "every D*S(x|y)(0) piece is {0}");
    } else {
        est.hypotheses.asserted(
            "support-qualification",
            "the sufficient criterion D*S(x|y)(0) = {0} is not met; qualification assumed",
        );
    }
    Ok(())
}

/// Both `S` and `Lambda` single-valued.
pub fn hessian_single_single(problem: &ParametricProblem, q: &HessianQuery, opts: &HessianOptions) -> Result<HessianEstimate> {
    let mut est = HessianEstimate::new(q, Theorem::SingleSingle, problem.n);
    let Some(sol) = prepare(problem, q, opts, &mut est)? else {
        return Ok(est.empty_with_kept());
    };
    if !log_singleton(&mut est.hypotheses, &sol) {
        return Err(Error::Hypothesis("S(x) is not a singleton; route to single-lambda".into()));
    }
    let x = &q.xbar;
    let y = &sol.minimizers[0];
    est.hypotheses.asserted("graph-compact", "compactness of gph K is not checkable from expressions");
    let mp = multipliers(problem, x, y, &opts.tol, false)?;
    if !mp.is_singleton() {
        return Err(Error::Hypothesis(format!(
            "Lambda(x, y) has {} vertices and {} rays; route to single-S",
            mp.vertices.len(),
            mp.rays.len()
        )));
    }
    est.hypotheses.verified("lambda-singleton", "one multiplier vertex, no rays");
    let u = mp.vertices[0].clone();
    let kkt = kkt_point(problem, x, y, &u, &opts.tol, &mut est.hypotheses)?;
    let pieces = single_single_piece(problem, &kkt, &q.xstar, opts, &mut est, true)?;
    est.supports.push(SupportEntry {
        y: y.clone(),
        u: Some(u),
        weight: None,
        pieces: pieces.pieces.len(),
    });
    est.result = pieces;
    Ok(est)
}

/// One `(y, u)` contribution with single-valued multipliers. `allow_gradient`
/// permits the sensitivity shortcut (only valid when `S` is a function near
/// `x`).
fn single_single_piece(
    problem: &ParametricProblem,
    kkt: &KktPoint,
    v: &[f64],
    opts: &HessianOptions,
    est: &mut HessianEstimate,
    allow_gradient: bool,
) -> Result<PolySet> {
    let (x, y, u) = (&kkt.x, &kkt.y, &kkt.u);
    let e = problem.differentiate(x, y, u)?;
    let tag = format!("y={:?}", y);
    if allow_gradient && opts.use_sensitivity {
        if let Ok(s) = sensitivity_system(problem, kkt, &opts.tol) {
            est.form = Form::Equality;
            est.hypotheses
                .verified("s-lambda-differentiable", format!("sensitivity residual {:e}", s.residual));
            // hxx v + ds^T hxy v + du^T (Jx v)
            let mut point = mat_vec(&e.hxx, v);
            let hv = mat_vec(&e.hxy, v);
            let jv = mat_vec(&e.jac_x_g, v);
            for j in 0..problem.n {
                for i in 0..problem.m {
                    point[j] += s.ds[i][j] * hv[i];
                }
                for l in 0..problem.p() {
                    point[j] += s.du[l][j] * jv[l];
                }
            }
            return Ok(PolySet::singleton(&point, format!("{} sensitivity", tag)));
        }
    }
    est.hypotheses
        .asserted("lipschitz-s-lambda", "Lipschitz continuity of the single-valued maps is assumed");
    log_flag(&mut est.hypotheses, "convex-in-y", problem.quadratic_convex_in_y(), problem.assume.convex_in_y);
    let w = mat_vec(&e.jac_x_g, v);
    let lam = if w.iter().all(|c| *c == 0.0) {
        None
    } else {
        let cq = check_cq_lambda(problem, kkt, opts.flavor, opts.cap)?;
        est.hypotheses.check(
            "cq-lambda",
            cq.injective,
            format!("{} strict-only closure witnesses", cq.strict_only_witnesses),
        );
        Some(mho(problem, kkt, &w, opts.flavor, opts.cap)?)
    };
    let sb = solution_branches(problem, x, y, opts, &mut est.hypotheses)?;
    Ok(assemble(&e, lam.as_ref(), &STerm::Coderivative(&sb), v, &tag))
}

/// Checks the dual qualification: no nonzero `(a*, b*)` in the
/// multiplier-coderivative cone at 0 with `-a* in dS^T(b*)`.
fn qcdual_holds(e: &LagrangianEval, fam1: &BranchFamily, sb: &SolutionBranches) -> bool {
    let (n, m) = (e.x.len(), e.y.len());
    let d1 = delanoe_map(e);
    let scale = d1.matrix.iter().flatten().fold(1.0f64, |a, b| a.max(b.abs()));
    for b1 in &fam1.branches {
        for (e2, fam2, _) in &sb.entries {
            let d2 = delanoe_map(e2);
            for b2 in &fam2.branches {
                let mut poly = b1.poly.product(&b2.poly);
                for r in 0..n + m {
                    let row = d1.matrix[r].iter().chain(&d2.matrix[r]).copied().collect();
                    poly.add_eq(row, 0.0);
                }
                let g = poly.generators::<f64>();
                let k1 = d1.matrix[0].len();
                let ok = g.rays.iter().chain(&g.lineality).chain(&g.vertices).all(|z| {
                    let dn = z.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
                    d1.apply_linear(&z[..k1]).iter().all(|c| c.abs() <= 1e-9 * scale * dn)
                });
                if !ok {
                    return false;
                }
            }
        }
    }
    true
}

/// `S` single-valued, `Lambda` possibly set-valued.
pub fn hessian_single_s(problem: &ParametricProblem, q: &HessianQuery, opts: &HessianOptions) -> Result<HessianEstimate> {
    let mut est = HessianEstimate::new(q, Theorem::SingleS, problem.n);
    let Some(sol) = prepare(problem, q, opts, &mut est)? else {
        return Ok(est.empty_with_kept());
    };
    if !log_singleton(&mut est.hypotheses, &sol) {
        return Err(Error::Hypothesis("S(x) is not a singleton".into()));
    }
    let x = &q.xbar;
    let y = sol.minimizers[0].clone();
    est.hypotheses.asserted("graph-compact", "compactness of gph K is not checkable from expressions");
    est.hypotheses.asserted("s-lipschitz", "Lipschitz continuity of s is assumed");
    log_flag(&mut est.hypotheses, "convex-in-y", problem.quadratic_convex_in_y(), problem.assume.convex_in_y);
    let mp = multipliers(problem, x, &y, &opts.tol, false)?;
    if mp.is_empty() {
        return Err(Error::Hypothesis("Lambda(x, y) is empty".into()));
    }
    let selected = select_multipliers(problem, x, &y, &mp, &q.xund)?;
    if selected.is_empty() {
        return Ok(est.empty_with("no multiplier u with grad_x L(x, y, u) = x_"));
    }
    let sb = solution_branches(problem, x, &y, opts, &mut est.hypotheses)?;
    est.hypotheses.verified("mfcq", "checked at (x, y)");
    let mut qcdual = true;
    for u in selected.representatives(opts.tol.act) {
        let kkt = kkt_point(problem, x, &y, &u, &opts.tol, &mut est.hypotheses)?;
        let e = problem.differentiate(x, &y, &u)?;
        let w = mat_vec(&e.jac_x_g, &q.xstar);
        let fam = mho(problem, &kkt, &w, opts.flavor, opts.cap)?;
        let fam0 = mho(problem, &kkt, &vec![0.0; problem.p()], opts.flavor, opts.cap)?;
        qcdual &= qcdual_holds(&e, &fam0, &sb);
        let pieces = assemble(&e, Some(&fam), &STerm::Coderivative(&sb), &q.xstar, &format!("u={:?}", u));
        est.supports.push(SupportEntry {
            y: y.clone(),
            u: Some(u),
            weight: None,
            pieces: pieces.pieces.len(),
        });
        est.result.extend(pieces);
    }
    if qcdual {
        est.hypotheses.verified("qc-dual", "checked branchwise on the coderivative cones at 0");
    } else {
        est.hypotheses.asserted(
            "qc-dual",
            "branchwise check found a nonzero pair; the closure relaxation may be loose, qualification assumed",
        );
    }
    Ok(est)
}

fn select_multipliers(problem: &ParametricProblem, x: &[f64], y: &[f64], mp: &MultiplierPolyhedron, xund: &[f64]) -> Result<MultiplierPolyhedron> {
    let gx = problem.grad_x_f(x, y)?;
    let jx = problem.jac_x_g(x, y)?;
    let rows: Vec<Vec<f64>> = (0..problem.n).map(|j| (0..problem.p()).map(|l| jx[(l, j)]).collect()).collect();
    let rhs: Vec<f64> = (0..problem.n).map(|j| xund[j] - gx[j]).collect();
    let mut sel = mp.restrict(&rows, &rhs)?;
    if sel.is_empty() {
        // The equality may be slightly inconsistent in floating point;
        // fall back to vertices that meet it within the selection tolerance.
        let keep: Vec<Vec<f64>> = mp
            .vertices
            .iter()
            .filter(|u| {
                problem
                    .grad_x_lagrangian(x, y, u)
                    .map(|g| close(&g, xund, SELECT_TOL))
                    .unwrap_or(false)
            })
            .cloned()
            .collect();
        sel.vertices = keep;
    }
    Ok(sel)
}

/// `Lambda` single-valued at each minimizer, `S` possibly set-valued.
/// With `caratheodory` the concave-convex requirement is replaced by the
/// support enumeration over `grad_x L` generator values.
pub fn hessian_single_lambda(problem: &ParametricProblem, q: &HessianQuery, caratheodory_mode: bool, opts: &HessianOptions) -> Result<HessianEstimate> {
    let theorem = if caratheodory_mode {
        Theorem::SingleLambdaCaratheodory
    } else {
        Theorem::SingleLambda
    };
    let mut est = HessianEstimate::new(q, theorem, problem.n);
    let Some(sol) = prepare(problem, q, opts, &mut est)? else {
        return Ok(est.empty_with_kept());
    };
    single_lambda_from(problem, q, &sol, caratheodory_mode, opts, est)
}

fn single_lambda_from(
    problem: &ParametricProblem,
    q: &HessianQuery,
    sol: &SolveResult,
    caratheodory_mode: bool,
    opts: &HessianOptions,
    mut est: HessianEstimate,
) -> Result<HessianEstimate> {
    let x = q.xbar.clone();
    est.hypotheses.asserted("graph-compact", "compactness of gph K is not checkable from expressions");
    est.hypotheses.asserted("s-closed-locally-bounded", "closedness and local boundedness of S are assumed");
    if !caratheodory_mode {
        log_flag(&mut est.hypotheses, "concave-convex", problem.quadratic_concave_convex(), problem.assume.concave_convex);
    }
    let lambda_at = |y: &[f64]| -> Result<Vec<f64>> {
        let licq = check_licq(problem, &x, y, &opts.tol)?;
        if !licq.holds {
            return Err(Error::Hypothesis(format!("LICQ fails at y = {:?}", y)));
        }
        let mp = multipliers(problem, &x, y, &opts.tol, false)?;
        mp.vertices
            .first()
            .cloned()
            .ok_or_else(|| Error::Hypothesis(format!("no KKT multiplier at y = {:?}", y)))
    };
    let gen = |y: &[f64]| -> Result<Vec<f64>> {
        let u = lambda_at(y)?;
        problem.grad_x_lagrangian(&x, y, &u)
    };
    let ys = if caratheodory_mode {
        sol.minimizers.clone()
    } else {
        candidates(sol, &q.xund, &gen)?
    };
    est.hypotheses.verified("licq", "checked at every minimizer used");
    est.hypotheses
        .asserted("lambda-lipschitz", "local single-valuedness and Lipschitz continuity of lambda are assumed");
    let mut piece = |y: &[f64], v: &[f64], log: &mut HypothesisLog| -> Result<PolySet> {
        let u = lambda_at(y)?;
        let kkt = kkt_point(problem, &x, y, &u, &opts.tol, log)?;
        let mut scratch = HessianEstimate::new(q, Theorem::SingleLambda, problem.n);
        let out = single_single_piece(problem, &kkt, v, opts, &mut scratch, false)?;
        log.extend(&scratch.hypotheses);
        Ok(out)
    };
    if caratheodory_mode {
        let gens: Vec<Vec<f64>> = ys.iter().map(|y| gen(y)).collect::<Result<_>>()?;
        caratheodory(problem, q, opts, &mut est, &ys, &gens, &mut piece)?;
        dedup_log(&mut est.hypotheses);
        return Ok(est);
    }
    for y in ys {
        if !close(&gen(&y)?, &q.xund, SELECT_TOL) {
            continue;
        }
        let pieces = piece(&y, &q.xstar, &mut est.hypotheses)?;
        est.supports.push(SupportEntry {
            y: y.clone(),
            u: Some(lambda_at(&y)?),
            weight: None,
            pieces: pieces.pieces.len(),
        });
        est.result.extend(pieces);
    }
    dedup_log(&mut est.hypotheses);
    if est.supports.is_empty() {
        return Ok(est.empty_with("no (y, u) with u = lambda(x, y) and grad_x L(x, y, u) = x_"));
    }
    Ok(est)
}

/// Keeps the first entry per (name, status, detail).
fn dedup_log(log: &mut HypothesisLog) {
    let mut seen = std::collections::BTreeSet::new();
    log.0.retain(|e| seen.insert((e.name.clone(), format!("{:?}", e.status), e.detail.clone())));
}

fn full_column_rank(a: &[Vec<f64>], m: usize) -> bool {
    let mat = DMatrix::from_fn(a.len(), m, |r, c| a[r][c]);
    let sv = mat.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-9 * smax.max(1.0)).count() == m
}

fn linear_form(coeffs: &[f64], var: fn(usize) -> Var) -> Expr {
    let mut e = expr::constant(0.0);
    for (i, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            e = expr::add(e, expr::mul(expr::constant(c), expr::var(var(i))));
        }
    }
    e
}

/// `min x^T y s.t. A y <= b`.
pub fn lp_lhs_problem(a: &[Vec<f64>], b: &[f64]) -> Result<ParametricProblem> {
    let m = a.first().map_or(0, Vec::len);
    let mut f = expr::constant(0.0);
    for i in 0..m {
        f = expr::add(f, expr::mul(expr::var(Var::X(i)), expr::var(Var::Y(i))));
    }
    let g = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| expr::sub(linear_form(row, Var::Y), expr::constant(bi)))
        .collect();
    ParametricProblem::new("lp-lhs", m, m, f, g)
}

/// `min sum_{i<=m} x_i y_i s.t. A y <= x` with `x` in `R^p`.
pub fn lp_lhs_rhs_problem(a: &[Vec<f64>]) -> Result<ParametricProblem> {
    let m = a.first().map_or(0, Vec::len);
    let p = a.len();
    if p < m {
        return Err(Error::Dimension("A needs at least as many rows as columns".into()));
    }
    let mut f = expr::constant(0.0);
    for i in 0..m {
        f = expr::add(f, expr::mul(expr::var(Var::X(i)), expr::var(Var::Y(i))));
    }
    let g = a
        .iter()
        .enumerate()
        .map(|(l, row)| expr::sub(linear_form(row, Var::Y), expr::var(Var::X(l))))
        .collect();
    let mut prob = ParametricProblem::new("lp-lhs-rhs", p, m, f, g)?;
    prob.assume.concave_convex = Some(true);
    Ok(prob)
}

/// Collapses a set whose exact pieces all map to one point into a
/// singleton; pieces are in `(a, c)` and the map keeps `a`.
fn exact_collapse(set: &PolySet, m: usize) -> Result<Option<Vec<f64>>> {
    let mut value: Option<Vec<Rational>> = None;
    for piece in &set.pieces {
        let v = piece.poly.vertices_exact()?;
        if v.is_empty() {
            continue;
        }
        let zero = num_traits::Zero::zero();
        if v.rays.iter().chain(&v.lineality).any(|r| r[..m].iter().any(|c| *c != zero)) {
            return Ok(None);
        }
        for vert in &v.vertices {
            let img = vert[..m].to_vec();
            match &value {
                None => value = Some(img),
                Some(prev) if *prev != img => return Ok(None),
                _ => {}
            }
        }
    }
    Ok(value.map(|v| v.iter().map(crate::num::Field::to_f64).collect()))
}

/// Left-hand-side perturbed LP: pieces `{a : (a, c) in Xi(A), A^T c + x* = 0}`.
pub fn lp_lhs_hessian(a: &[Vec<f64>], b: &[f64], q: &HessianQuery, opts: &HessianOptions) -> Result<HessianEstimate> {
    let problem = lp_lhs_problem(a, b)?;
    let m = problem.m;
    let mut est = HessianEstimate::new(q, Theorem::LpLhs, m);
    validate(&problem, q)?;
    if !full_column_rank(a, m) {
        return Err(Error::Hypothesis("A does not have full column rank".into()));
    }
    est.hypotheses.verified("a-full-rank", "singular values of A");
    let solve = SolveOptions {
        rational: true,
        ..opts.solve.clone()
    };
    let sol = solve_value(&problem, &q.xbar, &solve)?;
    est.hypotheses.verified("y-compact", "vertex enumeration found no rays");
    // x_ must be an optimal point: feasible with the optimal value.
    let y = q.xund.clone();
    let g = problem.g_values(&q.xbar, &y)?;
    let val = problem.f_value(&q.xbar, &y)?;
    if g.iter().any(|&v| v > opts.tol.act) || (val - sol.value).abs() > SELECT_TOL * (1.0 + sol.value.abs()) {
        return Ok(est.empty_with(format!("x_ = {:?} is not a minimizer at x", q.xund)));
    }
    est.hypotheses.verified("xund-in-subdifferential", "x_ is an optimal vertex/face point");
    let mp = multipliers(&problem, &q.xbar, &y, &opts.tol, true)?;
    if mp.is_empty() {
        return Ok(est.empty_with("no multiplier at (x, x_)"));
    }
    if !mp.is_singleton() {
        est.hypotheses.asserted(
            "lambda-singleton",
            "degenerate vertex: the multiplier set is a polytope; union over its support patterns",
        );
    }
    for u in mp.representatives(opts.tol.act) {
        let kkt = kkt_point(&problem, &q.xbar, &y, &u, &opts.tol, &mut est.hypotheses)?;
        let fam = mho(&problem, &kkt, &vec![0.0; problem.p()], opts.flavor, opts.cap)?;
        let p = problem.p();
        for br in &fam.branches {
            let mut poly = br.poly.clone();
            for i in 0..m {
                let mut row = vec![0.0; m + p];
                for (l, arow) in a.iter().enumerate() {
                    row[m + l] = arow[i];
                }
                poly.add_eq(row, -q.xstar[i]);
            }
            let matrix = (0..m)
                .map(|i| {
                    let mut r = vec![0.0; m + p];
                    r[i] = 1.0;
                    r
                })
                .collect();
            est.result.push(Piece {
                poly,
                map: Affine { matrix, b: vec![0.0; m] },
                provenance: format!("Xi{} u={:?}", br.label(), u),
            });
        }
        est.supports.push(SupportEntry {
            y: y.clone(),
            u: Some(u),
            weight: None,
            pieces: fam.branches.len(),
        });
    }
    est.result = std::mem::replace(&mut est.result, PolySet::empty(m)).prune_empty();
    if let Some(point) = exact_collapse(&est.result, m)? {
        est.form = Form::Equality;
        est.result = PolySet::singleton(&point, "exact: all pieces collapse");
    }
    Ok(est)
}

/// Left- and right-hand-side perturbed LP, through the single-valued
/// multiplier machinery with selection `grad_x L = x_`.
pub fn lp_lhs_rhs_hessian(a: &[Vec<f64>], q: &HessianQuery, opts: &HessianOptions) -> Result<HessianEstimate> {
    let problem = lp_lhs_rhs_problem(a)?;
    let m = problem.m;
    if !full_column_rank(a, m) {
        return Err(Error::Hypothesis("A does not have full column rank".into()));
    }
    let mut est = HessianEstimate::new(q, Theorem::LpLhsRhs, problem.n);
    est.hypotheses.verified("a-full-rank", "singular values of A");
    let Some(sol) = prepare(&problem, q, opts, &mut est)? else {
        return Ok(est.empty_with_kept());
    };
    let mut out = single_lambda_from(&problem, q, &sol, false, opts, est)?;
    out.theorem = Theorem::LpLhsRhs;
    Ok(out)
}

/// Reads `A, b` back from a problem of the left-hand-side LP shape.
pub fn lp_lhs_data(problem: &ParametricProblem) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let x0 = vec![0.0; problem.n];
    let y0 = vec![0.0; problem.m];
    let jy = problem.jac_y_g(&x0, &y0)?;
    let g0 = problem.g_values(&x0, &y0)?;
    Ok((to_rows(&jy), g0.iter().map(|v| -v).collect()))
}

fn probe_points(n: usize, m: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    // Fixed, irrational-looking probes: structural detection must not
    // depend on a random seed.
    (0..3)
        .map(|k| {
            let t = k as f64 + 1.0;
            (
                (0..n).map(|j| 0.37 * t + 0.11 * j as f64 - 0.5).collect(),
                (0..m).map(|i| -0.23 * t + 0.17 * i as f64 + 0.3).collect(),
            )
        })
        .collect()
}

fn is_bilinear_cost(problem: &ParametricProblem) -> bool {
    probe_points(problem.n, problem.m).iter().all(|(x, y)| {
        let want: f64 = (0..problem.m.min(problem.n)).map(|i| x[i] * y[i]).sum();
        problem
            .f_value(x, y)
            .map(|v| (v - want).abs() <= 1e-12 * (1.0 + want.abs()))
            .unwrap_or(false)
    })
}

pub fn is_lp_lhs(problem: &ParametricProblem) -> bool {
    problem.n == problem.m && problem.g_independent_of_x() && problem.is_lp_in_y() && is_bilinear_cost(problem)
}

pub fn is_lp_lhs_rhs(problem: &ParametricProblem) -> bool {
    if !(problem.n == problem.p() && problem.m <= problem.n && problem.is_lp_in_y() && is_bilinear_cost(problem)) {
        return false;
    }
    let probes = probe_points(problem.n, problem.m);
    let Ok(j0) = problem.jac_y_g(&probes[0].0, &probes[0].1) else {
        return false;
    };
    probes.iter().all(|(x, y)| {
        let jx = problem.jac_x_g(x, y);
        let jy = problem.jac_y_g(x, y);
        match (jx, jy) {
            (Ok(jx), Ok(jy)) => {
                (0..problem.n).all(|r| (0..problem.n).all(|c| jx[(r, c)] == if r == c { -1.0 } else { 0.0 })) && jy == j0
            }
            _ => false,
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub theorem: Theorem,
    pub reasons: Vec<String>,
}

/// Picks the tightest applicable case from the structure and the singleton
/// verdicts at `xbar`.
pub fn route(problem: &ParametricProblem, q: &HessianQuery, opts: &HessianOptions) -> Result<Route> {
    let mut reasons = Vec::new();
    let flag = |symbolic: Option<bool>, user: Option<bool>| symbolic.or(user).unwrap_or(false);
    let cc = flag(problem.quadratic_concave_convex(), problem.assume.concave_convex);
    let theorem = match q.case {
        CaseHint::LpLhs => Theorem::LpLhs,
        CaseHint::LpLhsRhs => Theorem::LpLhsRhs,
        CaseHint::SingleSingle => Theorem::SingleSingle,
        CaseHint::SingleS => Theorem::SingleS,
        CaseHint::SingleLambda => {
            if cc {
                Theorem::SingleLambda
            } else {
                Theorem::SingleLambdaCaratheodory
            }
        }
        CaseHint::Unperturbed | CaseHint::Auto => {
            if q.case == CaseHint::Auto && is_lp_lhs(problem) {
                reasons.push("cost x^T y with x-free affine constraints".into());
                return Ok(Route {
                    theorem: Theorem::LpLhs,
                    reasons,
                });
            }
            if q.case == CaseHint::Auto && is_lp_lhs_rhs(problem) {
                reasons.push("cost x^T y with constraints A y <= x".into());
                return Ok(Route {
                    theorem: Theorem::LpLhsRhs,
                    reasons,
                });
            }
            let sol = solve_value(problem, &q.xbar, &opts.solve)?;
            if problem.g_independent_of_x() {
                reasons.push("constraints independent of x".into());
                if sol.singleton {
                    reasons.push("single minimizer".into());
                    Theorem::UnperturbedSingle
                } else if cc {
                    reasons.push("several minimizers, concave-convex".into());
                    Theorem::UnperturbedMulti
                } else {
                    reasons.push("several minimizers, not known concave-convex".into());
                    Theorem::UnperturbedCaratheodory
                }
            } else if q.case == CaseHint::Unperturbed {
                return Err(Error::WrongFormula("the constraints depend on x".into()));
            } else if sol.singleton {
                let mp = multipliers(problem, &q.xbar, &sol.minimizers[0], &opts.tol, false)?;
                if mp.is_singleton() {
                    reasons.push("single minimizer with a single multiplier".into());
                    Theorem::SingleSingle
                } else {
                    reasons.push(format!("single minimizer, {} multiplier vertices", mp.vertices.len()));
                    Theorem::SingleS
                }
            } else {
                for y in &sol.minimizers {
                    let mp = multipliers(problem, &q.xbar, y, &opts.tol, false)?;
                    if !mp.is_singleton() {
                        return Err(Error::Hypothesis(
                            "both the solution and multiplier maps are set-valued; no estimate is available for this case"
                                .into(),
                        ));
                    }
                }
                reasons.push("several minimizers, single multiplier at each".into());
                if cc {
                    Theorem::SingleLambda
                } else {
                    Theorem::SingleLambdaCaratheodory
                }
            }
        }
    };
    if reasons.is_empty() {
        reasons.push(format!("case hint {:?}", q.case));
    }
    Ok(Route { theorem, reasons })
}

/// Routes and evaluates.
pub fn hessian(problem: &ParametricProblem, q: &HessianQuery, opts: &HessianOptions) -> Result<HessianEstimate> {
    let r = route(problem, q, opts)?;
    let mut est = match r.theorem {
        Theorem::UnperturbedSingle => hessian_unperturbed(problem, q, UnperturbedMode::Single, opts)?,
        Theorem::UnperturbedMulti => hessian_unperturbed(problem, q, UnperturbedMode::Multi, opts)?,
        Theorem::UnperturbedCaratheodory => hessian_unperturbed(problem, q, UnperturbedMode::Caratheodory, opts)?,
        Theorem::SingleSingle => hessian_single_single(problem, q, opts)?,
        Theorem::SingleS => hessian_single_s(problem, q, opts)?,
        Theorem::SingleLambda => hessian_single_lambda(problem, q, false, opts)?,
        Theorem::SingleLambdaCaratheodory => hessian_single_lambda(problem, q, true, opts)?,
        Theorem::LpLhs => {
            if !is_lp_lhs(problem) {
                return Err(Error::WrongFormula("problem is not of the form min x^T y s.t. A y <= b".into()));
            }
            let (a, b) = lp_lhs_data(problem)?;
            lp_lhs_hessian(&a, &b, q, opts)?
        }
        Theorem::LpLhsRhs => {
            if !is_lp_lhs_rhs(problem) {
                return Err(Error::WrongFormula("problem is not of the form min x^T y s.t. A y <= x".into()));
            }
            let x0 = vec![0.0; problem.n];
            let y0 = vec![0.0; problem.m];
            let a = to_rows(&problem.jac_y_g(&x0, &y0)?);
            lp_lhs_rhs_hessian(&a, q, opts)?
        }
    };
    for reason in r.reasons {
        est.hypotheses.verified("route", reason);
    }
    if est.is_empty() && est.diagnostic.is_none() {
        est.diagnostic = Some(format!(
            "every branch system is infeasible for x* = {:?}: the coderivative at this covector is empty",
            q.xstar
        ));
    }
    Ok(est)
}
