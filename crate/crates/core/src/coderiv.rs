//! Multiplier branch sets, coderivative estimates for the multiplier and
//! solution maps, and the finite-support convex-hull coderivative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::HypothesisLog;
use crate::kernel::{check_mfcq, multipliers};
use crate::model::{KktPoint, LagrangianEval, ParametricProblem, Tolerances};
use crate::setcalc::{caratheodory_supports, Affine, HullCertificate, Piece, PolySet, Polyhedron};

pub const DEFAULT_BRANCH_CAP: usize = 8;
/// Hard limit for the two-case decomposition, which stays available above
/// the three-case cap.
pub const C_TYPE_LIMIT: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    /// Disjunctive three-case split per degenerate index.
    #[default]
    M,
    /// Sign-product relaxation with two closed cases.
    C,
}

impl std::str::FromStr for Flavor {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "M" | "m" => Ok(Flavor::M),
            "C" | "c" => Ok(Flavor::C),
            other => Err(format!("unknown flavor `{}` (expected M or C)", other)),
        }
    }
}

/// Case chosen for one degenerate index `i`, with
/// `e_i = u*_i + grad_y g_i . a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaCase {
    CZero,
    ExprZero,
    /// `e_i > 0` and `c_i > 0` (both rows strict).
    BothPositive,
    BothNonneg,
    BothNonpos,
}

impl ThetaCase {
    fn tag(self) -> &'static str {
        match self {
            ThetaCase::CZero => "c=0",
            ThetaCase::ExprZero => "e=0",
            ThetaCase::BothPositive => "e>0,c>0",
            ThetaCase::BothNonneg => "e>=0,c>=0",
            ThetaCase::BothNonpos => "e<=0,c<=0",
        }
    }
}

/// One branch: a polyhedron over `(a, c)` in `R^{m+p}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub cases: Vec<(usize, ThetaCase)>,
    pub poly: Polyhedron,
}

impl Branch {
    pub fn label(&self) -> String {
        if self.cases.is_empty() {
            return "[]".into();
        }
        let parts: Vec<String> = self
            .cases
            .iter()
            .map(|(i, c)| format!("{}:{}", i + 1, c.tag()))
            .collect();
        format!("[{}]", parts.join(";"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchFamily {
    pub kkt: KktPoint,
    pub ustar: Vec<f64>,
    pub flavor: Flavor,
    pub m: usize,
    pub p: usize,
    /// Rows of `grad_y g` at the base point.
    pub jac_y_g: Vec<Vec<f64>>,
    pub branches: Vec<Branch>,
    /// Branch count before empty branches were removed.
    pub raw_count: usize,
}

impl BranchFamily {
    pub fn contains_origin(&self, tol: f64) -> bool {
        let zero = vec![0.0; self.m + self.p];
        self.branches.iter().any(|b| b.poly.contains_closed(&zero, tol))
    }

    pub fn as_polyset(&self) -> PolySet {
        let mut out = PolySet::empty(self.m + self.p);
        for b in &self.branches {
            out.push(Piece {
                poly: b.poly.clone(),
                map: Affine::identity(self.m + self.p),
                provenance: b.label(),
            });
        }
        out
    }
}

fn expr_row(jy: &[Vec<f64>], i: usize, m: usize, p: usize, sign: f64) -> Vec<f64> {
    let mut row = vec![0.0; m + p];
    for k in 0..m {
        row[k] = sign * jy[i][k];
    }
    row
}

fn c_row(i: usize, m: usize, p: usize, sign: f64) -> Vec<f64> {
    let mut row = vec![0.0; m + p];
    row[m + i] = sign;
    row
}

/// The branch decomposition of the multiplier set at `kkt` for the
/// covector `ustar`.
pub fn mho(problem: &ParametricProblem, kkt: &KktPoint, ustar: &[f64], flavor: Flavor, cap: usize) -> Result<BranchFamily> {
    let (m, p) = (problem.m, problem.p());
    if ustar.len() != p {
        return Err(Error::Dimension(format!("u* has length {}, p = {}", ustar.len(), p)));
    }
    let theta = &kkt.partition.theta;
    let limit = match flavor {
        Flavor::M => cap,
        Flavor::C => C_TYPE_LIMIT,
    };
    if theta.len() > limit {
        return Err(Error::BranchCap {
            theta: theta.len(),
            cap: limit,
        });
    }
    let jm = problem.jac_y_g(&kkt.x, &kkt.y)?;
    let jy: Vec<Vec<f64>> = (0..p).map(|l| jm.row(l).iter().copied().collect()).collect();

    let mut base = Polyhedron::universe(m + p);
    for &i in &kkt.partition.nu {
        base.add_eq(expr_row(&jy, i, m, p, 1.0), -ustar[i]);
    }
    for &i in &kkt.partition.eta {
        base.add_eq(c_row(i, m, p, 1.0), 0.0);
    }

    let options: &[ThetaCase] = match flavor {
        Flavor::M => &[ThetaCase::CZero, ThetaCase::ExprZero, ThetaCase::BothPositive],
        Flavor::C => &[ThetaCase::BothNonneg, ThetaCase::BothNonpos],
    };
    let k = options.len();
    let total = k.pow(theta.len() as u32);
    let mut branches = Vec::new();
    for code in 0..total {
        let mut rest = code;
        let mut poly = base.clone();
        let mut cases = Vec::with_capacity(theta.len());
        for &i in theta {
            let case = options[rest % k];
            rest /= k;
            cases.push((i, case));
            match case {
                ThetaCase::CZero => poly.add_eq(c_row(i, m, p, 1.0), 0.0),
                ThetaCase::ExprZero => poly.add_eq(expr_row(&jy, i, m, p, 1.0), -ustar[i]),
                ThetaCase::BothPositive => {
                    poly.add_strict(expr_row(&jy, i, m, p, -1.0), ustar[i]);
                    poly.add_strict(c_row(i, m, p, -1.0), 0.0);
                }
                ThetaCase::BothNonneg => {
                    poly.add_leq(expr_row(&jy, i, m, p, -1.0), ustar[i]);
                    poly.add_leq(c_row(i, m, p, -1.0), 0.0);
                }
                ThetaCase::BothNonpos => {
                    poly.add_leq(expr_row(&jy, i, m, p, 1.0), -ustar[i]);
                    poly.add_leq(c_row(i, m, p, 1.0), 0.0);
                }
            }
        }
        if poly.has_strict_point() {
            branches.push(Branch { cases, poly });
        }
    }
    Ok(BranchFamily {
        kkt: kkt.clone(),
        ustar: ustar.to_vec(),
        flavor,
        m,
        p,
        jac_y_g: jy,
        branches,
        raw_count: total,
    })
}

/// The linear map `(a, c) -> (x*, y*)` of the multiplier-coderivative
/// estimate: `x* = hyx a + Jx^T c`, `y* = hyy a + Jy^T c`.
pub fn delanoe_map(e: &LagrangianEval) -> Affine {
    let (n, m, p) = (e.x.len(), e.y.len(), e.u.len());
    let mut matrix = vec![vec![0.0; m + p]; n + m];
    for j in 0..n {
        for k in 0..m {
            matrix[j][k] = e.hyx[(j, k)];
        }
        for l in 0..p {
            matrix[j][m + l] = e.jac_x_g[(l, j)];
        }
    }
    for i in 0..m {
        for k in 0..m {
            matrix[n + i][k] = e.hyy[(i, k)];
        }
        for l in 0..p {
            matrix[n + i][m + l] = e.jac_y_g[(l, i)];
        }
    }
    Affine {
        matrix,
        b: vec![0.0; n + m],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoderivKind {
    Lambda,
    Solution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoderivEstimate {
    pub kind: CoderivKind,
    pub input: Vec<f64>,
    pub result: PolySet,
    pub hypotheses: HypothesisLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CqLambdaReport {
    /// Only `(a, c) = 0` has a vanishing image inside the branch set at 0.
    pub injective: bool,
    /// Every element of the branch set at 0 has a vanishing image.
    pub image_vanishes: bool,
    /// A nonzero `(a, c)` with vanishing image, when one exists.
    pub witness: Option<Vec<f64>>,
    /// Closed-branch witnesses that disappear once the strict rows are
    /// enforced; these do not count against `injective`.
    pub strict_only_witnesses: usize,
}

pub fn check_cq_lambda(problem: &ParametricProblem, kkt: &KktPoint, flavor: Flavor, cap: usize) -> Result<CqLambdaReport> {
    let p = problem.p();
    let family = mho(problem, kkt, &vec![0.0; p], flavor, cap)?;
    let e = problem.differentiate(&kkt.x, &kkt.y, &kkt.u)?;
    let map = delanoe_map(&e);
    let mut report = CqLambdaReport {
        injective: true,
        image_vanishes: true,
        witness: None,
        strict_only_witnesses: 0,
    };
    let scale = map
        .matrix
        .iter()
        .flatten()
        .fold(1.0f64, |a, b| a.max(b.abs()));
    for branch in &family.branches {
        let gens = branch.poly.generators::<f64>();
        let vanishes = gens
            .rays
            .iter()
            .chain(&gens.lineality)
            .chain(&gens.vertices)
            .all(|d| {
                let dn = d.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
                map.apply_linear(d).iter().all(|v| v.abs() <= 1e-9 * scale * dn)
            });
        report.image_vanishes &= vanishes;

        let mut kernel = branch.poly.clone();
        for row in &map.matrix {
            kernel.add_eq(row.clone(), 0.0);
        }
        let kg = kernel.generators::<f64>();
        let nonzero = kg
            .rays
            .iter()
            .chain(&kg.lineality)
            .chain(kg.vertices.iter().filter(|v| v.iter().any(|x| x.abs() > 1e-12)))
            .next()
            .cloned();
        if let Some(w) = nonzero {
            if !kernel.open_rows.is_empty() && !kernel.has_strict_point() {
                report.strict_only_witnesses += 1;
            } else {
                report.injective = false;
                report.witness.get_or_insert(w);
            }
        }
    }
    Ok(report)
}

/// Records a kernel-based qualification check in `log`.
fn log_cq(log: &mut HypothesisLog, tag: &str, cq: &CqLambdaReport) {
    log.check(
        &format!("cq-lambda{}", tag),
        cq.injective,
        match &cq.witness {
            Some(w) => format!("nonzero (a,c) with vanishing image: {:?}", w),
            None => format!(
                "kernel trivial on every branch ({} strict-only closure witnesses)",
                cq.strict_only_witnesses
            ),
        },
    );
}

pub fn coderivative_lambda(
    problem: &ParametricProblem,
    kkt: &KktPoint,
    ustar: &[f64],
    flavor: Flavor,
    cap: usize,
) -> Result<CoderivEstimate> {
    let family = mho(problem, kkt, ustar, flavor, cap)?;
    let e = problem.differentiate(&kkt.x, &kkt.y, &kkt.u)?;
    let map = delanoe_map(&e);
    let mut result = PolySet::empty(problem.n + problem.m);
    for b in &family.branches {
        result.push(Piece {
            poly: b.poly.clone(),
            map: map.clone(),
            provenance: format!("D*Lambda {}", b.label()),
        });
    }
    let mut hypotheses = HypothesisLog::new();
    let cq = check_cq_lambda(problem, kkt, flavor, cap)?;
    log_cq(&mut hypotheses, "", &cq);
    hypotheses.check(
        "lipschitz-like-lambda",
        cq.image_vanishes,
        "every branch direction at u*=0 has vanishing image",
    );
    Ok(CoderivEstimate {
        kind: CoderivKind::Lambda,
        input: ustar.to_vec(),
        result,
        hypotheses,
    })
}

/// Builds a KKT point, logging instead of failing when the residual of a
/// computed multiplier is slightly above the strict tolerance.
pub(crate) fn kkt_point(
    problem: &ParametricProblem,
    x: &[f64],
    y: &[f64],
    u: &[f64],
    tol: &Tolerances,
    log: &mut HypothesisLog,
) -> Result<KktPoint> {
    match KktPoint::new(problem, x, y, u, tol) {
        Ok(k) => Ok(k),
        Err(Error::NotKkt { residual, .. }) if residual <= 1e3 * tol.kkt => {
            log.asserted(
                "kkt-residual",
                format!("residual {:e} above tol_kkt, accepted up to 1e3*tol_kkt", residual),
            );
            KktPoint::new(problem, x, y, u, &Tolerances { act: tol.act, kkt: residual })
        }
        Err(e) => Err(e),
    }
}

/// Logs a structural flag: verified symbolically when possible, otherwise
/// taken from the problem file.
pub(crate) fn log_flag(log: &mut HypothesisLog, name: &str, symbolic: Option<bool>, user: Option<bool>) -> bool {
    match (symbolic, user) {
        (Some(v), _) => log.check(name, v, "checked on the quadratic Hessian blocks"),
        (None, Some(true)) => {
            log.asserted(name, "asserted in the problem file");
            true
        }
        (None, Some(false)) => {
            log.failed(name, "denied in the problem file");
            false
        }
        (None, None) => {
            log.asserted(name, "not checkable for this expression class; assumed");
            true
        }
    }
}

/// Pieces `{hyx a + Jx^T c : v + hyy a + Jy^T c = 0, (a,c) in family}` for
/// one multiplier, which realize `D*S(x|y)(v)` at that multiplier.
pub(crate) fn solution_pieces(
    problem: &ParametricProblem,
    e: &LagrangianEval,
    family: &BranchFamily,
    v: &[f64],
    tag: &str,
) -> PolySet {
    let (n, m) = (problem.n, problem.m);
    let map = delanoe_map(e);
    let mut out = PolySet::empty(n);
    for b in &family.branches {
        let mut poly = b.poly.clone();
        for i in 0..m {
            poly.add_eq(map.matrix[n + i].clone(), -v[i]);
        }
        out.push(Piece {
            poly,
            map: Affine {
                matrix: map.matrix[..n].to_vec(),
                b: vec![0.0; n],
            },
            provenance: format!("D*S {} {}", tag, b.label()),
        });
    }
    out
}

/// Upper estimate of `D*S(x|y)(ystar)`, unioned over a representative
/// multiplier of every support pattern of `Lambda(x, y)`.
pub fn coderivative_s(
    problem: &ParametricProblem,
    x: &[f64],
    y: &[f64],
    ystar: &[f64],
    flavor: Flavor,
    cap: usize,
    tol: &Tolerances,
) -> Result<CoderivEstimate> {
    let mut hyp = HypothesisLog::new();
    log_flag(&mut hyp, "convex-in-y", problem.quadratic_convex_in_y(), problem.assume.convex_in_y);
    let mf = check_mfcq(problem, x, y, tol)?;
    if !mf.holds {
        return Err(Error::Hypothesis(format!(
            "MFCQ fails at (x, y); witness {:?}",
            mf.witness.unwrap_or_default()
        )));
    }
    hyp.verified("mfcq", "no nonzero u >= 0 cancels the active gradients");
    let mp = multipliers(problem, x, y, tol, false)?;
    if mp.is_empty() {
        return Err(Error::Hypothesis("Lambda(x, y) is empty".into()));
    }
    let mut result = PolySet::empty(problem.n);
    for (k, u) in mp.representatives(tol.act).iter().enumerate() {
        let kkt = kkt_point(problem, x, y, u, tol, &mut hyp)?;
        let family = mho(problem, &kkt, &vec![0.0; problem.p()], flavor, cap)?;
        let cq = check_cq_lambda(problem, &kkt, flavor, cap)?;
        log_cq(&mut hyp, &format!("@u{}", k), &cq);
        let e = problem.differentiate(x, y, u)?;
        result.extend(solution_pieces(problem, &e, &family, ystar, &format!("u{}", k)));
    }
    Ok(CoderivEstimate {
        kind: CoderivKind::Solution,
        input: ystar.to_vec(),
        result: result.prune_empty(),
        hypotheses: hyp,
    })
}

/// Coderivative of `x -> co{b^s(x)}` at `target`: for every Carathéodory
/// support reproducing `target`, the Minkowski sum of
/// `piece(s, a_s * covector)` over the support.
pub fn hull_coderivative<F>(
    generators: &[Vec<f64>],
    target: &[f64],
    covector: &[f64],
    out_dim: usize,
    tol: f64,
    mut piece: F,
) -> Result<(PolySet, Vec<HullCertificate>)>
where
    F: FnMut(usize, &[f64]) -> Result<PolySet>,
{
    let supports = caratheodory_supports(generators, target, tol);
    let mut out = PolySet::empty(out_dim);
    for cert in &supports {
        let mut sum = PolySet::singleton(&vec![0.0; out_dim], "0");
        for (&s, &a) in cert.indices.iter().zip(&cert.weights) {
            let scaled: Vec<f64> = covector.iter().map(|v| a * v).collect();
            sum = sum.minkowski_sum(&piece(s, &scaled)?);
        }
        for p in &mut sum.pieces {
            p.provenance = format!("support {:?} weights {:?}: {}", cert.indices, cert.weights, p.provenance);
        }
        out.extend(sum);
    }
    Ok((out, supports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bilinear() -> ParametricProblem {
        ParametricProblem::from_strings("bilinear", 1, 1, "x1*y1", &["y1 - 1", "-y1 - 1"]).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn nondegenerate_family_is_one_branch() {
        let p = bilinear();
        let kkt = KktPoint::new(&p, &[0.5], &[-1.0], &[0.0, 0.5], &tol()).unwrap();
        let fam = mho(&p, &kkt, &[0.0, 0.0], Flavor::M, 8).unwrap();
        assert_eq!(fam.branches.len(), 1);
        let poly = &fam.branches[0].poly;
        assert!(poly.contains_closed(&[0.0, 0.0, 3.0], 1e-12));
        assert!(!poly.contains_closed(&[0.1, 0.0, 0.0], 1e-12));
        assert!(!poly.contains_closed(&[0.0, 1.0, 0.0], 1e-12));
    }

    #[test]
    fn degenerate_index_gives_three_branches() {
        let p = ParametricProblem::from_strings("proj", 1, 1, "(y1 - x1)^2", &["-y1"]).unwrap();
        let kkt = KktPoint::new(&p, &[0.0], &[0.0], &[0.0], &tol()).unwrap();
        let fam = mho(&p, &kkt, &[0.0], Flavor::M, 8).unwrap();
        let labels: Vec<String> = fam.branches.iter().map(Branch::label).collect();
        assert_eq!(labels, vec!["[1:c=0]", "[1:e=0]", "[1:e>0,c>0]"]);
        assert!(fam.contains_origin(1e-12));
        let c = mho(&p, &kkt, &[0.0], Flavor::C, 8).unwrap();
        assert_eq!(c.branches.len(), 2);
    }

    #[test]
    fn inconsistent_covector_gives_empty_family() {
        // Both constraints strongly active with parallel gradients: u*_nu
        // outside the range of grad_y g_nu.
        let p = ParametricProblem::from_strings("par", 1, 1, "-y1", &["y1 - 1", "2*y1 - 2"]).unwrap();
        let kkt = KktPoint::new(&p, &[0.0], &[1.0], &[0.5, 0.25], &tol()).unwrap();
        assert_eq!(kkt.partition.nu, vec![0, 1]);
        let fam = mho(&p, &kkt, &[1.0, 0.0], Flavor::M, 8).unwrap();
        assert!(fam.branches.is_empty());
    }

    #[test]
    fn branch_cap_is_enforced() {
        let g: Vec<String> = (0..3).map(|_| "-y1".to_string()).collect();
        let gs: Vec<&str> = g.iter().map(String::as_str).collect();
        let p = ParametricProblem::from_strings("cap", 1, 1, "y1^2", &gs).unwrap();
        let kkt = KktPoint::new(&p, &[0.0], &[0.0], &[0.0; 3], &tol()).unwrap();
        assert!(matches!(
            mho(&p, &kkt, &[0.0; 3], Flavor::M, 2),
            Err(Error::BranchCap { theta: 3, cap: 2 })
        ));
        assert!(mho(&p, &kkt, &[0.0; 3], Flavor::C, 2).is_ok());
    }

    #[test]
    fn qualification_on_positive_definite_instance() {
        let p = bilinear();
        let kkt = KktPoint::new(&p, &[0.5], &[-1.0], &[0.0, 0.5], &tol()).unwrap();
        let cq = check_cq_lambda(&p, &kkt, Flavor::M, 8).unwrap();
        assert!(cq.injective);
        let q = ParametricProblem::from_strings("sq", 1, 1, "(y1 - x1)^2", &["y1 - 2"]).unwrap();
        let kkt = KktPoint::new(&q, &[0.0], &[0.0], &[0.0], &tol()).unwrap();
        let cq = check_cq_lambda(&q, &kkt, Flavor::M, 8).unwrap();
        // gph Lambda is the line y = x, so its normals (-t, t) survive.
        assert!(cq.injective && !cq.image_vanishes);
        let flat = ParametricProblem::from_strings("flat", 1, 1, "x1^2", &["y1 - 1", "-y1 - 1"]).unwrap();
        let kkt = KktPoint::new(&flat, &[0.0], &[0.0], &[0.0, 0.0], &tol()).unwrap();
        let cq = check_cq_lambda(&flat, &kkt, Flavor::M, 8).unwrap();
        assert!(cq.image_vanishes);
        let est = coderivative_lambda(&flat, &kkt, &[0.0, 0.0], Flavor::M, 8).unwrap();
        assert_eq!(est.result.singleton_value(1e-12), Some(vec![0.0, 0.0]));
    }

    #[test]
    fn duplicated_constraint_fails_qualification() {
        let p = ParametricProblem::from_strings("dup", 1, 1, "y1^2", &["-y1", "-2*y1"]).unwrap();
        let kkt = KktPoint::new(&p, &[0.0], &[0.0], &[0.0, 0.0], &tol()).unwrap();
        let cq = check_cq_lambda(&p, &kkt, Flavor::M, 8).unwrap();
        assert!(!cq.injective);
        let w = cq.witness.unwrap();
        assert!(w.iter().any(|v| v.abs() > 0.0));
    }

    #[test]
    fn solution_coderivative_of_identity_map() {
        let p = ParametricProblem::from_strings("sq", 1, 1, "(y1 - x1)^2", &["y1 - 2", "-y1 - 2"]).unwrap();
        let est = coderivative_s(&p, &[0.0], &[0.0], &[1.5], Flavor::M, 8, &tol()).unwrap();
        assert_eq!(est.result.singleton_value(1e-12), Some(vec![1.5]));
    }

    #[test]
    fn hull_coderivative_midpoint() {
        let gens = vec![vec![-1.0], vec![1.0]];
        let (set, certs) = hull_coderivative(&gens, &[0.0], &[2.0], 1, 1e-9, |s, v| {
            Ok(PolySet::singleton(&[v[0] * (s as f64 + 1.0)], "piece"))
        })
        .unwrap();
        assert_eq!(certs.len(), 1);
        // 0.5*2*1 + 0.5*2*2
        assert_eq!(set.singleton_value(1e-12), Some(vec![3.0]));
    }
}
