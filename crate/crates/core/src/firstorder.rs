//! First-order subdifferential estimates of the value function.

use serde::{Deserialize, Serialize};

use crate::coderiv::log_flag;
use crate::error::{Error, Result};
use crate::hypothesis::HypothesisLog;
use crate::kernel::{check_licq, check_mfcq, multipliers, Certificate, SolveResult};
use crate::model::{ParametricProblem, Tolerances};
use crate::setcalc::{Affine, ConvexHull, Membership, PolySet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HullKind {
    ConvexHull,
    UnionOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formula {
    Danskin,
    DanskinNohull,
    ConvexMfcq,
    GauvinDubeau,
    GauvinDubeauNohull,
    /// Only MFCQ at some minimizer: the estimate is an inclusion built from
    /// every multiplier vertex.
    GauvinDubeauInclusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub value: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdiffEstimate {
    pub x: Vec<f64>,
    pub generators: Vec<Generator>,
    pub hull: HullKind,
    pub formula: Formula,
    pub set: PolySet,
    pub hypotheses: HypothesisLog,
}

impl SubdiffEstimate {
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        !matches!(self.set.member(v, tol), Membership::Outside { .. })
    }

    /// Generators whose value equals `v` within `tol`.
    pub fn matching(&self, v: &[f64], tol: f64) -> Vec<&Generator> {
        self.generators
            .iter()
            .filter(|g| g.value.iter().zip(v).all(|(a, b)| (a - b).abs() <= tol))
            .collect()
    }
}

fn log_enumeration(log: &mut HypothesisLog, sol: &SolveResult) {
    match sol.certificate {
        Certificate::HeuristicMultistart => log.asserted(
            "minimizers-complete",
            "minimizers from multistart descent; S(x) may be under-enumerated",
        ),
        Certificate::ExactLp => log.verified("minimizers-complete", "exact vertex enumeration"),
        Certificate::UserPinned => log.asserted("minimizers-complete", "minimizers pinned in the problem file"),
    }
}

/// Convex hull of `values` plus, for `face` points, the hull of their
/// images; `union_only` keeps only the face hull and the singletons.
fn assemble(values: &[Vec<f64>], face_values: &[Vec<f64>], hull: HullKind, n: usize) -> PolySet {
    match hull {
        HullKind::ConvexHull => {
            let mut all = values.to_vec();
            all.extend_from_slice(face_values);
            ConvexHull::new(all).to_polyset("hull of generators")
        }
        HullKind::UnionOnly => {
            let mut out = PolySet::empty(n);
            if !face_values.is_empty() {
                out.extend(ConvexHull::new(face_values.to_vec()).to_polyset("optimal face"));
            }
            for v in values {
                out.extend(PolySet::singleton(v, "generator"));
            }
            out
        }
    }
}

/// `co{grad_x f(x, y) : y in S(x)}`, or the plain union under
/// concave-convexity. Requires `g` independent of `x`.
pub fn danskin(problem: &ParametricProblem, sol: &SolveResult) -> Result<SubdiffEstimate> {
    if !problem.g_independent_of_x() {
        return Err(Error::WrongFormula(
            "the constraints depend on x; use the multiplier-based (gauvin-dubeau) estimate".into(),
        ));
    }
    let x = &sol.x;
    let mut hyp = HypothesisLog::new();
    hyp.verified("g-independent-of-x", "structural check on the expressions");
    log_enumeration(&mut hyp, sol);
    let nohull = problem.assume.concave_convex.is_some()
        && log_flag(&mut hyp, "concave-convex", problem.quadratic_concave_convex(), problem.assume.concave_convex);
    let mut generators = Vec::new();
    for y in &sol.minimizers {
        generators.push(Generator {
            value: problem.grad_x_f(x, y)?,
            y: y.clone(),
            u: None,
        });
    }
    let face: Vec<Vec<f64>> = sol
        .face
        .iter()
        .map(|y| problem.grad_x_f(x, y))
        .collect::<Result<_>>()?;
    let (hull, formula) = if nohull {
        (HullKind::UnionOnly, Formula::DanskinNohull)
    } else {
        (HullKind::ConvexHull, Formula::Danskin)
    };
    let values: Vec<Vec<f64>> = generators.iter().map(|g| g.value.clone()).collect();
    Ok(SubdiffEstimate {
        x: x.clone(),
        set: assemble(&values, &face, hull, problem.n),
        generators,
        hull,
        formula,
        hypotheses: hyp,
    })
}

/// `{grad_x f + grad_x g^T u : u in Lambda(x, y)}` for a convex problem with
/// unique minimizer `y`, as the affine image of the multiplier polyhedron.
pub fn convex_mfcq_subdiff(problem: &ParametricProblem, x: &[f64], y: &[f64], tol: &Tolerances) -> Result<SubdiffEstimate> {
    let mut hyp = HypothesisLog::new();
    log_flag(&mut hyp, "convex-in-y", problem.quadratic_convex_in_y(), problem.assume.convex_in_y);
    hyp.asserted("solution-singleton", "S(x) taken as the single point supplied");
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
    let gx = problem.grad_x_f(x, y)?;
    let jx = problem.jac_x_g(x, y)?;
    let generators = mp
        .vertices
        .iter()
        .map(|u| Generator {
            value: (0..problem.n)
                .map(|j| gx[j] + (0..problem.p()).map(|l| jx[(l, j)] * u[l]).sum::<f64>())
                .collect(),
            y: y.to_vec(),
            u: Some(u.clone()),
        })
        .collect();
    let lam = mp.as_polyset();
    let piece = &lam.pieces[0];
    let k = piece.poly.dim;
    let matrix = (0..problem.n)
        .map(|j| {
            (0..k)
                .map(|c| (0..problem.p()).map(|l| jx[(l, j)] * piece.map.matrix[l][c]).sum())
                .collect()
        })
        .collect();
    let set = PolySet::from_piece(piece.poly.clone(), Affine { matrix, b: gx }, "multiplier image");
    Ok(SubdiffEstimate {
        x: x.to_vec(),
        generators,
        hull: HullKind::UnionOnly,
        formula: Formula::ConvexMfcq,
        set,
        hypotheses: hyp,
    })
}

/// `co{grad_x L(x, y, lambda(x, y)) : y in S(x)}` under LICQ, the union
/// under concave-convexity, and the multiplier-vertex inclusion when only
/// MFCQ holds at some minimizer.
pub fn gauvin_dubeau(problem: &ParametricProblem, sol: &SolveResult, tol: &Tolerances) -> Result<SubdiffEstimate> {
    let x = &sol.x;
    let mut hyp = HypothesisLog::new();
    log_enumeration(&mut hyp, sol);
    hyp.asserted("graph-compact", "compactness of gph K is not checkable from expressions");
    let mut generators = Vec::new();
    let mut inclusion = false;
    for y in &sol.minimizers {
        let licq = check_licq(problem, x, y, tol)?;
        let mp = multipliers(problem, x, y, tol, false)?;
        if mp.is_empty() {
            return Err(Error::Hypothesis(format!("no KKT multiplier at minimizer {:?}", y)));
        }
        let us: Vec<Vec<f64>> = if licq.holds {
            vec![mp.vertices[0].clone()]
        } else {
            inclusion = true;
            let mf = check_mfcq(problem, x, y, tol)?;
            if !mf.holds {
                return Err(Error::Hypothesis(format!("neither LICQ nor MFCQ holds at {:?}", y)));
            }
            mp.vertices.clone()
        };
        for u in us {
            generators.push(Generator {
                value: problem.grad_x_lagrangian(x, y, &u)?,
                y: y.clone(),
                u: Some(u),
            });
        }
    }
    hyp.check(
        "licq",
        !inclusion,
        if inclusion {
            "LICQ fails at some minimizer; inclusion over multiplier vertices"
        } else {
            "LICQ at every minimizer"
        },
    );
    let nohull = !inclusion
        && problem.assume.concave_convex.is_some()
        && log_flag(&mut hyp, "concave-convex", problem.quadratic_concave_convex(), problem.assume.concave_convex);
    let (hull, formula) = if inclusion {
        (HullKind::ConvexHull, Formula::GauvinDubeauInclusion)
    } else if nohull {
        (HullKind::UnionOnly, Formula::GauvinDubeauNohull)
    } else {
        (HullKind::ConvexHull, Formula::GauvinDubeau)
    };
    let values: Vec<Vec<f64>> = generators.iter().map(|g| g.value.clone()).collect();
    Ok(SubdiffEstimate {
        x: x.clone(),
        set: assemble(&values, &[], hull, problem.n),
        generators,
        hull,
        formula,
        hypotheses: hyp,
    })
}

/// The estimate the structure of the problem supports best.
pub fn first_order(problem: &ParametricProblem, sol: &SolveResult, tol: &Tolerances) -> Result<SubdiffEstimate> {
    if problem.g_independent_of_x() {
        danskin(problem, sol)
    } else {
        gauvin_dubeau(problem, sol, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{solve_value, SolveOptions};

    fn bilinear() -> ParametricProblem {
        ParametricProblem::from_strings("bilinear", 1, 1, "x1*y1", &["y1 - 1", "-y1 - 1"]).unwrap()
    }

    #[test]
    fn danskin_at_kink_is_the_segment() {
        let p = bilinear();
        let sol = solve_value(&p, &[0.0], &SolveOptions::default()).unwrap();
        let est = danskin(&p, &sol).unwrap();
        assert_eq!(est.formula, Formula::Danskin);
        assert!(est.set.member(&[0.3], 1e-9).is_inside());
        assert!(est.set.member(&[-1.0], 1e-9).in_closure());
        assert!(!est.set.member(&[1.2], 1e-9).in_closure());
    }

    #[test]
    fn danskin_at_smooth_point() {
        let p = bilinear();
        let sol = solve_value(&p, &[0.5], &SolveOptions::default()).unwrap();
        let est = danskin(&p, &sol).unwrap();
        assert_eq!(est.set.singleton_value(1e-12), Some(vec![-1.0]));
    }

    #[test]
    fn danskin_rejects_coupled_constraints() {
        let p = ParametricProblem::from_strings("c", 1, 1, "y1", &["x1 - y1", "y1 - 5"]).unwrap();
        let sol = solve_value(&p, &[1.0], &SolveOptions::default()).unwrap();
        assert!(matches!(danskin(&p, &sol), Err(Error::WrongFormula(_))));
    }

    #[test]
    fn multiplier_formulas_agree_when_unperturbed() {
        let p = bilinear();
        let t = Tolerances::default();
        let sol = solve_value(&p, &[0.5], &SolveOptions::default()).unwrap();
        let a = convex_mfcq_subdiff(&p, &[0.5], &sol.minimizers[0], &t).unwrap();
        let b = gauvin_dubeau(&p, &sol, &t).unwrap();
        assert_eq!(a.set.singleton_value(1e-12), Some(vec![-1.0]));
        assert_eq!(b.set.singleton_value(1e-12), Some(vec![-1.0]));
    }

    #[test]
    fn rhs_perturbation_uses_negative_multiplier() {
        // min x1*y1 s.t. y1 <= x2, -y1 <= x3: at x = (1, 1, 1), y = -1, u = (0, 1).
        let p = ParametricProblem::from_strings("rhs", 3, 1, "x1*y1", &["y1 - x2", "-y1 - x3"]).unwrap();
        let t = Tolerances::default();
        let sol = solve_value(&p, &[1.0, 1.0, 1.0], &SolveOptions::default()).unwrap();
        let est = gauvin_dubeau(&p, &sol, &t).unwrap();
        assert_eq!(est.set.singleton_value(1e-12), Some(vec![-1.0, 0.0, -1.0]));
    }
}
