//! Value, minimizers, multipliers and constraint qualifications at a
//! parameter point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome};
use crate::model::{ParametricProblem, Tolerances};
use crate::num::{Field, Rational};
use crate::setcalc::{Affine, PolySet, Polyhedron};

pub const DEDUP_RADIUS: f64 = 1e-6;
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certificate {
    ExactLp,
    HeuristicMultistart,
    UserPinned,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub rational: bool,
    /// Points per axis of the multistart grid.
    pub grid: usize,
    pub pinned: Option<Vec<Vec<f64>>>,
    pub tol: Tolerances,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rational: true,
            grid: 5,
            pinned: None,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Exact optimal value as `p/q` on the rational LP path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_value: Option<String>,
    pub minimizers: Vec<Vec<f64>>,
    pub certificate: Certificate,
    pub singleton: bool,
    /// Vertices of the optimal face when the LP optimum is not unique.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub face: Vec<Vec<f64>>,
}

/// Affine data of an LP in `y` at fixed `x`: `f = f0 + c.y`, `G y <= h`.
pub struct LpData {
    pub f0: f64,
    pub c: Vec<f64>,
    pub g_rows: Vec<Vec<f64>>,
    pub h: Vec<f64>,
}

pub fn lp_data(problem: &ParametricProblem, x: &[f64]) -> Result<LpData> {
    let zero = vec![0.0; problem.m];
    let jy = problem.jac_y_g(x, &zero)?;
    let g0 = problem.g_values(x, &zero)?;
    Ok(LpData {
        f0: problem.f_value(x, &zero)?,
        c: problem.grad_y_f(x, &zero)?,
        g_rows: (0..problem.p()).map(|l| jy.row(l).iter().copied().collect()).collect(),
        h: g0.iter().map(|v| -v).collect(),
    })
}

pub fn rational_to_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn sort_points(points: &mut [Vec<f64>]) {
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

fn centroid(points: &[Vec<f64>]) -> Vec<f64> {
    let k = points.len() as f64;
    let mut c = vec![0.0; points[0].len()];
    for p in points {
        for (a, b) in c.iter_mut().zip(p) {
            *a += b / k;
        }
    }
    c
}

/// Computes `phi(x)` and the minimizer list.
pub fn solve_value(problem: &ParametricProblem, x: &[f64], opts: &SolveOptions) -> Result<SolveResult> {
    if x.len() != problem.n {
        return Err(Error::Dimension(format!("|x| = {}, n = {}", x.len(), problem.n)));
    }
    if let Some(pinned) = &opts.pinned {
        return solve_pinned(problem, x, pinned);
    }
    if problem.is_lp_in_y() {
        solve_lp(problem, x, opts.rational)
    } else {
        solve_nlp(problem, x, opts)
    }
}

fn solve_pinned(problem: &ParametricProblem, x: &[f64], pinned: &[Vec<f64>]) -> Result<SolveResult> {
    let mut scored = Vec::new();
    for y in pinned {
        let g = problem.g_values(x, y)?;
        if g.iter().any(|&v| v > 1e-7) {
            return Err(Error::Hypothesis(format!("pinned minimizer {:?} is infeasible", y)));
        }
        scored.push((problem.f_value(x, y)?, y.clone()));
    }
    if scored.is_empty() {
        return Err(Error::Infeasible { x: x.to_vec() });
    }
    let value = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let mut minimizers: Vec<Vec<f64>> = scored
        .into_iter()
        .filter(|(v, _)| *v <= value + 1e-9 * (1.0 + value.abs()))
        .map(|(_, y)| y)
        .collect();
    sort_points(&mut minimizers);
    let singleton = minimizers.len() == 1;
    Ok(SolveResult {
        x: x.to_vec(),
        value,
        exact_value: None,
        minimizers,
        certificate: Certificate::UserPinned,
        singleton,
        face: Vec::new(),
    })
}

fn solve_lp(problem: &ParametricProblem, x: &[f64], rational: bool) -> Result<SolveResult> {
    let data = lp_data(problem, x)?;
    let mut poly = Polyhedron::universe(problem.m);
    for (row, &h) in data.g_rows.iter().zip(&data.h) {
        poly.add_leq(row.clone(), h);
    }
    let (vertices, values, exact): (Vec<Vec<f64>>, Vec<f64>, Option<Vec<Rational>>) = if rational {
        let v = poly.vertices_exact()?;
        if !v.is_bounded() && !v.is_empty() {
            return Err(Error::Unbounded { x: x.to_vec() });
        }
        let f0 = <Rational as Field>::from_f64(data.f0);
        let c: Vec<Rational> = data.c.iter().map(|&a| <Rational as Field>::from_f64(a)).collect();
        let vals: Vec<Rational> = v
            .vertices
            .iter()
            .map(|p| crate::num::dot(&c, p) + f0.clone())
            .collect();
        let fl = v.to_f64();
        let valsf = vals.iter().map(Field::to_f64).collect();
        (fl.vertices, valsf, Some(vals))
    } else {
        let v = poly.vertices()?;
        if !v.is_bounded() && !v.is_empty() {
            return Err(Error::Unbounded { x: x.to_vec() });
        }
        let vals = v
            .vertices
            .iter()
            .map(|p| data.f0 + p.iter().zip(&data.c).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        (v.vertices, vals, None)
    };
    if vertices.is_empty() {
        return Err(Error::Infeasible { x: x.to_vec() });
    }
    let (opt, exact_value) = match &exact {
        Some(vals) => {
            let best = vals
                .iter()
                .cloned()
                .reduce(|a, b| if b < a { b } else { a })
                .expect("nonempty");
            let opt: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] == best).collect();
            (opt, Some(best))
        }
        None => {
            let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let opt = (0..values.len())
                .filter(|&k| values[k] <= best + 1e-9 * (1.0 + best.abs()))
                .collect();
            (opt, None)
        }
    };
    let value = values[opt[0]];
    let mut face: Vec<Vec<f64>> = opt.iter().map(|&k| vertices[k].clone()).collect();
    sort_points(&mut face);
    let singleton = face.len() == 1;
    let minimizers = if singleton {
        face.clone()
    } else {
        let mut m = face.clone();
        m.push(centroid(&face));
        m
    };
    Ok(SolveResult {
        x: x.to_vec(),
        value: exact_value.as_ref().map_or(value, Field::to_f64),
        exact_value: exact_value.as_ref().map(rational_to_string),
        minimizers,
        certificate: Certificate::ExactLp,
        singleton,
        face: if singleton { Vec::new() } else { face },
    })
}

fn grid_starts(lo: &[f64], hi: &[f64], k: usize) -> Vec<Vec<f64>> {
    let m = lo.len();
    let mut k = k.max(2);
    while k > 2 && k.pow(m as u32) > 3125 {
        k -= 1;
    }
    let mut out = Vec::new();
    let total = k.pow(m as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let t = (rem % k) as f64 / (k - 1) as f64;
            rem /= k;
            y[i] = lo[i] + t * (hi[i] - lo[i]);
        }
        out.push(y);
    }
    out
}

struct Local<'a> {
    problem: &'a ParametricProblem,
    x: &'a [f64],
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Local<'_> {
    fn penalty(&self, y: &[f64], rho: f64) -> Option<(f64, Vec<f64>)> {
        let p = self.problem;
        let mut val = p.f_value(self.x, y).ok()?;
        let mut grad = p.grad_y_f(self.x, y).ok()?;
        let g = p.g_values(self.x, y).ok()?;
        let jy = p.jac_y_g(self.x, y).ok()?;
        for (l, &gl) in g.iter().enumerate() {
            if gl > 0.0 {
                val += 0.5 * rho * gl * gl;
                for i in 0..p.m {
                    grad[i] += rho * gl * jy[(l, i)];
                }
            }
        }
        Some((val, grad))
    }

    fn project(&self, y: &mut [f64]) {
        for i in 0..y.len() {
            y[i] = y[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    fn descend(&self, mut y: Vec<f64>) -> Option<Vec<f64>> {
        for &rho in &[1e1, 1e3, 1e5] {
            let mut step: f64 = 1.0;
            for _ in 0..300 {
                let (val, grad) = self.penalty(&y, rho)?;
                let gn: f64 = grad.iter().map(|v| v * v).sum();
                if gn.sqrt() < 1e-12 {
                    break;
                }
                step = (step * 2.0).min(1.0);
                let mut moved = false;
                for _ in 0..60 {
                    let mut trial: Vec<f64> = y.iter().zip(&grad).map(|(a, b)| a - step * b).collect();
                    self.project(&mut trial);
                    if let Some((tv, _)) = self.penalty(&trial, rho) {
                        let dec: f64 = y.iter().zip(&trial).map(|(a, b)| (a - b).powi(2)).sum();
                        if tv <= val - 1e-4 * dec / step.max(1e-300) {
                            moved = dec > 0.0;
                            y = trial;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
        }
        Some(y)
    }

    /// Newton iteration on the KKT system of the active set, with
    /// add/drop corrections.
    fn polish(&self, y0: &[f64]) -> Option<Vec<f64>> {
        let p = self.problem;
        let (m, np) = (p.m, p.p());
        let g0 = p.g_values(self.x, y0).ok()?;
        let mut active: Vec<usize> = (0..np).filter(|&l| g0[l] > -1e-4).collect();
        let mut y = y0.to_vec();
        for _round in 0..20 {
            let k = active.len();
            let mut u = vec![0.0; np];
            // Least-squares multiplier estimate.
            if k > 0 {
                let jy = p.jac_y_g(self.x, &y).ok()?;
                let gy = DVector::from_vec(p.grad_y_f(self.x, &y).ok()?);
                let ga = DMatrix::from_fn(m, k, |i, c| jy[(active[c], i)]);
                let sol = ga.svd(true, true).solve(&(-gy), 1e-12).ok()?;
                for (c, &l) in active.iter().enumerate() {
                    u[l] = sol[c];
                }
            }
            let mut converged = false;
            for _ in 0..60 {
                let e = p.differentiate(self.x, &y, &u).ok()?;
                let mut rhs = DVector::zeros(m + k);
                for i in 0..m {
                    rhs[i] = -e.grad_y[i];
                }
                for (c, &l) in active.iter().enumerate() {
                    rhs[m + c] = -e.g[l];
                }
                let res = rhs.amax();
                if res < 1e-14 * (1.0 + e.grad_y_f.amax()) {
                    converged = true;
                    break;
                }
                let mut jac = DMatrix::zeros(m + k, m + k);
                jac.view_mut((0, 0), (m, m)).copy_from(&e.hyy);
                for (c, &l) in active.iter().enumerate() {
                    for i in 0..m {
                        jac[(i, m + c)] = e.jac_y_g[(l, i)];
                        jac[(m + c, i)] = e.jac_y_g[(l, i)];
                    }
                }
                let d = jac.svd(true, true).solve(&rhs, 1e-13).ok()?;
                for i in 0..m {
                    y[i] += d[i];
                }
                for (c, &l) in active.iter().enumerate() {
                    u[l] += d[m + c];
                }
                if !y.iter().all(|v| v.is_finite()) {
                    return None;
                }
                if d.amax() < 1e-15 * (1.0 + y.iter().fold(0.0f64, |a, b| a.max(b.abs()))) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return None;
            }
            let g = p.g_values(self.x, &y).ok()?;
            let most_negative = active
                .iter()
                .copied()
                .filter(|&l| u[l] < -1e-10)
                .min_by(|&a, &b| u[a].total_cmp(&u[b]));
            if let Some(l) = most_negative {
                active.retain(|&a| a != l);
                continue;
            }
            let most_violated = (0..np)
                .filter(|l| !active.contains(l) && g[*l] > FEAS_TOL)
                .max_by(|&a, &b| g[a].total_cmp(&g[b]));
            if let Some(l) = most_violated {
                active.push(l);
                active.sort_unstable();
                continue;
            }
            return Some(y);
        }
        None
    }
}

fn solve_nlp(problem: &ParametricProblem, x: &[f64], opts: &SolveOptions) -> Result<SolveResult> {
    let bx = problem.y_box.as_ref().ok_or(Error::NeedsBox)?;
    let lo: Vec<f64> = bx.iter().map(|b| b[0]).collect();
    let hi: Vec<f64> = bx.iter().map(|b| b[1]).collect();
    let local = Local {
        problem,
        x,
        lo: lo.iter().zip(&hi).map(|(l, h)| l - (h - l)).collect(),
        hi: lo.iter().zip(&hi).map(|(l, h)| h + (h - l)).collect(),
    };
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    for start in grid_starts(&lo, &hi, opts.grid) {
        let Some(rough) = local.descend(start) else { continue };
        let feasible = |y: &[f64], tol: f64| {
            problem
                .g_values(x, y)
                .map(|g| g.iter().all(|&v| v <= tol))
                .unwrap_or(false)
        };
        let rough_val = problem.f_value(x, &rough).unwrap_or(f64::INFINITY);
        let chosen = match local.polish(&rough) {
            Some(y) if feasible(&y, FEAS_TOL) => {
                let v = problem.f_value(x, &y)?;
                if v <= rough_val + 1e-4 * (1.0 + rough_val.abs()) {
                    Some((v, y))
                } else {
                    None
                }
            }
            _ => None,
        };
        let chosen = chosen.or_else(|| feasible(&rough, 1e-6).then_some((rough_val, rough)));
        if let Some(c) = chosen {
            candidates.push(c);
        }
    }
    if candidates.is_empty() {
        return Err(Error::Infeasible { x: x.to_vec() });
    }
    let value = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let mut minimizers: Vec<Vec<f64>> = Vec::new();
    for (v, y) in candidates {
        if v > value + 1e-9 * (1.0 + value.abs()) {
            continue;
        }
        let dup = minimizers.iter().any(|z| {
            z.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= DEDUP_RADIUS
        });
        if !dup {
            minimizers.push(y);
        }
    }
    sort_points(&mut minimizers);
    let singleton = minimizers.len() == 1;
    Ok(SolveResult {
        x: x.to_vec(),
        value,
        exact_value: None,
        minimizers,
        certificate: Certificate::HeuristicMultistart,
        singleton,
        face: Vec::new(),
    })
}

/// `Lambda(x, y)` restricted to the active constraints, with its
/// generators lifted back to `R^p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPolyhedron {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p: usize,
    pub active: Vec<usize>,
    /// Polyhedron over the active multipliers only.
    pub poly: Polyhedron,
    pub vertices: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
}

impl MultiplierPolyhedron {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.vertices.len() == 1 && self.rays.is_empty()
    }

    fn lift(&self, reduced: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.p];
        for (c, &l) in self.active.iter().enumerate() {
            u[l] = reduced[c];
        }
        u
    }

    /// The sub-polyhedron cut out by extra equations `rows . u = rhs`
    /// written over the full multiplier space `R^p`.
    pub fn restrict(&self, rows: &[Vec<f64>], rhs: &[f64]) -> Result<MultiplierPolyhedron> {
        let mut poly = self.poly.clone();
        for (row, &b) in rows.iter().zip(rhs) {
            poly.add_eq(self.active.iter().map(|&l| row[l]).collect(), b);
        }
        let v = poly.vertices()?;
        let mut out = MultiplierPolyhedron {
            poly,
            vertices: Vec::new(),
            rays: Vec::new(),
            ..self.clone()
        };
        out.vertices = v.vertices.iter().map(|r| out.lift(r)).collect();
        out.rays = v.rays.iter().chain(&v.lineality).map(|r| out.lift(r)).collect();
        Ok(out)
    }

    /// The polyhedron as a subset of `R^p`.
    pub fn as_polyset(&self) -> PolySet {
        let k = self.active.len();
        let matrix = (0..self.p)
            .map(|l| {
                let mut row = vec![0.0; k];
                if let Some(c) = self.active.iter().position(|&a| a == l) {
                    row[c] = 1.0;
                }
                row
            })
            .collect();
        PolySet::from_piece(
            self.poly.clone(),
            Affine {
                matrix,
                b: vec![0.0; self.p],
            },
            "multipliers",
        )
    }

    /// One multiplier per support pattern realized in the polytope: the
    /// vertices, plus a barycenter for every pattern that only occurs in
    /// the relative interior of a higher-dimensional face.
    pub fn representatives(&self, tol: f64) -> Vec<Vec<f64>> {
        let support = |u: &[f64]| -> Vec<bool> { u.iter().map(|&v| v > tol).collect() };
        let mut out: Vec<Vec<f64>> = self.vertices.clone();
        let mut seen: Vec<Vec<bool>> = out.iter().map(|u| support(u)).collect();
        let k = self.vertices.len();
        if k > 1 && k <= 12 {
            for mask in 1u32..(1 << k) {
                if mask.count_ones() < 2 {
                    continue;
                }
                let chosen: Vec<&Vec<f64>> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| &self.vertices[i]).collect();
                let mut bary = vec![0.0; self.p];
                for v in &chosen {
                    for (b, x) in bary.iter_mut().zip(v.iter()) {
                        *b += x / chosen.len() as f64;
                    }
                }
                let s = support(&bary);
                if !seen.contains(&s) {
                    seen.push(s);
                    out.push(bary);
                }
            }
        }
        out
    }
}

/// Multiplier polyhedron at a feasible `(x, y)`.
pub fn multipliers(problem: &ParametricProblem, x: &[f64], y: &[f64], tol: &Tolerances, rational: bool) -> Result<MultiplierPolyhedron> {
    let g = problem.g_values(x, y)?;
    let active: Vec<usize> = (0..problem.p()).filter(|&l| g[l].abs() <= tol.act).collect();
    let jy = problem.jac_y_g(x, y)?;
    let gy = problem.grad_y_f(x, y)?;
    let k = active.len();
    let mut poly = Polyhedron::universe(k);
    for c in 0..k {
        let mut row = vec![0.0; k];
        row[c] = -1.0;
        poly.add_leq(row, 0.0);
    }
    for i in 0..problem.m {
        let row: Vec<f64> = active.iter().map(|&l| jy[(l, i)]).collect();
        // an empty row only carries the stationarity residual of the solve
        if row.iter().all(|&v| v == 0.0) && gy[i].abs() <= tol.kkt {
            continue;
        }
        poly.add_eq(row, -gy[i]);
    }
    let v = if rational {
        poly.vertices_exact()?.to_f64()
    } else {
        poly.vertices()?
    };
    let mut mp = MultiplierPolyhedron {
        x: x.to_vec(),
        y: y.to_vec(),
        p: problem.p(),
        active,
        poly,
        vertices: Vec::new(),
        rays: Vec::new(),
    };
    mp.vertices = v.vertices.iter().map(|r| mp.lift(r)).collect();
    mp.rays = v.rays.iter().chain(&v.lineality).map(|r| mp.lift(r)).collect();
    Ok(mp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LicqReport {
    pub holds: bool,
    pub rank: usize,
    pub active: Vec<usize>,
    pub singular_values: Vec<f64>,
}

pub fn active_set(problem: &ParametricProblem, x: &[f64], y: &[f64], tol: &Tolerances) -> Result<Vec<usize>> {
    let g = problem.g_values(x, y)?;
    Ok((0..problem.p()).filter(|&l| g[l].abs() <= tol.act).collect())
}

pub fn check_licq(problem: &ParametricProblem, x: &[f64], y: &[f64], tol: &Tolerances) -> Result<LicqReport> {
    let active = active_set(problem, x, y, tol)?;
    if active.is_empty() {
        return Ok(LicqReport {
            holds: true,
            rank: 0,
            active,
            singular_values: Vec::new(),
        });
    }
    let jy = problem.jac_y_g(x, y)?;
    let rows = DMatrix::from_fn(active.len(), problem.m, |r, c| jy[(active[r], c)]);
    let sv: Vec<f64> = rows.singular_values().iter().copied().collect();
    let rank = sv.iter().filter(|&&s| s > 1e-9).count();
    Ok(LicqReport {
        holds: rank == active.len(),
        rank,
        active,
        singular_values: sv,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfcqReport {
    pub holds: bool,
    /// Nonzero `u >= 0` with `grad_y g^T u = 0`, scaled to max entry one.
    pub witness: Option<Vec<f64>>,
}

pub fn check_mfcq(problem: &ParametricProblem, x: &[f64], y: &[f64], tol: &Tolerances) -> Result<MfcqReport> {
    let active = active_set(problem, x, y, tol)?;
    if active.is_empty() {
        return Ok(MfcqReport {
            holds: true,
            witness: None,
        });
    }
    let jy = problem.jac_y_g(x, y)?;
    let k = active.len();
    let mut lp = LinearProgram::new(k);
    lp.nonneg = vec![true; k];
    for i in 0..problem.m {
        lp.eq(active.iter().map(|&l| jy[(l, i)]).collect(), 0.0);
    }
    lp.eq(vec![1.0; k], 1.0);
    match lp.solve() {
        LpOutcome::Optimal { x: w, .. } => {
            let big = w.iter().cloned().fold(0.0, f64::max);
            let mut u = vec![0.0; problem.p()];
            for (c, &l) in active.iter().enumerate() {
                u[l] = w[c] / big;
            }
            Ok(MfcqReport {
                holds: false,
                witness: Some(u),
            })
        }
        _ => Ok(MfcqReport {
            holds: true,
            witness: None,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bilinear() -> ParametricProblem {
        ParametricProblem::from_strings("bilinear", 1, 1, "x1*y1", &["y1 - 1", "-y1 - 1"]).unwrap()
    }

    #[test]
    fn lp_vertex_minimum() {
        let r = solve_value(&bilinear(), &[0.5], &SolveOptions::default()).unwrap();
        assert_eq!(r.value, -0.5);
        assert_eq!(r.minimizers, vec![vec![-1.0]]);
        assert_eq!(r.certificate, Certificate::ExactLp);
    }

    #[test]
    fn lp_face_is_flagged() {
        let r = solve_value(&bilinear(), &[0.0], &SolveOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(!r.singleton);
        assert_eq!(r.face, vec![vec![-1.0], vec![1.0]]);
        assert_eq!(r.minimizers.len(), 3);
    }

    #[test]
    fn nlp_exact_fit() {
        let p = ParametricProblem::from_strings("sq", 1, 1, "(y1 - x1)^2", &["y1 - 2", "-y1 - 2"])
            .unwrap()
            .with_box(vec![[-2.0, 2.0]]);
        let r = solve_value(&p, &[0.0], &SolveOptions::default()).unwrap();
        assert!(r.value.abs() < 1e-14);
        assert_eq!(r.minimizers.len(), 1);
        assert!(r.minimizers[0][0].abs() < 1e-10);
    }

    #[test]
    fn nlp_active_constraint() {
        let p = ParametricProblem::from_strings("proj", 1, 1, "(y1 - x1)^2", &["-y1"])
            .unwrap()
            .with_box(vec![[-2.0, 2.0]]);
        let r = solve_value(&p, &[-0.5], &SolveOptions::default()).unwrap();
        assert!((r.value - 0.25).abs() < 1e-14);
        assert!(r.minimizers[0][0].abs() < 1e-14);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let p = ParametricProblem::from_strings("inf", 1, 1, "y1", &["y1 - x1", "-y1"]).unwrap();
        assert!(matches!(
            solve_value(&p, &[-1.0], &SolveOptions::default()),
            Err(Error::Infeasible { .. })
        ));
        let p = ParametricProblem::from_strings("unb", 1, 1, "y1", &["-y1"]).unwrap();
        assert!(matches!(
            solve_value(&p, &[0.0], &SolveOptions::default()),
            Err(Error::Unbounded { .. })
        ));
    }

    #[test]
    fn multiplier_examples() {
        let t = Tolerances::default();
        let mp = multipliers(&bilinear(), &[0.5], &[-1.0], &t, true).unwrap();
        assert_eq!(mp.vertices, vec![vec![0.0, 0.5]]);
        let p = ParametricProblem::from_strings("proj", 1, 1, "(y1 - x1)^2", &["-y1"]).unwrap();
        let mp = multipliers(&p, &[0.0], &[0.0], &t, true).unwrap();
        assert_eq!(mp.vertices, vec![vec![0.0]]);
        // grad f = 1 cannot be cancelled by the single active gradient 1
        // with a nonnegative multiplier.
        let p = ParametricProblem::from_strings("bad", 1, 1, "y1", &["y1"]).unwrap();
        let mp = multipliers(&p, &[0.0], &[0.0], &t, true).unwrap();
        assert!(mp.is_empty());
    }

    #[test]
    fn qualification_examples() {
        let t = Tolerances::default();
        let b = bilinear();
        assert!(check_licq(&b, &[0.5], &[-1.0], &t).unwrap().holds);
        assert!(check_mfcq(&b, &[0.5], &[-1.0], &t).unwrap().holds);
        let dup = ParametricProblem::from_strings("dup", 1, 1, "y1^2", &["-y1", "-2*y1"]).unwrap();
        assert!(!check_licq(&dup, &[0.0], &[0.0], &t).unwrap().holds);
        let pm = ParametricProblem::from_strings("pm", 1, 1, "y1^2", &["y1", "-y1"]).unwrap();
        let r = check_mfcq(&pm, &[0.0], &[0.0], &t).unwrap();
        assert!(!r.holds);
        assert_eq!(r.witness, Some(vec![1.0, 1.0]));
        let free = ParametricProblem::from_strings("free", 1, 1, "y1^2", &["y1 - 1"]).unwrap();
        assert!(check_licq(&free, &[0.0], &[0.0], &t).unwrap().holds);
        assert!(check_mfcq(&free, &[0.0], &[0.0], &t).unwrap().holds);
    }
}
