//! Ground truth for the estimates: finite differences of `phi`, a
//! brute-force exact LP vertex oracle, solution-path tracking, and graph
//! sampling. Nothing here uses the coderivative machinery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{active_set, multipliers, solve_value, SolveOptions};
use crate::model::{ParametricProblem, Tolerances};
use crate::num::{Field, Rational};

pub const GRAD_STEP: f64 = 1e-5;
pub const HESS_STEP: f64 = 1e-3;
/// Halving consistency threshold is `10 x` this.
pub const FD_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub point: Vec<f64>,
    pub steps: Vec<f64>,
    pub gradient: Vec<f64>,
    /// Richardson-extrapolated; empty for gradient-only reports.
    pub hessian: Vec<Vec<f64>>,
    /// Plain central differences at the base step.
    pub plain: Vec<f64>,
    /// Largest discrepancy between the two step sizes.
    pub error_bound: f64,
    pub stable: bool,
}

impl FdReport {
    pub fn hessian_times(&self, v: &[f64]) -> Vec<f64> {
        self.hessian
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub fn phi(problem: &ParametricProblem, x: &[f64], opts: &SolveOptions) -> Result<f64> {
    Ok(solve_value(problem, x, opts)?.value)
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut z = x.to_vec();
    for &(j, t) in moves {
        z[j] += t;
    }
    z
}

fn central_gradient(problem: &ParametricProblem, x: &[f64], h: f64, opts: &SolveOptions) -> Result<(Vec<f64>, f64)> {
    let f0 = phi(problem, x, opts)?;
    let mut grad = Vec::with_capacity(x.len());
    let mut asym = 0.0f64;
    for j in 0..x.len() {
        let fp = phi(problem, &shifted(x, &[(j, h)]), opts)?;
        let fm = phi(problem, &shifted(x, &[(j, -h)]), opts)?;
        grad.push((fp - fm) / (2.0 * h));
        // forward minus backward slope; O(h) when smooth, O(1) at a kink
        asym = asym.max(((fp - f0) - (f0 - fm)).abs() / h);
    }
    Ok((grad, asym))
}

/// Central-difference gradient with one Richardson level. Stability needs
/// both halving consistency and agreement of the one-sided slopes.
pub fn fd_gradient(problem: &ParametricProblem, x: &[f64], h: f64, opts: &SolveOptions) -> Result<FdReport> {
    let (g1, a1) = central_gradient(problem, x, h, opts)?;
    let (g2, a2) = central_gradient(problem, x, h / 2.0, opts)?;
    let rich: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| (4.0 * b - a) / 3.0).collect();
    let err = g1.iter().zip(&g2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let stable = err <= 10.0 * FD_TOL && a1.max(a2) <= 10.0 * FD_TOL;
    Ok(FdReport {
        point: x.to_vec(),
        steps: vec![h, h / 2.0],
        gradient: rich,
        hessian: Vec::new(),
        plain: g1,
        error_bound: err,
        stable,
    })
}

fn central_hessian(problem: &ParametricProblem, x: &[f64], h: f64, opts: &SolveOptions) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let f0 = phi(problem, x, opts)?;
    let mut hm = vec![vec![0.0; n]; n];
    for j in 0..n {
        let fp = phi(problem, &shifted(x, &[(j, h)]), opts)?;
        let fm = phi(problem, &shifted(x, &[(j, -h)]), opts)?;
        hm[j][j] = (fp - 2.0 * f0 + fm) / (h * h);
        for k in 0..j {
            let pp = phi(problem, &shifted(x, &[(j, h), (k, h)]), opts)?;
            let pm = phi(problem, &shifted(x, &[(j, h), (k, -h)]), opts)?;
            let mp = phi(problem, &shifted(x, &[(j, -h), (k, h)]), opts)?;
            let mm = phi(problem, &shifted(x, &[(j, -h), (k, -h)]), opts)?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hm[j][k] = v;
            hm[k][j] = v;
        }
    }
    Ok(hm)
}

/// Symmetric central-difference Hessian with one Richardson level; the
/// stability flag is set when halving the step moves no entry by more than
/// `10 x FD_TOL`.
pub fn fd_hessian(problem: &ParametricProblem, x: &[f64], h: f64, opts: &SolveOptions) -> Result<FdReport> {
    let grad = fd_gradient(problem, x, GRAD_STEP.min(h), opts)?;
    let h1 = central_hessian(problem, x, h, opts)?;
    let h2 = central_hessian(problem, x, h / 2.0, opts)?;
    let n = x.len();
    let mut err = 0.0f64;
    let mut rich = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            err = err.max((h1[j][k] - h2[j][k]).abs());
            rich[j][k] = (4.0 * h2[j][k] - h1[j][k]) / 3.0;
        }
    }
    let scale = 1.0 + rich.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
    let jump = one_sided_jump(problem, x, h / 2.0, opts)?;
    Ok(FdReport {
        point: x.to_vec(),
        steps: vec![h, h / 2.0],
        gradient: grad.gradient,
        hessian: rich,
        plain: h1.into_iter().flatten().collect(),
        error_bound: err.max(jump),
        stable: err <= 10.0 * FD_TOL && jump <= 10.0 * FD_TOL * scale,
    })
}

/// Largest gap between forward and backward second differences along the
/// axes and the pairwise diagonals. Halving alone misses jumps of the
/// second derivative, e.g. `min(x, 0)^2` at 0 is exactly 1 at every step.
fn one_sided_jump(problem: &ParametricProblem, x: &[f64], h: f64, opts: &SolveOptions) -> Result<f64> {
    let n = x.len();
    let mut dirs: Vec<Vec<(usize, f64)>> = (0..n).map(|j| vec![(j, 1.0)]).collect();
    for j in 0..n {
        for k in 0..j {
            dirs.push(vec![(j, 1.0), (k, 1.0)]);
            dirs.push(vec![(j, 1.0), (k, -1.0)]);
        }
    }
    let f0 = phi(problem, x, opts)?;
    let mut worst = 0.0f64;
    for d in dirs {
        let at = |t: f64| -> Result<f64> {
            let moves: Vec<(usize, f64)> = d.iter().map(|&(j, c)| (j, c * t)).collect();
            phi(problem, &shifted(x, &moves), opts)
        };
        let fwd = (at(2.0 * h)? - 2.0 * at(h)? + f0) / (h * h);
        let bwd = (at(-2.0 * h)? - 2.0 * at(-h)? + f0) / (h * h);
        worst = worst.max((fwd - bwd).abs());
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpOracle {
    pub value: Rational,
    /// Every optimal vertex, sorted.
    pub vertices: Vec<Vec<Rational>>,
    pub vertex_count: usize,
}

fn exact(v: &[f64]) -> Vec<Rational> {
    v.iter().map(|&a| <Rational as Field>::from_f64(a)).collect()
}

/// Solves the square system picked by `rows`; `None` when singular.
fn solve_exact(a: &[Vec<Rational>], b: &[Rational], rows: &[usize]) -> Option<Vec<Rational>> {
    let k = rows.len();
    let m = a[0].len();
    let mut aug: Vec<Vec<Rational>> = rows
        .iter()
        .map(|&r| a[r].iter().cloned().chain(std::iter::once(b[r].clone())).collect())
        .collect();
    let mut row = 0;
    let mut pivots = Vec::new();
    for col in 0..m {
        let Some(piv) = (row..k).find(|&r| !aug[r][col].is_zero_exact()) else {
            continue;
        };
        aug.swap(row, piv);
        let p = aug[row][col].clone();
        for c in 0..=m {
            aug[row][c] = aug[row][c].clone() / p.clone();
        }
        for r in 0..k {
            if r != row && !aug[r][col].is_zero_exact() {
                let factor = aug[r][col].clone();
                for c in 0..=m {
                    let sub = factor.clone() * aug[row][c].clone();
                    aug[r][c] = aug[r][c].clone() - sub;
                }
            }
        }
        pivots.push(col);
        row += 1;
        if row == k {
            break;
        }
    }
    if pivots.len() < m {
        return None;
    }
    Some((0..m).map(|i| aug[i][m].clone()).collect())
}

trait ExactZero {
    fn is_zero_exact(&self) -> bool;
}

impl ExactZero for Rational {
    fn is_zero_exact(&self) -> bool {
        num_traits::Zero::is_zero(self)
    }
}

fn subsets(p: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, p: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..p {
            cur.push(i);
            rec(i + 1, p, k, cur, out);
            cur.pop();
        }
    }
    rec(0, p, k, &mut cur, &mut out);
    out
}

/// Nonzero `d` with `A d <= 0`, found among the one-dimensional kernels of
/// `(m - 1)`-row subsystems (extreme rays of a pointed recession cone) or
/// as a kernel vector of `A` itself.
fn recession_direction(a: &[Vec<Rational>]) -> bool {
    let m = a[0].len();
    let zero = <Rational as Field>::zero();
    let nonpos = |d: &[Rational]| a.iter().all(|row| crate::num::dot(row, d) <= zero);
    // Append a normalizing row e_i^T d = 1 and solve; covers every
    // extreme ray up to scaling.
    for k in [m.saturating_sub(1), m] {
        for rows in subsets(a.len(), k.min(a.len())) {
            for i in 0..m {
                let mut sys: Vec<Vec<Rational>> = rows.iter().map(|&r| a[r].clone()).collect();
                let mut rhs = vec![zero.clone(); sys.len()];
                let mut e = vec![zero.clone(); m];
                e[i] = <Rational as Field>::one();
                sys.push(e);
                rhs.push(<Rational as Field>::one());
                let idx: Vec<usize> = (0..sys.len()).collect();
                if sys.len() < m {
                    continue;
                }
                for sel in subsets(sys.len(), m) {
                    if !sel.contains(&(sys.len() - 1)) {
                        continue;
                    }
                    if let Some(d) = solve_exact(&sys, &rhs, &sel) {
                        let residual_ok = idx[..sys.len() - 1]
                            .iter()
                            .all(|&r| crate::num::dot(&sys[r], &d) == zero);
                        if residual_ok && (nonpos(&d) || nonpos(&d.iter().map(|v| -v.clone()).collect::<Vec<_>>())) {
                            return true;
                        }
                    }
                }
            }
        }
    }
    false
}

/// Exact `min c^T y s.t. A y <= b` by enumerating every `m`-row basis.
pub fn lp_value_oracle(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpOracle> {
    let m = c.len();
    if a.is_empty() || a.iter().any(|r| r.len() != m) || b.len() != a.len() {
        return Err(Error::Dimension("A, b and c are inconsistent".into()));
    }
    if m > 8 {
        return Err(Error::Dimension(format!("oracle limited to dimension 8, got {}", m)));
    }
    let ar: Vec<Vec<Rational>> = a.iter().map(|r| exact(r)).collect();
    let br = exact(b);
    let cr = exact(c);
    let mut verts: Vec<Vec<Rational>> = Vec::new();
    for rows in subsets(a.len(), m) {
        if let Some(y) = solve_exact(&ar, &br, &rows) {
            let feasible = ar.iter().zip(&br).all(|(row, bi)| crate::num::dot(row, &y) <= *bi);
            if feasible && !verts.contains(&y) {
                verts.push(y);
            }
        }
    }
    if verts.is_empty() {
        return Err(Error::Infeasible { x: b.to_vec() });
    }
    if recession_direction(&ar) {
        return Err(Error::Unbounded { x: b.to_vec() });
    }
    let vals: Vec<Rational> = verts.iter().map(|v| crate::num::dot(&cr, v)).collect();
    let best = vals.iter().cloned().reduce(|p, q| if q < p { q } else { p }).expect("nonempty");
    let mut opt: Vec<Vec<Rational>> = verts.iter().zip(&vals).filter(|(_, v)| **v == best).map(|(y, _)| y.clone()).collect();
    opt.sort();
    Ok(LpOracle {
        value: best,
        vertices: opt,
        vertex_count: verts.len(),
    })
}

/// `min x^T y s.t. A y <= b`.
pub fn lp_lhs_oracle(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> Result<LpOracle> {
    lp_value_oracle(a, b, x)
}

/// `min sum_{i <= m} x_i y_i s.t. A y <= x`.
pub fn lp_lhs_rhs_oracle(a: &[Vec<f64>], x: &[f64]) -> Result<LpOracle> {
    let m = a.first().map_or(0, Vec::len);
    if x.len() != a.len() || m > x.len() {
        return Err(Error::Dimension("x must have one entry per row of A".into()));
    }
    lp_value_oracle(a, x, &x[..m])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub us: Vec<Vec<f64>>,
    /// Set when the singleton verdict or the active set changed inside the
    /// window; samples stop at the last consistent step on each side.
    pub truncated: bool,
}

impl Track {
    /// Central-difference derivatives `(ds/dt, du/dt)` at `t = 0`.
    pub fn derivative(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let i0 = self.ts.iter().position(|&t| t == 0.0)?;
        if i0 == 0 || i0 + 1 >= self.ts.len() {
            return None;
        }
        let (tm, tp) = (self.ts[i0 - 1], self.ts[i0 + 1]);
        let dy = self.ys[i0 + 1].iter().zip(&self.ys[i0 - 1]).map(|(a, b)| (a - b) / (tp - tm)).collect();
        let du = self.us[i0 + 1].iter().zip(&self.us[i0 - 1]).map(|(a, b)| (a - b) / (tp - tm)).collect();
        Some((dy, du))
    }
}

/// Re-solves at `xbar + t d` for `t` in `{-k h, ..., k h}`.
pub fn track_solution(problem: &ParametricProblem, xbar: &[f64], d: &[f64], h: f64, steps: usize, opts: &SolveOptions) -> Result<Track> {
    let tol = &opts.tol;
    let sample = |t: f64| -> Result<Option<(Vec<f64>, Vec<f64>, Vec<usize>)>> {
        let x: Vec<f64> = xbar.iter().zip(d).map(|(a, b)| a + t * b).collect();
        let sol = solve_value(problem, &x, opts)?;
        if !sol.singleton {
            return Ok(None);
        }
        let y = sol.minimizers[0].clone();
        let mp = multipliers(problem, &x, &y, tol, false)?;
        if !mp.is_singleton() {
            return Ok(None);
        }
        let act = active_set(problem, &x, &y, tol)?;
        Ok(Some((y, mp.vertices[0].clone(), act)))
    };
    let Some((y0, u0, act0)) = sample(0.0)? else {
        return Err(Error::Hypothesis("solution or multiplier is not a singleton at the base point".into()));
    };
    let mut truncated = false;
    let mut side = |sign: f64| -> Result<Vec<(f64, Vec<f64>, Vec<f64>)>> {
        let mut out = Vec::new();
        for k in 1..=steps {
            let t = sign * k as f64 * h;
            match sample(t)? {
                Some((y, u, act)) if act == act0 => out.push((t, y, u)),
                _ => {
                    truncated = true;
                    break;
                }
            }
        }
        Ok(out)
    };
    let mut minus = side(-1.0)?;
    let plus = side(1.0)?;
    minus.reverse();
    let mut track = Track {
        ts: Vec::new(),
        ys: Vec::new(),
        us: Vec::new(),
        truncated,
    };
    for (t, y, u) in minus.into_iter().chain(std::iter::once((0.0, y0, u0))).chain(plus) {
        track.ts.push(t);
        track.ys.push(y);
        track.us.push(u);
    }
    Ok(track)
}

/// FD Jacobians of the tracked solution and multiplier (m x n and p x n).
pub fn fd_jacobians(problem: &ParametricProblem, xbar: &[f64], h: f64, opts: &SolveOptions) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let (n, m, p) = (problem.n, problem.m, problem.p());
    let mut ds = vec![vec![0.0; n]; m];
    let mut du = vec![vec![0.0; n]; p];
    for j in 0..n {
        let mut d = vec![0.0; n];
        d[j] = 1.0;
        let tr = track_solution(problem, xbar, &d, h, 1, opts)?;
        let (dy, dl) = tr
            .derivative()
            .ok_or_else(|| Error::Hypothesis(format!("path tracking truncated along x{}", j + 1)))?;
        for i in 0..m {
            ds[i][j] = dy[i];
        }
        for l in 0..p {
            du[l][j] = dl[l];
        }
    }
    Ok((ds, du))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMap {
    Lambda,
    Solution,
    Subdifferential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Multiplier for `Lambda`, `grad_x L` for `Subdifferential`, empty for
    /// `Solution`.
    pub w: Vec<f64>,
}

/// Samples the graph of a map at parameters drawn uniformly from the
/// `radius` box around `xbar`, by direct re-solves. Infeasible samples are
/// skipped.
pub fn graph_probe(problem: &ParametricProblem, map: ProbeMap, xbar: &[f64], radius: f64, samples: usize, seed: u64, opts: &SolveOptions) -> Result<Vec<GraphSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = Tolerances::default();
    let mut out = Vec::new();
    for _ in 0..samples {
        let x: Vec<f64> = xbar.iter().map(|v| v + rng.gen_range(-radius..=radius)).collect();
        let sol = match solve_value(problem, &x, opts) {
            Ok(s) => s,
            Err(Error::Infeasible { .. }) => continue,
            Err(e) => return Err(e),
        };
        for y in &sol.minimizers {
            match map {
                ProbeMap::Solution => out.push(GraphSample {
                    x: x.clone(),
                    y: y.clone(),
                    w: Vec::new(),
                }),
                ProbeMap::Lambda | ProbeMap::Subdifferential => {
                    let mp = multipliers(problem, &x, y, &tol, false)?;
                    for u in &mp.vertices {
                        let w = if map == ProbeMap::Lambda {
                            u.clone()
                        } else {
                            problem.grad_x_lagrangian(&x, y, u)?
                        };
                        out.push(GraphSample {
                            x: x.clone(),
                            y: y.clone(),
                            w,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}
