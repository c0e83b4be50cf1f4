//! Parametric problems `min_y { f(x, y) : g(x, y) <= 0 }`, their symbolic
//! derivatives, Lagrangian evaluations and KKT points.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, ParseError, Var};

/// Desk-scale limits; exceeding them only logs a warning.
pub const MAX_N: usize = 8;
pub const MAX_M: usize = 8;
pub const MAX_P: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Zero band for activity and multiplier-sign tests.
    pub act: f64,
    /// Bound on the KKT residual.
    pub kkt: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { act: 1e-7, kkt: 1e-8 }
    }
}

/// User-asserted structural properties that cannot be verified for general
/// expressions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Assumptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concave_convex: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convex_in_y: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_compact: Option<bool>,
}

/// A named evaluation point of a problem file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimizers: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xund: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xstar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    n: usize,
    m: usize,
    f: String,
    #[serde(default)]
    g: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_box: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    assume: Assumptions,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    points: BTreeMap<String, PointSpec>,
}

/// Symbolic first and second derivatives of one expression.
#[derive(Clone, Debug, PartialEq)]
struct Derivs {
    dx: Vec<Expr>,
    dy: Vec<Expr>,
    dxx: Vec<Vec<Expr>>,
    /// `dyx[i][j] = d^2 / dy_i dx_j`.
    dyx: Vec<Vec<Expr>>,
    dyy: Vec<Vec<Expr>>,
}

impl Derivs {
    fn new(e: &Expr, n: usize, m: usize) -> Self {
        let dx: Vec<Expr> = (0..n).map(|j| e.diff(Var::X(j))).collect();
        let dy: Vec<Expr> = (0..m).map(|i| e.diff(Var::Y(i))).collect();
        let dxx = dx
            .iter()
            .map(|d| (0..n).map(|k| d.diff(Var::X(k))).collect())
            .collect();
        let dyx = dy
            .iter()
            .map(|d| (0..n).map(|j| d.diff(Var::X(j))).collect())
            .collect();
        let dyy = dy
            .iter()
            .map(|d| (0..m).map(|k| d.diff(Var::Y(k))).collect())
            .collect();
        Derivs {
            dx,
            dy,
            dxx,
            dyx,
            dyy,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricProblem {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub f: Expr,
    pub g: Vec<Expr>,
    pub y_box: Option<Vec<[f64; 2]>>,
    pub assume: Assumptions,
    pub points: BTreeMap<String, PointSpec>,
    df: Derivs,
    dg: Vec<Derivs>,
}

fn parse_field(field: &str, text: &str, n: usize, m: usize) -> Result<Expr> {
    let e = Expr::parse(text).map_err(|err| match err {
        ParseError::Syntax {
            line,
            column,
            message,
        } => Error::Syntax {
            field: field.to_string(),
            line,
            column,
            message,
        },
    })?;
    let (mx, my) = e.max_indices();
    if let Some(j) = mx.filter(|&j| j >= n) {
        return Err(Error::UnknownVariable {
            field: field.to_string(),
            name: format!("x{}", j + 1),
        });
    }
    if let Some(i) = my.filter(|&i| i >= m) {
        return Err(Error::UnknownVariable {
            field: field.to_string(),
            name: format!("y{}", i + 1),
        });
    }
    Ok(e)
}

impl ParametricProblem {
    pub fn new(name: &str, n: usize, m: usize, f: Expr, g: Vec<Expr>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Dimension("n and m must be at least 1".into()));
        }
        for (label, e) in std::iter::once(("f".to_string(), &f))
            .chain(g.iter().enumerate().map(|(i, e)| (format!("g{}", i + 1), e)))
        {
            let (mx, my) = e.max_indices();
            if mx.is_some_and(|j| j >= n) || my.is_some_and(|i| i >= m) {
                return Err(Error::UnknownVariable {
                    field: label,
                    name: format!("{:?}", e.max_indices()),
                });
            }
        }
        if n > MAX_N || m > MAX_M || g.len() > MAX_P {
            log::warn!(
                "problem {} exceeds desk-scale limits (n={}, m={}, p={})",
                name,
                n,
                m,
                g.len()
            );
        }
        let df = Derivs::new(&f, n, m);
        let dg = g.iter().map(|e| Derivs::new(e, n, m)).collect();
        Ok(ParametricProblem {
            name: name.to_string(),
            n,
            m,
            f,
            g,
            y_box: None,
            assume: Assumptions::default(),
            points: BTreeMap::new(),
            df,
            dg,
        })
    }

    /// Parses the text form of a problem from strings for `f` and `g`.
    pub fn from_strings(name: &str, n: usize, m: usize, f: &str, g: &[&str]) -> Result<Self> {
        let fe = parse_field("f", f, n, m)?;
        let ge = g
            .iter()
            .enumerate()
            .map(|(i, s)| parse_field(&format!("g[{}]", i), s, n, m))
            .collect::<Result<Vec<_>>>()?;
        ParametricProblem::new(name, n, m, fe, ge)
    }

    pub fn with_box(mut self, b: Vec<[f64; 2]>) -> Self {
        self.y_box = Some(b);
        self
    }

    pub fn p(&self) -> usize {
        self.g.len()
    }

    pub fn to_json(&self) -> String {
        let file = ProblemFile {
            name: Some(self.name.clone()),
            n: self.n,
            m: self.m,
            f: self.f.to_string(),
            g: self.g.iter().map(|e| e.to_string()).collect(),
            y_box: self.y_box.clone(),
            assume: self.assume.clone(),
            points: self.points.clone(),
        };
        serde_json::to_string_pretty(&file).expect("problem serializes")
    }

    /// True when no constraint mentions `x`.
    pub fn g_independent_of_x(&self) -> bool {
        self.g.iter().all(|e| !e.depends_on_x())
    }

    /// Structural test for the exact LP path.
    pub fn is_lp_in_y(&self) -> bool {
        self.f.is_affine_in_y(self.m) && self.g.iter().all(|e| e.is_affine_in_y(self.m))
    }

    /// True when every second derivative is a constant expression.
    pub fn is_quadratic(&self) -> bool {
        let constant = |e: &Expr| !e.depends_on_x() && !e.depends_on_y();
        let all = |d: &Derivs| {
            d.dxx.iter().flatten().all(constant)
                && d.dyx.iter().flatten().all(constant)
                && d.dyy.iter().flatten().all(constant)
        };
        all(&self.df) && self.dg.iter().all(all)
    }

    pub fn f_value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.f.eval(x, y)?)
    }

    pub fn g_values(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.g.iter().map(|e| Ok(e.eval(x, y)?)).collect()
    }

    pub fn grad_y_f(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.df.dy.iter().map(|e| Ok(e.eval(x, y)?)).collect()
    }

    pub fn grad_x_f(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.df.dx.iter().map(|e| Ok(e.eval(x, y)?)).collect()
    }

    /// `p x m` Jacobian of `g` in `y`.
    pub fn jac_y_g(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.p(), self.m);
        for (l, d) in self.dg.iter().enumerate() {
            for i in 0..self.m {
                out[(l, i)] = d.dy[i].eval(x, y)?;
            }
        }
        Ok(out)
    }

    /// `p x n` Jacobian of `g` in `x`.
    pub fn jac_x_g(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.p(), self.n);
        for (l, d) in self.dg.iter().enumerate() {
            for j in 0..self.n {
                out[(l, j)] = d.dx[j].eval(x, y)?;
            }
        }
        Ok(out)
    }

    /// Gradient in `x` of the Lagrangian.
    pub fn grad_x_lagrangian(&self, x: &[f64], y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.grad_x_f(x, y)?;
        let jx = self.jac_x_g(x, y)?;
        for j in 0..self.n {
            for l in 0..self.p() {
                out[j] += jx[(l, j)] * u[l];
            }
        }
        Ok(out)
    }

    /// Hessian in `y` of the Lagrangian.
    pub fn hess_yy_lagrangian(&self, x: &[f64], y: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.m, self.m);
        for i in 0..self.m {
            for k in 0..self.m {
                let mut v = self.df.dyy[i][k].eval(x, y)?;
                for (l, d) in self.dg.iter().enumerate() {
                    if u[l] != 0.0 {
                        v += u[l] * d.dyy[i][k].eval(x, y)?;
                    }
                }
                h[(i, k)] = v;
            }
        }
        Ok(h)
    }

    /// Evaluates every Lagrangian block at `(x, y, u)`.
    pub fn differentiate(&self, x: &[f64], y: &[f64], u: &[f64]) -> Result<LagrangianEval> {
        let (n, m, p) = (self.n, self.m, self.p());
        if x.len() != n || y.len() != m || u.len() != p {
            return Err(Error::Dimension(format!(
                "point has dimensions ({}, {}, {}), problem expects ({}, {}, {})",
                x.len(),
                y.len(),
                u.len(),
                n,
                m,
                p
            )));
        }
        let g = DVector::from_vec(self.g_values(x, y)?);
        let value = self.f_value(x, y)? + g.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        let jac_x_g = self.jac_x_g(x, y)?;
        let jac_y_g = self.jac_y_g(x, y)?;
        let uv = DVector::from_column_slice(u);
        let grad_x_f = DVector::from_vec(self.grad_x_f(x, y)?);
        let grad_y_f = DVector::from_vec(self.grad_y_f(x, y)?);
        let grad_x = &grad_x_f + jac_x_g.transpose() * &uv;
        let grad_y = &grad_y_f + jac_y_g.transpose() * &uv;

        let block = |pick: &dyn Fn(&Derivs) -> &Vec<Vec<Expr>>, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let mut h = DMatrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    let mut v = pick(&self.df)[r][c].eval(x, y)?;
                    for (l, d) in self.dg.iter().enumerate() {
                        if u[l] != 0.0 {
                            v += u[l] * pick(d)[r][c].eval(x, y)?;
                        }
                    }
                    h[(r, c)] = v;
                }
            }
            Ok(h)
        };
        let hxx = block(&|d| &d.dxx, n, n)?;
        let hxy = block(&|d| &d.dyx, m, n)?;
        let hyy = block(&|d| &d.dyy, m, m)?;
        let hyx = hxy.transpose();
        Ok(LagrangianEval {
            x: x.to_vec(),
            y: y.to_vec(),
            u: u.to_vec(),
            value,
            grad_x,
            grad_y,
            grad_x_f,
            grad_y_f,
            hxx,
            hxy,
            hyx,
            hyy,
            g,
            jac_x_g,
            jac_y_g,
        })
    }

    /// Symbolic check of concave-convexity for quadratic problems: `f` and
    /// every `g_i` concave in `x` and convex in `y`. `None` when the problem
    /// is not quadratic.
    pub fn quadratic_concave_convex(&self) -> Option<bool> {
        if !self.is_quadratic() {
            return None;
        }
        let (x, y) = (vec![0.0; self.n], vec![0.0; self.m]);
        let mut ok = true;
        for d in std::iter::once(&self.df).chain(self.dg.iter()) {
            let hxx = eval_matrix(&d.dxx, &x, &y).ok()?;
            let hyy = eval_matrix(&d.dyy, &x, &y).ok()?;
            ok &= is_psd(&(-hxx)) && is_psd(&hyy);
        }
        Some(ok)
    }

    /// Symbolic check of convexity in `y` for quadratic problems.
    pub fn quadratic_convex_in_y(&self) -> Option<bool> {
        if !self.is_quadratic() {
            return None;
        }
        let (x, y) = (vec![0.0; self.n], vec![0.0; self.m]);
        let mut ok = true;
        for d in std::iter::once(&self.df).chain(self.dg.iter()) {
            ok &= is_psd(&eval_matrix(&d.dyy, &x, &y).ok()?);
        }
        Some(ok)
    }
}

fn eval_matrix(m: &[Vec<Expr>], x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut out = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out[(r, c)] = m[r][c].eval(x, y)?;
        }
    }
    Ok(out)
}

fn is_psd(h: &DMatrix<f64>) -> bool {
    if h.nrows() == 0 {
        return true;
    }
    let sym = (h + h.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().all(|&e| e >= -1e-12)
}

/// Parses a problem file.
pub fn parse_problem(text: &str) -> Result<ParametricProblem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Json(e.to_string()))?;
    let (n, m) = (file.n, file.m);
    let f = parse_field("f", &file.f, n, m)?;
    let g = file
        .g
        .iter()
        .enumerate()
        .map(|(i, s)| parse_field(&format!("g[{}]", i), s, n, m))
        .collect::<Result<Vec<_>>>()?;
    let mut problem = ParametricProblem::new(file.name.as_deref().unwrap_or("unnamed"), n, m, f, g)?;
    if let Some(b) = &file.y_box {
        if b.len() != m {
            return Err(Error::Dimension(format!("y_box has {} rows, m = {}", b.len(), m)));
        }
    }
    for (name, pt) in &file.points {
        if pt.x.len() != n {
            return Err(Error::Dimension(format!("point {} has |x| = {}, n = {}", name, pt.x.len(), n)));
        }
        for y in pt.minimizers.iter().flatten() {
            if y.len() != m {
                return Err(Error::Dimension(format!("point {}: minimizer of length {}", name, y.len())));
            }
        }
        for v in [&pt.xund, &pt.xstar].into_iter().flatten() {
            if v.len() != n {
                return Err(Error::Dimension(format!("point {}: covector of length {}", name, v.len())));
            }
        }
    }
    problem.y_box = file.y_box;
    problem.assume = file.assume;
    problem.points = file.points;
    Ok(problem)
}

/// All Lagrangian blocks at a point. `hxy` is `m x n` with
/// `hxy[(i, j)] = d^2 L / dy_i dx_j`, and `hyx` is its transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianEval {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub grad_y: DVector<f64>,
    pub grad_x_f: DVector<f64>,
    pub grad_y_f: DVector<f64>,
    pub hxx: DMatrix<f64>,
    pub hxy: DMatrix<f64>,
    pub hyx: DMatrix<f64>,
    pub hyy: DMatrix<f64>,
    pub g: DVector<f64>,
    pub jac_x_g: DMatrix<f64>,
    pub jac_y_g: DMatrix<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub eta: Vec<usize>,
    pub theta: Vec<usize>,
    pub nu: Vec<usize>,
    /// Indices placed in theta because their values straddle the band.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ambiguous: Vec<usize>,
}

impl Partition {
    pub fn p(&self) -> usize {
        self.eta.len() + self.theta.len() + self.nu.len()
    }
}

/// Splits the constraint indices by the activity and multiplier values.
pub fn classify(g: &[f64], u: &[f64], tol: &Tolerances) -> Partition {
    let mut part = Partition::default();
    for (i, (&gi, &ui)) in g.iter().zip(u).enumerate() {
        let u_zero = ui.abs() <= tol.act;
        let g_zero = gi.abs() <= tol.act;
        if u_zero && gi < -tol.act {
            part.eta.push(i);
        } else if u_zero && g_zero {
            part.theta.push(i);
        } else if ui > tol.act && g_zero {
            part.nu.push(i);
        } else {
            log::warn!("index {} straddles the activity band (g={:e}, u={:e})", i, gi, ui);
            part.theta.push(i);
            part.ambiguous.push(i);
        }
    }
    part
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub partition: Partition,
    pub kkt_residual: f64,
}

/// `max(|grad_y L|, max(-u), max(g), |u^T g|)`.
pub fn kkt_residual(problem: &ParametricProblem, x: &[f64], y: &[f64], u: &[f64]) -> Result<f64> {
    let g = problem.g_values(x, y)?;
    let gy = problem.grad_y_f(x, y)?;
    let jy = problem.jac_y_g(x, y)?;
    let mut r: f64 = 0.0;
    for i in 0..problem.m {
        let mut v = gy[i];
        for l in 0..problem.p() {
            v += jy[(l, i)] * u[l];
        }
        r = r.max(v.abs());
    }
    for l in 0..problem.p() {
        r = r.max(-u[l]).max(g[l]);
    }
    let comp: f64 = g.iter().zip(u).map(|(a, b)| a * b).sum();
    Ok(r.max(comp.abs()))
}

impl KktPoint {
    pub fn new(problem: &ParametricProblem, x: &[f64], y: &[f64], u: &[f64], tol: &Tolerances) -> Result<Self> {
        if x.len() != problem.n || y.len() != problem.m || u.len() != problem.p() {
            return Err(Error::Dimension("KKT point dimensions".into()));
        }
        let residual = kkt_residual(problem, x, y, u)?;
        if residual > tol.kkt {
            return Err(Error::NotKkt {
                residual,
                tol: tol.kkt,
            });
        }
        let g = problem.g_values(x, y)?;
        Ok(KktPoint {
            x: x.to_vec(),
            y: y.to_vec(),
            u: u.to_vec(),
            partition: classify(&g, u, tol),
            kkt_residual: residual,
        })
    }
}
