use serde::{Deserialize, Serialize};

use super::dd::cone_generators;
use super::SetError;
use crate::lp::{LinearProgram, LpOutcome};
use crate::num::{Field, Rational};

/// Largest ambient dimension accepted by the public vertex enumeration.
pub const VERTEX_DIM_GUARD: usize = 12;

/// `{z : C z <= d, C_eq z = d_eq}`; rows listed in `open_rows` are strict.
///
/// All geometric routines work with the closure. Strictness is only
/// consulted by membership, which reports `Boundary` when a point needs a
/// strict row to hold with equality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    pub dim: usize,
    #[serde(rename = "C")]
    pub ineq: Vec<Vec<f64>>,
    #[serde(rename = "d")]
    pub ineq_rhs: Vec<f64>,
    #[serde(rename = "C_eq")]
    pub eq: Vec<Vec<f64>>,
    #[serde(rename = "d_eq")]
    pub eq_rhs: Vec<f64>,
    #[serde(default)]
    pub open_rows: Vec<usize>,
}

/// Generator form: points of the minimal faces, extreme rays and a basis
/// of the lineality space.
#[derive(Clone, Debug, PartialEq)]
pub struct VForm<F> {
    pub vertices: Vec<Vec<F>>,
    pub rays: Vec<Vec<F>>,
    pub lineality: Vec<Vec<F>>,
}

impl<F: Field> VForm<F> {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.rays.is_empty() && self.lineality.is_empty()
    }

    pub fn to_f64(&self) -> VForm<f64> {
        let conv = |vs: &Vec<Vec<F>>| -> Vec<Vec<f64>> {
            vs.iter().map(|v| v.iter().map(Field::to_f64).collect()).collect()
        };
        VForm {
            vertices: conv(&self.vertices),
            rays: conv(&self.rays),
            lineality: conv(&self.lineality),
        }
    }
}

fn lex_cmp<F: Field>(a: &[F], b: &[F]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

impl Polyhedron {
    pub fn universe(dim: usize) -> Self {
        Polyhedron {
            dim,
            ineq: Vec::new(),
            ineq_rhs: Vec::new(),
            eq: Vec::new(),
            eq_rhs: Vec::new(),
            open_rows: Vec::new(),
        }
    }

    pub fn point(p: &[f64]) -> Self {
        let mut poly = Polyhedron::universe(p.len());
        for (i, &v) in p.iter().enumerate() {
            let mut row = vec![0.0; p.len()];
            row[i] = 1.0;
            poly.add_eq(row, v);
        }
        poly
    }

    /// Axis-aligned box.
    pub fn cube(lo: &[f64], hi: &[f64]) -> Self {
        let mut poly = Polyhedron::universe(lo.len());
        for i in 0..lo.len() {
            let mut row = vec![0.0; lo.len()];
            row[i] = 1.0;
            poly.add_leq(row.clone(), hi[i]);
            row[i] = -1.0;
            poly.add_leq(row, -lo[i]);
        }
        poly
    }

    /// `{w >= 0, sum w = 1}` in `R^k`.
    pub fn simplex(k: usize) -> Self {
        let mut poly = Polyhedron::universe(k);
        for i in 0..k {
            let mut row = vec![0.0; k];
            row[i] = -1.0;
            poly.add_leq(row, 0.0);
        }
        poly.add_eq(vec![1.0; k], 1.0);
        poly
    }

    pub fn add_leq(&mut self, row: Vec<f64>, rhs: f64) -> usize {
        assert_eq!(row.len(), self.dim, "row length must match dimension");
        self.ineq.push(row);
        self.ineq_rhs.push(rhs);
        self.ineq.len() - 1
    }

    pub fn add_strict(&mut self, row: Vec<f64>, rhs: f64) -> usize {
        let k = self.add_leq(row, rhs);
        self.open_rows.push(k);
        k
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        assert_eq!(row.len(), self.dim, "row length must match dimension");
        self.eq.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn num_rows(&self) -> usize {
        self.ineq.len() + self.eq.len()
    }

    /// Cartesian product, variables of `self` first.
    pub fn product(&self, other: &Polyhedron) -> Polyhedron {
        let dim = self.dim + other.dim;
        let mut out = Polyhedron::universe(dim);
        let pad = |row: &[f64], before: usize| {
            let mut r = vec![0.0; dim];
            r[before..before + row.len()].copy_from_slice(row);
            r
        };
        for (row, &b) in self.ineq.iter().zip(&self.ineq_rhs) {
            out.add_leq(pad(row, 0), b);
        }
        for (row, &b) in other.ineq.iter().zip(&other.ineq_rhs) {
            out.add_leq(pad(row, self.dim), b);
        }
        for (row, &b) in self.eq.iter().zip(&self.eq_rhs) {
            out.add_eq(pad(row, 0), b);
        }
        for (row, &b) in other.eq.iter().zip(&other.eq_rhs) {
            out.add_eq(pad(row, self.dim), b);
        }
        out.open_rows = self.open_rows.clone();
        out.open_rows
            .extend(other.open_rows.iter().map(|k| k + self.ineq.len()));
        out
    }

    /// Closed-form containment test.
    pub fn contains_closed(&self, z: &[f64], tol: f64) -> bool {
        let dot = |r: &[f64]| r.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        self.ineq
            .iter()
            .zip(&self.ineq_rhs)
            .all(|(r, &b)| dot(r) <= b + tol)
            && self
                .eq
                .iter()
                .zip(&self.eq_rhs)
                .all(|(r, &b)| (dot(r) - b).abs() <= tol)
    }

    /// Strict rows hold with slack greater than `tol`.
    pub fn satisfies_open_rows(&self, z: &[f64], tol: f64) -> bool {
        self.open_rows.iter().all(|&k| {
            let v: f64 = self.ineq[k].iter().zip(z).map(|(a, b)| a * b).sum();
            v < self.ineq_rhs[k] - tol
        })
    }

    /// Generators over an arbitrary field, without the dimension guard.
    pub fn generators<F: Field>(&self) -> VForm<F> {
        let d = self.dim;
        let lift = |row: &[f64], rhs: f64| -> Vec<F> {
            let mut v: Vec<F> = row.iter().map(|&a| F::from_f64(a)).collect();
            v.push(-F::from_f64(rhs));
            v
        };
        let mut ineqs: Vec<Vec<F>> = self
            .ineq
            .iter()
            .zip(&self.ineq_rhs)
            .map(|(r, &b)| lift(r, b))
            .collect();
        let mut t_row = vec![F::zero(); d + 1];
        t_row[d] = -F::one();
        ineqs.push(t_row);
        let eqs: Vec<Vec<F>> = self
            .eq
            .iter()
            .zip(&self.eq_rhs)
            .map(|(r, &b)| lift(r, b))
            .collect();
        let cone = cone_generators(d + 1, &ineqs, &eqs);

        let mut vertices = Vec::new();
        let mut rays = Vec::new();
        for r in cone.rays {
            let t = r[d].clone();
            if t.is_pos() {
                vertices.push(r[..d].iter().map(|e| e.clone() / t.clone()).collect::<Vec<F>>());
            } else {
                rays.push(r[..d].to_vec());
            }
        }
        let lineality: Vec<Vec<F>> = cone.lineality.into_iter().map(|l| l[..d].to_vec()).collect();
        vertices.sort_by(|a, b| lex_cmp(a, b));
        rays.sort_by(|a, b| lex_cmp(a, b));
        VForm {
            vertices,
            rays,
            lineality,
        }
    }

    /// H-form of `conv(vertices) + cone(rays) + span(lineality)`: the valid
    /// inequalities `a.z <= b` form a cone whose extreme rays are the facets
    /// and whose lineality gives the equations.
    pub fn from_generators(dim: usize, v: &VForm<f64>) -> Polyhedron {
        let row = |p: &[f64], t: f64| -> Vec<f64> { p.iter().copied().chain(std::iter::once(-t)).collect() };
        let mut ineqs: Vec<Vec<f64>> = v.vertices.iter().map(|p| row(p, 1.0)).collect();
        ineqs.extend(v.rays.iter().map(|r| row(r, 0.0)));
        let eqs: Vec<Vec<f64>> = v.lineality.iter().map(|l| row(l, 0.0)).collect();
        let cone = cone_generators(dim + 1, &ineqs, &eqs);
        let mut out = Polyhedron::universe(dim);
        if v.vertices.is_empty() {
            out.add_leq(vec![0.0; dim], -1.0);
            return out;
        }
        for r in cone.rays {
            if r[..dim].iter().any(|c| !c.is_zero_tol()) {
                out.add_leq(r[..dim].to_vec(), r[dim]);
            }
        }
        for l in cone.lineality {
            out.add_eq(l[..dim].to_vec(), l[dim]);
        }
        out
    }

    /// Floating-point generators, guarded to `VERTEX_DIM_GUARD`.
    pub fn vertices(&self) -> Result<VForm<f64>, SetError> {
        if self.dim > VERTEX_DIM_GUARD {
            return Err(SetError::DimensionGuard {
                dim: self.dim,
                limit: VERTEX_DIM_GUARD,
            });
        }
        Ok(self.generators::<f64>())
    }

    /// Exact generators (coefficients read as exact dyadic rationals).
    pub fn vertices_exact(&self) -> Result<VForm<Rational>, SetError> {
        if self.dim > VERTEX_DIM_GUARD {
            return Err(SetError::DimensionGuard {
                dim: self.dim,
                limit: VERTEX_DIM_GUARD,
            });
        }
        Ok(self.generators::<Rational>())
    }

    /// Emptiness of the closure, decided by a feasibility LP.
    pub fn is_empty(&self) -> bool {
        self.feasible_point().is_none()
    }

    /// Whether some point satisfies every open row strictly.
    pub fn has_strict_point(&self) -> bool {
        if self.open_rows.is_empty() {
            return !self.is_empty();
        }
        let k = self.dim;
        let mut lp = LinearProgram::new(k + 1);
        lp.cost[k] = -1.0;
        for (i, (r, &b)) in self.ineq.iter().zip(&self.ineq_rhs).enumerate() {
            let mut row = r.clone();
            row.push(if self.open_rows.contains(&i) { 1.0 } else { 0.0 });
            lp.leq(row, b);
        }
        for (r, &b) in self.eq.iter().zip(&self.eq_rhs) {
            let mut row = r.clone();
            row.push(0.0);
            lp.eq(row, b);
        }
        let mut cap = vec![0.0; k + 1];
        cap[k] = 1.0;
        lp.leq(cap, 1.0);
        match lp.solve() {
            LpOutcome::Optimal { value, .. } => -value > 1e-9,
            _ => false,
        }
    }

    /// `sup { w.z : z in closure }`; `None` when empty, `+inf` when
    /// unbounded.
    pub fn maximize(&self, w: &[f64]) -> Option<f64> {
        let mut lp = LinearProgram::new(self.dim);
        lp.cost = w.iter().map(|v| -v).collect();
        for (r, &b) in self.ineq.iter().zip(&self.ineq_rhs) {
            lp.leq(r.clone(), b);
        }
        for (r, &b) in self.eq.iter().zip(&self.eq_rhs) {
            lp.eq(r.clone(), b);
        }
        match lp.solve() {
            LpOutcome::Optimal { value, .. } => Some(-value),
            LpOutcome::Unbounded => Some(f64::INFINITY),
            LpOutcome::Infeasible => None,
        }
    }

    /// Closure containment `self ⊆ other`, row by row of `other`.
    pub fn is_subset_of(&self, other: &Polyhedron, tol: f64) -> bool {
        assert_eq!(self.dim, other.dim);
        let rows = other.ineq.iter().zip(&other.ineq_rhs).map(|(r, &b)| (r.clone(), b));
        let eq_up = other.eq.iter().zip(&other.eq_rhs).map(|(r, &b)| (r.clone(), b));
        let eq_down = other
            .eq
            .iter()
            .zip(&other.eq_rhs)
            .map(|(r, &b)| (r.iter().map(|v| -v).collect::<Vec<f64>>(), -b));
        for (row, b) in rows.chain(eq_up).chain(eq_down) {
            match self.maximize(&row) {
                None => return true,
                Some(v) if v > b + tol => return false,
                _ => {}
            }
        }
        true
    }

    pub fn feasible_point(&self) -> Option<Vec<f64>> {
        let mut lp = LinearProgram::new(self.dim);
        for (r, &b) in self.ineq.iter().zip(&self.ineq_rhs) {
            lp.leq(r.clone(), b);
        }
        for (r, &b) in self.eq.iter().zip(&self.eq_rhs) {
            lp.eq(r.clone(), b);
        }
        match lp.solve() {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }
}

impl VForm<f64> {
    /// Points `vertex-combination + ray-combination + lineality-combination`
    /// with caller supplied weights in `[0, 1)`.
    pub fn combine(&self, mut next: impl FnMut() -> f64) -> Option<Vec<f64>> {
        let first = self.vertices.first()?;
        let d = first.len();
        let mut out = vec![0.0; d];
        let weights: Vec<f64> = self.vertices.iter().map(|_| next() + 1e-3).collect();
        let total: f64 = weights.iter().sum();
        for (v, w) in self.vertices.iter().zip(&weights) {
            for i in 0..d {
                out[i] += v[i] * w / total;
            }
        }
        for r in &self.rays {
            let w = 2.0 * next();
            for i in 0..d {
                out[i] += r[i] * w;
            }
        }
        for l in &self.lineality {
            let w = 4.0 * next() - 2.0;
            for i in 0..d {
                out[i] += l[i] * w;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_box_has_four_vertices() {
        let v = Polyhedron::cube(&[0.0, 0.0], &[1.0, 1.0]).vertices().unwrap();
        assert_eq!(v.vertices.len(), 4);
        assert!(v.is_bounded());
    }

    #[test]
    fn simplex_vertices() {
        let v = Polyhedron::simplex(2).vertices().unwrap();
        assert_eq!(v.vertices, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn infeasible_is_empty() {
        let mut p = Polyhedron::universe(1);
        p.add_leq(vec![0.0], -1.0);
        assert!(p.vertices().unwrap().is_empty());
        assert!(p.is_empty());
    }

    #[test]
    fn dimension_guard() {
        let p = Polyhedron::universe(13);
        assert!(matches!(p.vertices(), Err(SetError::DimensionGuard { .. })));
    }

    #[test]
    fn halfline_with_ray() {
        let mut p = Polyhedron::universe(1);
        p.add_leq(vec![-1.0], -2.0);
        let v = p.vertices().unwrap();
        assert_eq!(v.vertices, vec![vec![2.0]]);
        assert_eq!(v.rays, vec![vec![1.0]]);
    }

    #[test]
    fn line_has_lineality() {
        let mut p = Polyhedron::universe(2);
        p.add_eq(vec![1.0, -1.0], 0.0);
        let v = p.vertices().unwrap();
        assert_eq!(v.vertices.len(), 1);
        assert_eq!(v.lineality.len(), 1);
    }

    #[test]
    fn round_trip_h_v_h() {
        let mut p = Polyhedron::cube(&[-1.0, -1.0, -1.0], &[1.0, 1.0, 1.0]);
        p.add_leq(vec![1.0, 1.0, 1.0], 1.5);
        let v = p.vertices().unwrap();
        let h = Polyhedron::from_generators(3, &v);
        assert_eq!(h.ineq.len(), 7);
        assert_eq!(h.vertices().unwrap().vertices.len(), v.vertices.len());
    }

    #[test]
    fn generators_of_a_halfplane_round_trip() {
        let mut p = Polyhedron::universe(2);
        p.add_leq(vec![1.0, 0.0], 2.0);
        let v = p.vertices().unwrap();
        let h = Polyhedron::from_generators(2, &v);
        assert!(h.contains_closed(&[2.0, -50.0], 1e-9));
        assert!(!h.contains_closed(&[2.1, 0.0], 1e-9));
    }
}
