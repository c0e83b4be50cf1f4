use rand::Rng;
use serde::{Deserialize, Serialize};

use super::polyhedron::Polyhedron;
use crate::lp::{LinearProgram, LpOutcome};

/// Affine map `z -> A z + b` from a piece's source space to the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    #[serde(rename = "A")]
    pub matrix: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn identity(k: usize) -> Self {
        let matrix = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Affine {
            matrix,
            b: vec![0.0; k],
        }
    }

    pub fn target_dim(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(z).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect()
    }

    pub fn apply_linear(&self, z: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(z).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub poly: Polyhedron,
    pub map: Affine,
    pub provenance: String,
}

/// Finite union of affine images of polyhedra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolySet {
    pub dim: usize,
    pub pieces: Vec<Piece>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Membership {
    Inside { piece: usize },
    /// In the closure of some piece, but only with a strict row tight.
    Boundary { piece: usize },
    /// Lower bound on the Euclidean distance (the sup-norm distance).
    Outside { distance: f64 },
}

impl Membership {
    pub fn is_inside(&self) -> bool {
        matches!(self, Membership::Inside { .. })
    }

    /// Inside or on the boundary of a strict face.
    pub fn in_closure(&self) -> bool {
        !matches!(self, Membership::Outside { .. })
    }
}

impl PolySet {
    pub fn empty(dim: usize) -> Self {
        PolySet {
            dim,
            pieces: Vec::new(),
        }
    }

    pub fn singleton(point: &[f64], provenance: impl Into<String>) -> Self {
        PolySet {
            dim: point.len(),
            pieces: vec![Piece {
                poly: Polyhedron::universe(0),
                map: Affine {
                    matrix: vec![Vec::new(); point.len()],
                    b: point.to_vec(),
                },
                provenance: provenance.into(),
            }],
        }
    }

    pub fn from_piece(poly: Polyhedron, map: Affine, provenance: impl Into<String>) -> Self {
        assert_eq!(poly.dim, map.matrix.first().map_or(poly.dim, |r| r.len()));
        PolySet {
            dim: map.target_dim(),
            pieces: vec![Piece {
                poly,
                map,
                provenance: provenance.into(),
            }],
        }
    }

    pub fn is_empty_union(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn push(&mut self, piece: Piece) {
        assert_eq!(piece.map.target_dim(), self.dim, "pieces share a target dimension");
        self.pieces.push(piece);
    }

    pub fn extend(&mut self, other: PolySet) {
        assert_eq!(other.dim, self.dim, "pieces share a target dimension");
        self.pieces.extend(other.pieces);
    }

    /// Drop pieces whose polyhedron is empty.
    pub fn prune_empty(mut self) -> Self {
        self.pieces.retain(|p| !p.poly.is_empty());
        self
    }

    pub fn scale(&self, t: f64) -> PolySet {
        assert!(t > 0.0, "scale factor must be positive");
        let mut out = self.clone();
        for p in &mut out.pieces {
            for row in &mut p.map.matrix {
                row.iter_mut().for_each(|v| *v *= t);
            }
            p.map.b.iter_mut().for_each(|v| *v *= t);
        }
        out
    }

    pub fn translate(&self, shift: &[f64]) -> PolySet {
        let mut out = self.clone();
        for p in &mut out.pieces {
            for (b, s) in p.map.b.iter_mut().zip(shift) {
                *b += s;
            }
        }
        out
    }

    /// `{a + b : a in self, b in other}`, as the union of pairwise sums.
    pub fn minkowski_sum(&self, other: &PolySet) -> PolySet {
        assert_eq!(self.dim, other.dim);
        let mut out = PolySet::empty(self.dim);
        for p in &self.pieces {
            for q in &other.pieces {
                let poly = p.poly.product(&q.poly);
                let matrix = p
                    .map
                    .matrix
                    .iter()
                    .zip(&q.map.matrix)
                    .map(|(a, b)| a.iter().chain(b).copied().collect())
                    .collect();
                let b = p.map.b.iter().zip(&q.map.b).map(|(x, y)| x + y).collect();
                out.pieces.push(Piece {
                    poly,
                    map: Affine { matrix, b },
                    provenance: format!("{} + {}", p.provenance, q.provenance),
                });
            }
        }
        out
    }

    pub fn member(&self, point: &[f64], tol: f64) -> Membership {
        assert_eq!(point.len(), self.dim, "dimension mismatch");
        let mut best = f64::INFINITY;
        let mut boundary = None;
        for (k, piece) in self.pieces.iter().enumerate() {
            let Some(dist) = piece_distance(piece, point) else {
                continue;
            };
            if dist <= tol {
                if piece.poly.open_rows.is_empty() || strictly_inside(piece, point, tol) {
                    return Membership::Inside { piece: k };
                }
                boundary.get_or_insert(k);
            }
            best = best.min(dist);
        }
        match boundary {
            Some(piece) => Membership::Boundary { piece },
            None => Membership::Outside { distance: best },
        }
    }

    /// The common image point when every nonempty piece maps to a single
    /// point and all those points agree within `tol`.
    pub fn singleton_value(&self, tol: f64) -> Option<Vec<f64>> {
        let mut value: Option<Vec<f64>> = None;
        for piece in &self.pieces {
            let v = piece.poly.generators::<f64>();
            if v.is_empty() {
                continue;
            }
            let kills = |dirs: &Vec<Vec<f64>>| {
                dirs.iter().all(|d| {
                    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
                    piece
                        .map
                        .apply_linear(d)
                        .iter()
                        .all(|x| x.abs() <= tol * scale)
                })
            };
            if !kills(&v.rays) || !kills(&v.lineality) {
                return None;
            }
            for vert in &v.vertices {
                let img = piece.map.apply(vert);
                match &value {
                    None => value = Some(img),
                    Some(prev) => {
                        if prev.iter().zip(&img).any(|(a, b)| (a - b).abs() > tol) {
                            return None;
                        }
                    }
                }
            }
        }
        value
    }

    /// Random points of the set (closures of pieces), drawn from the
    /// generator forms.
    pub fn sample<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<Vec<f64>> {
        let forms: Vec<_> = self
            .pieces
            .iter()
            .map(|p| (p, p.poly.generators::<f64>()))
            .filter(|(_, v)| !v.is_empty())
            .collect();
        if forms.is_empty() {
            return Vec::new();
        }
        (0..count)
            .filter_map(|_| {
                let (piece, v) = &forms[rng.gen_range(0..forms.len())];
                v.combine(|| rng.gen::<f64>()).map(|z| piece.map.apply(&z))
            })
            .collect()
    }
}

/// Sup-norm distance from `point` to the image of the closed piece, or
/// `None` when the piece is empty.
fn piece_distance(piece: &Piece, point: &[f64]) -> Option<f64> {
    let k = piece.poly.dim;
    let mut lp = LinearProgram::new(k + 1);
    lp.cost[k] = 1.0;
    for (r, &b) in piece.poly.ineq.iter().zip(&piece.poly.ineq_rhs) {
        let mut row = r.clone();
        row.push(0.0);
        lp.leq(row, b);
    }
    for (r, &b) in piece.poly.eq.iter().zip(&piece.poly.eq_rhs) {
        let mut row = r.clone();
        row.push(0.0);
        lp.eq(row, b);
    }
    for ((row, &b), &p) in piece.map.matrix.iter().zip(&piece.map.b).zip(point) {
        // A z + b - p <= t  and  -(A z + b - p) <= t
        let mut up = row.clone();
        up.push(-1.0);
        lp.leq(up, p - b);
        let mut down: Vec<f64> = row.iter().map(|v| -v).collect();
        down.push(-1.0);
        lp.leq(down, b - p);
    }
    match lp.solve() {
        LpOutcome::Optimal { value, .. } => Some(value.max(0.0)),
        LpOutcome::Unbounded => Some(0.0),
        LpOutcome::Infeasible => None,
    }
}

fn strictly_inside(piece: &Piece, point: &[f64], tol: f64) -> bool {
    let k = piece.poly.dim;
    let mut lp = LinearProgram::new(k + 1);
    lp.cost[k] = -1.0;
    let open: std::collections::BTreeSet<usize> = piece.poly.open_rows.iter().copied().collect();
    for (i, (r, &b)) in piece.poly.ineq.iter().zip(&piece.poly.ineq_rhs).enumerate() {
        let mut row = r.clone();
        row.push(if open.contains(&i) { 1.0 } else { 0.0 });
        lp.leq(row, b);
    }
    for (r, &b) in piece.poly.eq.iter().zip(&piece.poly.eq_rhs) {
        let mut row = r.clone();
        row.push(0.0);
        lp.eq(row, b);
    }
    for ((row, &b), &p) in piece.map.matrix.iter().zip(&piece.map.b).zip(point) {
        let mut up = row.clone();
        up.push(0.0);
        lp.leq(up, p - b + tol);
        let mut down: Vec<f64> = row.iter().map(|v| -v).collect();
        down.push(0.0);
        lp.leq(down, b - p + tol);
    }
    let mut cap = vec![0.0; k + 1];
    cap[k] = 1.0;
    lp.leq(cap, 1.0);
    match lp.solve() {
        LpOutcome::Optimal { value, .. } => -value > 1e-9,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn segment(lo: f64, hi: f64) -> PolySet {
        PolySet::from_piece(Polyhedron::cube(&[lo], &[hi]), Affine::identity(1), "seg")
    }

    #[test]
    fn singleton_membership() {
        let s = PolySet::singleton(&[0.0], "zero");
        assert!(s.member(&[0.0], 1e-9).is_inside());
        match s.member(&[1.0], 1e-9) {
            Membership::Outside { distance } => assert!(distance >= 1.0 - 1e-9),
            other => panic!("unexpected {:?}", other),
        }
        assert_eq!(s.singleton_value(1e-12), Some(vec![0.0]));
    }

    #[test]
    fn strict_face_is_boundary() {
        let mut p = Polyhedron::universe(1);
        p.add_strict(vec![-1.0], 0.0); // z > 0
        p.add_leq(vec![1.0], 1.0);
        let s = PolySet::from_piece(p, Affine::identity(1), "open");
        assert_eq!(s.member(&[0.0], 1e-9), Membership::Boundary { piece: 0 });
        assert!(s.member(&[0.5], 1e-9).is_inside());
    }

    #[test]
    fn scaling_segment() {
        let s = segment(-1.0, 1.0);
        assert_eq!(s.scale(1.0), s);
        let t = s.scale(2.0);
        assert!(t.member(&[-2.0], 1e-9).is_inside());
        assert!(t.member(&[1.99], 1e-9).is_inside());
        assert!(!t.member(&[2.1], 1e-9).in_closure());
    }

    #[test]
    fn scaling_preserves_sampled_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p = Polyhedron::cube(&[-1.0, 0.0], &[1.0, 2.0]);
        p.add_leq(vec![1.0, 1.0], 2.0);
        let map = Affine {
            matrix: vec![vec![1.0, 2.0], vec![0.0, -1.0]],
            b: vec![0.5, 0.0],
        };
        let s = PolySet::from_piece(p, map, "tri");
        let t = 3.0;
        let scaled = s.scale(t);
        for _ in 0..50 {
            let q = [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0)];
            let tq = [t * q[0], t * q[1]];
            assert_eq!(
                s.member(&q, 1e-9).in_closure(),
                scaled.member(&tq, 1e-9 * t).in_closure()
            );
        }
    }

    #[test]
    fn membership_is_monotone_in_tol() {
        let s = segment(0.0, 1.0);
        for &x in &[1.0 + 1e-7, 1.0 + 1e-5, -3e-4] {
            let mut inside = false;
            for tol in [1e-9, 1e-6, 1e-4, 1e-3] {
                let now = s.member(&[x], tol).is_inside();
                assert!(!inside || now);
                inside = now;
            }
        }
    }

    #[test]
    fn minkowski_of_segments() {
        let s = segment(-1.0, 1.0).minkowski_sum(&segment(0.0, 3.0));
        assert!(s.member(&[4.0], 1e-9).is_inside());
        assert!(s.member(&[-1.0], 1e-9).is_inside());
        assert!(!s.member(&[4.5], 1e-9).in_closure());
    }

    #[test]
    fn unbounded_piece_singleton_detection() {
        // The map kills the free direction, so the image is one point.
        let mut p = Polyhedron::universe(2);
        p.add_eq(vec![1.0, 0.0], 1.0);
        let map = Affine {
            matrix: vec![vec![2.0, 0.0]],
            b: vec![1.0],
        };
        let s = PolySet::from_piece(p, map, "line");
        assert_eq!(s.singleton_value(1e-9), Some(vec![3.0]));
    }
}
