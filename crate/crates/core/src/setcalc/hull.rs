use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::polyhedron::Polyhedron;
use super::polyset::{Affine, PolySet};
use crate::lp::{LinearProgram, LpOutcome};

/// Convex combination of at most `dim + 1` input points that reproduces a
/// query point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullCertificate {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvexHull {
    pub points: Vec<Vec<f64>>,
    /// Indices of the points that are not convex combinations of the others.
    pub extreme: Vec<usize>,
}

impl ConvexHull {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        let extreme = (0..points.len())
            .filter(|&i| {
                let others: Vec<Vec<f64>> = points
                    .iter()
                    .enumerate()
                    .filter(|&(j, p)| j != i && p != &points[i])
                    .map(|(_, p)| p.clone())
                    .collect();
                // Duplicates keep only their first copy.
                let first_copy = points[..i].iter().all(|p| p != &points[i]);
                first_copy && combination_weights(&others, &points[i]).is_none()
            })
            .collect();
        ConvexHull { points, extreme }
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// A certificate with affinely independent support, or `None` if the
    /// query is outside the hull.
    pub fn certify(&self, query: &[f64]) -> Option<HullCertificate> {
        let pts: Vec<Vec<f64>> = self.extreme.iter().map(|&i| self.points[i].clone()).collect();
        let w = combination_weights(&pts, query)?;
        let mut support: Vec<(usize, f64)> = self
            .extreme
            .iter()
            .zip(w)
            .filter(|(_, w)| *w > 1e-12)
            .map(|(&i, w)| (i, w))
            .collect();
        caratheodory_reduce(&self.points, &mut support);
        let total: f64 = support.iter().map(|(_, w)| w).sum();
        Some(HullCertificate {
            indices: support.iter().map(|(i, _)| *i).collect(),
            weights: support.iter().map(|(_, w)| w / total).collect(),
        })
    }

    /// The hull as a one-piece PolySet over the simplex of extreme points.
    pub fn to_polyset(&self, provenance: &str) -> PolySet {
        let d = self.dim();
        let k = self.extreme.len();
        if k == 0 {
            return PolySet::empty(d);
        }
        let matrix = (0..d)
            .map(|r| self.extreme.iter().map(|&i| self.points[i][r]).collect())
            .collect();
        PolySet::from_piece(
            Polyhedron::simplex(k),
            Affine {
                matrix,
                b: vec![0.0; d],
            },
            provenance,
        )
    }
}

impl HullCertificate {
    /// Residual of the certificate against the query, in sup norm.
    pub fn residual(&self, points: &[Vec<f64>], query: &[f64]) -> f64 {
        let mut acc = vec![0.0; query.len()];
        for (&i, &w) in self.indices.iter().zip(&self.weights) {
            for (a, p) in acc.iter_mut().zip(&points[i]) {
                *a += w * p;
            }
        }
        acc.iter()
            .zip(query)
            .map(|(a, q)| (a - q).abs())
            .fold(0.0, f64::max)
    }
}

/// Every affinely independent support (at most `dim + 1` distinct points)
/// whose unique barycentric weights are positive and reproduce `target`.
pub fn caratheodory_supports(points: &[Vec<f64>], target: &[f64], tol: f64) -> Vec<HullCertificate> {
    let d = target.len();
    // Distinct values only; the first index stands for its duplicates.
    let mut distinct: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let dup = distinct
            .iter()
            .any(|&j| points[j].iter().zip(p).all(|(a, b)| (a - b).abs() <= tol));
        if !dup {
            distinct.push(i);
        }
    }
    let k = distinct.len();
    let mut out = Vec::new();
    if k > 20 {
        log::warn!("{} distinct generators: support enumeration truncated to the first 20", k);
    }
    let k = k.min(20);
    for mask in 1u32..(1u32 << k) {
        let size = mask.count_ones() as usize;
        if size > d + 1 {
            continue;
        }
        let support: Vec<usize> = (0..k).filter(|b| mask & (1 << b) != 0).map(|b| distinct[b]).collect();
        let lifted = DMatrix::from_fn(d + 1, size, |r, c| if r < d { points[support[c]][r] } else { 1.0 });
        let sv = lifted.singular_values();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        if sv.iter().filter(|&&s| s > 1e-10 * smax.max(1.0)).count() < size {
            continue;
        }
        let mut rhs = nalgebra::DVector::zeros(d + 1);
        for r in 0..d {
            rhs[r] = target[r];
        }
        rhs[d] = 1.0;
        let Ok(w) = lifted.clone().svd(true, true).solve(&rhs, 1e-14) else {
            continue;
        };
        let resid = (&lifted * &w - &rhs).amax();
        if resid > tol * (1.0 + rhs.amax()) || w.iter().any(|&v| v <= tol) {
            continue;
        }
        out.push(HullCertificate {
            indices: support,
            weights: w.iter().copied().collect(),
        });
    }
    out
}

fn combination_weights(points: &[Vec<f64>], query: &[f64]) -> Option<Vec<f64>> {
    if points.is_empty() {
        return None;
    }
    let k = points.len();
    let mut lp = LinearProgram::new(k);
    lp.nonneg = vec![true; k];
    lp.eq(vec![1.0; k], 1.0);
    for (r, &q) in query.iter().enumerate() {
        lp.eq(points.iter().map(|p| p[r]).collect(), q);
    }
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}

/// Shrink the support until the lifted points `(p, 1)` are linearly
/// independent, moving along a null vector each time.
fn caratheodory_reduce(points: &[Vec<f64>], support: &mut Vec<(usize, f64)>) {
    loop {
        let k = support.len();
        if k <= 1 {
            return;
        }
        let d = points[support[0].0].len();
        let lifted = DMatrix::from_fn(d + 1, k, |r, c| {
            if r < d {
                points[support[c].0][r]
            } else {
                1.0
            }
        });
        let svd = lifted.clone().svd(false, true);
        let sv = &svd.singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let rank = sv.iter().filter(|&&s| s > 1e-10 * smax.max(1.0)).count();
        if rank == k {
            return;
        }
        let vt = svd.v_t.expect("requested V^T");
        // Rows of V^T past the rank span the null space; with k > d + 1
        // the thin SVD has fewer rows, so fall back to an explicit solve.
        let null: Vec<f64> = if vt.nrows() > rank {
            vt.row(vt.nrows() - 1).iter().copied().collect()
        } else {
            null_vector(&lifted)
        };
        let mut step = f64::INFINITY;
        for (j, &(_, w)) in support.iter().enumerate() {
            if null[j] > 1e-14 {
                step = step.min(w / null[j]);
            }
        }
        if !step.is_finite() {
            let neg: Vec<f64> = null.iter().map(|v| -v).collect();
            for (j, &(_, w)) in support.iter().enumerate() {
                if neg[j] > 1e-14 {
                    step = step.min(-w / null[j]);
                }
            }
            step = -step;
        }
        for (j, entry) in support.iter_mut().enumerate() {
            entry.1 -= step * null[j];
        }
        let (drop, _) = support
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .expect("non-empty");
        support.remove(drop);
        support.retain(|(_, w)| *w > 1e-14);
    }
}

fn null_vector(m: &DMatrix<f64>) -> Vec<f64> {
    // Square up with zero rows so the full V is available.
    let k = m.ncols();
    let mut sq = DMatrix::zeros(k.max(m.nrows()), k);
    sq.view_mut((0, 0), (m.nrows(), k)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    vt.row(idx).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_hull_certificate() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.5, 0.5],
        ];
        let hull = ConvexHull::new(pts.clone());
        assert_eq!(hull.extreme, vec![0, 1, 2, 3]);
        let c = hull.certify(&[0.3, 0.6]).unwrap();
        assert!(c.indices.len() <= 3);
        assert!(c.residual(&pts, &[0.3, 0.6]) < 1e-9);
        assert!(hull.certify(&[1.2, 0.0]).is_none());
    }

    #[test]
    fn supports_of_a_midpoint() {
        let pts = vec![vec![-1.0], vec![1.0], vec![1.0], vec![3.0]];
        let sup = caratheodory_supports(&pts, &[0.0], 1e-9);
        assert_eq!(sup.len(), 2);
        assert_eq!(sup[0].indices, vec![0, 1]);
        assert!((sup[0].weights[0] - 0.5).abs() < 1e-12);
        assert_eq!(sup[1].indices, vec![0, 3]);
        let ext = caratheodory_supports(&pts, &[3.0], 1e-9);
        assert_eq!(ext.len(), 1);
        assert_eq!(ext[0].indices, vec![3]);
    }

    #[test]
    fn hull_polyset_agrees() {
        let pts = vec![vec![-1.0], vec![2.0], vec![0.0]];
        let hull = ConvexHull::new(pts);
        let s = hull.to_polyset("hull");
        assert!(s.member(&[1.5], 1e-9).is_inside());
        assert!(!s.member(&[2.5], 1e-9).in_closure());
    }
}
