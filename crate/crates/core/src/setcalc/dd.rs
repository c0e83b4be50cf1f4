//! Double-description conversion from H-form to generators.
//!
//! Works on the homogeneous cone `{z : A z <= 0, E z = 0}` and keeps a
//! lineality basis separate from the extreme rays, so non-pointed cones are
//! handled without a preliminary projection. Adjacency uses the
//! combinatorial test on zero sets, which is exact for minimal generator
//! lists.

use std::cmp::Ordering;

use crate::num::{dot, normalize_max, Field};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct ZeroSet(Vec<u64>);

impl ZeroSet {
    fn with_len(n: usize) -> Self {
        ZeroSet(vec![0; n.div_ceil(64).max(1)])
    }
    fn insert(&mut self, k: usize) {
        self.0[k / 64] |= 1 << (k % 64);
    }
    fn intersect(&self, other: &ZeroSet) -> ZeroSet {
        ZeroSet(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }
    fn is_subset_of(&self, other: &ZeroSet) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & !b == 0)
    }
    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

#[derive(Clone, Debug)]
struct Ray<F> {
    v: Vec<F>,
    zeros: ZeroSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeGenerators<F> {
    pub lineality: Vec<Vec<F>>,
    pub rays: Vec<Vec<F>>,
}

fn axpy<F: Field>(target: &mut [F], coef: &F, src: &[F]) {
    for (t, s) in target.iter_mut().zip(src) {
        *t = t.clone() - coef.clone() * s.clone();
    }
}

/// Generators of `{z in R^dim : ineqs[k]·z <= 0, eqs[k]·z = 0}`.
pub fn cone_generators<F: Field>(dim: usize, ineqs: &[Vec<F>], eqs: &[Vec<F>]) -> ConeGenerators<F> {
    let mut lineality: Vec<Vec<F>> = (0..dim)
        .map(|i| {
            let mut e = vec![F::zero(); dim];
            e[i] = F::one();
            e
        })
        .collect();

    for row in eqs {
        let mut row = row.clone();
        normalize_max(&mut row);
        if let Some(pivot) = pick_pivot(&lineality, &row) {
            let l0 = lineality.remove(pivot);
            let s0 = dot(&row, &l0);
            for l in lineality.iter_mut() {
                let coef = dot(&row, l) / s0.clone();
                axpy(l, &coef, &l0);
            }
        }
    }

    let mut rays: Vec<Ray<F>> = Vec::new();
    let total = ineqs.len();
    for (k, row) in ineqs.iter().enumerate() {
        let mut row = row.clone();
        normalize_max(&mut row);
        if let Some(pivot) = pick_pivot(&lineality, &row) {
            let l0 = lineality.remove(pivot);
            let s0 = dot(&row, &l0);
            for l in lineality.iter_mut() {
                let coef = dot(&row, l) / s0.clone();
                axpy(l, &coef, &l0);
                normalize_max(l);
            }
            for r in rays.iter_mut() {
                let coef = dot(&row, &r.v) / s0.clone();
                axpy(&mut r.v, &coef, &l0);
                normalize_max(&mut r.v);
                r.zeros.insert(k);
            }
            let mut v = l0;
            if s0.is_pos() {
                for e in v.iter_mut() {
                    *e = -e.clone();
                }
            }
            normalize_max(&mut v);
            let mut zeros = ZeroSet::with_len(total);
            for j in 0..k {
                zeros.insert(j);
            }
            rays.push(Ray { v, zeros });
            continue;
        }

        let values: Vec<F> = rays.iter().map(|r| dot(&row, &r.v)).collect();
        let pointed_dim = dim - lineality.len();
        let mut next: Vec<Ray<F>> = Vec::with_capacity(rays.len());
        for (r, s) in rays.iter().zip(&values) {
            match s.sign() {
                Ordering::Less => next.push(r.clone()),
                Ordering::Equal => {
                    let mut r = r.clone();
                    r.zeros.insert(k);
                    next.push(r);
                }
                Ordering::Greater => {}
            }
        }
        for (ip, p) in rays.iter().enumerate() {
            if !values[ip].is_pos() {
                continue;
            }
            for (iq, q) in rays.iter().enumerate() {
                if !values[iq].is_neg() {
                    continue;
                }
                let common = p.zeros.intersect(&q.zeros);
                if common.count() + 2 < pointed_dim {
                    continue;
                }
                let blocked = rays.iter().enumerate().any(|(ir, r)| {
                    ir != ip && ir != iq && common.is_subset_of(&r.zeros)
                });
                if blocked {
                    continue;
                }
                // values[ip] * q - values[iq] * p lies on the hyperplane.
                let mut v: Vec<F> = q
                    .v
                    .iter()
                    .zip(&p.v)
                    .map(|(qe, pe)| values[ip].clone() * qe.clone() - values[iq].clone() * pe.clone())
                    .collect();
                normalize_max(&mut v);
                let mut zeros = common;
                zeros.insert(k);
                next.push(Ray { v, zeros });
            }
        }
        rays = next;
    }

    ConeGenerators {
        lineality,
        rays: rays.into_iter().map(|r| r.v).collect(),
    }
}

fn pick_pivot<F: Field>(lineality: &[Vec<F>], row: &[F]) -> Option<usize> {
    let mut best: Option<(usize, F)> = None;
    for (i, l) in lineality.iter().enumerate() {
        let s = dot(row, l).abs();
        if s.is_zero_tol() {
            continue;
        }
        if best.as_ref().map_or(true, |(_, b)| s > *b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Rational;

    #[test]
    fn orthant_in_plane() {
        let g = cone_generators::<f64>(2, &[vec![-1.0, 0.0], vec![0.0, -1.0]], &[]);
        assert!(g.lineality.is_empty());
        assert_eq!(g.rays.len(), 2);
    }

    #[test]
    fn halfplane_keeps_lineality() {
        let g = cone_generators::<f64>(2, &[vec![1.0, 1.0]], &[]);
        assert_eq!(g.lineality.len(), 1);
        assert_eq!(g.rays.len(), 1);
    }

    #[test]
    fn square_pyramid_rational() {
        // cone over the unit square at height t: 0 <= z1 <= t, 0 <= z2 <= t
        let q = |v: &[f64]| v.iter().map(|&x| <Rational as Field>::from_f64(x)).collect::<Vec<_>>();
        let rows = vec![
            q(&[-1.0, 0.0, 0.0]),
            q(&[0.0, -1.0, 0.0]),
            q(&[1.0, 0.0, -1.0]),
            q(&[0.0, 1.0, -1.0]),
        ];
        let g = cone_generators::<Rational>(3, &rows, &[]);
        assert!(g.lineality.is_empty());
        assert_eq!(g.rays.len(), 4);
    }
}
