use std::sync::Arc;

use num_traits::{One, Zero};

use super::rational::{self, ceil_i64, floor_i64, q, Q};
use super::Polytope;
use crate::error::{Error, Result};

/// Integer points of `kP` in lexicographic order; they index the monomial
/// basis of the sections of `L^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticePointSet {
    k: u32,
    dim: usize,
    polytope_name: String,
    points: Vec<Vec<i64>>,
    /// `points` flattened row-major as `f64` for the numerical kernels.
    flat: Vec<f64>,
    barycenter: Vec<Q>,
    volume: f64,
    centroid: Vec<f64>,
}

impl LatticePointSet {
    fn from_points(p: &Polytope, k: u32, mut points: Vec<Vec<i64>>) -> Self {
        let dim = p.dim();
        points.sort();
        points.dedup();
        assert!(!points.is_empty() && points.iter().all(|p| p.len() == dim));
        let n = q(points.len() as i64);
        let barycenter = (0..dim)
            .map(|i| points.iter().map(|p| q(p[i])).sum::<Q>() / &n)
            .collect();
        let flat = points.iter().flatten().map(|&a| a as f64).collect();
        LatticePointSet {
            k,
            dim,
            polytope_name: p.name().to_string(),
            points,
            flat,
            barycenter,
            volume: rational::to_f64(&p.volume()),
            centroid: p.centroid().iter().map(rational::to_f64).collect(),
        }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn polytope_name(&self) -> &str {
        &self.polytope_name
    }

    pub fn points(&self) -> &[Vec<i64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.flat[i * self.dim..(i + 1) * self.dim]
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn barycenter(&self) -> &[Q] {
        &self.barycenter
    }

    pub fn barycenter_f64(&self) -> Vec<f64> {
        self.barycenter.iter().map(rational::to_f64).collect()
    }

    /// `Vol(P)` of the underlying polytope.
    pub fn polytope_volume(&self) -> f64 {
        self.volume
    }

    /// Centroid of `kP`.
    pub fn scaled_centroid(&self) -> Vec<f64> {
        self.centroid.iter().map(|c| c * self.k as f64).collect()
    }

    /// `k^m Vol(P)`, the total mass of the level-`k` volume form.
    pub fn scaled_volume(&self) -> f64 {
        (self.k as f64).powi(self.dim as i32) * self.volume
    }

    pub fn index_of(&self, alpha: &[i64]) -> Option<usize> {
        self.points.binary_search_by(|p| p.as_slice().cmp(alpha)).ok()
    }
}

/// All integer points of `kP` in canonical (lexicographic) order.
pub fn lattice_points(p: &Polytope, k: u32) -> Result<Arc<LatticePointSet>> {
    if k == 0 {
        return Err(Error::InvalidPower(0));
    }
    let m = p.dim();
    let kq = q(k as i64);
    let lo: Vec<i64> = (0..m)
        .map(|i| p.vertices().iter().map(|v| ceil_i64(&(&v[i] * &kq))).min().unwrap())
        .collect();
    let hi: Vec<i64> = (0..m)
        .map(|i| p.vertices().iter().map(|v| floor_i64(&(&v[i] * &kq))).max().unwrap())
        .collect();
    let mut points = Vec::new();
    let mut cur = lo.clone();
    'outer: loop {
        if p.contains_scaled(k, &cur) {
            points.push(cur.clone());
        }
        // odometer increment, last coordinate fastest
        let mut i = m;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            if cur[i] < hi[i] {
                cur[i] += 1;
                for j in i + 1..m {
                    cur[j] = lo[j];
                }
                break;
            }
        }
    }
    Ok(Arc::new(LatticePointSet::from_points(p, k, points)))
}

/// Coefficients `c_0..c_m` of the Ehrhart polynomial `N_k = sum c_j k^j`,
/// interpolated from the exact counts at `k = 0..m` (with `N_0 = 1`).
pub fn ehrhart_polynomial(p: &Polytope) -> Vec<Q> {
    let m = p.dim();
    let xs: Vec<Q> = (0..=m as i64).map(q).collect();
    let ys: Vec<Q> = (0..=m as u32)
        .map(|k| {
            if k == 0 {
                Q::one()
            } else {
                q(lattice_points(p, k).unwrap().len() as i64)
            }
        })
        .collect();
    // Vandermonde solve; m is tiny.
    let a: Vec<Vec<Q>> = xs
        .iter()
        .map(|x| {
            let mut row = Vec::with_capacity(m + 1);
            let mut pow = Q::one();
            for _ in 0..=m {
                row.push(pow.clone());
                pow *= x;
            }
            row
        })
        .collect();
    rational::solve(&a, &ys).unwrap_or_else(|| vec![Q::zero(); m + 1])
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::rational::q_frac;
    use super::*;

    #[test]
    fn segment_points() {
        let s = lattice_points(&cp1(), 3).unwrap();
        assert_eq!(s.points(), &[vec![0], vec![1], vec![2], vec![3]]);
        assert_eq!(s.barycenter(), &[q_frac(3, 2)]);
    }

    #[test]
    fn simplex_points() {
        assert_eq!(lattice_points(&cp2(), 2).unwrap().len(), 6);
        assert_eq!(lattice_points(&cp2(), 3).unwrap().len(), 10);
    }

    #[test]
    fn trapezoid_points() {
        let s = lattice_points(&f1(), 1).unwrap();
        assert_eq!(
            s.points(),
            &[vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1], vec![2, 0]]
        );
        assert_eq!(lattice_points(&f1(), 2).unwrap().len(), 12);
    }

    #[test]
    fn zero_power_rejected() {
        assert!(matches!(lattice_points(&cp1(), 0), Err(Error::InvalidPower(0))));
    }

    #[test]
    fn ehrhart_leading_terms() {
        let e = ehrhart_polynomial(&f1());
        assert_eq!(e, vec![q(1), q_frac(5, 2), q_frac(3, 2)]);
    }

    #[test]
    fn index_lookup() {
        let s = lattice_points(&f1(), 2).unwrap();
        for (i, p) in s.points().iter().enumerate() {
            assert_eq!(s.index_of(p), Some(i));
        }
        assert_eq!(s.index_of(&[5, 5]), None);
    }
}
