//! Exact integration over `P` and its boundary via simplex decomposition.

use num_traits::{Signed, Zero};

use super::rational::{self, factorial, q, Q};
use super::Polytope;
use crate::error::{Error, Result};

/// Polynomial in `m` variables as a list of `(coefficient, exponents)` terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<(Q, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<(Q, Vec<u32>)>) -> Self {
        assert!(terms.iter().all(|(_, e)| e.len() == dim));
        Polynomial { dim, terms }
    }

    pub fn constant(dim: usize, c: Q) -> Self {
        Polynomial::new(dim, vec![(c, vec![0; dim])])
    }

    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut e = vec![0; dim];
        e[i] = 1;
        Polynomial::new(dim, vec![(q(1), e)])
    }

    pub fn monomial(dim: usize, exponents: &[u32]) -> Self {
        Polynomial::new(dim, vec![(q(1), exponents.to_vec())])
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(_, e)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[Q]) -> Q {
        self.terms
            .iter()
            .map(|(c, e)| {
                let mut t = c.clone();
                for (xi, &p) in x.iter().zip(e) {
                    for _ in 0..p {
                        t *= xi;
                    }
                }
                t
            })
            .sum()
    }
}

/// Simplices (as vertex-index lists) triangulating the face spanned by `face`
/// of affine dimension `d`. Fan triangulation from the first vertex.
fn triangulate(p: &Polytope, face: &[usize], d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![vec![face[0]]];
    }
    let apex = face[0];
    let mut subfaces: Vec<Vec<usize>> = Vec::new();
    for j in 0..p.facets().len() {
        let s: Vec<usize> = face
            .iter()
            .copied()
            .filter(|&v| p.vertex_facets()[v].contains(&j))
            .collect();
        if s.len() == face.len() || s.contains(&apex) || s.len() < d {
            continue;
        }
        if affine_rank(p, &s) == d - 1 && !subfaces.contains(&s) {
            subfaces.push(s);
        }
    }
    let mut out = Vec::new();
    for s in subfaces {
        for mut simplex in triangulate(p, &s, d - 1) {
            simplex.insert(0, apex);
            out.push(simplex);
        }
    }
    out
}

fn affine_rank(p: &Polytope, idx: &[usize]) -> usize {
    let v0 = &p.vertices()[idx[0]];
    let rows: Vec<Vec<Q>> = idx[1..]
        .iter()
        .map(|&i| p.vertices()[i].iter().zip(v0).map(|(a, b)| a - b).collect())
        .collect();
    rational::rank(&rows)
}

fn simplices(p: &Polytope) -> Vec<Vec<Vec<Q>>> {
    let all: Vec<usize> = (0..p.vertices().len()).collect();
    triangulate(p, &all, p.dim())
        .into_iter()
        .map(|s| s.into_iter().map(|i| p.vertices()[i].clone()).collect())
        .collect()
}

fn simplex_volume(s: &[Vec<Q>]) -> Q {
    let m = s.len() - 1;
    let rows: Vec<Vec<Q>> = s[1..]
        .iter()
        .map(|v| v.iter().zip(&s[0]).map(|(a, b)| a - b).collect())
        .collect();
    rational::det(&rows).abs() / factorial(m)
}

/// Closed-form integral of a monomial of total degree <= 2 over a simplex.
fn simplex_monomial(s: &[Vec<Q>], e: &[u32], vol: &Q) -> Result<Q> {
    let m = s.len() - 1;
    let deg: u32 = e.iter().sum();
    let vars: Vec<usize> = e
        .iter()
        .enumerate()
        .flat_map(|(i, &p)| std::iter::repeat_n(i, p as usize))
        .collect();
    let coord_sum = |i: usize| s.iter().map(|v| v[i].clone()).sum::<Q>();
    match deg {
        0 => Ok(vol.clone()),
        1 => Ok(vol * coord_sum(vars[0]) / q(m as i64 + 1)),
        2 => {
            let (i, j) = (vars[0], vars[1]);
            let cross: Q = s.iter().map(|v| &v[i] * &v[j]).sum();
            Ok(vol * (cross + coord_sum(i) * coord_sum(j)) / q((m as i64 + 1) * (m as i64 + 2)))
        }
        d => Err(Error::DegreeUnsupported(d)),
    }
}

/// Exact `int_P f dx` for `deg f <= 2`.
pub fn interior_integral(p: &Polytope, f: &Polynomial) -> Result<Q> {
    if f.degree() > 2 {
        return Err(Error::DegreeUnsupported(f.degree()));
    }
    let mut total = Q::zero();
    for s in simplices(p) {
        let vol = simplex_volume(&s);
        for (c, e) in &f.terms {
            total += c * simplex_monomial(&s, e, &vol)?;
        }
    }
    Ok(total)
}

pub fn volume(p: &Polytope) -> Q {
    simplices(p).iter().map(|s| simplex_volume(s)).sum()
}

/// Lattice-normalized facet simplices: `(sigma-measure, barycenter)` pairs over all facets.
fn boundary_pieces(p: &Polytope) -> Vec<(Q, Vec<Q>)> {
    let m = p.dim();
    let nv = p.vertices().len() as i64;
    let inner: Vec<Q> = (0..m)
        .map(|i| p.vertices().iter().map(|v| v[i].clone()).sum::<Q>() / q(nv))
        .collect();
    let mut out = Vec::new();
    for (j, facet) in p.facets().iter().enumerate() {
        let on: Vec<usize> = (0..p.vertices().len())
            .filter(|&v| p.vertex_facets()[v].contains(&j))
            .collect();
        // Lattice distance from the interior point to the facet hyperplane.
        let h = facet.eval(&inner);
        for s in triangulate(p, &on, m - 1) {
            let rows: Vec<Vec<Q>> = s
                .iter()
                .map(|&i| p.vertices()[i].iter().zip(&inner).map(|(a, b)| a - b).collect())
                .collect();
            let sigma = rational::det(&rows).abs() / (factorial(m - 1) * &h);
            let n = s.len() as i64;
            let bary: Vec<Q> = (0..m)
                .map(|c| s.iter().map(|&i| p.vertices()[i][c].clone()).sum::<Q>() / q(n))
                .collect();
            out.push((sigma, bary));
        }
    }
    out
}

/// Exact `int_{dP} f dsigma` for affine `f`, with `dsigma` normalized so that a
/// primitive lattice simplex in a facet has unit measure.
pub fn boundary_integral(p: &Polytope, f: &super::AffineFunction) -> Q {
    boundary_pieces(p)
        .into_iter()
        .map(|(sigma, bary)| sigma * f.eval_exact(&bary))
        .sum()
}

pub fn boundary_volume(p: &Polytope) -> Q {
    boundary_pieces(p).into_iter().map(|(s, _)| s).sum()
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::rational::q_frac;
    use super::super::AffineFunction;
    use super::*;

    #[test]
    fn unit_square_volume() {
        let p = cp1xcp1();
        assert_eq!(interior_integral(&p, &Polynomial::constant(2, q(1))).unwrap(), q(1));
    }

    #[test]
    fn segment_first_moment() {
        assert_eq!(
            interior_integral(&cp1(), &Polynomial::coordinate(1, 0)).unwrap(),
            q_frac(1, 2)
        );
    }

    #[test]
    fn trapezoid_y_moment() {
        assert_eq!(
            interior_integral(&f1(), &Polynomial::coordinate(2, 1)).unwrap(),
            q_frac(2, 3)
        );
    }

    #[test]
    fn quadratic_moments() {
        // int_0^1 x^2 = 1/3; int_simplex x*y = 1/24; int_trapezoid y^2 = int_0^1 y^2 (2-y) = 5/12
        assert_eq!(
            interior_integral(&cp1(), &Polynomial::monomial(1, &[2])).unwrap(),
            q_frac(1, 3)
        );
        assert_eq!(
            interior_integral(&cp2(), &Polynomial::monomial(2, &[1, 1])).unwrap(),
            q_frac(1, 24)
        );
        assert_eq!(
            interior_integral(&f1(), &Polynomial::monomial(2, &[0, 2])).unwrap(),
            q_frac(5, 12)
        );
    }

    #[test]
    fn cubic_rejected() {
        assert!(matches!(
            interior_integral(&cp1(), &Polynomial::monomial(1, &[3])),
            Err(Error::DegreeUnsupported(3))
        ));
    }

    #[test]
    fn boundary_measures() {
        assert_eq!(boundary_volume(&cp1()), q(2));
        assert_eq!(boundary_volume(&cp2()), q(3));
        assert_eq!(boundary_volume(&f1()), q(5));
        let y = AffineFunction::new(q(0), vec![q(0), q(1)]);
        assert_eq!(boundary_integral(&f1(), &y), q(2));
        assert_eq!(boundary_integral(&cp1(), &AffineFunction::constant(1, q(1))), q(2));
    }
}
