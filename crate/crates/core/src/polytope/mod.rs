//! Delzant moment polytopes: loading, validation, lattice points, exact
//! integrals and the extremal affine function.
//!
//! A polytope is stored as a list of facet inequalities
//! `<n_i, x> + c_i >= 0` with primitive inward normals `n_i`. All geometry on
//! this side of the crate is exact over `BigRational`; callers that need
//! floating point convert at the boundary.

mod extremal;
mod integrate;
mod lattice;
pub mod rational;

pub use extremal::{donaldson_futaki, extremal_affine, AffineFunction};
pub use integrate::{boundary_integral, boundary_volume, interior_integral, volume, Polynomial};
pub use lattice::{ehrhart_polynomial, lattice_points, LatticePointSet};

use std::path::Path;

use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use rational::{dot_int, format_q, kernel_line, parse_q, q, rank, solve, Q};

#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub normal: Vec<i64>,
    pub offset: Q,
}

impl Facet {
    /// Value of the defining affine function `<n, x> + c` (the lattice distance).
    pub fn eval(&self, x: &[Q]) -> Q {
        dot_int(&self.normal, x) + &self.offset
    }
}

#[derive(Clone, Debug)]
pub struct Polytope {
    name: String,
    dim: usize,
    facets: Vec<Facet>,
    vertices: Vec<Vec<Q>>,
    /// For each vertex, the indices of the facets through it.
    vertex_facets: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OffsetRepr {
    Int(i64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct FacetRepr {
    normal: Vec<i64>,
    offset: OffsetRepr,
}

#[derive(Serialize, Deserialize)]
struct PolytopeRepr {
    dim: usize,
    facets: Vec<FacetRepr>,
    #[serde(default)]
    name: String,
}

impl Polytope {
    /// Builds and validates a polytope from its facet inequalities.
    pub fn new(name: impl Into<String>, dim: usize, facets: Vec<Facet>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parse("dim must be positive".into()));
        }
        for (i, f) in facets.iter().enumerate() {
            if f.normal.len() != dim {
                return Err(Error::Parse(format!(
                    "facet {i}: normal has {} entries, expected {dim}",
                    f.normal.len()
                )));
            }
            let g = f.normal.iter().fold(0i64, |g, &a| g.gcd(&a));
            if g != 1 {
                return Err(Error::NonPrimitiveNormal {
                    facet: i,
                    normal: f.normal.clone(),
                });
            }
        }

        let vertices = enumerate_vertices(dim, &facets);
        if vertices.is_empty() {
            return Err(Error::EmptyOrUnbounded);
        }
        if let Some(dir) = recession_ray(dim, &facets) {
            return Err(Error::Unbounded {
                direction: dir.iter().map(format_q).collect(),
            });
        }
        let diffs: Vec<Vec<Q>> = vertices[1..]
            .iter()
            .map(|v| v.iter().zip(&vertices[0]).map(|(a, b)| a - b).collect())
            .collect();
        if rank(&diffs) != dim {
            return Err(Error::NotFullDimensional);
        }

        let vertex_facets: Vec<Vec<usize>> = vertices
            .iter()
            .map(|v| {
                facets
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| f.eval(v).is_zero())
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();

        for (v, tight) in vertices.iter().zip(&vertex_facets) {
            let vertex: Vec<String> = v.iter().map(format_q).collect();
            if tight.len() != dim {
                return Err(Error::NonDelzant {
                    vertex,
                    reason: format!("{} facets meet (expected {dim})", tight.len()),
                });
            }
            let rows: Vec<Vec<Q>> = tight
                .iter()
                .map(|&i| facets[i].normal.iter().map(|&a| q(a)).collect())
                .collect();
            let d = rational::det(&rows);
            if d.abs() != q(1) {
                return Err(Error::NonDelzant {
                    vertex,
                    reason: format!("normals span a sublattice of index {}", format_q(&d.abs())),
                });
            }
        }

        for i in 0..facets.len() {
            let on: Vec<&Vec<Q>> = vertices
                .iter()
                .zip(&vertex_facets)
                .filter(|(_, t)| t.contains(&i))
                .map(|(v, _)| v)
                .collect();
            if on.len() < dim {
                return Err(Error::RedundantFacet { facet: i });
            }
        }

        Ok(Polytope {
            name: name.into(),
            dim,
            facets,
            vertices,
            vertex_facets,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let repr: PolytopeRepr = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        let facets = repr
            .facets
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let offset = match f.offset {
                    OffsetRepr::Int(n) => q(n),
                    OffsetRepr::Text(s) => parse_q(&s)
                        .ok_or_else(|| Error::Parse(format!("facet {i}: bad offset {s:?}")))?,
                };
                Ok(Facet {
                    normal: f.normal,
                    offset,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Polytope::new(repr.name, repr.dim, facets)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Polytope::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        let repr = PolytopeRepr {
            dim: self.dim,
            name: self.name.clone(),
            facets: self
                .facets
                .iter()
                .map(|f| FacetRepr {
                    normal: f.normal.clone(),
                    offset: OffsetRepr::Text(format_q(&f.offset)),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&repr).expect("serializable")
    }

    /// Cartesian product `self x other` (the polytope of `X1 x X2` with the
    /// product polarization).
    pub fn product(&self, other: &Polytope) -> Result<Polytope> {
        let m1 = self.dim;
        let m2 = other.dim;
        let mut facets = Vec::with_capacity(self.facets.len() + other.facets.len());
        for f in &self.facets {
            let mut n = f.normal.clone();
            n.extend(std::iter::repeat_n(0, m2));
            facets.push(Facet {
                normal: n,
                offset: f.offset.clone(),
            });
        }
        for f in &other.facets {
            let mut n = vec![0; m1];
            n.extend(&f.normal);
            facets.push(Facet {
                normal: n,
                offset: f.offset.clone(),
            });
        }
        Polytope::new(format!("{}x{}", self.name, other.name), m1 + m2, facets)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn vertices(&self) -> &[Vec<Q>] {
        &self.vertices
    }

    pub fn vertices_f64(&self) -> Vec<Vec<f64>> {
        self.vertices
            .iter()
            .map(|v| v.iter().map(rational::to_f64).collect())
            .collect()
    }

    pub(crate) fn vertex_facets(&self) -> &[Vec<usize>] {
        &self.vertex_facets
    }

    /// Exact test `x in P`.
    pub fn contains(&self, x: &[Q]) -> bool {
        self.facets.iter().all(|f| !f.eval(x).is_negative())
    }

    /// Whether the integer point `alpha` lies in `kP`.
    pub fn contains_scaled(&self, k: u32, alpha: &[i64]) -> bool {
        let k = q(k as i64);
        self.facets.iter().all(|f| {
            let s: i64 = f.normal.iter().zip(alpha).map(|(a, b)| a * b).sum();
            !(q(s) + &k * &f.offset).is_negative()
        })
    }

    pub fn volume(&self) -> Q {
        volume(self)
    }

    pub fn boundary_volume(&self) -> Q {
        boundary_volume(self)
    }

    /// Average scalar curvature `Vol(dP) / Vol(P)` in the lattice-boundary normalization.
    pub fn mean_scalar_curvature(&self) -> Q {
        self.boundary_volume() / self.volume()
    }

    /// Centroid of `P` (exact).
    pub fn centroid(&self) -> Vec<Q> {
        let vol = self.volume();
        (0..self.dim)
            .map(|i| {
                interior_integral(self, &Polynomial::coordinate(self.dim, i))
                    .expect("degree 1")
                    / &vol
            })
            .collect()
    }
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, r, &mut Vec::new(), &mut out);
    out
}

fn enumerate_vertices(dim: usize, facets: &[Facet]) -> Vec<Vec<Q>> {
    let mut out: Vec<Vec<Q>> = Vec::new();
    for combo in combinations(facets.len(), dim) {
        let a: Vec<Vec<Q>> = combo
            .iter()
            .map(|&i| facets[i].normal.iter().map(|&x| q(x)).collect())
            .collect();
        let b: Vec<Q> = combo.iter().map(|&i| -facets[i].offset.clone()).collect();
        let Some(x) = solve(&a, &b) else { continue };
        if facets.iter().all(|f| !f.eval(&x).is_negative()) && !out.contains(&x) {
            out.push(x);
        }
    }
    out.sort();
    out
}

/// A nonzero direction `d` with `<n_i, d> >= 0` for every facet, if one exists.
fn recession_ray(dim: usize, facets: &[Facet]) -> Option<Vec<Q>> {
    let normals: Vec<Vec<Q>> = facets
        .iter()
        .map(|f| f.normal.iter().map(|&a| q(a)).collect())
        .collect();
    let feasible = |d: &[Q]| {
        normals
            .iter()
            .all(|n| !n.iter().zip(d).map(|(a, b)| a * b).sum::<Q>().is_negative())
    };
    for combo in combinations(facets.len(), dim - 1) {
        let rows: Vec<Vec<Q>> = combo.iter().map(|&i| normals[i].clone()).collect();
        let Some(d) = kernel_line(&rows, dim) else { continue };
        if feasible(&d) {
            return Some(d);
        }
        let neg: Vec<Q> = d.iter().map(|x| -x.clone()).collect();
        if feasible(&neg) {
            return Some(neg);
        }
    }
    None
}

/// Fixture polytopes used across tests and the CLI.
pub mod fixtures {
    use super::*;

    fn facet(normal: &[i64], offset: i64) -> Facet {
        Facet {
            normal: normal.to_vec(),
            offset: q(offset),
        }
    }

    /// `[0, 1]`, the polytope of `(CP^1, O(1))`.
    pub fn cp1() -> Polytope {
        Polytope::new("cp1", 1, vec![facet(&[1], 0), facet(&[-1], 1)]).unwrap()
    }

    /// Standard simplex, `(CP^2, O(1))`.
    pub fn cp2() -> Polytope {
        Polytope::new(
            "cp2",
            2,
            vec![facet(&[1, 0], 0), facet(&[0, 1], 0), facet(&[-1, -1], 1)],
        )
        .unwrap()
    }

    /// Trapezoid with vertices (0,0),(2,0),(1,1),(0,1): the first Hirzebruch surface.
    pub fn f1() -> Polytope {
        Polytope::new(
            "f1",
            2,
            vec![
                facet(&[1, 0], 0),
                facet(&[0, 1], 0),
                facet(&[0, -1], 1),
                facet(&[-1, -1], 2),
            ],
        )
        .unwrap()
    }

    /// Unit square, `CP^1 x CP^1`.
    pub fn cp1xcp1() -> Polytope {
        let mut p = cp1().product(&cp1()).unwrap();
        p.name = "cp1xcp1".into();
        p
    }
}
