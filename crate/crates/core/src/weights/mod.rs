//! The optimal twist.
//!
//! A torus element `v` acts on the section `z^alpha` with weight
//! `lambda_alpha(v) = <alpha - abar, v>`. Given the section masses `D` of a
//! form `H`, the functional `G(v) = sum_alpha e^{lambda_alpha(v)} D_alpha` is
//! strictly convex on `R^m`; its minimizer is the optimal weight and its
//! gradient is minus the character `F^v`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::polytope::LatticePointSet;
use crate::quantization::{kernel, mass_pass, HermitianWeights, MassPass, QuadratureGrid};

/// Newton stops once the gradient norm falls below this.
pub const GRAD_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 100;
const ARMIJO_C: f64 = 1e-4;

/// An element of the Lie algebra of the complex torus, in the lattice basis.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusElement {
    v: Vec<f64>,
}

impl TorusElement {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NanInput);
        }
        Ok(TorusElement { v })
    }

    pub fn zero(dim: usize) -> Self {
        TorusElement { v: vec![0.0; dim] }
    }

    pub fn basis(dim: usize, j: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[j] = 1.0;
        TorusElement { v }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn scaled(&self, c: f64) -> Self {
        TorusElement {
            v: self.v.iter().map(|x| c * x).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// `lambda_alpha = <alpha - abar, v>`, re-centered so the sum vanishes to
/// rounding.
pub fn weight_vector(v: &TorusElement, pts: &LatticePointSet) -> Vec<f64> {
    assert_eq!(v.dim(), pts.dim());
    let bar = pts.barycenter_f64();
    let mut lambda: Vec<f64> = (0..pts.len())
        .map(|i| {
            pts.point(i)
                .iter()
                .zip(&bar)
                .zip(&v.v)
                .map(|((a, b), x)| (a - b) * x)
                .sum()
        })
        .collect();
    let drift = compensated_sum(lambda.iter().copied()) / lambda.len() as f64;
    for l in &mut lambda {
        *l -= drift;
    }
    lambda
}

/// Normalized per-section integrals `D_alpha`; a probability vector.
#[derive(Clone, Debug)]
pub struct SectionMass {
    d: Vec<f64>,
    points: Arc<LatticePointSet>,
}

impl SectionMass {
    /// `D = mass / total`. Dividing by the computed total rather than the
    /// exact volume makes `sum D = 1` hold to rounding.
    pub fn from_pass(h: &HermitianWeights, pass: &MassPass) -> Self {
        let d = pass.mass.iter().map(|x| x / pass.total).collect();
        SectionMass {
            d,
            points: h.points().clone(),
        }
    }

    pub fn new(points: Arc<LatticePointSet>, d: Vec<f64>) -> Result<Self> {
        if d.len() != points.len() {
            return Err(Error::LatticeMismatch(format!("{} masses for {} points", d.len(), points.len())));
        }
        if d.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidWeights("section masses must be finite and nonnegative".into()));
        }
        let s = compensated_sum(d.iter().copied());
        Ok(SectionMass {
            d: d.iter().map(|x| x / s).collect(),
            points,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn points(&self) -> &Arc<LatticePointSet> {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }
}

pub fn section_mass(h: &HermitianWeights, grid: &QuadratureGrid) -> Result<SectionMass> {
    Ok(SectionMass::from_pass(h, &mass_pass(h, grid)?))
}

fn log_terms(d: &SectionMass, v: &TorusElement) -> Vec<f64> {
    weight_vector(v, &d.points)
        .iter()
        .zip(&d.d)
        .map(|(l, x)| l + x.ln())
        .collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + compensated_sum(xs.iter().map(|x| (x - max).exp())).ln()
}

/// `G(v) = sum_alpha e^{lambda_alpha(v)} D_alpha`.
pub fn g_functional(d: &SectionMass, v: &TorusElement) -> f64 {
    log_sum_exp(&log_terms(d, v)).exp()
}

/// Value, gradient and row-major Hessian of `G` at `v`.
pub fn g_derivatives(d: &SectionMass, v: &TorusElement) -> (f64, Vec<f64>, Vec<f64>) {
    let m = d.dim();
    let pts = &d.points;
    let bar = pts.barycenter_f64();
    let e: Vec<f64> = log_terms(d, v).iter().map(|x| x.exp()).collect();
    let g = compensated_sum(e.iter().copied());
    let centered = |i: usize, j: usize| pts.point(i)[j] - bar[j];
    let grad = (0..m)
        .map(|j| compensated_sum((0..e.len()).map(|i| centered(i, j) * e[i])))
        .collect();
    let mut hess = vec![0.0; m * m];
    for r in 0..m {
        for c in r..m {
            let x = compensated_sum((0..e.len()).map(|i| centered(i, r) * centered(i, c) * e[i]));
            hess[r * m + c] = x;
            hess[c * m + r] = x;
        }
    }
    (g, grad, hess)
}

/// Smallest eigenvalue of the Hessian of `G` at `v`.
pub fn g_hessian_min_eigenvalue(d: &SectionMass, v: &TorusElement) -> f64 {
    let (_, _, hess) = g_derivatives(d, v);
    kernel::min_eigenvalue(d.dim(), &hess)
}

/// Result of the Newton minimization of `G`.
#[derive(Clone, Debug)]
pub struct OptimalWeight {
    pub v: TorusElement,
    pub grad_norm: f64,
    pub iterations: usize,
}

pub fn optimal_weight(d: &SectionMass) -> Result<TorusElement> {
    optimal_weight_from(d, &TorusElement::zero(d.dim())).map(|o| o.v)
}

/// Damped Newton on `G` from `start`. Armijo backtracking by halving; `G` is
/// convex, so a descent step always exists until rounding takes over.
pub fn optimal_weight_from(d: &SectionMass, start: &TorusElement) -> Result<OptimalWeight> {
    let m = d.dim();
    let mut v = start.clone();
    for it in 0..NEWTON_MAX_ITER {
        let (g, grad, hess) = g_derivatives(d, &v);
        let grad_norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if grad_norm < GRAD_TOL {
            return Ok(OptimalWeight { v, grad_norm, iterations: it });
        }
        let chol = DMatrix::from_row_slice(m, m, &hess)
            .cholesky()
            .ok_or(Error::SingularWeightHessian)?;
        let step = chol.solve(&(-DVector::from_vec(grad.clone())));
        if step.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularWeightHessian);
        }
        let slope: f64 = step.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        // Below this predicted decrease, differences of G are rounding noise
        // and the full Newton step is taken.
        let resolvable = -slope > 1e-13 * g;
        let next = loop {
            let trial = TorusElement {
                v: v.v.iter().zip(step.iter()).map(|(x, s)| x + t * s).collect(),
            };
            if !resolvable || g_functional(d, &trial) <= g + ARMIJO_C * t * slope {
                break Some(trial);
            }
            t *= 0.5;
            if t < 1e-10 {
                break None;
            }
        };
        match next {
            Some(n) => v = n,
            // No representable decrease left: the minimum is resolved to
            // rounding. Accept if the gradient is at that floor.
            None if grad_norm < 1e3 * GRAD_TOL => {
                return Ok(OptimalWeight { v, grad_norm, iterations: it });
            }
            None => return Err(Error::IterationCap(it)),
        }
    }
    Err(Error::IterationCap(NEWTON_MAX_ITER))
}

/// `F^v(a) = -sum_alpha lambda_alpha(a) e^{lambda_alpha(v)} D_alpha`, minus
/// the derivative of `G` at `v` along `a`.
pub fn f_character(d: &SectionMass, v: &TorusElement, a: &TorusElement) -> f64 {
    let la = weight_vector(a, &d.points);
    let terms = log_terms(d, v);
    -compensated_sum(la.iter().zip(&terms).map(|(l, t)| l * t.exp()))
}

/// `max_j |F^v(e_j)|` over the coordinate directions.
pub fn f_character_max(d: &SectionMass, v: &TorusElement) -> f64 {
    (0..d.dim())
        .map(|j| f_character(d, v, &TorusElement::basis(d.dim(), j)).abs())
        .fold(0.0, f64::max)
}

/// The character as an integral over the manifold:
/// `-(1/(k^m Vol P)) int (theta_a - Delta theta_a) e^psi dmu` with
/// `theta_a = <moment - abar, a>`, `e^psi = sum_alpha e^{lambda_alpha(v)} p_alpha`
/// (the twist potential in the monomial-basis gauge) and
/// `Delta theta_a = tr(Cov^{-1} M3[a])`, `M3` the third central moment of
/// `p` contracted with `a`.
pub fn f_character_direct(
    h: &HermitianWeights,
    v: &TorusElement,
    a: &TorusElement,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let m = h.dim();
    let n = h.len();
    if v.dim() != m || a.dim() != m {
        return Err(Error::LatticeMismatch("torus element dimension".into()));
    }
    let pts = h.points();
    let logw = h.logw();
    let bar = pts.barycenter_f64();
    let ev: Vec<f64> = weight_vector(v, pts).iter().map(|l| l.exp()).collect();
    let av = a.as_slice();
    let scale = 2f64.powi(m as i32);
    let acc = grid.reduce(
        3,
        || (kernel::Scratch::new(n, m), vec![0.0; m * m], vec![0.0; m]),
        |u, w, acc, (s, m3, d)| {
            kernel::moments(pts, logw, u, s);
            m3.iter_mut().for_each(|x| *x = 0.0);
            for (i, &p) in s.p.iter().enumerate() {
                let a_i = pts.point(i);
                for j in 0..m {
                    d[j] = a_i[j] - s.moment[j];
                }
                let da: f64 = d.iter().zip(av).map(|(x, y)| x * y).sum();
                for r in 0..m {
                    for c in 0..m {
                        m3[r * m + c] += p * d[r] * d[c] * da;
                    }
                }
            }
            let inv = match kernel::inverse(m, &s.cov) {
                Some(inv) => inv,
                None => {
                    acc[2] += 1.0;
                    return;
                }
            };
            let lap: f64 = (0..m * m).map(|i| inv[i] * m3[(i % m) * m + i / m]).sum();
            let theta: f64 = (0..m).map(|j| (s.moment[j] - bar[j]) * av[j]).sum();
            let e_psi: f64 = s.p.iter().zip(&ev).map(|(p, e)| p * e).sum();
            let wd = w * scale * kernel::det(m, &s.cov);
            acc[0] += wd * (theta - lap) * e_psi;
            acc[1] += wd;
        },
    );
    if acc[2] > 0.0 {
        return Err(Error::FiniteDifference("degenerate metric at a grid node".into()));
    }
    grid.check_volume(acc[1])?;
    Ok(-acc[0] / pts.scaled_volume())
}

/// The quantized extremal field `k^2 v*`. The twist `v*` minimizing `G` at
/// level `k` is `O(k^{-2})` in the lattice basis; one factor of `k` converts
/// to the Lie algebra normalization of the level-one potential, the other is
/// the quantization scaling.
pub fn quantized_field(k: u32, v: &TorusElement) -> TorusElement {
    v.scaled((k as f64).powi(2))
}

/// One row of the weight report.
#[derive(Clone, Debug)]
pub struct WeightRow {
    pub k: u32,
    pub n_k: usize,
    pub v: Vec<f64>,
    pub kv: Vec<f64>,
    pub grad_norm: f64,
    pub f_max: f64,
}

impl WeightRow {
    pub fn new(d: &SectionMass, v: &TorusElement) -> Self {
        let k = d.points.k();
        let (_, grad, _) = g_derivatives(d, v);
        WeightRow {
            k,
            n_k: d.points.len(),
            v: v.as_slice().to_vec(),
            kv: quantized_field(k, v).as_slice().to_vec(),
            grad_norm: grad.iter().map(|x| x * x).sum::<f64>().sqrt(),
            f_max: f_character_max(d, v),
        }
    }
}

pub fn weight_report_csv(rows: &[WeightRow]) -> String {
    let m = rows.first().map_or(0, |r| r.v.len());
    let mut s = String::from("k,N_k");
    for j in 1..=m {
        s.push_str(&format!(",v_{j}"));
    }
    for j in 1..=m {
        s.push_str(&format!(",kv_{j}"));
    }
    s.push_str(",grad_norm,F_max\n");
    for r in rows {
        s.push_str(&format!("{},{}", r.k, r.n_k));
        for x in r.v.iter().chain(&r.kv) {
            s.push_str(&format!(",{x:e}"));
        }
        s.push_str(&format!(",{:e},{:e}\n", r.grad_norm, r.f_max));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::fixtures::{cp1, cp2, f1};
    use crate::polytope::lattice_points;
    use crate::quantization::{log_binomial, make_grid, GridSpec};

    fn uniform(k: u32) -> SectionMass {
        let pts = lattice_points(&cp1(), k).unwrap();
        let n = pts.len();
        SectionMass::new(pts, vec![1.0; n]).unwrap()
    }

    #[test]
    fn weight_vector_cp1() {
        let pts = lattice_points(&cp1(), 2).unwrap();
        let l = weight_vector(&TorusElement::new(vec![0.7]).unwrap(), &pts);
        assert_eq!(l, vec![-0.7, 0.0, 0.7]);
        assert!(weight_vector(&TorusElement::zero(1), &pts).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weight_vector_is_centered() {
        let pts = lattice_points(&f1(), 5).unwrap();
        let l = weight_vector(&TorusElement::new(vec![0.31, -1.7]).unwrap(), &pts);
        assert!(compensated_sum(l.iter().copied()).abs() < 1e-13);
    }

    #[test]
    fn g_closed_form_cp1() {
        let d = uniform(2);
        assert!((g_functional(&d, &TorusElement::zero(1)) - 1.0).abs() < 1e-15);
        for v in [-1.3, 0.2, 2.0f64] {
            let expect = ((-v).exp() + 1.0 + v.exp()) / 3.0;
            let got = g_functional(&d, &TorusElement::new(vec![v]).unwrap());
            assert!((got - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn binomial_section_mass_is_uniform() {
        let k = 6;
        let pts = lattice_points(&cp1(), k).unwrap();
        let h = HermitianWeights::from_fn(pts, |a| -log_binomial(k, a[0] as u32)).unwrap();
        let d = section_mass(&h, &make_grid(&h, &GridSpec::default()).unwrap()).unwrap();
        for x in d.values() {
            assert!((x - 1.0 / 7.0).abs() < 1e-10);
        }
        let v = optimal_weight(&d).unwrap();
        assert!(v.norm() < 1e-8);
    }

    #[test]
    fn symmetric_simplex_weights_have_zero_optimum() {
        let pts = lattice_points(&cp2(), 4).unwrap();
        // Any function of the three barycentric distances, symmetrized.
        let d: Vec<f64> = pts
            .points()
            .iter()
            .map(|a| {
                let mut l = [a[0], a[1], 4 - a[0] - a[1]];
                l.sort();
                1.0 + 0.3 * l[0] as f64 + 0.05 * (l[2] * l[2]) as f64
            })
            .collect();
        let d = SectionMass::new(pts, d).unwrap();
        let v = optimal_weight(&d).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn newton_zeroes_the_character() {
        let pts = lattice_points(&f1(), 4).unwrap();
        let d: Vec<f64> = (0..pts.len()).map(|i| 1.0 + (i as f64 * 0.37).sin().abs()).collect();
        let d = SectionMass::new(pts, d).unwrap();
        let out = optimal_weight_from(&d, &TorusElement::zero(2)).unwrap();
        assert!(out.grad_norm < 1e-12);
        assert!(f_character_max(&d, &out.v) < 1e-10);
        assert!(out.v.norm() > 1e-3);
    }

    #[test]
    fn character_is_linear() {
        let pts = lattice_points(&f1(), 3).unwrap();
        let d: Vec<f64> = (0..pts.len()).map(|i| 1.0 + 0.1 * i as f64).collect();
        let d = SectionMass::new(pts, d).unwrap();
        let v = TorusElement::new(vec![0.2, -0.1]).unwrap();
        let a = TorusElement::new(vec![1.0, 0.5]).unwrap();
        let b = TorusElement::new(vec![-0.3, 2.0]).unwrap();
        let ab = TorusElement::new(vec![0.7, 2.5]).unwrap();
        let fa = f_character(&d, &v, &a);
        let fb = f_character(&d, &v, &b);
        assert!((f_character(&d, &v, &ab) - fa - fb).abs() < 1e-13);
        assert!((f_character(&d, &v, &a.scaled(-2.5)) + 2.5 * fa).abs() < 1e-13);
        assert_eq!(f_character(&uniform(5), &TorusElement::zero(1), &TorusElement::basis(1, 0)), 0.0);
    }

    #[test]
    fn direct_route_matches_derivative_route_cp1() {
        let k = 4;
        let pts = lattice_points(&cp1(), k).unwrap();
        let h = HermitianWeights::random(pts, 11);
        let g = make_grid(&h, &GridSpec::default()).unwrap();
        let d = section_mass(&h, &g).unwrap();
        for (v, a) in [(0.0, 1.0), (0.3, 1.0), (-0.8, 0.4)] {
            let v = TorusElement::new(vec![v]).unwrap();
            let a = TorusElement::new(vec![a]).unwrap();
            let x = f_character(&d, &v, &a);
            let y = f_character_direct(&h, &v, &a, &g).unwrap();
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn direct_route_matches_on_trapezoid() {
        let pts = lattice_points(&f1(), 4).unwrap();
        let h = HermitianWeights::canonical(pts, &f1()).unwrap().map(|i, x| x + 0.2 * ((i * 7) % 5) as f64 / 5.0);
        let g = make_grid(&h, &GridSpec::default()).unwrap();
        let d = section_mass(&h, &g).unwrap();
        let v = TorusElement::new(vec![0.15, -0.4]).unwrap();
        for j in 0..2 {
            let a = TorusElement::basis(2, j);
            let x = f_character(&d, &v, &a);
            let y = f_character_direct(&h, &v, &a, &g).unwrap();
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn report_header() {
        let row = WeightRow::new(&uniform(3), &TorusElement::zero(1));
        let csv = weight_report_csv(&[row]);
        assert!(csv.starts_with("k,N_k,v_1,kv_1,grad_norm,F_max\n3,4,"));
    }
}
