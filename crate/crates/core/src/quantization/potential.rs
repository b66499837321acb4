use std::fmt;
use std::sync::Arc;

use super::grid::{GridSpec, LevelPotential, QuadratureGrid};
use super::hermitian::HermitianWeights;
use super::kernel::{self, Scratch};
use crate::error::{Error, Result};
use crate::polytope::LatticePointSet;

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type FillFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Step of the central differences used when no analytic derivative is given.
const FD_STEP: f64 = 1e-4;

/// Level-one Kähler potential `phi(u)` on the open orbit.
#[derive(Clone)]
pub struct PotentialFunction {
    dim: usize,
    label: String,
    value: ScalarFn,
    gradient: Option<FillFn>,
    hessian: Option<FillFn>,
}

impl fmt::Debug for PotentialFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialFunction")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("fd_step", &self.fd_step())
            .finish()
    }
}

impl PotentialFunction {
    /// Derivatives by central differences until analytic ones are attached.
    pub fn from_fn(
        dim: usize,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PotentialFunction {
            dim,
            label: label.into(),
            value: Arc::new(f),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `None` when both derivatives are analytic.
    pub fn fd_step(&self) -> Option<f64> {
        (self.gradient.is_none() || self.hessian.is_none()).then_some(FD_STEP)
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        (self.value)(u)
    }

    pub fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        if let Some(g) = &self.gradient {
            return g(u, out);
        }
        let mut x = u.to_vec();
        for i in 0..self.dim {
            x[i] = u[i] + FD_STEP;
            let fp = self.value(&x);
            x[i] = u[i] - FD_STEP;
            let fm = self.value(&x);
            x[i] = u[i];
            out[i] = (fp - fm) / (2.0 * FD_STEP);
        }
    }

    pub fn hessian_into(&self, u: &[f64], out: &mut [f64]) {
        if let Some(h) = &self.hessian {
            return h(u, out);
        }
        let m = self.dim;
        let mut x = u.to_vec();
        let mut gp = vec![0.0; m];
        let mut gm = vec![0.0; m];
        for i in 0..m {
            x[i] = u[i] + FD_STEP;
            self.gradient_into(&x, &mut gp);
            x[i] = u[i] - FD_STEP;
            self.gradient_into(&x, &mut gm);
            x[i] = u[i];
            for j in 0..m {
                out[i * m + j] = (gp[j] - gm[j]) / (2.0 * FD_STEP);
            }
        }
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (out[i * m + j] + out[j * m + i]);
                out[i * m + j] = s;
                out[j * m + i] = s;
            }
        }
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(u, &mut g);
        g
    }

    pub fn hessian(&self, u: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim * self.dim];
        self.hessian_into(u, &mut h);
        h
    }

    /// `log det(Hess(phi)/2)`, the log volume density of `omega_phi`.
    fn log_det_metric(&self, u: &[f64], buf: &mut [f64]) -> Result<f64> {
        self.hessian_into(u, buf);
        let m = self.dim;
        buf.iter_mut().for_each(|x| *x *= 0.5);
        let d = kernel::det(m, buf);
        if !(d > 0.0) || kernel::min_eigenvalue(m, buf) <= 0.0 {
            return Err(Error::HessianNotPd(u.to_vec()));
        }
        Ok(d.ln())
    }
}

/// `phi` scaled to level `k`.
struct Scaled<'a> {
    phi: &'a PotentialFunction,
    k: f64,
}

impl LevelPotential for Scaled<'_> {
    fn dim(&self) -> usize {
        self.phi.dim
    }

    fn eval(&self, u: &[f64], moment: &mut [f64], metric: &mut [f64]) -> f64 {
        self.phi.gradient_into(u, moment);
        moment.iter_mut().for_each(|x| *x *= 0.5 * self.k);
        self.phi.hessian_into(u, metric);
        metric.iter_mut().for_each(|x| *x *= 0.5 * self.k);
        self.k * self.phi.value(u)
    }
}

/// `phi = (log B_H - log N_k) / k` with exact derivatives.
pub fn fs_potential(h: &HermitianWeights) -> PotentialFunction {
    let k = h.k() as f64;
    let log_n = (h.len() as f64).ln();
    let (hv, hg, hh) = (h.clone(), h.clone(), h.clone());
    PotentialFunction::from_fn(h.dim(), format!("fs(k={})", h.k()), move |u| {
        let mut p = vec![0.0; hv.len()];
        (kernel::softmax(hv.points(), hv.logw(), u, &mut p) - log_n) / k
    })
    .with_gradient(move |u, out| {
        let mut s = Scratch::new(hg.len(), hg.dim());
        kernel::moments(hg.points(), hg.logw(), u, &mut s);
        for (o, x) in out.iter_mut().zip(&s.moment) {
            *o = 2.0 * x / k;
        }
    })
    .with_hessian(move |u, out| {
        let mut s = Scratch::new(hh.len(), hh.dim());
        kernel::moments(hh.points(), hh.logw(), u, &mut s);
        for (o, x) in out.iter_mut().zip(&s.cov) {
            *o = 4.0 * x / k;
        }
    })
}

pub mod fixtures {
    use super::PotentialFunction;

    fn softplus(x: f64) -> f64 {
        if x > 0.0 {
            x + (-x).exp().ln_1p()
        } else {
            x.exp().ln_1p()
        }
    }

    fn logistic(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    /// `log(1 + e^{2u})`: the round metric on the projective line.
    pub fn round_cp1() -> PotentialFunction {
        perturbed_cp1(0.0)
    }

    /// `log(1 + e^{2u}) + eps sech^2(u)`; convex for `|eps| < 1/4`.
    pub fn perturbed_cp1(eps: f64) -> PotentialFunction {
        let label = if eps == 0.0 {
            "round_cp1".to_string()
        } else {
            format!("perturbed_cp1({eps})")
        };
        let sech2 = |u: f64| {
            let c = u.cosh();
            if c.is_finite() {
                1.0 / (c * c)
            } else {
                0.0
            }
        };
        PotentialFunction::from_fn(1, label, move |u| softplus(2.0 * u[0]) + eps * sech2(u[0]))
            .with_gradient(move |u, g| {
                let (s, t) = (sech2(u[0]), u[0].tanh());
                g[0] = 2.0 * logistic(2.0 * u[0]) - 2.0 * eps * s * t;
            })
            .with_hessian(move |u, h| {
                let (s, t) = (sech2(u[0]), u[0].tanh());
                h[0] = s + eps * (4.0 * s * t * t - 2.0 * s * s);
            })
    }

    /// `log(1 + e^{2u_1} + e^{2u_2})`: the round metric on the projective plane.
    pub fn round_cp2() -> PotentialFunction {
        let probs = |u: &[f64]| {
            let m = 0f64.max(2.0 * u[0]).max(2.0 * u[1]);
            let e = [(-m).exp(), (2.0 * u[0] - m).exp(), (2.0 * u[1] - m).exp()];
            let s = e[0] + e[1] + e[2];
            (m + s.ln(), [e[1] / s, e[2] / s])
        };
        PotentialFunction::from_fn(2, "round_cp2", move |u| probs(u).0)
            .with_gradient(move |u, g| {
                let p = probs(u).1;
                g[0] = 2.0 * p[0];
                g[1] = 2.0 * p[1];
            })
            .with_hessian(move |u, h| {
                let p = probs(u).1;
                h[0] = 4.0 * p[0] * (1.0 - p[0]);
                h[1] = -4.0 * p[0] * p[1];
                h[2] = h[1];
                h[3] = 4.0 * p[1] * (1.0 - p[1]);
            })
    }
}

/// `rho_k(phi)(u) = sum_beta exp(2<beta,u> - k phi(u)) / Hilb_k(phi)_beta`
/// with `Hilb_k(phi)_beta = k^{-m} int exp(2<beta,u> - k phi) det(Hess(k phi)/2) du`.
#[derive(Clone, Debug)]
pub struct BergmanFunction {
    phi: PotentialFunction,
    points: Arc<LatticePointSet>,
    log_hilb: Vec<f64>,
    grid: QuadratureGrid,
}

/// Minimum grid points per axis per unit of `k`.
const NYQUIST_FACTOR: usize = 8;

pub fn bergman_function(
    phi: &PotentialFunction,
    points: &Arc<LatticePointSet>,
    spec: &GridSpec,
) -> Result<BergmanFunction> {
    let k = points.k();
    let m = points.dim();
    if phi.dim() != m {
        return Err(Error::LatticeMismatch("potential and lattice dimensions differ".into()));
    }
    let needed = NYQUIST_FACTOR * k as usize;
    let resolution = spec.resolution_for(m, k);
    if resolution < needed {
        return Err(Error::Nyquist {
            resolution,
            k,
            needed,
        });
    }
    let level = Scaled { phi, k: k as f64 };
    let grid = QuadratureGrid::build(&level, points, spec, None)?;
    let n = points.len();
    let flat = points.flat();
    let mut acc = grid.reduce(
        n + 2,
        || (vec![0.0; m], vec![0.0; m * m]),
        |u, w, acc, (mo, me)| {
            let kphi = level.eval(u, mo, me);
            let d = kernel::det(m, me);
            if !(d > 0.0) || kernel::min_eigenvalue(m, me) <= 0.0 {
                acc[n + 1] += 1.0;
                return;
            }
            let wd = w * d;
            for (i, a) in acc[..n].iter_mut().enumerate() {
                let e: f64 = (0..m).map(|j| 2.0 * flat[i * m + j] * u[j]).sum::<f64>() - kphi;
                *a += wd * e.exp();
            }
            acc[n] += wd;
        },
    );
    if acc[n + 1] > 0.0 {
        // Locate one offending node for the report.
        let mut mo = vec![0.0; m];
        let mut me = vec![0.0; m * m];
        for i in 0..grid.len() {
            level.eval(grid.node(i), &mut mo, &mut me);
            if !(kernel::det(m, &me) > 0.0) || kernel::min_eigenvalue(m, &me) <= 0.0 {
                return Err(Error::HessianNotPd(grid.node(i).to_vec()));
            }
        }
    }
    grid.check_volume(acc[n])?;
    acc.truncate(n);
    let km = (k as f64).powi(m as i32);
    let log_hilb = acc.iter().map(|a| (a / km).ln()).collect();
    Ok(BergmanFunction {
        phi: phi.clone(),
        points: points.clone(),
        log_hilb,
        grid,
    })
}

impl BergmanFunction {
    pub fn eval(&self, u: &[f64]) -> f64 {
        let m = self.points.dim();
        let kphi = self.points.k() as f64 * self.phi.value(u);
        let flat = self.points.flat();
        let terms: Vec<f64> = (0..self.points.len())
            .map(|i| {
                (0..m).map(|j| 2.0 * flat[i * m + j] * u[j]).sum::<f64>() - kphi - self.log_hilb[i]
            })
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max.exp() * terms.iter().map(|t| (t - max).exp()).sum::<f64>()
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn k(&self) -> u32 {
        self.points.k()
    }

    /// `int rho_k dmu / int dmu` with `dmu` the level-`k` volume form.
    pub fn mean(&self) -> f64 {
        let m = self.points.dim();
        let level = Scaled {
            phi: &self.phi,
            k: self.k() as f64,
        };
        let acc = self.grid.reduce(
            2,
            || (vec![0.0; m], vec![0.0; m * m]),
            |u, w, acc, (mo, me)| {
                level.eval(u, mo, me);
                let wd = w * kernel::det(m, me);
                acc[0] += wd * self.eval(u);
                acc[1] += wd;
            },
        );
        acc[0] / acc[1]
    }
}

/// Outer step for differentiating `log det` of the metric.
const CURVATURE_STEP: f64 = 2e-4;
const CURVATURE_STEP_FD: f64 = 2e-3;

/// Scalar curvature `S = -(1/2) tr(g^{-1} Hess_u log det g)` of the metric
/// `g = Hess(phi)/2`; the round projective line has `S = 2`.
pub fn scalar_curvature(phi: &PotentialFunction, u: &[f64]) -> Result<f64> {
    let m = phi.dim();
    if u.len() != m || u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NanInput);
    }
    let h = if phi.fd_step().is_some() {
        CURVATURE_STEP_FD
    } else {
        CURVATURE_STEP
    };
    if u.iter().any(|x| (x + h) == *x) {
        return Err(Error::FiniteDifference(format!("step {h} underflows at {u:?}")));
    }
    let mut buf = vec![0.0; m * m];
    let mut x = u.to_vec();
    let mut ld = |x: &[f64]| phi.log_det_metric(x, &mut buf);
    let l0 = ld(&x)?;
    let mut hess = vec![0.0; m * m];
    for i in 0..m {
        x[i] = u[i] + h;
        let lp = ld(&x)?;
        x[i] = u[i] - h;
        let lm = ld(&x)?;
        x[i] = u[i];
        hess[i * m + i] = (lp - 2.0 * l0 + lm) / (h * h);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64, x: &mut Vec<f64>| {
                x[i] = u[i] + si * h;
                x[j] = u[j] + sj * h;
                let v = ld(x);
                x[i] = u[i];
                x[j] = u[j];
                v
            };
            let v = (corner(1.0, 1.0, &mut x)? - corner(1.0, -1.0, &mut x)?
                - corner(-1.0, 1.0, &mut x)?
                + corner(-1.0, -1.0, &mut x)?)
                / (4.0 * h * h);
            hess[i * m + j] = v;
            hess[j * m + i] = v;
        }
    }
    let mut g = phi.hessian(u);
    g.iter_mut().for_each(|x| *x *= 0.5);
    let inv = kernel::inverse(m, &g).ok_or_else(|| Error::HessianNotPd(u.to_vec()))?;
    let tr: f64 = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| inv[i * m + j] * hess[j * m + i])
        .sum();
    let s = -0.5 * tr;
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::FiniteDifference(format!("non-finite curvature at {u:?}")))
    }
}

/// Level-`k` twist potential `psi(u) = log B(u + v/2) - log B(u) + c`,
/// normalized so that the mean of `e^psi` against the volume form is
/// `N_k / (k^m Vol P)`.
#[derive(Clone, Debug)]
pub struct PsiFunction {
    h: HermitianWeights,
    v: Vec<f64>,
    constant: f64,
}

pub fn psi_function(h: &HermitianWeights, v: &[f64], grid: &QuadratureGrid) -> Result<PsiFunction> {
    let m = h.dim();
    if v.len() != m || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NanInput);
    }
    let n = h.len();
    let pts = h.points();
    let logw = h.logw();
    let acc = grid.reduce(
        2,
        || (Scratch::new(n, m), vec![0.0; n], vec![0.0; m]),
        |u, w, acc, (s, p, shifted)| {
            let lb = kernel::moments(pts, logw, u, s);
            for j in 0..m {
                shifted[j] = u[j] + 0.5 * v[j];
            }
            let lb2 = kernel::softmax(pts, logw, shifted, p);
            let wd = w * 2f64.powi(m as i32) * kernel::det(m, &s.cov);
            acc[0] += wd * (lb2 - lb).exp();
            acc[1] += wd;
        },
    );
    grid.check_volume(acc[1])?;
    let target = n as f64 / pts.scaled_volume();
    let constant = target.ln() - (acc[0] / acc[1]).ln();
    Ok(PsiFunction {
        h: h.clone(),
        v: v.to_vec(),
        constant,
    })
}

impl PsiFunction {
    pub fn eval(&self, u: &[f64]) -> f64 {
        let mut p = vec![0.0; self.h.len()];
        let shifted: Vec<f64> = u.iter().zip(&self.v).map(|(a, b)| a + 0.5 * b).collect();
        let pts = self.h.points();
        kernel::softmax(pts, self.h.logw(), &shifted, &mut p)
            - kernel::softmax(pts, self.h.logw(), u, &mut p)
            + self.constant
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }
}
