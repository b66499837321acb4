//! Tensor trapezoidal quadrature in logarithmic coordinates `u` on the open
//! torus orbit. Integrands are smooth and decay exponentially, so the
//! trapezoid rule converges spectrally once the box captures the tail.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::polytope::LatticePointSet;

use super::kernel;

/// Nodes per reduction chunk. Fixed so partial sums are combined in the same
/// order whatever the thread count.
const CHUNK: usize = 1024;

/// Candidate half-widths tried by [`RadiusPolicy::Auto`].
const RADII: [f64; 12] = [
    8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 24.0, 28.0, 32.0, 40.0, 48.0,
];

/// Relative tail mass beyond the box accepted by the automatic radius.
const TAIL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadiusPolicy {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Points per axis; `None` picks [`default_resolution`].
    pub resolution: Option<usize>,
    pub radius: RadiusPolicy,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution: None,
            radius: RadiusPolicy::Auto,
        }
    }
}

impl GridSpec {
    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = Some(resolution);
        self
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = RadiusPolicy::Fixed(radius);
        self
    }

    pub fn resolution_for(&self, dim: usize, k: u32) -> usize {
        self.resolution.unwrap_or_else(|| default_resolution(dim, k))
    }
}

/// Sections concentrate on windows of width `~ k^{-1/2}` in `u`, so the
/// spacing shrinks like `k^{-1/2}`; calibrated for per-section masses
/// accurate to about `1e-10`.
pub fn default_resolution(dim: usize, k: u32) -> usize {
    let scale = (k.max(1) as f64).sqrt();
    match dim {
        1 => 1024.max((256.0 * scale) as usize),
        2 => (80.0 * scale).max(128.0).ceil() as usize / 8 * 8 + 8,
        _ => (24.0 * scale).max(48.0) as usize,
    }
}

/// Largest default node spacing in the plane.
const MAX_STEP_2D: f64 = 0.115;

/// Relative tolerance for `int det(metric) du = k^m Vol(P)`.
pub fn rel_tol_quad(dim: usize) -> f64 {
    if dim == 1 {
        1e-9
    } else {
        1e-7
    }
}

/// A convex level-`k` potential `Phi` on `R^m` whose gradient map
/// `u -> grad(Phi)/2` is a diffeomorphism onto the interior of `kP`.
pub trait LevelPotential: Sync {
    fn dim(&self) -> usize;
    /// Returns `Phi(u)`; fills `grad(Phi)/2` and `Hess(Phi)/2` (row-major).
    fn eval(&self, u: &[f64], moment: &mut [f64], metric: &mut [f64]) -> f64;
}

#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    dim: usize,
    resolution: usize,
    radius: f64,
    center: Vec<f64>,
    step: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    k: u32,
    polytope_name: String,
    target_volume: f64,
    measured_volume: Option<f64>,
}

impl QuadratureGrid {
    fn tensor(
        center: &[f64],
        radius: f64,
        resolution: usize,
        pts: &LatticePointSet,
    ) -> QuadratureGrid {
        let m = center.len();
        let step = 2.0 * radius / (resolution - 1) as f64;
        let total = resolution.pow(m as u32);
        let mut nodes = Vec::with_capacity(total * m);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; m];
        for _ in 0..total {
            let mut w = 1.0;
            for j in 0..m {
                nodes.push(center[j] - radius + idx[j] as f64 * step);
                let end = idx[j] == 0 || idx[j] == resolution - 1;
                w *= if end { 0.5 * step } else { step };
            }
            weights.push(w);
            for j in (0..m).rev() {
                idx[j] += 1;
                if idx[j] < resolution {
                    break;
                }
                idx[j] = 0;
            }
        }
        QuadratureGrid {
            dim: m,
            resolution,
            radius,
            center: center.to_vec(),
            step,
            nodes,
            weights,
            k: pts.k(),
            polytope_name: pts.polytope_name().to_string(),
            target_volume: pts.scaled_volume(),
            measured_volume: None,
        }
    }

    /// Centered, tail-checked grid for `pot`; no full validation pass.
    pub fn build<P: LevelPotential>(
        pot: &P,
        pts: &LatticePointSet,
        spec: &GridSpec,
        start: Option<&[f64]>,
    ) -> Result<QuadratureGrid> {
        let resolution = spec.resolution_for(pts.dim(), pts.k());
        if resolution < 32 {
            return Err(Error::Config(format!(
                "grid resolution {resolution} below the minimum of 32"
            )));
        }
        let center = center_of(pot, &pts.scaled_centroid(), start);
        let radius = match spec.radius {
            RadiusPolicy::Fixed(r) if r > 0.0 && r.is_finite() => r,
            RadiusPolicy::Fixed(r) => return Err(Error::Config(format!("invalid radius {r}"))),
            RadiusPolicy::Auto => auto_radius(pot, &center, resolution, pts.scaled_volume()),
        };
        // Low levels need wide boxes; the default then grows to keep the step.
        let resolution = match (spec.resolution, pts.dim()) {
            (None, 2) => resolution.max((2.0 * radius / MAX_STEP_2D).ceil() as usize + 1),
            _ => resolution,
        };
        Ok(QuadratureGrid::tensor(&center, radius, resolution, pts))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn truncation_radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `k^m Vol(P)`.
    pub fn target_volume(&self) -> f64 {
        self.target_volume
    }

    pub fn measured_volume(&self) -> Option<f64> {
        self.measured_volume
    }

    pub fn rel_tol(&self) -> f64 {
        rel_tol_quad(self.dim)
    }

    pub fn matches(&self, pts: &LatticePointSet) -> bool {
        self.k == pts.k() && self.dim == pts.dim() && self.polytope_name == pts.polytope_name()
    }

    /// Errors unless `total` reproduces `k^m Vol(P)` within the quadrature tolerance.
    pub fn check_volume(&self, total: f64) -> Result<()> {
        let rel_err = (total - self.target_volume).abs() / self.target_volume;
        if rel_err.is_finite() && rel_err <= self.rel_tol() {
            Ok(())
        } else {
            Err(Error::GridValidation {
                rel_err,
                tol: self.rel_tol(),
            })
        }
    }

    /// Runs the volume check for `pot` and records the measured total.
    pub fn validate<P: LevelPotential>(mut self, pot: &P) -> Result<QuadratureGrid> {
        let m = self.dim;
        let total = self.reduce(
            1,
            || (vec![0.0; m], vec![0.0; m * m]),
            |u, w, acc, (mo, me)| {
                pot.eval(u, mo, me);
                acc[0] += w * kernel::det(m, me);
            },
        )[0];
        self.check_volume(total)?;
        self.measured_volume = Some(total);
        Ok(self)
    }

    /// Deterministic parallel sum of `width` accumulators over all nodes.
    /// `f(u, weight, acc, state)` adds one node's contribution.
    pub fn reduce<S, I, F>(&self, width: usize, init: I, f: F) -> Vec<f64>
    where
        I: Fn() -> S + Sync,
        F: Fn(&[f64], f64, &mut [f64], &mut S) + Sync,
    {
        self.reduce_strided(1, width, init, f)
    }

    /// As [`reduce`](Self::reduce) over every `stride`-th node.
    pub fn reduce_strided<S, I, F>(&self, stride: usize, width: usize, init: I, f: F) -> Vec<f64>
    where
        I: Fn() -> S + Sync,
        F: Fn(&[f64], f64, &mut [f64], &mut S) + Sync,
    {
        let m = self.dim;
        let n = self.len();
        let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; width];
                let mut state = init();
                let lo = c * CHUNK;
                for i in (lo..(lo + CHUNK).min(n)).filter(|i| i % stride == 0) {
                    f(&self.nodes[i * m..(i + 1) * m], self.weights[i], &mut acc, &mut state);
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; width];
        for c in chunks {
            for (o, x) in out.iter_mut().zip(c) {
                *o += x;
            }
        }
        out
    }

    /// Deterministic parallel sum over grid rows (runs of nodes along the last
    /// axis). `f(first_node, count, weights, acc, state)` handles one row.
    pub fn reduce_rows<S, I, F>(&self, width: usize, init: I, f: F) -> Vec<f64>
    where
        I: Fn() -> S + Sync,
        F: Fn(&[f64], &[f64], &mut [f64], &mut S) + Sync,
    {
        let m = self.dim;
        let r = self.resolution;
        let chunks: Vec<Vec<f64>> = (0..self.len() / r)
            .into_par_iter()
            .map(|row| {
                let mut acc = vec![0.0; width];
                let mut state = init();
                let lo = row * r;
                f(&self.nodes[lo * m..(lo + 1) * m], &self.weights[lo..lo + r], &mut acc, &mut state);
                acc
            })
            .collect();
        let mut out = vec![0.0; width];
        for c in chunks {
            for (o, x) in out.iter_mut().zip(c) {
                *o += x;
            }
        }
        out
    }

    /// `(max, min)` of `f` over every `stride`-th node.
    pub fn extrema<S, I, F>(&self, stride: usize, init: I, f: F) -> (f64, f64)
    where
        I: Fn() -> S + Sync,
        F: Fn(&[f64], &mut S) -> f64 + Sync,
    {
        let m = self.dim;
        let n = self.len();
        (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut state = init();
                let lo = c * CHUNK;
                let mut hi = f64::NEG_INFINITY;
                let mut low = f64::INFINITY;
                for i in (lo..(lo + CHUNK).min(n)).filter(|i| i % stride == 0) {
                    let v = f(&self.nodes[i * m..(i + 1) * m], &mut state);
                    hi = hi.max(v);
                    low = low.min(v);
                }
                (hi, low)
            })
            .reduce(
                || (f64::NEG_INFINITY, f64::INFINITY),
                |a, b| (a.0.max(b.0), a.1.min(b.1)),
            )
    }
}

/// Point where the moment equals the centroid of `kP`: minimizes the convex
/// function `Phi(u) - 2<c, u>`.
fn center_of<P: LevelPotential>(pot: &P, target: &[f64], start: Option<&[f64]>) -> Vec<f64> {
    let m = pot.dim();
    let mut u = start.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
    let mut mo = vec![0.0; m];
    let mut me = vec![0.0; m * m];
    let obj = |u: &[f64], mo: &mut [f64], me: &mut [f64]| {
        pot.eval(u, mo, me) - 2.0 * u.iter().zip(target).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut f = obj(&u, &mut mo, &mut me);
    for _ in 0..100 {
        let g: Vec<f64> = mo.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gn < 1e-11 * (1.0 + target.iter().map(|x| x.abs()).sum::<f64>()) {
            break;
        }
        let hess: Vec<f64> = me.iter().map(|x| 2.0 * x).collect();
        let dir = match kernel::inverse(m, &hess) {
            Some(inv) => (0..m)
                .map(|i| -(0..m).map(|j| inv[i * m + j] * g[j]).sum::<f64>())
                .collect::<Vec<_>>(),
            None => g.iter().map(|x| -x).collect(),
        };
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let ft = obj(&trial, &mut mo, &mut me);
            if ft <= f + 1e-4 * t * slope {
                u = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            obj(&u, &mut mo, &mut me);
            break;
        }
    }
    u
}

/// Smallest candidate radius whose estimated tail mass is below `TAIL_TOL`.
/// The volume density decays at least like `exp(-2t)` across each box face,
/// so the tail beyond a face is bounded by its face integral times `1/2`.
fn auto_radius<P: LevelPotential>(pot: &P, center: &[f64], resolution: usize, total: f64) -> f64 {
    let m = pot.dim();
    let mut mo = vec![0.0; m];
    let mut me = vec![0.0; m * m];
    let mut u = vec![0.0; m];
    for &r in &RADII {
        let step = 2.0 * r / (resolution - 1) as f64;
        let mut face = 0.0;
        for axis in 0..m {
            for side in [-1.0, 1.0] {
                // Walk the (m-1)-dimensional face on the same spacing.
                let count = resolution.pow(m as u32 - 1);
                for idx in 0..count {
                    let mut rem = idx;
                    for j in 0..m {
                        if j == axis {
                            u[j] = center[j] + side * r;
                        } else {
                            u[j] = center[j] - r + (rem % resolution) as f64 * step;
                            rem /= resolution;
                        }
                    }
                    pot.eval(&u, &mut mo, &mut me);
                    face += kernel::det(m, &me).max(0.0) * step.powi(m as i32 - 1);
                }
            }
        }
        if face < TAIL_TOL * total {
            return r;
        }
    }
    RADII[RADII.len() - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::fixtures::{cp1, cp1xcp1};
    use crate::polytope::lattice_points;
    use crate::quantization::HermitianWeights;

    fn binomial(k: u32) -> HermitianWeights {
        let pts = lattice_points(&cp1(), k).unwrap();
        HermitianWeights::from_fn(pts, |a| -crate::quantization::log_binomial(k, a[0] as u32))
            .unwrap()
    }

    #[test]
    fn cp1_volume_is_k() {
        let h = binomial(2);
        let g = crate::quantization::make_grid(&h, &GridSpec::default()).unwrap();
        assert!((g.measured_volume().unwrap() - 2.0).abs() < 1e-11);
    }

    #[test]
    fn square_volume_is_one() {
        let pts = lattice_points(&cp1xcp1(), 1).unwrap();
        let h = HermitianWeights::identity(pts);
        let g = crate::quantization::make_grid(&h, &GridSpec::default()).unwrap();
        assert!((g.measured_volume().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn doubling_resolution_is_stable() {
        let pts = lattice_points(&cp1(), 5).unwrap();
        let h = HermitianWeights::random(pts, 11);
        let a = crate::quantization::make_grid(&h, &GridSpec::default().with_resolution(512))
            .unwrap();
        let b = crate::quantization::make_grid(&h, &GridSpec::default().with_resolution(1024))
            .unwrap();
        let (va, vb) = (a.measured_volume().unwrap(), b.measured_volume().unwrap());
        assert!((va - vb).abs() < 1e-10, "{va} vs {vb}");
    }

    #[test]
    fn coarse_resolution_rejected() {
        let pts = lattice_points(&cp1(), 2).unwrap();
        let h = HermitianWeights::identity(pts);
        let spec = GridSpec::default().with_resolution(16);
        assert!(matches!(
            crate::quantization::make_grid(&h, &spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn too_small_radius_fails_validation() {
        let pts = lattice_points(&cp1(), 2).unwrap();
        let h = HermitianWeights::identity(pts);
        let spec = GridSpec::default().with_resolution(256).with_radius(1.0);
        assert!(matches!(
            crate::quantization::make_grid(&h, &spec),
            Err(Error::GridValidation { .. })
        ));
    }
}
