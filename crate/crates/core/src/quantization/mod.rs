//! The maps `Hilb_k` and `FS_k` on torus-invariant data.
//!
//! A diagonal form `H` gives the level-`k` potential `log B_H(u)` with
//! `B_H(u) = sum_alpha exp(2<alpha,u> - logw_alpha)`. Writing `p_alpha(u)`
//! for the softmax of those exponents, the moment map is `E_p[alpha]` and the
//! metric is `2 Cov_p(alpha)`. The volume form `det(2 Cov) du` pushes forward
//! to Lebesgue measure on `kP`.

mod grid;
mod hermitian;
pub mod kernel;
mod potential;

pub use grid::{default_resolution, rel_tol_quad, GridSpec, LevelPotential, QuadratureGrid, RadiusPolicy};
pub use hermitian::HermitianWeights;
pub use potential::{
    bergman_function, fixtures, fs_potential, psi_function, scalar_curvature, BergmanFunction,
    PotentialFunction, PsiFunction,
};

use crate::error::{Error, Result};
use kernel::{weighted_stats, FusedRow, RowSweep, Scratch};

impl LevelPotential for HermitianWeights {
    fn dim(&self) -> usize {
        HermitianWeights::dim(self)
    }

    fn eval(&self, u: &[f64], moment: &mut [f64], metric: &mut [f64]) -> f64 {
        let mut s = Scratch::new(self.len(), self.dim());
        let log_b = kernel::moments(self.points(), self.logw(), u, &mut s);
        moment.copy_from_slice(&s.moment);
        for (g, c) in metric.iter_mut().zip(&s.cov) {
            *g = 2.0 * c;
        }
        log_b
    }
}

fn check_point(u: &[f64], m: usize) -> Result<()> {
    if u.len() != m || u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NanInput);
    }
    Ok(())
}

/// `log B_H(u)` by log-sum-exp.
pub fn log_bergman_density(h: &HermitianWeights, u: &[f64]) -> Result<f64> {
    check_point(u, h.dim())?;
    let mut p = vec![0.0; h.len()];
    Ok(kernel::softmax(h.points(), h.logw(), u, &mut p))
}

pub fn bergman_density(h: &HermitianWeights, u: &[f64]) -> Result<f64> {
    log_bergman_density(h, u).map(f64::exp)
}

/// `(E_p[alpha], 2 Cov_p(alpha))` with the metric row-major.
pub fn moment_and_metric(h: &HermitianWeights, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_point(u, h.dim())?;
    let m = h.dim();
    let mut mo = vec![0.0; m];
    let mut me = vec![0.0; m * m];
    LevelPotential::eval(h, u, &mut mo, &mut me);
    Ok((mo, me))
}

/// Centered, tail-checked and volume-validated grid for `h`. Without an
/// explicit resolution, rough forms climb a ladder of finer grids before the
/// volume check is allowed to fail.
pub fn make_grid(h: &HermitianWeights, spec: &GridSpec) -> Result<QuadratureGrid> {
    let first = QuadratureGrid::build(h, h.points(), spec, None)?;
    if spec.resolution.is_some() {
        return first.validate(h);
    }
    let base = first.resolution();
    let mut out = first.validate(h);
    for factor in [3, 4, 6] {
        match out {
            Err(Error::GridValidation { .. }) => {
                let finer = spec.with_resolution(base * factor / 2);
                out = QuadratureGrid::build(h, h.points(), &finer, None)?.validate(h);
            }
            _ => break,
        }
    }
    out
}

/// Grid for `h` without the separate validation pass; the integrals in this
/// module validate the volume on the fly.
pub fn grid_for(h: &HermitianWeights, spec: &GridSpec, start: Option<&[f64]>) -> Result<QuadratureGrid> {
    QuadratureGrid::build(h, h.points(), spec, start)
}

/// Per-section integrals `int p_alpha det(2 Cov) du` and their total.
#[derive(Clone, Debug)]
pub struct MassPass {
    pub mass: Vec<f64>,
    pub total: f64,
}

pub fn mass_pass(h: &HermitianWeights, grid: &QuadratureGrid) -> Result<MassPass> {
    if !grid.matches(h.points()) {
        return Err(Error::LatticeMismatch(format!(
            "grid built for k={}, weights at k={}",
            grid.k(),
            h.k()
        )));
    }
    let n = h.len();
    let m = h.dim();
    let pts = h.points();
    let logw = h.logw();
    let h = grid.step();
    let r = grid.resolution();
    let mut acc = match m {
        1 => grid.reduce_rows(n + 1, || FusedRow::<1>::new(pts, logw, h), |u0, w, acc, row| row.run(u0, h, w, acc)),
        2 => grid.reduce_rows(n + 1, || FusedRow::<2>::new(pts, logw, h), |u0, w, acc, row| row.run(u0, h, w, acc)),
        _ => {
            let scale = 2f64.powi(m as i32);
            grid.reduce_rows(
                n + 1,
                || (RowSweep::new(pts, logw, h), vec![0.0; m], vec![0.0; m * m]),
                |u0, w, acc, (sweep, moment, cov)| {
                    sweep.run(u0, h, r, |t, node, axes| {
                        weighted_stats(node.q, node.sum, axes, moment, cov);
                        let wd = w[t] * scale * kernel::det(m, cov);
                        let c = wd / node.sum;
                        for (a, q) in acc.iter_mut().zip(node.q) {
                            *a += c * q;
                        }
                        acc[n] += wd;
                    });
                },
            )
        }
    };
    let total = acc.pop().unwrap();
    grid.check_volume(total)?;
    if acc.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::GridValidation {
            rel_err: f64::INFINITY,
            tol: grid.rel_tol(),
        });
    }
    Ok(MassPass { mass: acc, total })
}

/// `Hilb_k(FS_k(H))` on the diagonal:
/// `hilb_alpha = H_alpha * (N_k / (k^m Vol P)) * int p_alpha det(2 Cov) du`.
/// Not SL-normalized.
pub fn hilb(h: &HermitianWeights, grid: &QuadratureGrid) -> Result<HermitianWeights> {
    let pass = mass_pass(h, grid)?;
    Ok(hilb_from_mass(h, &pass))
}

pub fn hilb_from_mass(h: &HermitianWeights, pass: &MassPass) -> HermitianWeights {
    let scale = h.len() as f64 / h.points().scaled_volume();
    h.map(|i, x| x + (scale * pass.mass[i]).ln())
}

/// `(sup, inf)` over the grid of `u -> sum_alpha c_alpha p_alpha(u)`,
/// sampling every `stride`-th node.
pub fn mixture_extrema(
    h: &HermitianWeights,
    coeff: &[f64],
    grid: &QuadratureGrid,
    stride: usize,
) -> (f64, f64) {
    let n = h.len();
    let pts = h.points();
    let logw = h.logw();
    grid.extrema(
        stride,
        || vec![0.0; n],
        |u, p| {
            kernel::softmax(pts, logw, u, p);
            p.iter().zip(coeff).map(|(a, b)| a * b).sum()
        },
    )
}

/// `log C(k, j)` via log-gamma-free summation.
pub fn log_binomial(k: u32, j: u32) -> f64 {
    let j = j.min(k - j);
    (0..j).map(|i| ((k - i) as f64 / (i + 1) as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::fixtures::{cp1, cp2, f1};
    use crate::polytope::lattice_points;

    fn binomial(k: u32) -> HermitianWeights {
        let pts = lattice_points(&cp1(), k).unwrap();
        HermitianWeights::from_fn(pts, |a| -log_binomial(k, a[0] as u32)).unwrap()
    }

    #[test]
    fn binomial_density_closed_form() {
        for k in [1, 3, 8] {
            let h = binomial(k);
            for u in [-2.0, -0.3, 0.0, 0.7, 3.0] {
                let expect = k as f64 * (1.0 + (2.0 * u as f64).exp()).ln();
                assert!((log_bergman_density(&h, &[u]).unwrap() - expect).abs() < 1e-12);
            }
        }
        let h = HermitianWeights::identity(lattice_points(&cp1(), 1).unwrap());
        assert!((bergman_density(&h, &[0.5]).unwrap() - (1.0 + 1f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn nan_rejected() {
        assert!(matches!(log_bergman_density(&binomial(2), &[f64::NAN]), Err(Error::NanInput)));
    }

    #[test]
    fn binomial_moment_and_metric() {
        let k = 6;
        let h = binomial(k);
        for u in [-1.0f64, 0.2, 1.5] {
            let t = (2.0 * u).exp() / (1.0 + (2.0 * u).exp());
            let (mo, me) = moment_and_metric(&h, &[u]).unwrap();
            assert!((mo[0] - k as f64 * t).abs() < 1e-12);
            assert!((me[0] - 2.0 * k as f64 * t * (1.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_moment_vanishes() {
        let seg = crate::polytope::Polytope::from_json_str(
            r#"{"dim":1,"facets":[{"normal":[1],"offset":1},{"normal":[-1],"offset":1}]}"#,
        )
        .unwrap();
        let pts = lattice_points(&seg, 2).unwrap();
        let h = HermitianWeights::from_fn(pts, |a| 0.3 * (a[0] * a[0]) as f64).unwrap();
        let (mo, _) = moment_and_metric(&h, &[0.0]).unwrap();
        assert!(mo[0].abs() < 1e-15);
    }

    #[test]
    fn binomial_is_hilb_fixed_point() {
        for k in [2, 5, 8] {
            let h = binomial(k);
            let g = make_grid(&h, &GridSpec::default()).unwrap();
            let out = hilb(&h, &g).unwrap();
            for (a, b) in out.logw().iter().zip(h.logw()) {
                assert!((a - b).abs() < 1e-9, "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn hilb_scales_linearly() {
        let pts = lattice_points(&f1(), 2).unwrap();
        let h = HermitianWeights::canonical(pts, &f1()).unwrap().map(|i, x| x + 0.1 * (i % 3) as f64);
        let g = make_grid(&h, &GridSpec::default()).unwrap();
        let a = hilb(&h, &g).unwrap();
        let hc = h.scaled(3.0);
        let gc = make_grid(&hc, &GridSpec::default()).unwrap();
        let b = hilb(&hc, &gc).unwrap();
        for (x, y) in a.logw().iter().zip(b.logw()) {
            assert!((y - x - 3f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_identity() {
        let pts = lattice_points(&cp2(), 3).unwrap();
        let h = HermitianWeights::random(pts, 9);
        let g = make_grid(&h, &GridSpec::default()).unwrap();
        let out = hilb(&h, &g).unwrap();
        let tr: f64 = out.logw().iter().zip(h.logw()).map(|(a, b)| (a - b).exp()).sum();
        assert!((tr / h.len() as f64 - 1.0).abs() < 1e-8, "{tr}");
    }

    #[test]
    fn mismatched_grid_rejected() {
        let a = binomial(3);
        let b = binomial(4);
        let g = make_grid(&a, &GridSpec::default()).unwrap();
        assert!(matches!(hilb(&b, &g), Err(Error::LatticeMismatch(_))));
    }

    #[test]
    fn log_binomial_values() {
        assert!((log_binomial(8, 3) - 56f64.ln()).abs() < 1e-13);
        assert_eq!(log_binomial(5, 0), 0.0);
        assert!((log_binomial(5, 5)).abs() < 1e-15);
    }
}
