//! The twisted fixed-point iteration `H -> SL(e^{lambda(v)} hilb(H))`, its
//! moment-map residual, and gauge-invariant comparisons of fixed points.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::polytope::{lattice_points, Polytope};
use crate::quantization::{
    grid_for, hilb_from_mass, kernel, mass_pass, GridSpec, HermitianWeights, MassPass, QuadratureGrid,
    RadiusPolicy,
};
use crate::weights::{
    f_character_max, optimal_weight_from, quantized_field, weight_vector, SectionMass, TorusElement,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Plain,
    FixedSigma,
    AutoSigma,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::FixedSigma => "fixed-sigma",
            Mode::AutoSigma => "auto-sigma",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "plain" => Ok(Mode::Plain),
            "fixed-sigma" => Ok(Mode::FixedSigma),
            "auto-sigma" => Ok(Mode::AutoSigma),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

/// Starting form when none is supplied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Log-weights i.i.d. uniform in `[-1, 1]` from the configured seed.
    Random,
    /// Lattice-distance log-gamma weights; smooth, so the first grids are cheap.
    Canonical,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub mode: Mode,
    pub tol: f64,
    pub max_iter: usize,
    pub grid: GridSpec,
    /// In auto-sigma mode the twist is re-optimized every this many steps.
    pub weight_update_period: usize,
    /// The twist for fixed-sigma mode.
    pub sigma: Option<Vec<f64>>,
    pub seed: u64,
    pub init: Init,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: Mode::Plain,
            tol: 1e-10,
            max_iter: 1000,
            grid: GridSpec::default(),
            weight_update_period: 1,
            sigma: None,
            seed: 0,
            init: Init::Random,
        }
    }
}

impl SolverConfig {
    pub fn new(mode: Mode, tol: f64, max_iter: usize) -> Self {
        SolverConfig {
            mode,
            tol,
            max_iter,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 || self.weight_update_period == 0 {
            return Err(Error::Config("max_iter and weight_update_period must be at least 1".into()));
        }
        if self.mode == Mode::FixedSigma {
            match &self.sigma {
                Some(s) if s.len() == dim && s.iter().all(|x| x.is_finite()) => {}
                Some(s) => {
                    return Err(Error::Config(format!("sigma has {} entries, polytope dimension {dim}", s.len())))
                }
                None => return Err(Error::Config("fixed-sigma mode needs --sigma".into())),
            }
        }
        Ok(())
    }
}

const RADIUS_PERIOD: usize = 10;

/// One line of the run log.
#[derive(Clone, Debug)]
pub struct LogRow {
    pub iter: usize,
    pub residual: f64,
    pub v: Vec<f64>,
    pub sup_twisted_bergman: f64,
    pub inf_twisted_bergman: f64,
}

#[derive(Clone, Debug)]
pub struct IterationState {
    /// SL-normalized current form.
    pub h: HermitianWeights,
    pub v: TorusElement,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub mode: Mode,
    pub seed: u64,
    pub log: Vec<LogRow>,
    /// `max_j |F^v(e_j)|` against the masses of the final form.
    pub f_max: f64,
    /// Twisted Bergman function extrema over the full final grid.
    pub twisted_bergman: (f64, f64),
}

impl IterationState {
    pub fn residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::INFINITY)
    }

    pub fn k(&self) -> u32 {
        self.h.k()
    }

    /// `sup / inf - 1` of the twisted Bergman function.
    pub fn twisted_bergman_spread(&self) -> f64 {
        self.twisted_bergman.0 / self.twisted_bergman.1 - 1.0
    }

    pub fn quantized_field(&self) -> TorusElement {
        quantized_field(self.k(), &self.v)
    }

    pub fn log_csv(&self) -> String {
        let m = self.v.dim();
        let mut s = String::from("iter,residual");
        for j in 1..=m {
            let _ = write!(s, ",v_{j}");
        }
        s.push_str(",sup_twisted_bergman,inf_twisted_bergman\n");
        for r in &self.log {
            let _ = write!(s, "{},{:e}", r.iter, r.residual);
            for x in &r.v {
                let _ = write!(s, ",{x:e}");
            }
            let _ = writeln!(s, ",{:e},{:e}", r.sup_twisted_bergman, r.inf_twisted_bergman);
        }
        s
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "k": self.k(),
            "mode": self.mode.name(),
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual(),
            "v": self.v.as_slice(),
            "kv": self.quantized_field().as_slice(),
        })
    }
}

/// `d_alpha = e^{lambda_alpha(v)} hilb(H)_alpha / H_alpha`, up to a common
/// factor.
fn twisted_ratios(lambda: &[f64], pass: &MassPass) -> Vec<f64> {
    lambda.iter().zip(&pass.mass).map(|(l, x)| l.exp() * x).collect()
}

fn relative_spread(d: &[f64]) -> f64 {
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    d.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max) / mean
}

fn twisted_step(h: &HermitianWeights, lambda: &[f64], pass: &MassPass) -> HermitianWeights {
    hilb_from_mass(h, pass).map(|i, x| x + lambda[i]).sl_normalized()
}

/// One untwisted step `SL(hilb(H))`.
pub fn t_step(h: &HermitianWeights, grid: &QuadratureGrid) -> Result<HermitianWeights> {
    sigma_step(h, &TorusElement::zero(h.dim()), grid)
}

/// One twisted step `SL(e^{lambda(v)} hilb(H))`.
pub fn sigma_step(h: &HermitianWeights, v: &TorusElement, grid: &QuadratureGrid) -> Result<HermitianWeights> {
    let pass = mass_pass(h, grid)?;
    Ok(twisted_step(h, &weight_vector(v, h.points()), &pass))
}

/// Relative max-deviation of `e^{lambda(v)} hilb(H) / H` from its mean.
pub fn residual(h: &HermitianWeights, v: &TorusElement, grid: &QuadratureGrid) -> Result<f64> {
    let pass = mass_pass(h, grid)?;
    Ok(relative_spread(&twisted_ratios(&weight_vector(v, h.points()), &pass)))
}

/// `(sup, inf)` of the twisted Bergman function
/// `sum_alpha e^{-lambda_alpha} |s_alpha|^2` against the normalized form
/// `hilb(H)`, i.e. `sum_alpha p_alpha(u) / d_alpha`. Constant exactly at a
/// twisted fixed point.
pub fn twisted_bergman_extrema(
    h: &HermitianWeights,
    v: &TorusElement,
    grid: &QuadratureGrid,
    stride: usize,
) -> Result<(f64, f64)> {
    let pass = mass_pass(h, grid)?;
    Ok(extrema_from(h, &weight_vector(v, h.points()), &pass, grid, stride))
}

fn extrema_from(
    h: &HermitianWeights,
    lambda: &[f64],
    pass: &MassPass,
    grid: &QuadratureGrid,
    stride: usize,
) -> (f64, f64) {
    let d = twisted_ratios(lambda, pass);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let coeff: Vec<f64> = d.iter().map(|x| mean / x).collect();
    crate::quantization::mixture_extrema(h, &coeff, grid, stride)
}

/// Stride giving about 4096 samples and not dividing the row length, so the
/// samples spread over all rows and columns.
fn sample_stride(grid: &QuadratureGrid) -> usize {
    let mut s = (grid.len() / 4096).max(1) | 1;
    while s > 1 && grid.resolution() % s == 0 {
        s += 2;
    }
    s
}

/// Grid and mass pass for `h`, recentered at the previous center. Under the
/// automatic resolution policy a failed volume check doubles the resolution
/// (rough starting forms have sharper features), at most twice.
fn grid_and_pass(
    h: &HermitianWeights,
    spec: &GridSpec,
    start: Option<&[f64]>,
) -> Result<(QuadratureGrid, MassPass)> {
    let base = spec.resolution_for(h.dim(), h.k());
    let ladder: Vec<usize> = if spec.resolution.is_some() {
        vec![base]
    } else {
        vec![base, 2 * base, 4 * base]
    };
    let mut last = None;
    for res in ladder {
        let grid = grid_for(h, &spec.with_resolution(res), start)?;
        match mass_pass(h, &grid) {
            Ok(pass) => return Ok((grid, pass)),
            Err(e @ Error::GridValidation { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("nonempty ladder"))
}

pub fn initial_weights(p: &Polytope, k: u32, cfg: &SolverConfig) -> Result<HermitianWeights> {
    let pts = lattice_points(p, k)?;
    match cfg.init {
        Init::Random => Ok(HermitianWeights::random(pts, cfg.seed)),
        Init::Canonical => HermitianWeights::canonical(pts, p),
    }
}

pub fn solve(p: &Polytope, k: u32, cfg: &SolverConfig) -> Result<IterationState> {
    solve_from(initial_weights(p, k, cfg)?, cfg)
}

/// Iterates from `h0` until the residual drops below `cfg.tol` or
/// `cfg.max_iter` steps have run. Non-convergence is reported in the state,
/// not as an error.
pub fn solve_from(h0: HermitianWeights, cfg: &SolverConfig) -> Result<IterationState> {
    let m = h0.dim();
    cfg.validate(m)?;
    let pts = h0.points().clone();
    let mut v = match (cfg.mode, &cfg.sigma) {
        (Mode::FixedSigma, Some(s)) => TorusElement::new(s.clone())?,
        _ => TorusElement::zero(m),
    };
    let mut h = h0.sl_normalized();
    let mut center: Option<Vec<f64>> = None;
    let mut radius: Option<f64> = None;
    let mut residuals = Vec::new();
    let mut log = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        // The automatic radius is re-derived every RADIUS_PERIOD steps and
        // reused in between; each mass pass still checks the volume.
        let spec = match (cfg.grid.radius, radius) {
            (RadiusPolicy::Auto, Some(r)) if iterations % RADIUS_PERIOD != 0 => cfg.grid.with_radius(r),
            _ => cfg.grid,
        };
        let (grid, pass) = grid_and_pass(&h, &spec, center.as_deref())?;
        center = Some(grid.center().to_vec());
        radius = Some(grid.truncation_radius());
        if cfg.mode == Mode::AutoSigma && iterations % cfg.weight_update_period == 0 {
            let d = SectionMass::from_pass(&h, &pass);
            v = optimal_weight_from(&d, &v)?.v;
        }
        let lambda = weight_vector(&v, &pts);
        let r = relative_spread(&twisted_ratios(&lambda, &pass));
        let (sup, inf) = extrema_from(&h, &lambda, &pass, &grid, sample_stride(&grid));
        residuals.push(r);
        log.push(LogRow {
            iter: iterations,
            residual: r,
            v: v.as_slice().to_vec(),
            sup_twisted_bergman: sup,
            inf_twisted_bergman: inf,
        });
        let f_ok = cfg.mode != Mode::AutoSigma || {
            let d = SectionMass::from_pass(&h, &pass);
            f_character_max(&d, &v) < cfg.tol
        };
        if r < cfg.tol && f_ok {
            converged = true;
        }
        if converged || iterations >= cfg.max_iter || !r.is_finite() {
            let d = SectionMass::from_pass(&h, &pass);
            let f_max = f_character_max(&d, &v);
            let twisted_bergman = extrema_from(&h, &lambda, &pass, &grid, 1);
            return Ok(IterationState {
                h,
                v,
                residuals,
                iterations,
                converged,
                mode: cfg.mode,
                seed: cfg.seed,
                log,
                f_max,
                twisted_bergman,
            });
        }
        h = twisted_step(&h, &lambda, &pass);
        iterations += 1;
    }
}

/// True if the last `window` residuals are non-increasing.
pub fn eventually_monotone(residuals: &[f64], window: usize) -> bool {
    let tail = &residuals[residuals.len().saturating_sub(window)..];
    tail.windows(2).all(|w| w[1] <= w[0])
}

/// Sup-norm of the least-squares residual of `logw1 - logw2` against affine
/// functions `c + <alpha, delta>`: zero iff the forms agree up to torus
/// translation and scale.
pub fn gauge_compare(h1: &HermitianWeights, h2: &HermitianWeights) -> Result<f64> {
    if !h1.same_lattice(h2) {
        return Err(Error::LatticeMismatch("gauge_compare needs a common lattice".into()));
    }
    let m = h1.dim();
    let n = h1.len();
    let pts = h1.points();
    let a = DMatrix::from_fn(n, m + 1, |i, j| if j == 0 { 1.0 } else { pts.point(i)[j - 1] });
    let b = DVector::from_iterator(n, h1.logw().iter().zip(h2.logw()).map(|(x, y)| x - y));
    let fit = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok((b - a * fit).amax())
}

fn factor_index(h: &HermitianWeights, p1: &Polytope, p2: &Polytope) -> Result<(usize, usize, Vec<(usize, usize)>)> {
    let k = h.k();
    let (m1, m2) = (p1.dim(), p2.dim());
    if h.dim() != m1 + m2 {
        return Err(Error::NotProduct(format!(
            "dimension {} is not {m1} + {m2}",
            h.dim()
        )));
    }
    let l1 = lattice_points(p1, k)?;
    let l2 = lattice_points(p2, k)?;
    if l1.len() * l2.len() != h.len() {
        return Err(Error::NotProduct(format!(
            "{} lattice points, factors give {} x {}",
            h.len(),
            l1.len(),
            l2.len()
        )));
    }
    let index = h
        .points()
        .points()
        .iter()
        .map(|a| match (l1.index_of(&a[..m1]), l2.index_of(&a[m1..])) {
            (Some(i), Some(j)) => Ok((i, j)),
            _ => Err(Error::NotProduct(format!("{a:?} does not split"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((l1.len(), l2.len(), index))
}

/// Additive decomposition `logw(a1, a2) ~ f(a1) + g(a2)`. On a complete
/// two-way table the least-squares fit is row mean plus column mean minus
/// grand mean.
fn additive_fit(h: &HermitianWeights, n1: usize, n2: usize, index: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>, f64) {
    let mut row = vec![0.0; n1];
    let mut col = vec![0.0; n2];
    for (&(i, j), &w) in index.iter().zip(h.logw()) {
        row[i] += w / n2 as f64;
        col[j] += w / n1 as f64;
    }
    let grand = h.logw().iter().sum::<f64>() / h.len() as f64;
    (row, col, grand)
}

/// Sup-norm of the residual of the best additive fit `f(a1) + g(a2)`.
pub fn split_check(h: &HermitianWeights, p1: &Polytope, p2: &Polytope) -> Result<f64> {
    let (n1, n2, index) = factor_index(h, p1, p2)?;
    let (row, col, grand) = additive_fit(h, n1, n2, &index);
    Ok(index
        .iter()
        .zip(h.logw())
        .map(|(&(i, j), w)| (w - row[i] - col[j] + grand).abs())
        .fold(0.0, f64::max))
}

/// The two factors of the additive fit as forms on the factor lattices.
pub fn split_factors(
    h: &HermitianWeights,
    p1: &Polytope,
    p2: &Polytope,
) -> Result<(HermitianWeights, HermitianWeights)> {
    let (n1, n2, index) = factor_index(h, p1, p2)?;
    let (row, col, _) = additive_fit(h, n1, n2, &index);
    let k = h.k();
    Ok((
        HermitianWeights::new(lattice_points(p1, k)?, row)?.sl_normalized(),
        HermitianWeights::new(lattice_points(p2, k)?, col)?.sl_normalized(),
    ))
}

/// The tensor product form `logw(a1, a2) = logw1(a1) + logw2(a2)` on the
/// product polytope.
pub fn tensor_product(h1: &HermitianWeights, h2: &HermitianWeights, product: &Polytope) -> Result<HermitianWeights> {
    let k = h1.k();
    let pts = lattice_points(product, k)?;
    let m1 = h1.dim();
    let lookup1: BTreeMap<&[i64], f64> = h1.points().points().iter().map(Vec::as_slice).zip(h1.logw().iter().copied()).collect();
    let lookup2: BTreeMap<&[i64], f64> = h2.points().points().iter().map(Vec::as_slice).zip(h2.logw().iter().copied()).collect();
    let logw = pts
        .points()
        .iter()
        .map(|a| match (lookup1.get(&a[..m1]), lookup2.get(&a[m1..])) {
            (Some(x), Some(y)) => Ok(x + y),
            _ => Err(Error::NotProduct(format!("{a:?} does not split"))),
        })
        .collect::<Result<Vec<_>>>()?;
    HermitianWeights::new(pts, logw)
}

/// Profile of the level-one potential in moment coordinates: the Legendre
/// dual `u(x) = argmin_u (phi_k(u) - 2<x, u>)` sampled at the points `x` of
/// `P`, with `phi_k = (1/k) log B`. Differences of profiles across `k`
/// compare the metrics themselves.
pub fn moment_profile(h: &HermitianWeights, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = h.dim();
    let k = h.k() as f64;
    let mut s = kernel::Scratch::new(h.len(), m);
    xs.iter()
        .map(|x| {
            let target: Vec<f64> = x.iter().map(|t| t * k).collect();
            let mut u = vec![0.0; m];
            for _ in 0..200 {
                kernel::moments(h.points(), h.logw(), &u, &mut s);
                let g: Vec<f64> = s.moment.iter().zip(&target).map(|(a, b)| a - b).collect();
                if g.iter().map(|t| t.abs()).fold(0.0, f64::max) < 1e-12 * k {
                    break;
                }
                let hess: Vec<f64> = s.cov.iter().map(|c| 2.0 * c).collect();
                let inv = kernel::inverse(m, &hess).expect("positive covariance");
                let mut step: Vec<f64> = (0..m).map(|i| (0..m).map(|j| inv[i * m + j] * g[j]).sum()).collect();
                let len = step.iter().map(|t| t * t).sum::<f64>().sqrt();
                if len > 1.0 {
                    step.iter_mut().for_each(|t| *t /= len);
                }
                for (a, b) in u.iter_mut().zip(&step) {
                    *a -= b;
                }
            }
            u
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::fixtures::{cp1, cp1xcp1};
    use crate::quantization::{log_binomial, make_grid};

    fn binomial(k: u32) -> HermitianWeights {
        let pts = lattice_points(&cp1(), k).unwrap();
        HermitianWeights::from_fn(pts, |a| -log_binomial(k, a[0] as u32)).unwrap()
    }

    #[test]
    fn binomial_is_fixed_by_t_step() {
        let h = binomial(8).sl_normalized();
        let g = make_grid(&h, &GridSpec::default()).unwrap();
        let out = t_step(&h, &g).unwrap();
        for (a, b) in out.logw().iter().zip(h.logw()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(residual(&h, &TorusElement::zero(1), &g).unwrap() < 1e-10);
    }

    #[test]
    fn perturbed_fixed_point_has_visible_residual() {
        let h = binomial(8).map(|i, x| if i == 3 { x + 0.1 } else { x });
        let g = make_grid(&h, &GridSpec::default()).unwrap();
        let r = residual(&h, &TorusElement::zero(1), &g).unwrap();
        assert!(r > 1e-3);
        let gc = make_grid(&h.scaled(4.0), &GridSpec::default()).unwrap();
        let rc = residual(&h.scaled(4.0), &TorusElement::zero(1), &gc).unwrap();
        assert!((r - rc).abs() < 1e-9);
    }

    #[test]
    fn sigma_step_at_zero_is_t_step() {
        let h = HermitianWeights::random(lattice_points(&cp1(), 5).unwrap(), 2);
        let g = make_grid(&h, &GridSpec::default()).unwrap();
        assert_eq!(sigma_step(&h, &TorusElement::zero(1), &g).unwrap(), t_step(&h, &g).unwrap());
        let a = t_step(&h, &g).unwrap();
        let gs = make_grid(&h.scaled(2.5), &GridSpec::default()).unwrap();
        let b = t_step(&h.scaled(2.5), &gs).unwrap();
        for (x, y) in a.logw().iter().zip(b.logw()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn gauge_compare_ignores_affine_shifts() {
        let h = HermitianWeights::random(lattice_points(&cp1xcp1(), 3).unwrap(), 4);
        assert!(gauge_compare(&h, &h).unwrap() < 1e-14);
        let shifted = h.gauge_shift(&[0.7, -1.3], 2.0);
        assert!(gauge_compare(&h, &shifted).unwrap() < 1e-12);
        let bent = h.map(|i, x| x + 0.01 * (i * i) as f64);
        assert!(gauge_compare(&h, &bent).unwrap() > 1e-3);
    }

    #[test]
    fn split_check_on_tensor_products() {
        let sq = cp1xcp1();
        let a = binomial(4);
        let b = HermitianWeights::random(lattice_points(&cp1(), 4).unwrap(), 1);
        let t = tensor_product(&a, &b, &sq).unwrap();
        assert!(split_check(&t, &cp1(), &cp1()).unwrap() < 1e-12);
        let (fa, fb) = split_factors(&t, &cp1(), &cp1()).unwrap();
        assert!(gauge_compare(&fa, &a).unwrap() < 1e-12);
        assert!(gauge_compare(&fb, &b).unwrap() < 1e-12);
        let coupled = HermitianWeights::from_fn(lattice_points(&sq, 4).unwrap(), |a| (a[0] * a[1]) as f64).unwrap();
        assert!(split_check(&coupled, &cp1(), &cp1()).unwrap() > 0.1);
        assert!(matches!(split_check(&a, &cp1(), &cp1()), Err(Error::NotProduct(_))));
    }

    #[test]
    fn plain_solve_recovers_binomial() {
        let cfg = SolverConfig::new(Mode::Plain, 1e-10, 200);
        let st = solve(&cp1(), 8, &cfg).unwrap();
        assert!(st.converged, "residual {}", st.residual());
        assert!(gauge_compare(&st.h, &binomial(8)).unwrap() < 1e-8);
        assert!(eventually_monotone(&st.residuals, 50));
        assert!(st.twisted_bergman_spread() < 1e-8);
    }

    #[test]
    fn fixed_sigma_needs_sigma() {
        let cfg = SolverConfig::new(Mode::FixedSigma, 1e-8, 10);
        assert!(matches!(solve(&cp1(), 3, &cfg), Err(Error::Config(_))));
        assert_eq!("auto_sigma".parse::<Mode>().unwrap(), Mode::AutoSigma);
    }

    #[test]
    fn run_log_has_declared_columns() {
        let mut cfg = SolverConfig::new(Mode::AutoSigma, 1e-6, 3);
        cfg.seed = 5;
        let st = solve(&cp1(), 4, &cfg).unwrap();
        let csv = st.log_csv();
        assert!(csv.starts_with("iter,residual,v_1,sup_twisted_bergman,inf_twisted_bergman\n0,"));
        assert_eq!(st.summary()["mode"], "auto-sigma");
    }
}
