use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::polytope::{lattice_points, LatticePointSet, Polytope};

/// Torus-invariant Hermitian form on the sections of `L^k`, stored as the log
/// of its diagonal in the monomial basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianWeights {
    points: Arc<LatticePointSet>,
    logw: Vec<f64>,
}

impl HermitianWeights {
    pub fn new(points: Arc<LatticePointSet>, logw: Vec<f64>) -> Result<Self> {
        if logw.len() != points.len() {
            return Err(Error::LatticeMismatch(format!(
                "{} weights for {} lattice points",
                logw.len(),
                points.len()
            )));
        }
        if logw.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidWeights("non-finite log-weight".into()));
        }
        Ok(HermitianWeights { points, logw })
    }

    pub fn from_fn(points: Arc<LatticePointSet>, f: impl Fn(&[i64]) -> f64) -> Result<Self> {
        let logw = points.points().iter().map(|a| f(a)).collect();
        HermitianWeights::new(points, logw)
    }

    pub fn identity(points: Arc<LatticePointSet>) -> Self {
        let n = points.len();
        HermitianWeights {
            points,
            logw: vec![0.0; n],
        }
    }

    /// `logw_alpha = sum_i log Gamma(l_i(alpha) + 1)` with `l_i` the lattice
    /// distances to the facets of `kP`. Exact balanced weights for the
    /// projective line and plane; a smooth start for any polytope.
    pub fn canonical(points: Arc<LatticePointSet>, p: &Polytope) -> Result<Self> {
        if p.name() != points.polytope_name() || p.dim() != points.dim() {
            return Err(Error::LatticeMismatch("polytope does not match lattice".into()));
        }
        let k = points.k() as f64;
        let facets: Vec<(Vec<f64>, f64)> = p
            .facets()
            .iter()
            .map(|f| (f.normal.iter().map(|&x| x as f64).collect(), crate::polytope::rational::to_f64(&f.offset)))
            .collect();
        let logw = (0..points.len())
            .map(|i| {
                let a = points.point(i);
                facets
                    .iter()
                    .map(|(n, c)| {
                        let l: f64 = n.iter().zip(a).map(|(x, y)| x * y).sum::<f64>() + k * c;
                        libm::lgamma(l.max(0.0) + 1.0)
                    })
                    .sum()
            })
            .collect();
        Ok(HermitianWeights::new(points, logw)?.sl_normalized())
    }

    /// Log-weights i.i.d. uniform in `[-1, 1]`, SL-normalized.
    pub fn random(points: Arc<LatticePointSet>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logw = (0..points.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        HermitianWeights { points, logw }.sl_normalized()
    }

    pub fn k(&self) -> u32 {
        self.points.k()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn len(&self) -> usize {
        self.logw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logw.is_empty()
    }

    pub fn points(&self) -> &Arc<LatticePointSet> {
        &self.points
    }

    pub fn logw(&self) -> &[f64] {
        &self.logw
    }

    /// `mean(logw) = 0`, i.e. `det H = 1`.
    pub fn sl_normalized(&self) -> Self {
        let mean = self.logw.iter().sum::<f64>() / self.logw.len() as f64;
        HermitianWeights {
            points: self.points.clone(),
            logw: self.logw.iter().map(|x| x - mean).collect(),
        }
    }

    /// The form `cH`.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c > 0.0);
        let l = c.ln();
        self.map(|_, x| x + l)
    }

    /// Multiplies `H_alpha` by `exp(<alpha, delta> + c)`: the torus-and-scale gauge.
    pub fn gauge_shift(&self, delta: &[f64], c: f64) -> Self {
        let pts = self.points.clone();
        self.map(|i, x| x + c + pts.point(i).iter().zip(delta).map(|(a, d)| a * d).sum::<f64>())
    }

    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        HermitianWeights {
            points: self.points.clone(),
            logw: self.logw.iter().enumerate().map(|(i, &x)| f(i, x)).collect(),
        }
    }

    pub fn same_lattice(&self, other: &HermitianWeights) -> bool {
        Arc::ptr_eq(&self.points, &other.points) || *self.points == *other.points
    }

    pub fn to_csv(&self) -> String {
        let m = self.dim();
        let mut s = format!("# k={},polytope={}\n", self.k(), self.points.polytope_name());
        for j in 1..=m {
            let _ = write!(s, "alpha_{j},");
        }
        s.push_str("logw\n");
        for (a, w) in self.points.points().iter().zip(&self.logw) {
            for x in a {
                let _ = write!(s, "{x},");
            }
            let _ = writeln!(s, "{w:?}");
        }
        s
    }

    /// Parses [`to_csv`](Self::to_csv) output against the lattice of `p`.
    pub fn from_csv(text: &str, p: &Polytope) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header_err = |msg: &str| Error::Parse(format!("line 1: {msg}"));
        let (_, first) = lines.next().ok_or_else(|| header_err("empty file"))?;
        let k = first
            .trim_start_matches('#')
            .split(',')
            .find_map(|kv| kv.trim().strip_prefix("k="))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| header_err("missing k=..."))?;
        let points = lattice_points(p, k)?;
        lines.next();
        let m = p.dim();
        let mut logw = vec![f64::NAN; points.len()];
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Parse(format!("line {}: malformed row `{line}`", ln + 1));
            if cols.len() != m + 1 {
                return Err(bad());
            }
            let alpha: Vec<i64> = cols[..m]
                .iter()
                .map(|c| c.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            let w: f64 = cols[m].parse().map_err(|_| bad())?;
            let i = points.index_of(&alpha).ok_or_else(|| {
                Error::LatticeMismatch(format!("line {}: {alpha:?} not in kP", ln + 1))
            })?;
            logw[i] = w;
        }
        if logw.iter().any(|x| x.is_nan()) {
            return Err(Error::LatticeMismatch("missing lattice points".into()));
        }
        HermitianWeights::new(points, logw)
    }
}
