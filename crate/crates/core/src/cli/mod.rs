//! Command-line experiment runner. Each subcommand is a thin shell around a
//! library function in this module, so the tables it prints can also be
//! produced (and checked) from tests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::polytope::rational::{q, to_f64, Q};
use crate::polytope::{extremal_affine, fixtures, lattice_points, Polytope};
use crate::quantization::{
    bergman_function, fixtures as potentials, make_grid, psi_function, scalar_curvature, GridSpec,
    PotentialFunction, RadiusPolicy,
};
use crate::solver::{solve, Init, IterationState, Mode, SolverConfig};
use crate::weights::{weight_report_csv, SectionMass, WeightRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "toric-balanced", version, about = "Balanced and sigma-balanced metrics on toric manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lattice-point counts of kP against the two leading Ehrhart terms.
    Lattice(Opts),
    /// Run the (twisted) fixed-point iteration for each k.
    Solve(Opts),
    /// Optimal weights across k and the quantized field k v_k.
    Weights(Opts),
    /// Bergman function expansion against half the scalar curvature.
    BergmanFit(Opts),
    /// Second coefficient of the twist potential expansion.
    B1Check(Opts),
}

/// Options shared by all subcommands. Every field can also come from the
/// JSON file given by `--config`; flags win.
#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Opts {
    /// Polytope JSON file, or a bundled name: cp1, cp2, f1, cp1xcp1.
    #[arg(long)]
    pub polytope: Option<String>,
    /// INT, A..B or A..B..STEP (inclusive).
    #[arg(long)]
    pub k: Option<String>,
    /// plain | fixed-sigma | auto-sigma
    #[arg(long)]
    pub mode: Option<String>,
    /// Twist for fixed-sigma mode: v1,...,vm
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub grid_res: Option<usize>,
    /// FLOAT or auto
    #[arg(long)]
    pub grid_radius: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// random | canonical
    #[arg(long)]
    pub init: Option<String>,
    /// bergman-fit background: round-cp1 | perturbed-cp1 | round-cp2
    #[arg(long)]
    pub potential: Option<String>,
    /// Perturbation size for perturbed-cp1.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Re-optimize the twist every this many steps (auto-sigma).
    #[arg(long)]
    pub weight_update_period: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Opts {
    /// Fills unset fields from the `--config` file.
    pub fn merged(mut self) -> Result<Opts> {
        let Some(path) = self.config.take() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let file: Opts = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
        })?;
        macro_rules! fill {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = file.$f; } )* };
        }
        fill!(polytope, k, mode, sigma, tol, max_iter, grid_res, grid_radius, seed, threads, out, init, potential, eps, weight_update_period);
        Ok(self)
    }

    pub fn polytope(&self) -> Result<Polytope> {
        let name = self
            .polytope
            .as_deref()
            .ok_or_else(|| Error::Config("--polytope is required".into()))?;
        load_polytope(name)
    }

    pub fn ks(&self, default: &str) -> Result<Vec<u32>> {
        parse_k_range(self.k.as_deref().unwrap_or(default))
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let radius = match self.grid_radius.as_deref() {
            None | Some("auto") => RadiusPolicy::Auto,
            Some(s) => RadiusPolicy::Fixed(
                s.parse()
                    .map_err(|_| Error::Config(format!("--grid-radius: `{s}` is not a number or `auto`")))?,
            ),
        };
        Ok(GridSpec {
            resolution: self.grid_res,
            radius,
        })
    }

    pub fn solver(&self, default_mode: Mode) -> Result<SolverConfig> {
        let mode = match &self.mode {
            Some(s) => s.parse()?,
            None => default_mode,
        };
        let sigma = self
            .sigma
            .as_deref()
            .map(|s| {
                s.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("--sigma: `{x}` is not a number")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let init = match self.init.as_deref() {
            None | Some("random") => Init::Random,
            Some("canonical") => Init::Canonical,
            Some(s) => return Err(Error::Config(format!("unknown init `{s}`"))),
        };
        let defaults = SolverConfig::default();
        Ok(SolverConfig {
            mode,
            tol: self.tol.unwrap_or(defaults.tol),
            max_iter: self.max_iter.unwrap_or(defaults.max_iter),
            grid: self.grid()?,
            weight_update_period: self.weight_update_period.unwrap_or(1),
            sigma,
            seed: self.seed.unwrap_or(0),
            init,
        })
    }
}

/// A JSON file, or the name of a bundled fixture when no such file exists.
pub fn load_polytope(name: &str) -> Result<Polytope> {
    let path = Path::new(name);
    if path.exists() {
        return Polytope::load(path);
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name);
    match stem {
        "cp1" => Ok(fixtures::cp1()),
        "cp2" => Ok(fixtures::cp2()),
        "f1" => Ok(fixtures::f1()),
        "cp1xcp1" => Ok(fixtures::cp1xcp1()),
        _ => Err(Error::Config(format!("polytope file `{name}` not found"))),
    }
}

/// `8`, `4..12` or `4..12..2`; inclusive, increasing, positive.
pub fn parse_k_range(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Config(format!("--k: `{s}` is not INT, A..B or A..B..STEP"));
    let parts: Vec<u32> = s
        .split("..")
        .map(|p| p.trim().parse::<u32>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let ks: Vec<u32> = match parts[..] {
        [k] => vec![k],
        [a, b] => (a..=b).collect(),
        [a, b, step] if step > 0 => (a..=b).step_by(step as usize).collect(),
        _ => return Err(bad()),
    };
    if ks.is_empty() || ks[0] == 0 {
        return Err(Error::Config(format!("--k: `{s}` gives no positive values")));
    }
    Ok(ks)
}

/// `(k, N_k, Vol k^m + Vol(bd)/2 k^{m-1}, gap)`.
pub fn lattice_table(p: &Polytope, ks: &[u32]) -> Result<Vec<(u32, usize, Q, Q)>> {
    let m = p.dim() as u32;
    let vol = p.volume();
    let half_bd = p.boundary_volume() / q(2);
    ks.iter()
        .map(|&k| {
            let n = lattice_points(p, k)?.len();
            let kq = q(k as i64);
            let pred = &vol * num_traits::pow(kq.clone(), m as usize) + &half_bd * num_traits::pow(kq, m as usize - 1);
            let gap = q(n as i64) - &pred;
            Ok((k, n, pred, gap))
        })
        .collect()
}

pub struct WeightsTable {
    pub rows: Vec<WeightRow>,
    /// `k v_k - k' v_k'` for consecutive rows (first row: empty).
    pub increments: Vec<Option<f64>>,
    pub theta_linear: Vec<f64>,
    /// `kv_j / theta_j` per row for the components where `theta_j != 0`.
    pub kappa: Vec<Vec<Option<f64>>>,
    pub states: Vec<IterationState>,
}

impl WeightsTable {
    /// Increments of `k v_k` are non-increasing (within `1e-8`).
    pub fn cauchy_decrease(&self) -> bool {
        let inc: Vec<f64> = self.increments.iter().flatten().copied().collect();
        inc.windows(2).all(|w| w[1] <= w[0] + 1e-8)
    }

    /// Relative spread `(max - min) / |mean|` of each defined kappa column
    /// over the last `n` rows.
    pub fn kappa_spread(&self, n: usize) -> Vec<Option<f64>> {
        let m = self.theta_linear.len();
        let tail = &self.kappa[self.kappa.len().saturating_sub(n)..];
        (0..m)
            .map(|j| {
                let col: Option<Vec<f64>> = tail.iter().map(|r| r[j]).collect();
                col.map(|c| {
                    let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let min = c.iter().copied().fold(f64::INFINITY, f64::min);
                    (max - min) / (c.iter().sum::<f64>() / c.len() as f64).abs()
                })
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let m = self.theta_linear.len();
        let mut s = String::from("k");
        for j in 1..=m {
            let _ = write!(s, ",kv_{j}");
        }
        s.push_str(",delta_kv");
        for j in 1..=m {
            let _ = write!(s, ",theta_{j}");
        }
        for j in 1..=m {
            let _ = write!(s, ",kappa_{j}");
        }
        s.push('\n');
        let opt = |x: Option<f64>| x.map_or_else(String::new, |x| format!("{x:e}"));
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(s, "{}", r.k);
            for x in &r.kv {
                let _ = write!(s, ",{x:e}");
            }
            let _ = write!(s, ",{}", opt(self.increments[i]));
            for x in &self.theta_linear {
                let _ = write!(s, ",{x:e}");
            }
            for x in &self.kappa[i] {
                let _ = write!(s, ",{}", opt(*x));
            }
            s.push('\n');
        }
        s
    }
}

/// Auto-sigma solves for each `k` and the resulting quantized fields.
pub fn weights_table(p: &Polytope, ks: &[u32], cfg: &SolverConfig) -> Result<WeightsTable> {
    if ks.len() < 3 {
        return Err(Error::Config("weights needs at least three values of k".into()));
    }
    let cfg = SolverConfig {
        mode: Mode::AutoSigma,
        ..cfg.clone()
    };
    let states = ks.iter().map(|&k| solve(p, k, &cfg)).collect::<Result<Vec<_>>>()?;
    weights_table_from(p, states, &cfg.grid)
}

/// The table for solves already at hand, in increasing `k`.
pub fn weights_table_from(p: &Polytope, states: Vec<IterationState>, spec: &GridSpec) -> Result<WeightsTable> {
    let theta_linear = extremal_affine(p)?.linear_f64();
    let mut rows = Vec::new();
    for st in &states {
        let grid = make_grid(&st.h, spec)?;
        let d = crate::weights::section_mass(&st.h, &grid)?;
        rows.push(WeightRow::new(&d, &st.v));
    }
    let increments = (0..rows.len())
        .map(|i| {
            (i > 0).then(|| {
                rows[i]
                    .kv
                    .iter()
                    .zip(&rows[i - 1].kv)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
        })
        .collect();
    let kappa = rows
        .iter()
        .map(|r| {
            r.kv.iter()
                .zip(&theta_linear)
                .map(|(kv, t)| (t.abs() > 1e-12).then(|| kv / t))
                .collect()
        })
        .collect();
    Ok(WeightsTable {
        rows,
        increments,
        theta_linear,
        kappa,
        states,
    })
}

/// The bundled background potentials.
pub fn named_potential(name: &str, eps: f64) -> Result<(PotentialFunction, Polytope)> {
    match name {
        "round-cp1" => Ok((potentials::round_cp1(), fixtures::cp1())),
        "perturbed-cp1" => Ok((potentials::perturbed_cp1(eps), fixtures::cp1())),
        "round-cp2" => Ok((potentials::round_cp2(), fixtures::cp2())),
        _ => Err(Error::Config(format!("unknown potential `{name}`"))),
    }
}

#[derive(Clone, Debug)]
pub struct FitRow {
    pub k: u32,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `max |(rho_k - k^m) / k^{m-1} - S/2|` over the probes.
    pub a1_err: f64,
}

/// Probe points within distance 4 of `c` on a regular lattice.
fn probes(c: &[f64]) -> Vec<Vec<f64>> {
    let m = c.len();
    let side: usize = if m == 1 { 65 } else { 17 };
    let step = 8.0 / (side - 1) as f64;
    let total = side.pow(m as u32);
    (0..total)
        .map(|mut idx| {
            let mut u = vec![0.0; m];
            for x in u.iter_mut().zip(c) {
                *x.0 = x.1 - 4.0 + (idx % side) as f64 * step;
                idx /= side;
            }
            u
        })
        .filter(|u| u.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= 16.0 + 1e-12)
        .collect()
}

pub fn bergman_fit(phi: &PotentialFunction, p: &Polytope, ks: &[u32], spec: &GridSpec) -> Result<Vec<FitRow>> {
    let m = p.dim() as i32;
    ks.iter()
        .map(|&k| {
            let pts = lattice_points(p, k)?;
            let b = bergman_function(phi, &pts, spec)?;
            let kf = k as f64;
            let mut row = FitRow {
                k,
                rho_min: f64::INFINITY,
                rho_max: f64::NEG_INFINITY,
                a1_err: 0.0,
            };
            for u in probes(b.grid().center()) {
                let rho = b.eval(&u);
                let a1 = (rho - kf.powi(m)) / kf.powi(m - 1);
                let s = scalar_curvature(phi, &u)?;
                row.rho_min = row.rho_min.min(rho);
                row.rho_max = row.rho_max.max(rho);
                row.a1_err = row.a1_err.max((a1 - 0.5 * s).abs());
            }
            Ok(row)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct B1Row {
    pub k: u32,
    pub max_err: f64,
    /// Computed from the exact closed form (constant extremal function).
    pub exact: bool,
    pub v: Vec<f64>,
}

/// `max_u |k (e^{psi_k} - 1) - theta_ex(moment/k) / 2|` for each `k`. When
/// `theta_ex` is constant the optimal twist vanishes, `psi_k` is the constant
/// `log(N_k / (k^m Vol P))` and the value is computed in exact arithmetic.
pub fn b1_check(p: &Polytope, ks: &[u32], cfg: &SolverConfig) -> Result<Vec<B1Row>> {
    let theta = extremal_affine(p)?;
    let constant = theta.linear.iter().all(|x| x == &q(0));
    let m = p.dim();
    ks.iter()
        .map(|&k| {
            if constant {
                let n = q(lattice_points(p, k)?.len() as i64);
                let kq = q(k as i64);
                let ratio = n / (num_traits::pow(kq.clone(), m) * p.volume());
                let e = kq * (ratio - q(1)) - &theta.constant / q(2);
                return Ok(B1Row {
                    k,
                    max_err: to_f64(&e).abs(),
                    exact: true,
                    v: vec![0.0; m],
                });
            }
            let st = solve(p, k, cfg)?;
            if !st.converged && cfg.mode == Mode::AutoSigma {
                return Err(Error::Config(format!("solve at k={k} did not converge")));
            }
            b1_row(p, &st, &cfg.grid)
        })
        .collect()
}

/// The row for a twisted solve already at hand, maximized over grid nodes.
pub fn b1_row(p: &Polytope, st: &IterationState, spec: &GridSpec) -> Result<B1Row> {
    let theta = extremal_affine(p)?;
    let k = st.k();
    let grid = make_grid(&st.h, spec)?;
    let psi = psi_function(&st.h, st.v.as_slice(), &grid)?;
    let kf = k as f64;
    let mut max_err = 0.0f64;
    for i in 0..grid.len() {
        let u = grid.node(i);
        let (mo, _) = crate::quantization::moment_and_metric(&st.h, u)?;
        let x: Vec<f64> = mo.iter().map(|a| a / kf).collect();
        let e = kf * (psi.eval(u).exp() - 1.0) - 0.5 * theta.eval(&x);
        max_err = max_err.max(e.abs());
    }
    Ok(B1Row {
        k,
        max_err,
        exact: false,
        v: st.v.as_slice().to_vec(),
    })
}

fn write_out(dir: &Option<PathBuf>, name: &str, text: &str) -> Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}

fn cmd_lattice(o: &Opts) -> Result<i32> {
    let p = o.polytope()?;
    let mut s = String::from("k,N_k,prediction,gap\n");
    for (k, n, pred, gap) in lattice_table(&p, &o.ks("1..6")?)? {
        let _ = writeln!(s, "{k},{n},{pred},{gap}");
    }
    print!("{s}");
    write_out(&o.out, "lattice.csv", &s)?;
    Ok(EXIT_OK)
}

fn cmd_solve(o: &Opts) -> Result<i32> {
    let p = o.polytope()?;
    let cfg = o.solver(Mode::Plain)?;
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    let mut all = true;
    for k in o.ks("8")? {
        let st = solve(&p, k, &cfg)?;
        all &= st.converged;
        eprintln!(
            "k={k}: {} after {} iterations, residual {:.3e}",
            if st.converged { "converged" } else { "not converged" },
            st.iterations,
            st.residual()
        );
        write_out(&o.out, &format!("run_k{k}.csv"), &st.log_csv())?;
        write_out(&o.out, &format!("weights_k{k}.csv"), &st.h.to_csv())?;
        if cfg.mode == Mode::AutoSigma {
            let grid = make_grid(&st.h, &cfg.grid)?;
            let pass = crate::quantization::mass_pass(&st.h, &grid)?;
            rows.push(WeightRow::new(&SectionMass::from_pass(&st.h, &pass), &st.v));
        }
        summaries.push(st.summary());
    }
    let summary = serde_json::json!({
        "polytope": p.name(),
        "threads": rayon::current_num_threads(),
        "seed": cfg.seed,
        "solves": summaries,
    });
    let text = serde_json::to_string_pretty(&summary)?;
    println!("{text}");
    write_out(&o.out, "summary.json", &text)?;
    if !rows.is_empty() {
        write_out(&o.out, "weights.csv", &weight_report_csv(&rows))?;
    }
    Ok(if all { EXIT_OK } else { EXIT_NUMERICAL })
}

fn cmd_weights(o: &Opts) -> Result<i32> {
    let p = o.polytope()?;
    let mut cfg = o.solver(Mode::AutoSigma)?;
    cfg.mode = Mode::AutoSigma;
    let t = weights_table(&p, &o.ks("4..8..2")?, &cfg)?;
    let text = t.to_csv();
    print!("{text}");
    write_out(&o.out, "weights_table.csv", &text)?;
    write_out(&o.out, "weights.csv", &weight_report_csv(&t.rows))?;
    let converged = t.states.iter().all(|s| s.converged);
    let cauchy = t.cauchy_decrease();
    eprintln!("all converged: {converged}; increments decreasing: {cauchy}");
    Ok(if converged && cauchy { EXIT_OK } else { EXIT_NUMERICAL })
}

fn cmd_bergman_fit(o: &Opts) -> Result<i32> {
    let (phi, p) = named_potential(o.potential.as_deref().unwrap_or("round-cp1"), o.eps.unwrap_or(0.05))?;
    let rows = bergman_fit(&phi, &p, &o.ks("8..32..8")?, &o.grid()?)?;
    let mut s = String::from("k,rho_min,rho_max,a1_err,a1_ratio\n");
    for (i, r) in rows.iter().enumerate() {
        let ratio = if i > 0 { format!("{:.4}", r.a1_err / rows[i - 1].a1_err) } else { String::new() };
        let _ = writeln!(s, "{},{:.12},{:.12},{:e},{ratio}", r.k, r.rho_min, r.rho_max, r.a1_err);
    }
    print!("{s}");
    write_out(&o.out, "bergman_fit.csv", &s)?;
    Ok(EXIT_OK)
}

fn cmd_b1_check(o: &Opts) -> Result<i32> {
    let p = o.polytope()?;
    let ks = o.ks("8..12..4")?;
    if ks.len() < 2 {
        return Err(Error::Config("b1-check needs at least two values of k".into()));
    }
    let cfg = o.solver(Mode::AutoSigma)?;
    let rows = b1_check(&p, &ks, &cfg)?;
    let mut s = String::from("k,max_err,exact\n");
    for r in &rows {
        let _ = writeln!(s, "{},{:e},{}", r.k, r.max_err, r.exact);
    }
    print!("{s}");
    write_out(&o.out, "b1_check.csv", &s)?;
    let decreasing = rows.windows(2).all(|w| w[1].max_err <= w[0].max_err);
    Ok(if decreasing { EXIT_OK } else { EXIT_NUMERICAL })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (opts, f): (&Opts, fn(&Opts) -> Result<i32>) = match &cli.command {
        Command::Lattice(o) => (o, cmd_lattice),
        Command::Solve(o) => (o, cmd_solve),
        Command::Weights(o) => (o, cmd_weights),
        Command::BergmanFit(o) => (o, cmd_bergman_fit),
        Command::B1Check(o) => (o, cmd_b1_check),
    };
    let result = opts.clone().merged().and_then(|o| {
        if let Some(n) = o.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        f(&o)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse(_) | Error::Io(_) | Error::Json(_) => EXIT_CONFIG,
                Error::NonPrimitiveNormal { .. }
                | Error::EmptyOrUnbounded
                | Error::Unbounded { .. }
                | Error::NotFullDimensional
                | Error::RedundantFacet { .. }
                | Error::NonDelzant { .. }
                | Error::InvalidPower(_)
                | Error::Nyquist { .. } => EXIT_CONFIG,
                _ => EXIT_NUMERICAL,
            }
        }
    }
}
