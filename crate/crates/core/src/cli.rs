//! `ynls` command line: path generation, irregularity reports, solves,
//! refinement studies and estimate checks. Every subcommand writes a
//! machine-readable artifact.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, fmt_f64};
use crate::paths::{make_constant_path, make_fbm_path, make_linear_path, make_modulated_path, SamplePath};
use crate::phi::{build_phi_table, default_a_grid, default_rho_grid, dyadic_pairs, estimate_irregularity, irregularity_norm};
use crate::resonance::{
    dyadic_block_ratio, estimate_ratio_eq21, sweep_mu, verify_counting_partition, Eq21Params, EstimateId, SlotBox,
};
use crate::solver::{
    default_lambda, holder_norm, plane_wave_exact, solve, Scheme, SolverConfig, Trajectory, DEFAULT_GAMMA,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::spectral::{hs_norm, random_state, SpectralState};
use crate::young::{required_mu_max, x_norm_estimate, YoungKernelConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Path specification inside an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    Linear {
        #[serde(rename = "M")]
        m: usize,
    },
    Constant {
        c: f64,
        #[serde(rename = "M")]
        m: usize,
    },
    Fbm {
        #[serde(rename = "H")]
        hurst: f64,
        #[serde(rename = "M")]
        m: usize,
        seed: u64,
    },
    Modulated {
        eps: f64,
        #[serde(rename = "M")]
        m: usize,
        profile: Vec<f64>,
    },
    File {
        file: PathBuf,
    },
}

/// Initial datum specification inside an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// `c δ_m` with `c = [re, im]`.
    PlaneWave { c: [f64; 2], m: Vec<i64> },
    /// Seeded random datum of regularity about `s`, multiplied by `scale`.
    Random {
        s: f64,
        seed: u64,
        #[serde(default = "one")]
        scale: f64,
    },
    File { file: PathBuf },
}

fn one() -> f64 {
    1.0
}

fn default_scheme() -> Scheme {
    Scheme::Picard
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

/// Everything a `solve` or `converge` run needs. Unset `gamma` comes from an
/// irregularity report when one is given, else [`DEFAULT_GAMMA`]; unset
/// `lambda` from [`default_lambda`]. Either `steps` (uniform partition) or
/// an explicit `partition` is required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub k: usize,
    #[serde(rename = "N")]
    pub n_max: usize,
    #[serde(default)]
    pub s: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub rho: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub partition: Option<Vec<f64>>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub allow_large: bool,
    #[serde(default)]
    pub path: Option<PathSpec>,
    #[serde(default)]
    pub init: Option<InitSpec>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub verbosity: u8,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Cross-validated solver configuration with `steps` overridden if given.
    pub fn solver_config(&self, gamma_hint: Option<f64>, steps: Option<usize>) -> Result<SolverConfig> {
        let gamma = self.gamma.or(gamma_hint).unwrap_or(DEFAULT_GAMMA);
        let lambda = match self.lambda {
            Some(l) => l,
            None => default_lambda(gamma)?,
        };
        let partition = match (steps.or(self.steps), &self.partition) {
            (Some(n), _) => crate::paths::uniform_grid(self.t_end, n).map_err(|e| Error::Config(e.to_string()))?,
            (None, Some(p)) => p.clone(),
            (None, None) => return Err(Error::Config("config needs either steps or partition".into())),
        };
        let cfg = SolverConfig {
            d: self.d,
            k: self.k,
            n_max: self.n_max,
            s: self.s,
            gamma,
            lambda,
            rho: self.rho,
            t_end: self.t_end,
            partition,
            scheme: self.scheme,
            tol: self.tol,
            max_iter: self.max_iter,
            allow_large: self.allow_large,
        };
        cfg.validate()?;
        crate::young::check_interaction_budget(cfg.d, cfg.k, cfg.n_max, cfg.allow_large)?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Linear,
    Constant,
    Fbm,
    Modulated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum WhichArg {
    Eq21,
    Eq26,
    Eq27,
    Counting,
}

#[derive(Debug, Parser)]
#[command(name = "ynls", about = "Young-integral lab for NLS with modulated dispersion", version)]
struct Cli {
    /// Worker threads (default: YNLS_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a driving path and write it as a `t,w` CSV.
    GenPath {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long = "T")]
        t_end: f64,
        #[arg(long = "M")]
        m: usize,
        #[arg(long = "H", default_value_t = 0.5)]
        hurst: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        c: f64,
        #[arg(long)]
        eps: Option<f64>,
        /// One-column CSV with header `m`.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid estimate of the (rho, gamma)-irregularity norm of a path.
    Irregularity {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        gamma: f64,
        /// Estimated from the norm trends when omitted.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 64.0)]
        amax: f64,
        #[arg(long, default_value_t = 768)]
        pairs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the Young equation and write states plus `report.json`.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Irregularity report supplying gamma when the config has none.
        #[arg(long)]
        irregularity: Option<PathBuf>,
        /// Also write the Φ table cache.
        #[arg(long)]
        save_table: bool,
    },
    /// Refinement study: final-time errors over halved meshes.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// CSV `mesh,error,order`; defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure LHS/RHS ratios of the multilinear estimates.
    VerifyEstimates {
        #[arg(long, value_enum)]
        which: WhichArg,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long = "N", default_value_t = 4)]
        n_max: usize,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 0.3)]
        s: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        sprime: f64,
        #[arg(long, default_value_t = 1)]
        q: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dyadic blocks `N_0,…,N_{2k+1}` for eq26/eq27.
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<usize>>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<i64>,
        /// eq26: sweep every attainable mu.
        #[arg(long)]
        sweep: bool,
        /// Permit (d, k) = (1, 1) for eq21.
        #[arg(long)]
        explore: bool,
        #[arg(long)]
        allow_large: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lower bound on the C^gamma norm of the kernel X over random data.
    Xnorm {
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long = "N", default_value_t = 4)]
        n_max: usize,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        #[arg(long, default_value_t = 4)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("YNLS_THREADS").ok().and_then(|v| v.trim().parse().ok()))
        .unwrap_or(0)
}

/// Runs one invocation; `argv[0]` is the program name. Returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(thread_count(cli.threads)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenPath { kind, t_end, m, hurst, seed, c, eps, profile, out } => {
            let path = match kind {
                KindArg::Linear => make_linear_path(t_end, m)?,
                KindArg::Constant => make_constant_path(c, t_end, m)?,
                KindArg::Fbm => make_fbm_path(hurst, t_end, m, seed)?,
                KindArg::Modulated => {
                    let eps = eps.ok_or_else(|| Error::Config("modulated paths need --eps".into()))?;
                    let file = profile.ok_or_else(|| Error::Config("modulated paths need --profile".into()))?;
                    let prof = io::read_profile_csv(fs::File::open(file)?)?;
                    make_modulated_path(&prof, eps, t_end, m)?
                }
            };
            let mut buf = Vec::new();
            io::write_path_csv(&path, &mut buf)?;
            write_output(out.as_deref(), &String::from_utf8_lossy(&buf))
        }
        Command::Irregularity { path, gamma, rho, amax, pairs, out } => {
            let p = io::read_path_csv(fs::File::open(path)?)?;
            if !(amax >= 1.0) || pairs == 0 {
                return Err(Error::Config("need --amax >= 1 and --pairs >= 1".into()));
            }
            let rho = match rho {
                Some(r) => r,
                None => {
                    let levels = 4.min(amax.log2().floor() as usize).max(1);
                    estimate_irregularity(&p, gamma, amax, levels, &default_rho_grid())?.rho_estimate
                }
            };
            let pair_list = dyadic_pairs(p.horizon(), 1.0 / (8.0 * amax), pairs);
            let report = irregularity_norm(&p, rho, gamma, &default_a_grid(amax), &pair_list)?;
            write_output(out.as_deref(), &to_json(&report)?)
        }
        Command::Solve { config, path, init, out, irregularity, save_table } => {
            run_solve(&config, path.as_deref(), init.as_deref(), out.as_deref(), irregularity.as_deref(), save_table)
        }
        Command::Converge { config, path, init, levels, out } => {
            run_converge(&config, path.as_deref(), init.as_deref(), levels, out.as_deref())
        }
        Command::VerifyEstimates {
            which,
            d,
            k,
            n_max,
            rho,
            s,
            sprime,
            q,
            trials,
            seed,
            blocks,
            mu,
            sweep,
            explore,
            allow_large,
            out,
        } => {
            let text = match which {
                WhichArg::Eq21 => {
                    let p = Eq21Params { d, k, rho, s, s_prime: sprime, q, n_max, trials, seed, explore, allow_large };
                    to_json(&estimate_ratio_eq21(&p)?)?
                }
                WhichArg::Eq26 | WhichArg::Eq27 => {
                    let blocks = blocks.ok_or_else(|| Error::Config("--blocks is required for dyadic estimates".into()))?;
                    if which == WhichArg::Eq26 && sweep {
                        to_json(&sweep_mu(&blocks, d, k, s, trials, seed)?)?
                    } else {
                        let id = if which == WhichArg::Eq26 { EstimateId::Eq26 } else { EstimateId::Eq27 };
                        to_json(&dyadic_block_ratio(id, &blocks, mu, d, k, s, trials, seed)?)?
                    }
                }
                WhichArg::Counting => {
                    let n = n_max as i64;
                    to_json(&verify_counting_partition(&SlotBox::cube(d, k, -n, n)?))?
                }
            };
            write_output(out.as_deref(), &text)
        }
        Command::Xnorm { path, d, k, n_max, gamma, s, steps, trials, seed, out } => {
            let p = io::read_path_csv(fs::File::open(path)?)?;
            let grid = crate::paths::uniform_grid(p.horizon(), steps)?;
            let table = build_phi_table(&p, required_mu_max(d, k, n_max) as i64, &grid)?;
            let kernel = YoungKernelConfig::new(d, k, n_max, &table, false)?;
            let estimate = x_norm_estimate(&kernel, gamma, s, trials, seed)?;
            let report = XNormReport { d, k, n_max, gamma, s, steps, trials, seed, x_norm_estimate: estimate };
            write_output(out.as_deref(), &to_json(&report)?)
        }
    }
}

#[derive(Debug, Serialize)]
struct XNormReport {
    d: usize,
    k: usize,
    #[serde(rename = "N")]
    n_max: usize,
    gamma: f64,
    s: f64,
    steps: usize,
    trials: usize,
    seed: u64,
    x_norm_estimate: f64,
}

/// Report written next to the states of a solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub d: usize,
    pub k: usize,
    #[serde(rename = "N")]
    pub n_max: usize,
    pub s: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub rho: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub steps: usize,
    pub mesh: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub hs_norms: Vec<f64>,
    pub holder_norm: f64,
    pub mass_drift: f64,
    pub warnings: Vec<String>,
}

struct Experiment {
    config: ExperimentConfig,
    base: PathBuf,
}

impl Experiment {
    fn load(file: &Path) -> Result<Self> {
        let text = fs::read_to_string(file)?;
        let config = ExperimentConfig::from_json(&text).map_err(|e| Error::Config(e.to_string()))?;
        let base = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn path(&self, flag: Option<&Path>) -> Result<SamplePath> {
        let c = &self.config;
        let path = match (flag, &c.path) {
            (Some(f), _) => io::read_path_csv(fs::File::open(f)?)?,
            (None, Some(spec)) => match spec {
                PathSpec::Linear { m } => make_linear_path(c.t_end, *m)?,
                PathSpec::Constant { c: v, m } => make_constant_path(*v, c.t_end, *m)?,
                PathSpec::Fbm { hurst, m, seed } => make_fbm_path(*hurst, c.t_end, *m, *seed)?,
                PathSpec::Modulated { eps, m, profile } => make_modulated_path(profile, *eps, c.t_end, *m)?,
                PathSpec::File { file } => io::read_path_csv(fs::File::open(self.resolve(file))?)?,
            },
            (None, None) => return Err(Error::Config("no path given (--path or config \"path\")".into())),
        };
        if path.horizon() < c.t_end * (1.0 - 1e-12) {
            return Err(Error::Config(format!("path horizon {} is shorter than T={}", path.horizon(), c.t_end)));
        }
        Ok(path)
    }

    fn init(&self, flag: Option<&Path>) -> Result<SpectralState> {
        let c = &self.config;
        let state = match (flag, &c.init) {
            (Some(f), _) => io::load_state(f)?,
            (None, Some(InitSpec::PlaneWave { c: z, m })) => {
                if m.len() != c.d {
                    return Err(Error::Config(format!("plane-wave mode {m:?} is not {}-dimensional", c.d)));
                }
                SpectralState::delta(c.d, c.n_max, m, Complex64::new(z[0], z[1]))
                    .map_err(|e| Error::Config(e.to_string()))?
            }
            (None, Some(InitSpec::Random { s, seed, scale })) => {
                random_state(c.d, c.n_max, *s, *seed).scaled(Complex64::new(*scale, 0.0))
            }
            (None, Some(InitSpec::File { file })) => io::load_state(&self.resolve(file))?,
            (None, None) => return Err(Error::Config("no initial datum given (--init or config \"init\")".into())),
        };
        if state.d() != c.d || state.n_max() != c.n_max {
            return Err(Error::Config(format!(
                "initial datum has (d={}, N={}) but the config says (d={}, N={})",
                state.d(),
                state.n_max(),
                c.d,
                c.n_max
            )));
        }
        Ok(state)
    }

    /// Closed-form solution when the datum is a single plane wave.
    fn exact_final(&self, flag: Option<&Path>, path: &SamplePath) -> Result<Option<SpectralState>> {
        let c = &self.config;
        match (flag, &c.init) {
            (None, Some(InitSpec::PlaneWave { c: z, m })) => {
                Ok(Some(plane_wave_exact(Complex64::new(z[0], z[1]), m, c.n_max, path, c.t_end, c.k)?))
            }
            _ => Ok(None),
        }
    }
}

#[derive(Serialize)]
struct Diagnostic {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<usize>,
}

fn diagnostic(e: &Error) -> Diagnostic {
    let message = e.to_string();
    match e {
        Error::NonConvergence { iterations, residual } => Diagnostic {
            error: "non_convergence",
            message,
            iterations: Some(*iterations),
            residual: Some(*residual),
            step: None,
        },
        Error::BlowUp { step, .. } => {
            Diagnostic { error: "blow_up", message, iterations: None, residual: None, step: Some(*step) }
        }
        _ => Diagnostic { error: "other", message, iterations: None, residual: None, step: None },
    }
}

fn run_solve(
    config: &Path,
    path_flag: Option<&Path>,
    init_flag: Option<&Path>,
    out_flag: Option<&Path>,
    irregularity: Option<&Path>,
    save_table: bool,
) -> Result<()> {
    let exp = Experiment::load(config)?;
    let gamma_hint = match irregularity {
        Some(f) => {
            let report: crate::phi::IrregularityReport = serde_json::from_str(&fs::read_to_string(f)?)?;
            Some(report.gamma)
        }
        None => None,
    };
    let cfg = exp.config.solver_config(gamma_hint, None)?;
    let warnings = cfg.warnings();
    for w in &warnings {
        log::warn!("{w}");
    }
    let path = exp.path(path_flag)?;
    let phi0 = exp.init(init_flag)?;
    let out = out_flag.map(Path::to_path_buf).or_else(|| exp.config.out.as_ref().map(|p| exp.resolve(p)));
    let table = build_phi_table(&path, required_mu_max(cfg.d, cfg.k, cfg.n_max) as i64, &cfg.partition)?;
    let traj = match solve(&cfg, &phi0, &table) {
        Ok(t) => t,
        Err(e) if e.is_numerical() => {
            let text = to_json(&diagnostic(&e))?;
            if let Some(dir) = &out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("diagnostic.json"), &text)?;
            }
            print!("{text}");
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let report = SolveReport {
        scheme: cfg.scheme,
        d: cfg.d,
        k: cfg.k,
        n_max: cfg.n_max,
        s: cfg.s,
        gamma: cfg.gamma,
        lambda: cfg.lambda,
        rho: cfg.rho,
        t_end: cfg.t_end,
        steps: cfg.partition.len() - 1,
        mesh: cfg.mesh(),
        iterations: traj.meta.iterations,
        residuals: traj.meta.residuals.clone(),
        hs_norms: traj.states.iter().map(|g| hs_norm(g, cfg.s)).collect(),
        holder_norm: holder_norm(&traj, cfg.lambda, cfg.s),
        mass_drift: traj.mass_drift(),
        warnings,
    };
    match out {
        Some(dir) => write_trajectory(&dir, &traj, &report, save_table.then_some(&table)),
        None => write_output(None, &to_json(&report)?),
    }
}

fn write_trajectory(
    dir: &Path,
    traj: &Trajectory,
    report: &SolveReport,
    table: Option<&crate::phi::OscillatoryTable>,
) -> Result<()> {
    let states = dir.join("states");
    fs::create_dir_all(&states)?;
    let mut times = String::from("index,t\n");
    for (i, (t, st)) in traj.times.iter().zip(&traj.states).enumerate() {
        times.push_str(&format!("{i},{}\n", fmt_f64(*t)));
        io::save_state(st, &states.join(format!("state_{i:05}.csv")))?;
    }
    fs::write(dir.join("times.csv"), times)?;
    fs::write(dir.join("report.json"), to_json(report)?)?;
    if let Some(table) = table {
        io::write_table_csv(table, std::io::BufWriter::new(fs::File::create(dir.join("table.csv"))?))?;
    }
    Ok(())
}

fn run_converge(
    config: &Path,
    path_flag: Option<&Path>,
    init_flag: Option<&Path>,
    levels: usize,
    out: Option<&Path>,
) -> Result<()> {
    let exp = Experiment::load(config)?;
    let base = exp.config.solver_config(None, None)?;
    let base_steps = base.partition.len() - 1;
    if exp.config.partition.is_some() && exp.config.steps.is_none() {
        return Err(Error::Config("converge refines uniform partitions; set steps".into()));
    }
    if levels == 0 {
        return Err(Error::Config("need --levels >= 1".into()));
    }
    let path = exp.path(path_flag)?;
    let phi0 = exp.init(init_flag)?;
    let exact = exp.exact_final(init_flag, &path)?;
    let mu_max = required_mu_max(base.d, base.k, base.n_max) as i64;
    let mut finals = Vec::new();
    let mut meshes = Vec::new();
    let runs = if exact.is_some() { levels } else { levels + 1 };
    for l in 0..runs {
        let cfg = exp.config.solver_config(None, Some(base_steps << l))?;
        let table = build_phi_table(&path, mu_max, &cfg.partition)?;
        finals.push(solve(&cfg, &phi0, &table)?.last().clone());
        meshes.push(cfg.mesh());
    }
    let reference = match exact {
        Some(e) => e,
        None => finals.pop().unwrap(),
    };
    let s = base.s;
    let scale = hs_norm(&reference, s).max(f64::MIN_POSITIVE);
    let mut csv = String::from("mesh,error,order\n");
    let mut prev: Option<f64> = None;
    for (m, f) in meshes.iter().zip(&finals) {
        let err = hs_norm(&f.sub(&reference), s) / scale;
        let order = prev.map_or(String::new(), |p| fmt_f64((p / err).log2()));
        csv.push_str(&format!("{},{},{order}\n", fmt_f64(*m), fmt_f64(err)));
        prev = Some(err);
    }
    write_output(out, &csv)
}
