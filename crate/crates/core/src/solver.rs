//! Euler–Young stepping and Picard iteration for the Young equation
//! `φ(t) = φ_0 + ∫_0^t X_{dτ}(φ(τ))`, plus reference solutions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{uniform_grid, SamplePath};
use crate::phi::OscillatoryTable;
use crate::spectral::{apply_u, hs_norm, Direction, PaddedGrid, SpectralState};
use crate::young::{x_increment_diag, YoungKernelConfig};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 50;
/// Used when no irregularity report is available.
pub const DEFAULT_GAMMA: f64 = 0.75;
/// Abort once the `H^s` norm exceeds this multiple of the initial one.
pub const BLOW_UP_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerYoung,
    Picard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
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
    pub partition: Vec<f64>,
    pub scheme: Scheme,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub allow_large: bool,
}

/// `λ = min(0.99γ, 1.01(1-γ))`, falling back to `0.5` when that violates
/// `0 < λ < γ`, `γ + λ > 1`. No admissible `λ` exists for `γ <= 1/2`.
pub fn default_lambda(gamma: f64) -> Result<f64> {
    if !(gamma > 0.5 && gamma <= 1.0) {
        return Err(Error::Config(format!(
            "no λ satisfies 0<λ<γ≤1 and γ+λ>1 for γ={gamma}"
        )));
    }
    let lambda = (0.99 * gamma).min(1.01 * (1.0 - gamma));
    if lambda > 0.0 && lambda < gamma && gamma + lambda > 1.0 {
        Ok(lambda)
    } else {
        Ok(0.5)
    }
}

impl SolverConfig {
    /// Uniform partition with `steps` steps and default γ, λ, tolerances.
    pub fn uniform(d: usize, k: usize, n_max: usize, t_end: f64, steps: usize, scheme: Scheme) -> Result<Self> {
        let gamma = DEFAULT_GAMMA;
        Ok(Self {
            d,
            k,
            n_max,
            s: 0.0,
            gamma,
            lambda: default_lambda(gamma)?,
            rho: 0.0,
            t_end,
            partition: uniform_grid(t_end, steps)?,
            scheme,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            allow_large: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (g, l) = (self.gamma, self.lambda);
        if !(0.0 < l && l < g && g <= 1.0) || g + l <= 1.0 || !g.is_finite() {
            return Err(Error::Config(format!(
                "need 0<λ<γ≤1 and γ+λ>1, got γ={g}, λ={l}"
            )));
        }
        if self.k == 0 || self.d == 0 || self.d > crate::spectral::MAX_DIM {
            return Err(Error::Config(format!("unsupported (d, k) = ({}, {})", self.d, self.k)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("T must be positive, got {}", self.t_end)));
        }
        let p = &self.partition;
        if p.len() < 2 || p[0] != 0.0 || p.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("partition must start at 0 and be strictly increasing".into()));
        }
        if (p[p.len() - 1] - self.t_end).abs() > 1e-12 * self.t_end.max(1.0) {
            return Err(Error::Config(format!(
                "partition ends at {} but T={}",
                p[p.len() - 1],
                self.t_end
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tol must be positive and max_iter at least 1".into()));
        }
        if !self.s.is_finite() || !self.rho.is_finite() {
            return Err(Error::Config("s and rho must be finite".into()));
        }
        Ok(())
    }

    /// Advisory messages; currently only the regularity threshold `s > d/2 - ρ/k`.
    pub fn warnings(&self) -> Vec<String> {
        let threshold = self.d as f64 / 2.0 - self.rho / self.k as f64;
        if self.s <= threshold {
            vec![format!(
                "s={} is at or below d/2 - rho/k = {threshold}; well-posedness is not covered there",
                self.s
            )]
        } else {
            Vec::new()
        }
    }

    pub fn mesh(&self) -> f64 {
        self.partition.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub scheme: Option<Scheme>,
    pub iterations: usize,
    /// Picard: discrete `C^{0,λ}` distance between successive iterates.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralState>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<SpectralState>) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(Error::ShapeMismatch(format!("{} times, {} states", times.len(), states.len())));
        }
        if states.iter().any(|s| !s.same_shape(&states[0])) {
            return Err(Error::ShapeMismatch("states differ in shape".into()));
        }
        Ok(Self { times, states, meta: TrajectoryMeta::default() })
    }

    /// Constant trajectory `t ↦ state` on `times`.
    pub fn constant(times: &[f64], state: &SpectralState) -> Self {
        Self { times: times.to_vec(), states: vec![state.clone(); times.len()], meta: TrajectoryMeta::default() }
    }

    pub fn last(&self) -> &SpectralState {
        self.states.last().unwrap()
    }

    /// `max_i |‖φ_i‖² - ‖φ_0‖²| / ‖φ_0‖²` (absolute when the datum is zero).
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.states[0].mass();
        let drift = self.states.iter().map(|s| (s.mass() - m0).abs()).fold(0.0, f64::max);
        if m0 > 0.0 {
            drift / m0
        } else {
            drift
        }
    }
}

/// Discrete `C^{0,λ}` norm: `sup_i ‖g_i‖_{H^s} + max_{i<j} ‖g_j - g_i‖_{H^s} / |t_j - t_i|^λ`.
pub fn holder_norm(traj: &Trajectory, lambda: f64, s: f64) -> f64 {
    let sup = traj.states.iter().map(|g| hs_norm(g, s)).fold(0.0, f64::max);
    sup + holder_seminorm(&traj.times, &traj.states, lambda, s)
}

fn holder_seminorm(times: &[f64], states: &[SpectralState], lambda: f64, s: f64) -> f64 {
    let mut best = 0.0f64;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let diff = states[j].sub(&states[i]);
            best = best.max(hs_norm(&diff, s) / (times[j] - times[i]).powf(lambda));
        }
    }
    best
}

/// [`holder_norm`] of the pointwise difference of two trajectories on one grid.
pub fn holder_distance(a: &Trajectory, b: &Trajectory, lambda: f64, s: f64) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::ShapeMismatch("trajectories live on different grids".into()));
    }
    let diff: Vec<SpectralState> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            x.check_shape(y)?;
            Ok(x.sub(y))
        })
        .collect::<Result<_>>()?;
    let sup = diff.iter().map(|g| hs_norm(g, s)).fold(0.0, f64::max);
    Ok(sup + holder_seminorm(&a.times, &diff, lambda, s))
}

/// Positions of the partition times in the table grid.
fn partition_indices(cfg: &SolverConfig, table: &OscillatoryTable) -> Result<Vec<usize>> {
    cfg.partition
        .iter()
        .map(|&t| {
            table
                .time_index(t)
                .ok_or_else(|| Error::Config(format!("partition time {t} is not on the Φ table grid")))
        })
        .collect()
}

struct Stepper<'t> {
    kernel: YoungKernelConfig<'t>,
    idx: Vec<usize>,
}

impl<'t> Stepper<'t> {
    fn new(cfg: &SolverConfig, table: &'t OscillatoryTable) -> Result<Self> {
        cfg.validate()?;
        let kernel = YoungKernelConfig::new(cfg.d, cfg.k, cfg.n_max, table, cfg.allow_large)?;
        Ok(Self { kernel, idx: partition_indices(cfg, table)? })
    }

    /// `X_{t_j; t_{j+1}}(g)`.
    fn step(&self, j: usize, g: &SpectralState) -> Result<SpectralState> {
        x_increment_diag(&self.kernel, self.idx[j], self.idx[j + 1], g)
    }
}

fn check_datum(cfg: &SolverConfig, phi0: &SpectralState) -> Result<()> {
    if phi0.d() != cfg.d || phi0.n_max() != cfg.n_max {
        return Err(Error::ShapeMismatch(format!(
            "initial datum (d={}, N={}) does not match config (d={}, N={})",
            phi0.d(),
            phi0.n_max(),
            cfg.d,
            cfg.n_max
        )));
    }
    Ok(())
}

struct Guard {
    limit: f64,
    s: f64,
}

impl Guard {
    fn new(cfg: &SolverConfig, phi0: &SpectralState) -> Self {
        let base = hs_norm(phi0, cfg.s).max(f64::MIN_POSITIVE);
        Self { limit: BLOW_UP_FACTOR * base, s: cfg.s }
    }

    fn check(&self, step: usize, state: &SpectralState) -> Result<()> {
        if !state.is_finite() {
            return Err(Error::BlowUp { step, reason: "non-finite coefficients".into() });
        }
        let norm = hs_norm(state, self.s);
        if norm > self.limit && norm > 0.0 {
            return Err(Error::BlowUp {
                step,
                reason: format!("H^s norm {norm:.3e} exceeds {BLOW_UP_FACTOR:.0e} times the initial norm"),
            });
        }
        Ok(())
    }
}

/// First-level Riemann sum `Σ_{s_idx <= j < t_idx} X_{t_j; t_{j+1}}(g(t_j))`
/// over the partition of `cfg`; `g` must live on that partition.
pub fn young_integral(
    cfg: &SolverConfig,
    table: &OscillatoryTable,
    g: &Trajectory,
    s_idx: usize,
    t_idx: usize,
) -> Result<SpectralState> {
    let stepper = Stepper::new(cfg, table)?;
    if g.times.len() != cfg.partition.len() {
        return Err(Error::ShapeMismatch("trajectory is not on the config partition".into()));
    }
    if s_idx > t_idx || t_idx >= cfg.partition.len() {
        return Err(Error::invalid(format!("partition indices ({s_idx}, {t_idx}) out of range")));
    }
    check_datum(cfg, &g.states[0])?;
    let mut acc = SpectralState::zeros(cfg.d, cfg.n_max);
    for j in s_idx..t_idx {
        acc.axpy(Complex64::new(1.0, 0.0), &stepper.step(j, &g.states[j])?);
    }
    Ok(acc)
}

/// `φ_{j+1} = φ_j + X_{t_j; t_{j+1}}(φ_j)`.
pub fn solve_euler_young(cfg: &SolverConfig, phi0: &SpectralState, table: &OscillatoryTable) -> Result<Trajectory> {
    let stepper = Stepper::new(cfg, table)?;
    check_datum(cfg, phi0)?;
    let guard = Guard::new(cfg, phi0);
    let mut states = Vec::with_capacity(cfg.partition.len());
    states.push(phi0.clone());
    for j in 0..cfg.partition.len() - 1 {
        let next = states[j].add(&stepper.step(j, &states[j])?);
        guard.check(j + 1, &next)?;
        states.push(next);
    }
    let mut traj = Trajectory::new(cfg.partition.clone(), states)?;
    traj.meta = TrajectoryMeta { scheme: Some(Scheme::EulerYoung), iterations: 1, residuals: Vec::new() };
    Ok(traj)
}

/// Picard iteration started from the constant iterate `ψ_0(t) = φ_0`.
pub fn solve_picard(cfg: &SolverConfig, phi0: &SpectralState, table: &OscillatoryTable) -> Result<Trajectory> {
    let start = Trajectory::constant(&cfg.partition, phi0);
    solve_picard_from(cfg, phi0, table, &start)
}

/// `ψ_{m+1}(t_i) = φ_0 + Σ_{j<i} X_{t_j; t_{j+1}}(ψ_m(t_j))` until the
/// discrete `C^{0,λ}` distance between iterates drops below `tol`.
pub fn solve_picard_from(
    cfg: &SolverConfig,
    phi0: &SpectralState,
    table: &OscillatoryTable,
    initial: &Trajectory,
) -> Result<Trajectory> {
    let stepper = Stepper::new(cfg, table)?;
    check_datum(cfg, phi0)?;
    if initial.times != cfg.partition {
        return Err(Error::ShapeMismatch("initial iterate is not on the config partition".into()));
    }
    check_datum(cfg, &initial.states[0])?;
    let guard = Guard::new(cfg, phi0);
    let mut current = initial.states.clone();
    let mut residuals = Vec::new();
    for iter in 1..=cfg.max_iter {
        let mut next = Vec::with_capacity(current.len());
        next.push(phi0.clone());
        let mut acc = phi0.clone();
        for (j, g) in current[..current.len() - 1].iter().enumerate() {
            acc.axpy(Complex64::new(1.0, 0.0), &stepper.step(j, g)?);
            guard.check(j + 1, &acc)?;
            next.push(acc.clone());
        }
        let diff: Vec<SpectralState> = next.iter().zip(&current).map(|(a, b)| a.sub(b)).collect();
        let sup = diff.iter().map(|g| hs_norm(g, cfg.s)).fold(0.0, f64::max);
        let residual = sup + holder_seminorm(&cfg.partition, &diff, cfg.lambda, cfg.s);
        residuals.push(residual);
        current = next;
        if !residual.is_finite() {
            return Err(Error::BlowUp { step: 0, reason: format!("non-finite residual at iteration {iter}") });
        }
        if residual < cfg.tol {
            let mut traj = Trajectory::new(cfg.partition.clone(), current)?;
            traj.meta = TrajectoryMeta { scheme: Some(Scheme::Picard), iterations: iter, residuals };
            return Ok(traj);
        }
    }
    Err(Error::NonConvergence { iterations: cfg.max_iter, residual: *residuals.last().unwrap() })
}

/// Dispatches on `cfg.scheme`.
pub fn solve(cfg: &SolverConfig, phi0: &SpectralState, table: &OscillatoryTable) -> Result<Trajectory> {
    match cfg.scheme {
        Scheme::EulerYoung => solve_euler_young(cfg, phi0, table),
        Scheme::Picard => solve_picard(cfg, phi0, table),
    }
}

/// Strang splitting for `i∂_t u = -Δu + |u|^{2k} u` (the case `w(t) = t`).
/// States are physical Fourier coefficients of `u`, not interaction
/// variables. The nonlinear substep rotates phases pointwise on a grid padded
/// to at least `(2k+2)N+1` points per axis and truncates back to the box.
pub fn reference_split_step(
    phi0: &SpectralState,
    t_end: f64,
    dt: f64,
    d: usize,
    k: usize,
    n_max: usize,
) -> Result<Trajectory> {
    if phi0.d() != d || phi0.n_max() != n_max {
        return Err(Error::ShapeMismatch("initial datum does not match (d, N)".into()));
    }
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::invalid("need positive T and dt"));
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    let grid = PaddedGrid::for_products(d, n_max, 2 * k + 1);
    let half_linear = |u: &SpectralState| apply_u(u, 0.5 * h, Direction::Forward);
    let nonlinear = |u: &SpectralState| {
        let mut vals = grid.to_physical(u);
        for v in vals.iter_mut() {
            let phase = -v.norm_sqr().powi(k as i32) * h;
            *v *= Complex64::from_polar(1.0, phase);
        }
        grid.to_modes(vals, d, n_max)
    };
    let mut states = Vec::with_capacity(steps + 1);
    states.push(phi0.clone());
    for j in 0..steps {
        let u = half_linear(&nonlinear(&half_linear(&states[j])));
        states.push(u);
    }
    Trajectory::new(uniform_grid(t_end, steps)?, states)
}

/// `c e^{-i|c|^{2k} t} δ_m` in interaction variables.
pub fn plane_wave_exact(c: Complex64, m: &[i64], n_max: usize, path: &SamplePath, t: f64, k: usize) -> Result<SpectralState> {
    path.check_time(t)?;
    let phase = -c.norm().powi(2 * k as i32) * t;
    SpectralState::delta(m.len(), n_max, m, c * Complex64::from_polar(1.0, phase))
}

/// `U^{w(t)}` applied to [`plane_wave_exact`], with `w` the raw path value.
pub fn plane_wave_physical(c: Complex64, m: &[i64], n_max: usize, path: &SamplePath, t: f64, k: usize) -> Result<SpectralState> {
    let phi = plane_wave_exact(c, m, n_max, path, t, k)?;
    Ok(apply_u(&phi, raw_path_value(path, t)?, Direction::Forward))
}

/// `w(t)` including the offset removed by normalization.
pub fn raw_path_value(path: &SamplePath, t: f64) -> Result<f64> {
    Ok(path.eval(t)? + path.offset())
}

/// Least-squares slope of `ln error` against `ln mesh`.
pub fn fit_order(meshes: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = meshes.iter().map(|m| m.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}
