//! The `(2k+1)`-linear increment `X_{s;t}` in Fourier space.
//!
//! In interaction variables the nonlinear term of the modulated NLS becomes
//!
//! ```text
//! X_{s;t}(ψ_1..ψ_{2k+1})^(n) = -i Σ_{n = Σ ζ_j n_j} [Φ_t(Ω) - Φ_s(Ω)] ∏_j Ĵ_jψ_j(n_j),
//! Ω = |n|² - Σ_j ζ_j |n_j|²,
//! ```
//!
//! so the whole time dependence sits in the table of `Φ` at integer
//! frequencies and every grid increment costs one table lookup per
//! interaction.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phi::OscillatoryTable;
use crate::spectral::{hs_norm, random_state, slot_factors, InteractionSum, ModeBox, SpectralState};

/// Interaction budget for `(d, k)` combinations without an explicit cap.
const DEFAULT_INTERACTION_BUDGET: f64 = 2.5e7;

/// Smallest table width that covers every resonance offset in the box.
pub fn required_mu_max(d: usize, k: usize, n_max: usize) -> usize {
    (2 * k + 2) * d * n_max * n_max
}

/// Rejects `(d, k, N)` whose direct enumeration is beyond desk scale unless
/// `allow_large` is set.
pub fn check_interaction_budget(d: usize, k: usize, n_max: usize, allow_large: bool) -> Result<()> {
    if allow_large {
        return Ok(());
    }
    let cap = match (d, k) {
        (1, 1) => Some(32),
        (1, 2) => Some(10),
        (2, 1) => Some(8),
        _ => None,
    };
    let too_big = match cap {
        Some(c) => n_max > c,
        None => ((2 * n_max + 1) as f64).powi((d * (2 * k + 1)) as i32) > DEFAULT_INTERACTION_BUDGET,
    };
    if too_big {
        return Err(Error::Config(format!(
            "N={n_max} exceeds the direct-enumeration cap for d={d}, k={k}; set allow_large to override"
        )));
    }
    Ok(())
}

/// Kernel setup: dimensions plus the `Φ` table whose grid is the time grid.
#[derive(Clone, Debug)]
pub struct YoungKernelConfig<'t> {
    d: usize,
    k: usize,
    n_max: usize,
    table: &'t OscillatoryTable,
    bx: ModeBox,
}

impl<'t> YoungKernelConfig<'t> {
    pub fn new(d: usize, k: usize, n_max: usize, table: &'t OscillatoryTable, allow_large: bool) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("nonlinearity index k must be at least 1".into()));
        }
        if !(1..=crate::spectral::MAX_DIM).contains(&d) {
            return Err(Error::Config(format!("dimension d={d} is not supported")));
        }
        check_interaction_budget(d, k, n_max, allow_large)?;
        let need = required_mu_max(d, k, n_max);
        if table.mu_max() < need {
            return Err(Error::Config(format!(
                "Φ table has mu_max={} but (d={d}, k={k}, N={n_max}) needs at least {need}",
                table.mu_max()
            )));
        }
        Ok(Self { d, k, n_max, table, bx: ModeBox::new(d, n_max) })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn slots(&self) -> usize {
        2 * self.k + 1
    }

    pub fn table(&self) -> &'t OscillatoryTable {
        self.table
    }

    pub fn times(&self) -> &[f64] {
        self.table.t_grid()
    }

    fn check_states(&self, states: &[&SpectralState]) -> Result<()> {
        if states.len() != self.slots() {
            return Err(Error::invalid(format!("expected {} slots, got {}", self.slots(), states.len())));
        }
        for s in states {
            if s.d() != self.d || s.n_max() != self.n_max {
                return Err(Error::ShapeMismatch(format!(
                    "state (d={}, N={}) does not match kernel (d={}, N={})",
                    s.d(),
                    s.n_max(),
                    self.d,
                    self.n_max
                )));
            }
        }
        Ok(())
    }
}

/// `X_{t_s; t_t}(ψ_1, …, ψ_{2k+1})` for grid indices `s_idx <= t_idx`.
pub fn x_increment(
    cfg: &YoungKernelConfig<'_>,
    s_idx: usize,
    t_idx: usize,
    states: &[&SpectralState],
) -> Result<SpectralState> {
    cfg.check_states(states)?;
    let len = cfg.table.t_grid().len();
    if s_idx > t_idx || t_idx >= len {
        return Err(Error::invalid(format!(
            "grid indices ({s_idx}, {t_idx}) invalid for a grid of {len} times"
        )));
    }
    let increments = cfg.table.increment_row(s_idx, t_idx);
    let mu_max = cfg.table.mu_max() as i64;
    let minus_i = Complex64::new(0.0, -1.0);
    let weight = |omega: i64| increments[(omega + mu_max) as usize];
    let factors = slot_factors(states);
    let sum = InteractionSum::new(&cfg.bx, factors.iter().map(|f| f.as_slice()).collect());
    let coeffs: Vec<Complex64> = (0..cfg.bx.len()).into_par_iter().map(|n| minus_i * sum.at(n, &weight)).collect();
    SpectralState::from_coeffs(cfg.d, cfg.n_max, coeffs)
}

/// [`x_increment`] at grid times given by value; off-grid times are rejected.
pub fn x_increment_at(cfg: &YoungKernelConfig<'_>, s: f64, t: f64, states: &[&SpectralState]) -> Result<SpectralState> {
    let lookup = |x: f64| {
        cfg.table
            .time_index(x)
            .ok_or_else(|| Error::invalid(format!("time {x} is not on the kernel grid")))
    };
    x_increment(cfg, lookup(s)?, lookup(t)?, states)
}

/// `X_{s;t}(ψ, …, ψ)`: every slot filled with the same state.
pub fn x_increment_diag(cfg: &YoungKernelConfig<'_>, s_idx: usize, t_idx: usize, state: &SpectralState) -> Result<SpectralState> {
    let slots = vec![state; cfg.slots()];
    x_increment(cfg, s_idx, t_idx, &slots)
}

/// `‖X_{s;t}(ψ…)‖_{H^s} / (|t-s|^γ ∏_j ‖ψ_j‖_{H^s})`.
pub fn x_ratio(
    cfg: &YoungKernelConfig<'_>,
    s_idx: usize,
    t_idx: usize,
    states: &[&SpectralState],
    gamma: f64,
    s: f64,
) -> Result<f64> {
    let out = x_increment(cfg, s_idx, t_idx, states)?;
    let times = cfg.times();
    let den = (times[t_idx] - times[s_idx]).powf(gamma) * states.iter().map(|p| hs_norm(p, s)).product::<f64>();
    Ok(hs_norm(&out, s) / den)
}

/// Grid pairs used by [`x_norm_estimate`]: dyadic lags in grid steps, up to
/// eight evenly spaced starts per lag.
pub fn kernel_pairs(grid_len: usize) -> Vec<(usize, usize)> {
    let steps = grid_len.saturating_sub(1);
    let mut pairs = Vec::new();
    let mut lag = 1;
    while lag <= steps {
        let room = steps - lag;
        let starts = room.min(7) + 1;
        for i in 0..starts {
            let s = if starts == 1 { 0 } else { room * i / (starts - 1) };
            pairs.push((s, s + lag));
        }
        lag *= 2;
    }
    pairs
}

/// Lower bound on `‖X‖_{C^γ(L_{2k+1}(H^s))}`: the largest ratio over
/// `trials` random slot data and the dyadic grid pairs. Trial `i` uses seeds
/// derived from `seed + i`, so more trials never lower the estimate.
pub fn x_norm_estimate(cfg: &YoungKernelConfig<'_>, gamma: f64, s: f64, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let pairs = kernel_pairs(cfg.times().len());
    let mut best = 0.0f64;
    for trial in 0..trials as u64 {
        let states: Vec<SpectralState> = (0..cfg.slots() as u64)
            .map(|j| random_state(cfg.d, cfg.n_max, s, (seed + trial).wrapping_mul(1_000_003).wrapping_add(j)))
            .collect();
        let refs: Vec<&SpectralState> = states.iter().collect();
        for &(a, b) in &pairs {
            best = best.max(x_ratio(cfg, a, b, &refs, gamma, s)?);
        }
    }
    Ok(best)
}
