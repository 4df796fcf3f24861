//! Oscillatory integrals `Φ_t(a) = ∫_0^t e^{i a w(r)} dr` against a
//! piecewise-linear path, integer-frequency tables of them, and grid
//! estimates of the `(ρ, γ)`-irregularity semi-norm
//!
//! ```text
//! sup_a sup_{s<t} (1+|a|)^ρ |Φ_t(a) - Φ_s(a)| / |t-s|^γ .
//! ```
//!
//! On a segment of length `δ` where `w` starts at `w_j` with slope `σ` the
//! integral is `e^{i a w_j} δ E(a σ δ)` with `E(x) = (e^{ix} - 1)/(ix)`, so no
//! quadrature error enters anywhere.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::SamplePath;

/// Below this `|x|` the Taylor branch of [`exp_ratio`] is used.
const TAYLOR_THRESHOLD: f64 = 1e-6;

/// `E(x) = (e^{ix} - 1) / (ix)`, with `E(0) = 1`.
pub fn exp_ratio(x: f64) -> Complex64 {
    if x.abs() < TAYLOR_THRESHOLD {
        let x2 = x * x;
        Complex64::new(1.0 - x2 / 6.0 + x2 * x2 / 120.0, x / 2.0 - x * x2 / 24.0)
    } else {
        // e^{ix/2} sin(x/2)/(x/2): no cancellation as x -> 0.
        let half = 0.5 * x;
        Complex64::from_polar(half.sin() / half, half)
    }
}

/// `∫_0^δ e^{i a (w0 + σ r)} dr`.
#[inline]
fn segment_integral(a: f64, w0: f64, slope: f64, delta: f64) -> Complex64 {
    Complex64::from_polar(delta, a * w0) * exp_ratio(a * slope * delta)
}

/// `Φ_t(a) - Φ_s(a)` for the piecewise-linear path, exact up to rounding.
pub fn phi_increment(path: &SamplePath, a: f64, s: f64, t: f64) -> Result<Complex64> {
    if s > t {
        return Err(Error::invalid(format!("need s <= t, got s={s}, t={t}")));
    }
    path.check_time(s)?;
    path.check_time(t)?;
    if a == 0.0 {
        return Ok(Complex64::new(t - s, 0.0));
    }
    let grid = path.t_grid();
    let vals = path.values();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut j = path.segment_of(s);
    let mut lo = s;
    while lo < t {
        let hi = grid[j + 1].min(t);
        let slope = path.slope(j);
        let w_lo = vals[j] + slope * (lo - grid[j]);
        acc += segment_integral(a, w_lo, slope, hi - lo);
        lo = hi;
        j += 1;
    }
    Ok(acc * Complex64::from_polar(1.0, a * path.offset()))
}

/// `Φ_·(a)` at every node of the path, for O(1) evaluation at any time.
#[derive(Clone, Debug)]
pub struct PhiPrefix<'p> {
    path: &'p SamplePath,
    a: f64,
    nodes: Vec<Complex64>,
}

impl<'p> PhiPrefix<'p> {
    pub fn new(path: &'p SamplePath, a: f64) -> Self {
        let grid = path.t_grid();
        let vals = path.values();
        let mut nodes = Vec::with_capacity(grid.len());
        let mut acc = Complex64::new(0.0, 0.0);
        nodes.push(acc);
        for j in 0..path.segments() {
            let delta = grid[j + 1] - grid[j];
            acc += segment_integral(a, vals[j], path.slope(j), delta);
            nodes.push(acc);
        }
        Self { path, a, nodes }
    }

    /// `Φ_t(a)` with the offset phase omitted (it cancels in moduli).
    pub fn at_unshifted(&self, t: f64) -> Complex64 {
        let grid = self.path.t_grid();
        let j = self.path.segment_of(t);
        if t == grid[j] {
            return self.nodes[j];
        }
        let slope = self.path.slope(j);
        let w0 = self.path.values()[j];
        self.nodes[j] + segment_integral(self.a, w0, slope, t - grid[j])
    }

    pub fn at(&self, t: f64) -> Complex64 {
        self.at_unshifted(t) * Complex64::from_polar(1.0, self.a * self.path.offset())
    }
}

/// `Φ_{t_i}(μ)` for grid times `t_i` and integers `|μ| <= mu_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatoryTable {
    mu_max: usize,
    t_grid: Vec<f64>,
    /// Row-major: `values[i * width + (μ + mu_max)]`.
    values: Vec<Complex64>,
}

impl OscillatoryTable {
    /// Assembles a table from raw rows; used by the file reader.
    pub fn from_parts(mu_max: usize, t_grid: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        let width = 2 * mu_max + 1;
        if values.len() != t_grid.len() * width {
            return Err(Error::ShapeMismatch(format!(
                "table needs {} entries for {} times and mu_max {mu_max}, got {}",
                t_grid.len() * width,
                t_grid.len(),
                values.len()
            )));
        }
        check_table_grid(&t_grid)?;
        Ok(Self { mu_max, t_grid, values })
    }

    pub fn mu_max(&self) -> usize {
        self.mu_max
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn width(&self) -> usize {
        2 * self.mu_max + 1
    }

    /// Row of `Φ_{t_i}(·)` indexed by `μ + mu_max`.
    pub fn row(&self, i: usize) -> &[Complex64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn get(&self, i: usize, mu: i64) -> Complex64 {
        self.row(i)[(mu + self.mu_max as i64) as usize]
    }

    /// `Φ_{t_j}(μ) - Φ_{t_i}(μ)` for all μ, indexed by `μ + mu_max`.
    pub fn increment_row(&self, i: usize, j: usize) -> Vec<Complex64> {
        self.row(j).iter().zip(self.row(i)).map(|(b, a)| b - a).collect()
    }

    /// Index of the grid time equal to `t` (to 1e-12 relative).
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.t_grid.last().copied().unwrap_or(1.0).max(1.0);
        let k = self.t_grid.partition_point(|&x| x < t - tol);
        (k < self.t_grid.len() && (self.t_grid[k] - t).abs() <= tol).then_some(k)
    }
}

fn check_table_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid[0] != 0.0 {
        return Err(Error::invalid("table time grid must start at 0"));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("table time grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// `Φ` at each of the (sorted) query times, by a single sweep over the path.
fn phi_at_times(path: &SamplePath, a: f64, times: &[f64]) -> Vec<Complex64> {
    let grid = path.t_grid();
    let vals = path.values();
    let phase = Complex64::from_polar(1.0, a * path.offset());
    let mut out = Vec::with_capacity(times.len());
    let mut acc = Complex64::new(0.0, 0.0);
    let last = path.segments() - 1;
    let mut j = 0;
    for &q in times {
        while j < last && grid[j + 1] <= q {
            acc += segment_integral(a, vals[j], path.slope(j), grid[j + 1] - grid[j]);
            j += 1;
        }
        let partial = if q > grid[j] {
            segment_integral(a, vals[j], path.slope(j), q - grid[j])
        } else {
            Complex64::new(0.0, 0.0)
        };
        out.push((acc + partial) * phase);
    }
    out
}

/// Tabulates `Φ_{t_i}(μ)` for `|μ| <= mu_max` at the given times.
pub fn build_phi_table(path: &SamplePath, mu_max: i64, t_grid: &[f64]) -> Result<OscillatoryTable> {
    if mu_max < 0 {
        return Err(Error::invalid(format!("mu_max must be nonnegative, got {mu_max}")));
    }
    check_table_grid(t_grid)?;
    if *t_grid.last().unwrap() > path.horizon() {
        return Err(Error::invalid(format!(
            "table grid ends at {} beyond the path horizon {}",
            t_grid.last().unwrap(),
            path.horizon()
        )));
    }
    let mu_max = mu_max as usize;
    let columns: Vec<Vec<Complex64>> = (0..=mu_max)
        .into_par_iter()
        .map(|mu| {
            if mu == 0 {
                t_grid.iter().map(|&t| Complex64::new(t, 0.0)).collect()
            } else {
                phi_at_times(path, mu as f64, t_grid)
            }
        })
        .collect();
    let width = 2 * mu_max + 1;
    let mut values = vec![Complex64::new(0.0, 0.0); t_grid.len() * width];
    for (i, row) in values.chunks_mut(width).enumerate() {
        for (mu, col) in columns.iter().enumerate() {
            row[mu_max + mu] = col[i];
            // Real paths: Φ(-μ) = conj Φ(μ).
            row[mu_max - mu] = col[i].conj();
        }
    }
    Ok(OscillatoryTable { mu_max, t_grid: t_grid.to_vec(), values })
}

/// Result of a grid sup of the irregularity semi-norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrregularityReport {
    pub rho: f64,
    pub gamma: f64,
    pub norm_estimate: f64,
    pub a_max: f64,
    pub pair_count: usize,
    /// Norms restricted to `|a| <= a_max / 2^j`, coarsest first, ending
    /// with `norm_estimate`.
    pub trend: Vec<f64>,
}

/// Number of halvings of `a_max` reported in a trend.
const TREND_LEVELS: usize = 4;

/// `m(a) = max_pairs |Φ_t(a) - Φ_s(a)| / (t-s)^γ` for every `a` in the grid.
pub fn increment_profile(path: &SamplePath, gamma: f64, a_grid: &[f64], pairs: &[(f64, f64)]) -> Vec<f64> {
    let denominators: Vec<f64> = pairs.iter().map(|(s, t)| (t - s).powf(gamma)).collect();
    a_grid
        .par_iter()
        .map(|&a| {
            if a == 0.0 {
                return pairs
                    .iter()
                    .zip(&denominators)
                    .map(|((s, t), den)| (t - s) / den)
                    .fold(0.0, f64::max);
            }
            let prefix = PhiPrefix::new(path, a);
            pairs
                .iter()
                .zip(&denominators)
                .map(|((s, t), den)| (prefix.at_unshifted(*t) - prefix.at_unshifted(*s)).norm() / den)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// `max_{|a| <= cap} (1+|a|)^ρ m(a)`.
fn weighted_sup(a_grid: &[f64], profile: &[f64], rho: f64, cap: f64) -> f64 {
    a_grid
        .iter()
        .zip(profile)
        .filter(|(a, _)| a.abs() <= cap)
        .map(|(a, m)| (1.0 + a.abs()).powf(rho) * m)
        .fold(0.0, f64::max)
}

/// `a_max / 2^j` for `j = levels, …, 0`.
pub fn trend_caps(a_max: f64, levels: usize) -> Vec<f64> {
    (0..=levels).rev().map(|j| a_max / 2f64.powi(j as i32)).collect()
}

fn validate_norm_inputs(gamma: f64, a_grid: &[f64], pairs: &[(f64, f64)]) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0,1], got {gamma}")));
    }
    if a_grid.is_empty() || pairs.is_empty() {
        return Err(Error::invalid("frequency grid and pair list must be non-empty"));
    }
    if let Some((s, t)) = pairs.iter().find(|(s, t)| !(s < t)) {
        return Err(Error::invalid(format!("pair ({s}, {t}) does not satisfy s < t")));
    }
    Ok(())
}

/// Grid estimate (a lower bound) of the `(ρ, γ)`-irregularity semi-norm.
pub fn irregularity_norm(
    path: &SamplePath,
    rho: f64,
    gamma: f64,
    a_grid: &[f64],
    pairs: &[(f64, f64)],
) -> Result<IrregularityReport> {
    validate_norm_inputs(gamma, a_grid, pairs)?;
    for &(s, t) in pairs {
        path.check_time(s)?;
        path.check_time(t)?;
    }
    let profile = increment_profile(path, gamma, a_grid, pairs);
    let a_max = a_grid.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let levels = if a_max >= 1.0 { TREND_LEVELS.min(a_max.log2().floor() as usize) } else { 0 };
    let trend: Vec<f64> = trend_caps(a_max, levels)
        .into_iter()
        .map(|cap| weighted_sup(a_grid, &profile, rho, cap))
        .collect();
    Ok(IrregularityReport {
        rho,
        gamma,
        norm_estimate: *trend.last().unwrap(),
        a_max,
        pair_count: pairs.len(),
        trend,
    })
}

/// Van der Corput radical inverse in base 2 (the 1-D Halton sequence).
fn van_der_corput(mut i: u64) -> f64 {
    let mut x = 0.0;
    let mut f = 0.5;
    while i > 0 {
        if i & 1 == 1 {
            x += f;
        }
        i >>= 1;
        f *= 0.5;
    }
    x
}

/// Nonnegative frequencies: every integer in `[0, a_max]` plus 16 Halton
/// points per unit interval. Negative `a` is redundant since
/// `|Φ(-a)| = |Φ(a)|` for real paths.
pub fn default_a_grid(a_max: f64) -> Vec<f64> {
    let units = a_max.floor() as u64;
    let mut grid = Vec::with_capacity((units as usize + 1) * 17);
    for j in 0..=units {
        grid.push(j as f64);
        if j < units || (a_max - units as f64) > 0.0 {
            for i in 1..=16 {
                let a = j as f64 + van_der_corput(16 * j + i);
                if a <= a_max {
                    grid.push(a);
                }
            }
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid
}

/// Pairs `(s, s+h)` with dyadic lags `h = T 2^{-l} >= min_lag` and starts
/// spread evenly over `[0, T-h]`, about `count` pairs in total.
pub fn dyadic_pairs(t_end: f64, min_lag: f64, count: usize) -> Vec<(f64, f64)> {
    let mut lags = Vec::new();
    let mut h = t_end;
    while h >= min_lag && lags.len() < 60 {
        lags.push(h);
        h *= 0.5;
    }
    if lags.is_empty() {
        lags.push(t_end);
    }
    let per_lag = (count / lags.len()).max(1);
    let mut pairs = Vec::with_capacity(per_lag * lags.len());
    for &h in &lags {
        let room = t_end - h;
        let starts = if room <= 0.0 { 1 } else { per_lag };
        for i in 0..starts {
            let s = if starts == 1 { 0.0 } else { room * i as f64 / (starts - 1) as f64 };
            let t = (s + h).min(t_end);
            if s < t {
                pairs.push((s, t));
            }
        }
    }
    pairs
}

/// Least-squares slope of `log(norm)` against `log(1 + cap)`.
pub fn trend_slope(caps: &[f64], norms: &[f64]) -> f64 {
    let xs: Vec<f64> = caps.iter().map(|c| (1.0 + c).ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|n| n.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Slope threshold below which a trend counts as non-growing.
pub const BOUNDED_SLOPE: f64 = 0.05;

/// Sweep result of [`estimate_irregularity`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IrregularityEstimate {
    pub gamma: f64,
    /// Largest swept ρ whose trend slope stays below [`BOUNDED_SLOPE`].
    pub rho_estimate: f64,
    pub slopes: Vec<(f64, f64)>,
    pub reports: Vec<IrregularityReport>,
}

impl IrregularityEstimate {
    pub fn slope_at(&self, rho: f64) -> Option<f64> {
        self.slopes.iter().find(|(r, _)| (r - rho).abs() < 1e-9).map(|(_, s)| *s)
    }
}

/// Default ρ sweep: `0, 0.1, …, 2.0`.
pub fn default_rho_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 10.0).collect()
}

/// Sweeps ρ at fixed γ and reports the largest ρ whose norm trend over
/// `levels` doublings up to `a_max` is non-growing.
pub fn estimate_irregularity(
    path: &SamplePath,
    gamma: f64,
    a_max: f64,
    levels: usize,
    rho_grid: &[f64],
) -> Result<IrregularityEstimate> {
    if !(a_max >= 1.0) {
        return Err(Error::invalid("a_max must be at least 1"));
    }
    let a_grid = default_a_grid(a_max);
    let pairs = dyadic_pairs(path.horizon(), 1.0 / (8.0 * a_max), 32 * 24);
    validate_norm_inputs(gamma, &a_grid, &pairs)?;
    let profile = increment_profile(path, gamma, &a_grid, &pairs);
    let caps = trend_caps(a_max, levels);
    let mut slopes = Vec::with_capacity(rho_grid.len());
    let mut reports = Vec::with_capacity(rho_grid.len());
    for &rho in rho_grid {
        let trend: Vec<f64> = caps.iter().map(|&c| weighted_sup(&a_grid, &profile, rho, c)).collect();
        slopes.push((rho, trend_slope(&caps, &trend)));
        reports.push(IrregularityReport {
            rho,
            gamma,
            norm_estimate: *trend.last().unwrap(),
            a_max,
            pair_count: pairs.len(),
            trend,
        });
    }
    let rho_estimate = slopes
        .iter()
        .filter(|(_, s)| *s < BOUNDED_SLOPE)
        .map(|(r, _)| *r)
        .fold(0.0, f64::max);
    Ok(IrregularityEstimate { gamma, rho_estimate, slopes, reports })
}
