//! Modulation paths `w : [0, T] -> R`.
//!
//! Every path is stored as samples on a strictly increasing grid and is
//! piecewise linear in between, so oscillatory integrals against it have
//! closed forms segment by segment (see [`crate::phi`]). Paths are
//! normalized to `w(0) = 0`; the removed constant is kept as
//! [`SamplePath::offset`].

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Linear,
    Constant,
    Fbm,
    Modulated,
    External,
}

/// How an fBm sample was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbmMethod {
    CirculantEmbedding,
    Cholesky,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    t_grid: Vec<f64>,
    values: Vec<f64>,
    kind: PathKind,
    offset: f64,
    fbm_method: Option<FbmMethod>,
}

impl SamplePath {
    /// Builds a path from raw samples, shifting so that the first value is 0.
    pub fn new(t_grid: Vec<f64>, values: Vec<f64>, kind: PathKind) -> Result<Self> {
        if t_grid.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} times but {} values",
                t_grid.len(),
                values.len()
            )));
        }
        if t_grid.len() < 2 {
            return Err(Error::invalid("a path needs at least one segment"));
        }
        if t_grid[0] != 0.0 {
            return Err(Error::invalid(format!("path must start at t=0, got {}", t_grid[0])));
        }
        if t_grid.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("path contains non-finite samples"));
        }
        if t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("time grid must be strictly increasing"));
        }
        let offset = values[0];
        let values = values.into_iter().map(|v| v - offset).collect();
        Ok(Self { t_grid, values, kind, offset, fbm_method: None })
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    /// Normalized samples, `values()[0] == 0`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    /// The constant removed by normalization; the raw path is `values + offset`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn fbm_method(&self) -> Option<FbmMethod> {
        self.fbm_method
    }

    pub fn horizon(&self) -> f64 {
        *self.t_grid.last().unwrap()
    }

    pub fn segments(&self) -> usize {
        self.t_grid.len() - 1
    }

    /// Index `j` of the segment `[t_j, t_{j+1}]` containing `t` (the last
    /// segment for `t == T`). Caller guarantees `t` is in range.
    pub(crate) fn segment_of(&self, t: f64) -> usize {
        let j = self.t_grid.partition_point(|&x| x <= t);
        j.saturating_sub(1).min(self.segments() - 1)
    }

    /// Slope of segment `j`.
    pub(crate) fn slope(&self, j: usize) -> f64 {
        (self.values[j + 1] - self.values[j]) / (self.t_grid[j + 1] - self.t_grid[j])
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(Error::invalid(format!(
                "time {t} outside the path horizon [0, {}]",
                self.horizon()
            )));
        }
        Ok(())
    }

    /// Piecewise-linear value at `t` (normalized, without the offset).
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let j = self.segment_of(t);
        let (t0, t1) = (self.t_grid[j], self.t_grid[j + 1]);
        if t == t0 {
            return Ok(self.values[j]);
        }
        if t == t1 {
            return Ok(self.values[j + 1]);
        }
        let (v0, v1) = (self.values[j], self.values[j + 1]);
        Ok(v0 + (v1 - v0) * ((t - t0) / (t1 - t0)))
    }

    /// Raw samples including the offset, as written to path files.
    pub fn raw_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v + self.offset).collect()
    }
}

/// Evaluates the piecewise-linear interpolant; errors outside `[0, T]`.
pub fn eval_path(path: &SamplePath, t: f64) -> Result<f64> {
    path.eval(t)
}

pub fn uniform_grid(t_end: f64, m: usize) -> Result<Vec<f64>> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("horizon T must be positive, got {t_end}")));
    }
    if m == 0 {
        return Err(Error::invalid("need at least one segment (M >= 1)"));
    }
    let mut grid: Vec<f64> = (0..=m).map(|j| t_end * j as f64 / m as f64).collect();
    grid[m] = t_end;
    Ok(grid)
}

/// `w(t) = t` sampled on a uniform grid of `m` segments.
pub fn make_linear_path(t_end: f64, m: usize) -> Result<SamplePath> {
    let grid = uniform_grid(t_end, m)?;
    SamplePath::new(grid.clone(), grid, PathKind::Linear)
}

/// `w(t) = c`. Stored as the zero path with offset `c`.
pub fn make_constant_path(c: f64, t_end: f64, m: usize) -> Result<SamplePath> {
    if !c.is_finite() {
        return Err(Error::invalid("constant must be finite"));
    }
    let grid = uniform_grid(t_end, m)?;
    let values = vec![c; grid.len()];
    SamplePath::new(grid, values, PathKind::Constant)
}

fn fgn_autocovariance(hurst: f64, lag: usize) -> f64 {
    let k = lag as f64;
    let h2 = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Unit-step fractional Gaussian noise via circulant embedding
/// (Davies-Harte). Returns `None` when the embedding is not nonnegative.
fn fgn_circulant(hurst: f64, m: usize, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let len = 2 * m;
    let mut row: Vec<Complex64> = (0..len)
        .map(|j| {
            let lag = if j <= m { j } else { len - j };
            Complex64::new(fgn_autocovariance(hurst, lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    fft.process(&mut row);
    let scale = row.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if row.iter().any(|z| z.re < -1e-10 * scale) {
        return None;
    }
    let eig: Vec<f64> = row.iter().map(|z| z.re.max(0.0)).collect();

    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let mut w = vec![Complex64::new(0.0, 0.0); len];
    w[0] = Complex64::new((eig[0] / len as f64).sqrt() * normal(), 0.0);
    w[m] = Complex64::new((eig[m] / len as f64).sqrt() * normal(), 0.0);
    for j in 1..m {
        let amp = (eig[j] / (2.0 * len as f64)).sqrt();
        let z = Complex64::new(normal(), normal()) * amp;
        w[j] = z;
        w[len - j] = z.conj();
    }
    fft.process(&mut w);
    Some(w[..m].iter().map(|z| z.re).collect())
}

/// Unit-step fractional Gaussian noise by Cholesky factorization of the
/// Toeplitz covariance. O(m^3); only used when circulant embedding fails.
fn fgn_cholesky(hurst: f64, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut sum = fgn_autocovariance(hurst, i - j);
            for p in 0..j {
                sum -= l[i * m + p] * l[j * m + p];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::invalid("fGn covariance is not positive definite"));
                }
                l[i * m + i] = sum.sqrt();
            } else {
                l[i * m + j] = sum / l[j * m + j];
            }
        }
    }
    let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
    Ok((0..m).map(|i| (0..=i).map(|p| l[i * m + p] * z[p]).sum()).collect())
}

/// Fractional Brownian motion with Hurst index `hurst`, exact in law at the
/// grid nodes. `m` must be a power of two.
pub fn make_fbm_path(hurst: f64, t_end: f64, m: usize, seed: u64) -> Result<SamplePath> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::invalid(format!("Hurst index must lie in (0,1), got {hurst}")));
    }
    if !m.is_power_of_two() {
        return Err(Error::invalid(format!("M must be a power of two for circulant embedding, got {m}")));
    }
    let grid = uniform_grid(t_end, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (noise, method) = match fgn_circulant(hurst, m, &mut rng) {
        Some(noise) => (noise, FbmMethod::CirculantEmbedding),
        None => {
            log::warn!("circulant embedding not nonnegative for H={hurst}, M={m}; using Cholesky");
            (fgn_cholesky(hurst, m, &mut rng)?, FbmMethod::Cholesky)
        }
    };
    let step_scale = (t_end / m as f64).powf(hurst);
    let mut values = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for x in noise {
        acc += x * step_scale;
        values.push(acc);
    }
    let mut path = SamplePath::new(grid, values, PathKind::Fbm)?;
    path.fbm_method = Some(method);
    Ok(path)
}

/// Antiderivative of the periodic piecewise-linear interpolant of `profile`
/// (samples at `x = i/P`, `i = 0..P`, period 1).
struct ProfileIntegral<'a> {
    profile: &'a [f64],
    prefix: Vec<f64>,
}

impl<'a> ProfileIntegral<'a> {
    fn new(profile: &'a [f64]) -> Self {
        let p = profile.len();
        let mut prefix = Vec::with_capacity(p + 1);
        prefix.push(0.0);
        for i in 0..p {
            let cell = 0.5 * (profile[i] + profile[(i + 1) % p]) / p as f64;
            prefix.push(prefix[i] + cell);
        }
        Self { profile, prefix }
    }

    fn at(&self, x: f64) -> f64 {
        let p = self.profile.len();
        let periods = x.floor();
        let frac = (x - periods) * p as f64;
        let cell = (frac.floor() as usize).min(p - 1);
        let u = frac - cell as f64;
        let (m0, m1) = (self.profile[cell], self.profile[(cell + 1) % p]);
        let partial = (m0 * u + 0.5 * (m1 - m0) * u * u) / p as f64;
        periods * self.prefix[p] + self.prefix[cell] + partial
    }
}

/// `w(t) = ∫_0^t ε^{-1} m(r/ε²) dr` for a periodic profile `m` tabulated on a
/// uniform grid of `[0, 1)`. The integral of the piecewise-linear profile is
/// evaluated exactly.
pub fn make_modulated_path(profile: &[f64], eps: f64, t_end: f64, m: usize) -> Result<SamplePath> {
    if profile.is_empty() {
        return Err(Error::invalid("profile must have at least one sample"));
    }
    if profile.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("profile contains non-finite samples"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {eps}")));
    }
    let grid = uniform_grid(t_end, m)?;
    let dt = t_end / m as f64;
    if eps * eps < 4.0 * dt {
        return Err(Error::invalid(format!(
            "epsilon {eps} too small for the grid: need eps^2 >= 4 T/M = {}",
            4.0 * dt
        )));
    }
    let integral = ProfileIntegral::new(profile);
    let values = grid.iter().map(|&t| eps * integral.at(t / (eps * eps))).collect();
    SamplePath::new(grid, values, PathKind::Modulated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_path_values() {
        let p = make_linear_path(1.0, 4).unwrap();
        assert_eq!(p.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let p = make_linear_path(std::f64::consts::PI, 1).unwrap();
        assert_eq!(p.values(), &[0.0, std::f64::consts::PI]);
        let p = make_linear_path(1.0, 10).unwrap();
        assert_eq!(p.eval(0.3).unwrap(), 0.3);
    }

    #[test]
    fn constant_path_offset() {
        let p = make_constant_path(1.0, 1.0, 2).unwrap();
        assert_eq!(p.offset(), 1.0);
        assert_eq!(p.values(), &[0.0, 0.0, 0.0]);
        let z = make_constant_path(0.0, 1.0, 2).unwrap();
        assert_eq!(z.offset(), 0.0);
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_nodes_and_midpoints() {
        let p = make_fbm_path(0.5, 1.0, 16, 3).unwrap();
        for (t, v) in p.t_grid().iter().zip(p.values()) {
            assert_eq!(p.eval(*t).unwrap(), *v);
        }
        let mid = 0.5 * (p.t_grid()[3] + p.t_grid()[4]);
        let expect = 0.5 * (p.values()[3] + p.values()[4]);
        assert!((p.eval(mid).unwrap() - expect).abs() < 1e-15);
        assert!(p.eval(-1e-3).is_err());
        assert!(p.eval(1.0 + 1e-9).is_err());
    }

    #[test]
    fn fbm_is_seed_deterministic() {
        let a = make_fbm_path(0.3, 2.0, 64, 42).unwrap();
        let b = make_fbm_path(0.3, 2.0, 64, 42).unwrap();
        let c = make_fbm_path(0.3, 2.0, 64, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
        assert_eq!(a.fbm_method(), Some(FbmMethod::CirculantEmbedding));
    }

    #[test]
    fn fbm_rejects_bad_parameters() {
        assert!(make_fbm_path(0.5, 1.0, 12, 0).is_err());
        assert!(make_fbm_path(1.0, 1.0, 16, 0).is_err());
        assert!(make_fbm_path(0.5, -1.0, 16, 0).is_err());
    }

    #[test]
    fn cholesky_matches_circulant_covariance_structure() {
        // Same seed does not give the same sample, but both must be finite and
        // have the right length.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = fgn_cholesky(0.7, 32, &mut rng).unwrap();
        assert_eq!(x.len(), 32);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn modulated_unit_profile_is_identity() {
        let p = make_modulated_path(&[1.0], 1.0, 2.0, 32).unwrap();
        for (t, v) in p.t_grid().iter().zip(p.values()) {
            assert!((t - v).abs() < 1e-14);
        }
        let z = make_modulated_path(&[0.0, 0.0, 0.0], 0.5, 1.0, 32).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn modulated_rejects_coarse_grid() {
        assert!(make_modulated_path(&[1.0, -1.0], 0.1, 1.0, 16).is_err());
    }

    #[test]
    fn path_construction_errors() {
        assert!(SamplePath::new(vec![0.0, 1.0], vec![0.0], PathKind::External).is_err());
        assert!(SamplePath::new(vec![0.0, 0.0], vec![0.0, 1.0], PathKind::External).is_err());
        assert!(SamplePath::new(vec![0.5, 1.0], vec![0.0, 1.0], PathKind::External).is_err());
        let p = SamplePath::new(vec![0.0, 1.0], vec![2.0, 3.0], PathKind::External).unwrap();
        assert_eq!(p.offset(), 2.0);
        assert_eq!(p.raw_values(), vec![2.0, 3.0]);
    }
}
