//! Truncated Fourier states on the torus `T^d = [0, 2π)^d`.
//!
//! A state stores the coefficients `φ̂(n)` of `φ(x) = Σ_n φ̂(n) e^{i n·x}` for
//! modes `n ∈ [-N, N]^d`, row-major with the first component most
//! significant. Modes are orthonormal for the averaged inner product, so the
//! `L²` norm is the Euclidean norm of the coefficient vector.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 4;

/// The mode box `[-N, N]^d` with cached mode vectors and `|n|²`.
#[derive(Clone, Debug)]
pub struct ModeBox {
    d: usize,
    n_max: usize,
    side: usize,
    modes: Vec<i64>,
    norm2: Vec<i64>,
}

impl ModeBox {
    pub fn new(d: usize, n_max: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d), "dimension {d} outside 1..={MAX_DIM}");
        let side = 2 * n_max + 1;
        let len = side.pow(d as u32);
        let mut modes = Vec::with_capacity(len * d);
        let mut norm2 = Vec::with_capacity(len);
        for idx in 0..len {
            let mut rem = idx;
            let mut n = [0i64; MAX_DIM];
            for i in (0..d).rev() {
                n[i] = (rem % side) as i64 - n_max as i64;
                rem /= side;
            }
            modes.extend_from_slice(&n[..d]);
            norm2.push(n[..d].iter().map(|x| x * x).sum());
        }
        Self { d, n_max, side, modes, norm2 }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.norm2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norm2.is_empty()
    }

    pub fn mode(&self, idx: usize) -> &[i64] {
        &self.modes[idx * self.d..(idx + 1) * self.d]
    }

    pub fn norm2(&self, idx: usize) -> i64 {
        self.norm2[idx]
    }

    pub fn index(&self, n: &[i64]) -> Option<usize> {
        if n.len() != self.d {
            return None;
        }
        let bound = self.n_max as i64;
        let mut idx = 0usize;
        for &c in n {
            if c < -bound || c > bound {
                return None;
            }
            idx = idx * self.side + (c + bound) as usize;
        }
        Some(idx)
    }

    /// Index of `-n`. The box is symmetric, so this is the mirrored index.
    pub fn neg_index(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    /// Japanese bracket `⟨n⟩ = (1 + |n|²)^{1/2}`.
    pub fn bracket(&self, idx: usize) -> f64 {
        (1.0 + self.norm2[idx] as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    d: usize,
    n_max: usize,
    coeffs: Vec<Complex64>,
}

fn box_len(d: usize, n_max: usize) -> usize {
    (2 * n_max + 1).pow(d as u32)
}

impl SpectralState {
    pub fn zeros(d: usize, n_max: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d), "dimension {d} outside 1..={MAX_DIM}");
        Self { d, n_max, coeffs: vec![Complex64::new(0.0, 0.0); box_len(d, n_max)] }
    }

    pub fn from_coeffs(d: usize, n_max: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::invalid(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        if coeffs.len() != box_len(d, n_max) {
            return Err(Error::ShapeMismatch(format!(
                "(d={d}, N={n_max}) needs {} coefficients, got {}",
                box_len(d, n_max),
                coeffs.len()
            )));
        }
        Ok(Self { d, n_max, coeffs })
    }

    /// `c` times the plane wave `e^{i m·x}`.
    pub fn delta(d: usize, n_max: usize, mode: &[i64], c: Complex64) -> Result<Self> {
        let mut s = Self::zeros(d, n_max);
        s.set(mode, c)?;
        Ok(s)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn mode_box(&self) -> ModeBox {
        ModeBox::new(self.d, self.n_max)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    fn flat_index(&self, mode: &[i64]) -> Result<usize> {
        if mode.len() != self.d {
            return Err(Error::ShapeMismatch(format!("mode has {} components, state has d={}", mode.len(), self.d)));
        }
        let side = 2 * self.n_max + 1;
        let bound = self.n_max as i64;
        let mut idx = 0usize;
        for &c in mode {
            if c.abs() > bound {
                return Err(Error::invalid(format!("mode {mode:?} outside [-{bound}, {bound}]^{}", self.d)));
            }
            idx = idx * side + (c + bound) as usize;
        }
        Ok(idx)
    }

    pub fn get(&self, mode: &[i64]) -> Result<Complex64> {
        Ok(self.coeffs[self.flat_index(mode)?])
    }

    pub fn set(&mut self, mode: &[i64], c: Complex64) -> Result<()> {
        let i = self.flat_index(mode)?;
        self.coeffs[i] = c;
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.d == other.d && self.n_max == other.n_max
    }

    pub(crate) fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "(d={}, N={}) vs (d={}, N={})",
                self.d, self.n_max, other.d, other.n_max
            )))
        }
    }

    /// The conjugation map `J`: `(Jφ)^(n) = conj φ̂(-n)`, i.e. `φ ↦ φ̄`.
    pub fn conj_reflect(&self) -> Self {
        let len = self.coeffs.len();
        let coeffs = (0..len).map(|i| self.coeffs[len - 1 - i].conj()).collect();
        Self { d: self.d, n_max: self.n_max, coeffs }
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        let coeffs = self.coeffs.iter().map(|c| c * alpha).collect();
        Self { coeffs, ..*self }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: Complex64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += alpha * b;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Squared `L²` norm (the mass).
    pub fn mass(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// `(Σ_n ⟨n⟩^{2s} |φ̂(n)|²)^{1/2}`.
pub fn hs_norm(state: &SpectralState, s: f64) -> f64 {
    if s == 0.0 {
        return state.mass().sqrt();
    }
    let bx = state.mode_box();
    state
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| (1.0 + bx.norm2(i) as f64).powf(s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `U^w`: multiply by `e^{-i|n|² w}`.
    Forward,
    /// `U^{-w} = (U^w)^{-1}`: multiply by `e^{+i|n|² w}`.
    Inverse,
}

/// The modulated linear flow evaluated at the path value `w`.
pub fn apply_u(state: &SpectralState, w: f64, direction: Direction) -> SpectralState {
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let bx = state.mode_box();
    let coeffs = state
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * Complex64::from_polar(1.0, sign * bx.norm2(i) as f64 * w))
        .collect();
    SpectralState { coeffs, ..*state }
}

/// Sign `ζ_j` of slot `j` (0-based): `+` for the 1st, 3rd, … slots.
#[inline]
pub(crate) fn slot_sign(j: usize) -> i64 {
    if j % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Sums `weight(Ω) ∏_j f_j(n_j)` over all `(2k+1)`-tuples of box modes with
/// `Σ_j ζ_j n_j = n`, where `Ω = |n|² - Σ_j ζ_j |n_j|²` and the `f_j` are
/// per-slot coefficient arrays (already conjugated where `J` applies).
pub(crate) struct InteractionSum<'a> {
    bx: &'a ModeBox,
    factors: Vec<&'a [Complex64]>,
    supports: Vec<Vec<usize>>,
}

impl<'a> InteractionSum<'a> {
    pub(crate) fn new(bx: &'a ModeBox, factors: Vec<&'a [Complex64]>) -> Self {
        let supports = factors
            .iter()
            .map(|f| (0..f.len()).filter(|&i| f[i] != Complex64::new(0.0, 0.0)).collect())
            .collect();
        Self { bx, factors, supports }
    }

    pub(crate) fn at<W: Fn(i64) -> Complex64>(&self, out: usize, weight: &W) -> Complex64 {
        let target = self.bx.mode(out);
        let mut t = [0i64; MAX_DIM];
        t[..target.len()].copy_from_slice(target);
        self.recurse(0, &t, self.bx.norm2(out), [0; MAX_DIM], 0, Complex64::new(1.0, 0.0), weight)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<W: Fn(i64) -> Complex64>(
        &self,
        depth: usize,
        target: &[i64; MAX_DIM],
        target_norm2: i64,
        partial: [i64; MAX_DIM],
        partial_q: i64,
        prod: Complex64,
        weight: &W,
    ) -> Complex64 {
        let d = self.bx.d();
        let last = self.factors.len() - 1;
        if depth == last {
            // The last slot is odd-numbered, so ζ = + and n_last = n - partial.
            let mut m = [0i64; MAX_DIM];
            for i in 0..d {
                m[i] = target[i] - partial[i];
            }
            let Some(idx) = self.bx.index(&m[..d]) else {
                return Complex64::new(0.0, 0.0);
            };
            let f = self.factors[depth][idx];
            if f == Complex64::new(0.0, 0.0) {
                return f;
            }
            let omega = target_norm2 - (partial_q + self.bx.norm2(idx));
            return weight(omega) * prod * f;
        }
        let sign = slot_sign(depth);
        let mut acc = Complex64::new(0.0, 0.0);
        for &idx in &self.supports[depth] {
            let mode = self.bx.mode(idx);
            let mut next = partial;
            for i in 0..d {
                next[i] += sign * mode[i];
            }
            let q = partial_q + sign * self.bx.norm2(idx);
            acc += self.recurse(depth + 1, target, target_norm2, next, q, prod * self.factors[depth][idx], weight);
        }
        acc
    }
}

fn check_slots(states: &[&SpectralState]) -> Result<()> {
    if states.is_empty() || states.len() % 2 == 0 {
        return Err(Error::invalid(format!(
            "need an odd number 2k+1 of slots, got {}",
            states.len()
        )));
    }
    for s in &states[1..] {
        states[0].check_shape(s)?;
    }
    Ok(())
}

/// Slot coefficient arrays `Ĵ_jψ_j(n)`: `ψ̂_j(n)` on odd slots and
/// `conj ψ̂_j(n)` on even slots (1-based).
pub(crate) fn slot_factors(states: &[&SpectralState]) -> Vec<Vec<Complex64>> {
    states
        .iter()
        .enumerate()
        .map(|(j, s)| {
            if j % 2 == 0 {
                s.coeffs.clone()
            } else {
                s.coeffs.iter().map(|c| c.conj()).collect()
            }
        })
        .collect()
}

/// Galerkin-truncated coefficients of `(∏_{odd j} φ_j)(∏_{even j} φ̄_j)`,
/// by direct convolution.
pub fn nonlinearity(states: &[&SpectralState]) -> Result<SpectralState> {
    check_slots(states)?;
    let proto = states[0];
    let bx = proto.mode_box();
    let factors = slot_factors(states);
    let sum = InteractionSum::new(&bx, factors.iter().map(|f| f.as_slice()).collect());
    let one = |_: i64| Complex64::new(1.0, 0.0);
    let coeffs = (0..bx.len()).map(|n| sum.at(n, &one)).collect();
    Ok(SpectralState { d: proto.d, n_max: proto.n_max, coeffs })
}

/// Physical-space grid with `L` points per axis, large enough that products
/// of `2k+1` box-limited states project onto `[-N, N]^d` without aliasing.
pub(crate) struct PaddedGrid {
    d: usize,
    l: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PaddedGrid {
    pub(crate) fn for_products(d: usize, n_max: usize, factors: usize) -> Self {
        // Modes of the product reach factors·N; aliases must stay outside [-N, N].
        let min = (factors + 1) * n_max + 1;
        Self::with_size(d, min.next_power_of_two().max(2))
    }

    pub(crate) fn with_size(d: usize, l: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { d, l, forward: planner.plan_fft_forward(l), inverse: planner.plan_fft_inverse(l) }
    }

    fn total(&self) -> usize {
        self.l.pow(self.d as u32)
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let l = self.l;
        let mut line = vec![Complex64::new(0.0, 0.0); l];
        for axis in 0..self.d {
            let stride = l.pow((self.d - 1 - axis) as u32);
            let outer = self.total() / (l * stride);
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * l * stride + inner;
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[base + k * stride];
                    }
                    fft.process(&mut line);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride] = *v;
                    }
                }
            }
        }
    }

    fn grid_index(&self, mode: &[i64]) -> usize {
        let l = self.l as i64;
        mode.iter().fold(0usize, |acc, &c| acc * self.l + c.rem_euclid(l) as usize)
    }

    /// Point values `φ(x_j)` on the grid `x_j = 2π j / L`.
    pub(crate) fn to_physical(&self, state: &SpectralState) -> Vec<Complex64> {
        let bx = state.mode_box();
        let mut data = vec![Complex64::new(0.0, 0.0); self.total()];
        for (i, c) in state.coeffs.iter().enumerate() {
            data[self.grid_index(bx.mode(i))] = *c;
        }
        self.transform(&mut data, &self.inverse);
        data
    }

    /// Fourier coefficients of grid values, truncated to `[-N, N]^d`.
    pub(crate) fn to_modes(&self, mut data: Vec<Complex64>, d: usize, n_max: usize) -> SpectralState {
        self.transform(&mut data, &self.forward);
        let scale = 1.0 / self.total() as f64;
        let bx = ModeBox::new(d, n_max);
        let coeffs = (0..bx.len()).map(|i| data[self.grid_index(bx.mode(i))] * scale).collect();
        SpectralState { d, n_max, coeffs }
    }
}

/// Same result as [`nonlinearity`], computed by pointwise products on a
/// padded grid. Exact up to rounding since the padding prevents aliasing.
pub fn nonlinearity_padded(states: &[&SpectralState]) -> Result<SpectralState> {
    check_slots(states)?;
    let proto = states[0];
    let grid = PaddedGrid::for_products(proto.d, proto.n_max, states.len());
    let mut product = vec![Complex64::new(1.0, 0.0); grid.total()];
    for (j, s) in states.iter().enumerate() {
        let vals = grid.to_physical(s);
        for (p, v) in product.iter_mut().zip(vals) {
            *p *= if j % 2 == 0 { v } else { v.conj() };
        }
    }
    Ok(grid.to_modes(product, proto.d, proto.n_max))
}

/// Resonance offset `Ω = |n|² - Σ_j ζ_j |n_j|²`.
pub fn resonance_offset(n: &[i64], slots: &[&[i64]]) -> i64 {
    let sq = |m: &[i64]| m.iter().map(|x| x * x).sum::<i64>();
    sq(n) - slots.iter().enumerate().map(|(j, m)| slot_sign(j) * sq(m)).sum::<i64>()
}

/// Seeded test datum `ĉ(n) = g(n) / ⟨n⟩^{s + d/2 + 0.01}` with `g` i.i.d.
/// standard complex Gaussian.
pub fn random_state(d: usize, n_max: usize, s: f64, seed: u64) -> SpectralState {
    let bx = ModeBox::new(d, n_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = s + d as f64 / 2.0 + 0.01;
    let coeffs = (0..bx.len())
        .map(|i| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * (std::f64::consts::FRAC_1_SQRT_2 / bx.bracket(i).powf(decay))
        })
        .collect();
    SpectralState { d, n_max, coeffs }
}
