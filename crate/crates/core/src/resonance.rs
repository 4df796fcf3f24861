//! Brute-force checks of the multilinear estimates behind the fixed-point
//! argument: the resonance sets `A(μ)`, the counting identity
//! `Σ_μ 1_{A(μ)} = 1` on zero-sum tuples, and measured LHS/RHS ratios.
//!
//! Tuples are `(n_0, …, n_{2k+1})` with `n_0 - n_1 + ⋯ - n_{2k+1} = 0` and
//! `Ω = |n_0|² - |n_1|² + ⋯ - |n_{2k+1}|²`.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ModeBox, MAX_DIM};

/// Upper bound on enumerated candidate tuples unless `allow_large` is set.
const ENUMERATION_BUDGET: f64 = 2e9;

fn sign(j: usize) -> i64 {
    if j % 2 == 0 {
        1
    } else {
        -1
    }
}

fn sq(n: &[i64]) -> i64 {
    n.iter().map(|x| x * x).sum()
}

fn bracket(n: &[i64]) -> f64 {
    (1.0 + sq(n) as f64).sqrt()
}

/// Per-slot mode sets for the `2k+2` slots `n_0, …, n_{2k+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotBox {
    d: usize,
    slots: Vec<Vec<Vec<i64>>>,
}

/// All modes of `[lo, hi]^d` in row-major order (empty when `lo > hi`).
pub fn cube_modes(d: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::new();
        for prefix in &out {
            for c in lo..=hi {
                let mut m = prefix.clone();
                m.push(c);
                next.push(m);
            }
        }
        out = next;
    }
    out
}

/// The dyadic shell `{n : N ≤ ⟨n⟩ < 2N}`.
pub fn shell_modes(d: usize, n_block: usize) -> Vec<Vec<i64>> {
    let nb = n_block as f64;
    let r = 2 * n_block as i64;
    cube_modes(d, -r, r)
        .into_iter()
        .filter(|m| {
            let b = bracket(m);
            nb <= b && b < 2.0 * nb
        })
        .collect()
}

impl SlotBox {
    pub fn new(d: usize, k: usize, slots: Vec<Vec<Vec<i64>>>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) || k == 0 {
            return Err(Error::invalid(format!("unsupported (d, k) = ({d}, {k})")));
        }
        if slots.len() != 2 * k + 2 {
            return Err(Error::invalid(format!("need {} slots, got {}", 2 * k + 2, slots.len())));
        }
        if slots.iter().flatten().any(|m| m.len() != d) {
            return Err(Error::invalid("mode of the wrong dimension"));
        }
        Ok(Self { d, slots })
    }

    /// Every slot ranges over `[lo, hi]^d`.
    pub fn cube(d: usize, k: usize, lo: i64, hi: i64) -> Result<Self> {
        Self::new(d, k, vec![cube_modes(d, lo, hi); 2 * k + 2])
    }

    /// Slot `j` ranges over the dyadic shell of `blocks[j]`.
    pub fn shells(d: usize, k: usize, blocks: &[usize]) -> Result<Self> {
        check_blocks(k, blocks)?;
        Self::new(d, k, blocks.iter().map(|&b| shell_modes(d, b)).collect())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.slots.len() / 2 - 1
    }

    pub fn slot(&self, j: usize) -> &[Vec<i64>] {
        &self.slots[j]
    }

    fn candidates(&self) -> f64 {
        self.slots[1..].iter().map(|s| s.len() as f64).product()
    }

    /// Smallest and largest `Ω` any tuple of the box can have.
    pub fn omega_range(&self) -> Option<(i64, i64)> {
        let mut lo = 0;
        let mut hi = 0;
        for (j, slot) in self.slots.iter().enumerate() {
            let (min, max) = slot.iter().map(|m| sq(m)).fold(None, |acc: Option<(i64, i64)>, v| {
                Some(acc.map_or((v, v), |(a, b)| (a.min(v), b.max(v))))
            })?;
            if sign(j) > 0 {
                lo += min;
                hi += max;
            } else {
                lo -= max;
                hi -= min;
            }
        }
        Some((lo, hi))
    }

    /// Visits every tuple with `n_0 = n_1 - n_2 + ⋯ + n_{2k+1}` in slot 0,
    /// passing slot indices and `Ω`.
    fn for_each_zero_sum<F: FnMut(&[usize], i64)>(&self, mut f: F) {
        if self.slots.iter().any(|s| s.is_empty()) {
            return;
        }
        let lookup: HashMap<&[i64], usize> = self.slots[0].iter().enumerate().map(|(i, m)| (m.as_slice(), i)).collect();
        let slots = self.slots.len();
        let mut idx = vec![0usize; slots];
        let mut lin = vec![[0i64; MAX_DIM]; slots];
        let mut quad = vec![0i64; slots];
        // Odometer over slots 1..; lin[j]/quad[j] hold partial sums through slot j.
        let d = self.d;
        let recompute = |from: usize, idx: &[usize], lin: &mut [[i64; MAX_DIM]], quad: &mut [i64]| {
            for j in from..slots {
                let m = &self.slots[j][idx[j]];
                let s = -sign(j);
                let mut l = if j == 1 { [0; MAX_DIM] } else { lin[j - 1] };
                for c in 0..d {
                    l[c] += s * m[c];
                }
                lin[j] = l;
                quad[j] = if j == 1 { 0 } else { quad[j - 1] } + s * sq(m);
            }
        };
        recompute(1, &idx, &mut lin, &mut quad);
        loop {
            let n0: &[i64] = &lin[slots - 1][..d];
            if let Some(&i0) = lookup.get(n0) {
                idx[0] = i0;
                f(&idx, sq(n0) - quad[slots - 1]);
            }
            let mut j = slots - 1;
            loop {
                idx[j] += 1;
                if idx[j] < self.slots[j].len() {
                    break;
                }
                idx[j] = 0;
                j -= 1;
                if j == 0 {
                    return;
                }
            }
            recompute(j, &idx, &mut lin, &mut quad);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResonanceTuple {
    pub modes: Vec<Vec<i64>>,
    pub mu: i64,
}

impl ResonanceTuple {
    /// Re-checks both defining constraints from scratch.
    pub fn is_member(&self) -> bool {
        let d = self.modes.first().map_or(0, |m| m.len());
        let linear = (0..d).all(|c| self.modes.iter().enumerate().map(|(j, m)| sign(j) * m[c]).sum::<i64>() == 0);
        let omega: i64 = self.modes.iter().enumerate().map(|(j, m)| sign(j) * sq(m)).sum();
        linear && omega == self.mu
    }
}

/// `A(μ)` restricted to the box, found by solving the linear constraint for
/// `n_0` and filtering by `Ω = μ`.
pub fn enumerate_a(mu: i64, bx: &SlotBox) -> Vec<ResonanceTuple> {
    let mut out = Vec::new();
    bx.for_each_zero_sum(|idx, omega| {
        if omega == mu {
            let modes = idx.iter().enumerate().map(|(j, &i)| bx.slots[j][i].clone()).collect();
            out.push(ResonanceTuple { modes, mu });
        }
    });
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingReport {
    /// Tuples in the full product of the slots.
    pub tuples: usize,
    pub zero_sum: usize,
    /// `|A(μ)|` for every `μ` with a nonempty set.
    pub counts: BTreeMap<i64, usize>,
    /// Zero-sum tuples missing from every `A(μ)`.
    pub missing: usize,
    /// Tuples found in more than one `A(μ)`.
    pub multiply_covered: usize,
    /// Returned tuples violating a constraint.
    pub stray: usize,
    pub ok: bool,
}

/// Cross-checks a brute-force pass over the full product of slots against
/// the per-`μ` enumeration.
pub fn verify_counting_partition(bx: &SlotBox) -> CountingReport {
    let slots = bx.slots.len();
    let total: usize = bx.slots.iter().map(|s| s.len()).product();
    let mut brute: BTreeMap<i64, usize> = BTreeMap::new();
    let mut zero_sum = 0usize;
    if total > 0 {
        let mut idx = vec![0usize; slots];
        'outer: loop {
            let modes: Vec<&[i64]> = idx.iter().enumerate().map(|(j, &i)| bx.slots[j][i].as_slice()).collect();
            if (0..bx.d).all(|c| modes.iter().enumerate().map(|(j, m)| sign(j) * m[c]).sum::<i64>() == 0) {
                zero_sum += 1;
                let omega: i64 = modes.iter().enumerate().map(|(j, m)| sign(j) * sq(m)).sum();
                *brute.entry(omega).or_default() += 1;
            }
            let mut j = slots;
            loop {
                if j == 0 {
                    break 'outer;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < bx.slots[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
    }
    let mut seen: HashSet<Vec<Vec<i64>>> = HashSet::new();
    let mut counts = BTreeMap::new();
    let (mut multiply_covered, mut stray) = (0, 0);
    if let Some((lo, hi)) = bx.omega_range() {
        for mu in lo..=hi {
            let set = enumerate_a(mu, bx);
            if set.is_empty() {
                continue;
            }
            counts.insert(mu, set.len());
            for t in set {
                if !t.is_member() {
                    stray += 1;
                }
                if !seen.insert(t.modes) {
                    multiply_covered += 1;
                }
            }
        }
    }
    let missing = zero_sum.saturating_sub(seen.len());
    let ok = missing == 0 && multiply_covered == 0 && stray == 0 && counts == brute && seen.len() == zero_sum;
    CountingReport { tuples: total, zero_sum, counts, missing, multiply_covered, stray, ok }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateId {
    Eq21,
    Eq26,
    Eq27,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateParameters {
    pub d: usize,
    pub k: usize,
    pub s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate_id: EstimateId,
    pub parameters: EstimateParameters,
    /// LHS, RHS and ratio of the trial attaining the maximum.
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub trials: usize,
    pub max_ratio_over_trials: f64,
}

/// Inputs of the weighted convolution estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eq21Params {
    pub d: usize,
    pub k: usize,
    pub rho: f64,
    pub s: f64,
    pub s_prime: f64,
    /// 1-based slot measured in `ℓ²_{s'}`.
    pub q: usize,
    #[serde(rename = "N")]
    pub n_max: usize,
    pub trials: usize,
    pub seed: u64,
    /// Permit `(d, k) = (1, 1)`, which the estimate does not cover.
    #[serde(default)]
    pub explore: bool,
    /// Lift the default `N` caps.
    #[serde(default)]
    pub allow_large: bool,
}

impl Eq21Params {
    pub fn validate(&self) -> Result<()> {
        let (d, k) = (self.d, self.k);
        if !(1..=MAX_DIM).contains(&d) || k == 0 {
            return Err(Error::Config(format!("unsupported (d, k) = ({d}, {k})")));
        }
        if (d, k) == (1, 1) && !self.explore {
            return Err(Error::Config("(d, k) = (1, 1) is excluded; pass explore to run it anyway".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("need 0 ≤ rho ≤ 1, got {}", self.rho)));
        }
        let threshold = d as f64 / 2.0 - self.rho / k as f64;
        if self.s <= threshold {
            return Err(Error::Config(format!("need s > d/2 - rho/k = {threshold}, got s={}", self.s)));
        }
        if !(-self.s..=self.s).contains(&self.s_prime) {
            return Err(Error::Config(format!("need -s ≤ s' ≤ s, got s'={}", self.s_prime)));
        }
        if !(1..=2 * k + 1).contains(&self.q) {
            return Err(Error::Config(format!("need 1 ≤ q ≤ {}, got {}", 2 * k + 1, self.q)));
        }
        if self.trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        if !self.allow_large {
            let cap = match (d, k) {
                (1, 2) => Some(12),
                (2, 1) => Some(10),
                _ => None,
            };
            let too_big = match cap {
                Some(c) => self.n_max > c,
                None => ((2 * self.n_max + 1) as f64).powi((d * (2 * k + 1)) as i32) > ENUMERATION_BUDGET,
            };
            if too_big {
                return Err(Error::Config(format!(
                    "N={} exceeds the enumeration cap for d={d}, k={k}; set allow_large to override",
                    self.n_max
                )));
            }
        }
        Ok(())
    }
}

/// Nonnegative test functions on `[-N, N]^d`, stored trial-minor:
/// `values[mode * trials + t]`.
#[derive(Clone, Debug)]
pub struct TrialBatch {
    pub trials: usize,
    /// One entry per slot `1..=2k+1`.
    pub slots: Vec<Vec<f64>>,
}

/// `‖Σ_{n_0 = n_1 - n_2 + ⋯} ⟨Ω⟩^{-ρ} ∏_j ψ_j(n_j)‖_{ℓ²_{s'}(n_0)}` for every
/// trial of the batch.
pub fn eq21_lhs(d: usize, k: usize, n_max: usize, rho: f64, s_prime: f64, batch: &TrialBatch) -> Result<Vec<f64>> {
    let bx = ModeBox::new(d, n_max);
    let nt = batch.trials;
    if batch.slots.len() != 2 * k + 1 || batch.slots.iter().any(|v| v.len() != bx.len() * nt) {
        return Err(Error::ShapeMismatch("trial batch does not match (d, k, N)".into()));
    }
    let ext = ModeBox::new(d, (2 * k + 1) * n_max);
    let ext_half = ((2 * k + 1) * n_max) as i64;
    let ext_side = 2 * ext_half + 1;
    let omega_max = (d * n_max * n_max * ((2 * k + 1) * (2 * k + 1) + k + 1)) as i64;
    let weights: Vec<f64> = (-omega_max..=omega_max)
        .map(|o| (1.0 + (o * o) as f64).powf(-rho / 2.0))
        .collect();
    let len = bx.len();
    let slots = 2 * k + 1;

    // Fixed chunking of the first slot keeps the summation order independent
    // of the thread count.
    const CHUNKS: usize = 64;
    let chunk = len.div_ceil(CHUNKS);
    let partials: Vec<Vec<f64>> = (0..len.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; ext.len() * nt];
            let mut prods = vec![vec![0.0; nt]; slots];
            let mut lin = vec![[0i64; MAX_DIM]; slots];
            let mut quad = vec![0i64; slots];
            for m1 in c * chunk..((c + 1) * chunk).min(len) {
                let row = &batch.slots[0][m1 * nt..(m1 + 1) * nt];
                if row.iter().all(|&v| v == 0.0) {
                    continue;
                }
                prods[0].copy_from_slice(row);
                lin[0] = [0; MAX_DIM];
                lin[0][..d].copy_from_slice(bx.mode(m1));
                quad[0] = bx.norm2(m1);
                accumulate(
                    1, &bx, batch, nt, slots, d, ext_half, ext_side, omega_max, &weights, &mut prods, &mut lin,
                    &mut quad, &mut acc,
                );
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; ext.len() * nt];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let mut out = vec![0.0; nt];
    for m in 0..ext.len() {
        let w = ext.bracket(m).powf(2.0 * s_prime);
        for t in 0..nt {
            let f = total[m * nt + t];
            out[t] += w * f * f;
        }
    }
    Ok(out.into_iter().map(f64::sqrt).collect())
}

#[allow(clippy::too_many_arguments)]
fn accumulate(
    j: usize,
    bx: &ModeBox,
    batch: &TrialBatch,
    nt: usize,
    slots: usize,
    d: usize,
    ext_half: i64,
    ext_side: i64,
    omega_max: i64,
    weights: &[f64],
    prods: &mut [Vec<f64>],
    lin: &mut [[i64; MAX_DIM]],
    quad: &mut [i64],
    acc: &mut [f64],
) {
    let s = sign(j);
    let values = &batch.slots[j];
    if j + 1 == slots {
        let (prev, _) = prods.split_at(j);
        let prod = &prev[j - 1];
        for m in 0..bx.len() {
            let row = &values[m * nt..(m + 1) * nt];
            let mode = bx.mode(m);
            let mut idx = 0i64;
            let mut n0sq = 0i64;
            for c in 0..d {
                let x = lin[j - 1][c] + s * mode[c];
                n0sq += x * x;
                idx = idx * ext_side + x + ext_half;
            }
            let omega = n0sq - (quad[j - 1] + s * bx.norm2(m));
            let w = weights[(omega + omega_max) as usize];
            let out = &mut acc[idx as usize * nt..(idx as usize + 1) * nt];
            for ((o, p), v) in out.iter_mut().zip(prod).zip(row) {
                *o += w * p * v;
            }
        }
        return;
    }
    for m in 0..bx.len() {
        let row = &values[m * nt..(m + 1) * nt];
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        {
            let (prev, rest) = prods.split_at_mut(j);
            for ((o, p), v) in rest[0].iter_mut().zip(&prev[j - 1]).zip(row) {
                *o = p * v;
            }
        }
        let mode = bx.mode(m);
        let mut l = lin[j - 1];
        for c in 0..d {
            l[c] += s * mode[c];
        }
        lin[j] = l;
        quad[j] = quad[j - 1] + s * bx.norm2(m);
        accumulate(j + 1, bx, batch, nt, slots, d, ext_half, ext_side, omega_max, weights, prods, lin, quad, acc);
    }
}

/// Weighted `ℓ²_σ` norm of each trial column.
fn batch_norms(bx: &ModeBox, values: &[f64], nt: usize, sigma: f64) -> Vec<f64> {
    let mut out = vec![0.0; nt];
    for m in 0..bx.len() {
        let w = bx.bracket(m).powf(2.0 * sigma);
        for t in 0..nt {
            let v = values[m * nt + t];
            out[t] += w * v * v;
        }
    }
    out.into_iter().map(f64::sqrt).collect()
}

/// Sphere radii `R ≤ dN²` whose lattice spheres in the box are largest.
fn rich_spheres(bx: &ModeBox, count: usize) -> Vec<i64> {
    let mut sizes: BTreeMap<i64, usize> = BTreeMap::new();
    for m in 0..bx.len() {
        *sizes.entry(bx.norm2(m)).or_default() += 1;
    }
    let mut radii: Vec<(usize, i64)> = sizes.into_iter().filter(|&(r, _)| r > 0).map(|(r, c)| (c, r)).collect();
    radii.sort_by(|a, b| b.cmp(a));
    radii.into_iter().take(count).map(|(_, r)| r).collect()
}

/// Number of adversarial columns appended by [`eq21_batch`].
pub const EQ21_ADVERSARIAL: usize = 4;

/// Random trials (alternately flat and decaying `|Gaussian|` entries) followed
/// by adversarial columns: `δ_0` in every slot, then characteristic
/// functions of the three richest lattice spheres.
pub fn eq21_batch(p: &Eq21Params) -> TrialBatch {
    let bx = ModeBox::new(p.d, p.n_max);
    let slots = 2 * p.k + 1;
    let spheres = rich_spheres(&bx, EQ21_ADVERSARIAL - 1);
    let nt = p.trials + 1 + spheres.len();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut values = vec![vec![0.0; bx.len() * nt]; slots];
    for t in 0..p.trials {
        for (j, col) in values.iter_mut().enumerate() {
            let sigma = if j + 1 == p.q { p.s_prime } else { p.s };
            for m in 0..bx.len() {
                let g: f64 = StandardNormal.sample(&mut rng);
                let decay = if t % 2 == 1 { bx.bracket(m).powf(-(sigma + p.d as f64 / 2.0)) } else { 1.0 };
                col[m * nt + t] = g.abs() * decay;
            }
        }
    }
    let zero = bx.index(&vec![0; p.d]).unwrap();
    for col in values.iter_mut() {
        col[zero * nt + p.trials] = 1.0;
        for (i, &r) in spheres.iter().enumerate() {
            for m in 0..bx.len() {
                if bx.norm2(m) == r {
                    col[m * nt + p.trials + 1 + i] = 1.0;
                }
            }
        }
    }
    TrialBatch { trials: nt, slots: values }
}

/// Max over trials of the LHS/RHS ratio of the weighted convolution estimate.
pub fn estimate_ratio_eq21(p: &Eq21Params) -> Result<EstimateReport> {
    p.validate()?;
    let batch = eq21_batch(p);
    let lhs = eq21_lhs(p.d, p.k, p.n_max, p.rho, p.s_prime, &batch)?;
    let bx = ModeBox::new(p.d, p.n_max);
    let nt = batch.trials;
    let mut rhs = vec![1.0; nt];
    for (j, col) in batch.slots.iter().enumerate() {
        let sigma = if j + 1 == p.q { p.s_prime } else { p.s };
        for (r, n) in rhs.iter_mut().zip(batch_norms(&bx, col, nt, sigma)) {
            *r *= n;
        }
    }
    let best = (0..nt)
        .max_by(|&a, &b| (lhs[a] / rhs[a]).total_cmp(&(lhs[b] / rhs[b])))
        .unwrap();
    let ratio = lhs[best] / rhs[best];
    Ok(EstimateReport {
        estimate_id: EstimateId::Eq21,
        parameters: EstimateParameters {
            d: p.d,
            k: p.k,
            s: p.s,
            s_prime: Some(p.s_prime),
            rho: Some(p.rho),
            q: Some(p.q),
            n_max: Some(p.n_max),
            blocks: None,
            mu: None,
        },
        lhs: lhs[best],
        rhs: rhs[best],
        ratio,
        trials: nt,
        max_ratio_over_trials: ratio,
    })
}

fn check_blocks(k: usize, blocks: &[usize]) -> Result<()> {
    if blocks.len() != 2 * k + 2 {
        return Err(Error::invalid(format!("need {} blocks, got {}", 2 * k + 2, blocks.len())));
    }
    if blocks.iter().any(|b| !b.is_power_of_two()) {
        return Err(Error::invalid(format!("blocks must be powers of two, got {blocks:?}")));
    }
    Ok(())
}

/// Zero-sum tuples of a shell box as slot indices, grouped by `Ω`.
#[derive(Clone, Debug)]
pub struct DyadicTuples {
    pub d: usize,
    pub k: usize,
    pub blocks: Vec<usize>,
    pub supports: Vec<Vec<Vec<i64>>>,
    /// `Ω ↦` flat index tuples with stride `2k+2`.
    pub by_mu: BTreeMap<i64, Vec<u32>>,
}

impl DyadicTuples {
    pub fn new(d: usize, k: usize, blocks: &[usize], allow_large: bool) -> Result<Self> {
        let bx = SlotBox::shells(d, k, blocks)?;
        if !allow_large && bx.candidates() > ENUMERATION_BUDGET {
            return Err(Error::Config(format!("blocks {blocks:?} exceed the enumeration budget")));
        }
        let mut by_mu: BTreeMap<i64, Vec<u32>> = BTreeMap::new();
        bx.for_each_zero_sum(|idx, omega| {
            by_mu.entry(omega).or_default().extend(idx.iter().map(|&i| i as u32));
        });
        Ok(Self { d, k, blocks: blocks.to_vec(), supports: bx.slots, by_mu })
    }

    pub fn stride(&self) -> usize {
        2 * self.k + 2
    }

    /// Flat tuples for `Ω = μ`, or all of them.
    pub fn tuples(&self, mu: Option<i64>) -> Vec<u32> {
        match mu {
            Some(m) => self.by_mu.get(&m).cloned().unwrap_or_default(),
            None => self.by_mu.values().flatten().copied().collect(),
        }
    }

    /// `N_max^{-2s} ∏_j N_j^s`, the RHS for unit-norm functions.
    pub fn rhs_factor(&self, s: f64) -> f64 {
        let nmax = *self.blocks.iter().max().unwrap() as f64;
        nmax.powf(-2.0 * s) * self.blocks.iter().map(|&b| (b as f64).powf(s)).product::<f64>()
    }
}

/// `Σ_{tuples} ∏_j ψ_j(n_j)`; `psis[j]` is indexed like `supports[j]`.
pub fn dyadic_lhs(tuples: &[u32], stride: usize, psis: &[Vec<f64>]) -> f64 {
    tuples
        .chunks_exact(stride)
        .map(|t| t.iter().enumerate().map(|(j, &i)| psis[j][i as usize]).product::<f64>())
        .sum()
}

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        false
    }
}

/// Alternating maximization of the nonnegative multilinear form over unit
/// vectors: slot `i` is replaced by its normalized partial gradient, which
/// never decreases the value.
pub fn ascend(tuples: &[u32], stride: usize, psis: &mut [Vec<f64>], sweeps: usize) -> f64 {
    let mut value = dyadic_lhs(tuples, stride, psis);
    for _ in 0..sweeps {
        for i in 0..stride {
            let mut grad = vec![0.0; psis[i].len()];
            for t in tuples.chunks_exact(stride) {
                let p: f64 = t.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, &m)| psis[j][m as usize]).product();
                grad[t[i] as usize] += p;
            }
            if normalize(&mut grad) {
                psis[i] = grad;
            }
        }
        let next = dyadic_lhs(tuples, stride, psis);
        let done = next <= value * (1.0 + 1e-10);
        value = next.max(value);
        if done {
            break;
        }
    }
    value
}

/// Starting functions: trial 0 is the normalized indicator of each shell,
/// later trials are normalized `|Gaussian|` vectors.
fn dyadic_starts(supports: &[Vec<Vec<i64>>], trials: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|t| {
            supports
                .iter()
                .map(|sup| {
                    let mut v: Vec<f64> = if t == 0 {
                        vec![1.0; sup.len()]
                    } else {
                        (0..sup.len()).map(|_| StandardNormal.sample(&mut rng)).map(|g: f64| g.abs()).collect()
                    };
                    normalize(&mut v);
                    v
                })
                .collect()
        })
        .collect()
}

const ASCENT_SWEEPS: usize = 200;

fn dyadic_report(
    set: &DyadicTuples,
    estimate: EstimateId,
    mu: Option<i64>,
    s: f64,
    trials: usize,
    seed: u64,
) -> Result<EstimateReport> {
    let tuples = set.tuples(mu);
    if tuples.is_empty() {
        return Err(Error::invalid(format!(
            "no resonant tuples for blocks {:?}{}",
            set.blocks,
            mu.map_or(String::new(), |m| format!(" at mu={m}"))
        )));
    }
    let stride = set.stride();
    let rhs = set.rhs_factor(s);
    let best = dyadic_starts(&set.supports, trials, seed)
        .into_iter()
        .map(|mut psis| ascend(&tuples, stride, &mut psis, ASCENT_SWEEPS))
        .fold(0.0, f64::max);
    Ok(EstimateReport {
        estimate_id: estimate,
        parameters: EstimateParameters {
            d: set.d,
            k: set.k,
            s,
            blocks: Some(set.blocks.clone()),
            mu,
            ..Default::default()
        },
        lhs: best,
        rhs,
        ratio: best / rhs,
        trials,
        max_ratio_over_trials: best / rhs,
    })
}

/// Dyadic block estimate: `eq26` sums over `A(μ)` (μ required), `eq27` over
/// all zero-sum tuples. Test functions are unit vectors on the shells, each
/// refined by [`ascend`].
#[allow(clippy::too_many_arguments)]
pub fn dyadic_block_ratio(
    estimate: EstimateId,
    blocks: &[usize],
    mu: Option<i64>,
    d: usize,
    k: usize,
    s: f64,
    trials: usize,
    seed: u64,
) -> Result<EstimateReport> {
    let mu = match (estimate, mu) {
        (EstimateId::Eq26, None) => return Err(Error::invalid("eq26 needs a mu value")),
        (EstimateId::Eq26, m) => m,
        (EstimateId::Eq27, _) => None,
        (EstimateId::Eq21, _) => return Err(Error::invalid("eq21 is not a dyadic block estimate")),
    };
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let set = DyadicTuples::new(d, k, blocks, false)?;
    dyadic_report(&set, estimate, mu, s, trials, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuSweep {
    pub mus: Vec<i64>,
    pub ratios: Vec<f64>,
    pub max_over_min: f64,
}

/// `eq26` ratios for every attainable `μ` of the blocks.
pub fn sweep_mu(blocks: &[usize], d: usize, k: usize, s: f64, trials: usize, seed: u64) -> Result<MuSweep> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let set = DyadicTuples::new(d, k, blocks, false)?;
    let mus: Vec<i64> = set.by_mu.keys().copied().collect();
    if mus.is_empty() {
        return Err(Error::invalid(format!("no resonant tuples for blocks {blocks:?}")));
    }
    let ratios: Vec<f64> = mus
        .par_iter()
        .map(|&mu| dyadic_report(&set, EstimateId::Eq26, Some(mu), s, trials, seed).map(|r| r.ratio))
        .collect::<Result<_>>()?;
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MuSweep { mus, ratios, max_over_min: max / min })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_box_mu_zero() {
        let bx = SlotBox::cube(1, 1, 0, 1).unwrap();
        let set = enumerate_a(0, &bx);
        assert_eq!(set.len(), 6);
        for t in &set {
            assert!(t.is_member());
            let mut a = vec![t.modes[0][0], t.modes[2][0]];
            let mut b = vec![t.modes[1][0], t.modes[3][0]];
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_tuple_and_out_of_range_mu() {
        let bx = SlotBox::cube(2, 1, 0, 0).unwrap();
        assert_eq!(enumerate_a(0, &bx).len(), 1);
        assert!(enumerate_a(1, &bx).is_empty());
        let big = SlotBox::cube(1, 1, -2, 2).unwrap();
        let (lo, hi) = big.omega_range().unwrap();
        assert!(enumerate_a(hi + 1, &big).is_empty());
        assert!(enumerate_a(lo - 1, &big).is_empty());
    }

    #[test]
    fn counting_small_boxes() {
        let r = verify_counting_partition(&SlotBox::cube(1, 1, -1, 1).unwrap());
        assert!(r.ok);
        assert_eq!(r.counts.values().sum::<usize>(), r.zero_sum);
        assert_eq!(r.tuples, 81);
        let e = verify_counting_partition(&SlotBox::cube(1, 1, 1, 0).unwrap());
        assert!(e.ok && e.zero_sum == 0 && e.counts.is_empty());
    }

    #[test]
    fn eq21_deltas_give_one() {
        let p = Eq21Params {
            d: 2,
            k: 1,
            rho: 1.0,
            s: 0.3,
            s_prime: 0.0,
            q: 1,
            n_max: 2,
            trials: 2,
            seed: 1,
            explore: false,
            allow_large: false,
        };
        let mut batch = eq21_batch(&p);
        let nt = batch.trials;
        let lhs = eq21_lhs(2, 1, 2, 1.0, 0.0, &batch).unwrap();
        // Column p.trials is δ_0 in every slot.
        assert!((lhs[p.trials] - 1.0).abs() < 1e-15);
        batch.slots.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v = 0.0));
        assert!(eq21_lhs(2, 1, 2, 1.0, 0.0, &batch).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(nt, 2 + EQ21_ADVERSARIAL);
    }

    #[test]
    fn eq21_validation() {
        let mut p = Eq21Params {
            d: 1,
            k: 1,
            rho: 1.0,
            s: 0.3,
            s_prime: 0.0,
            q: 1,
            n_max: 4,
            trials: 2,
            seed: 1,
            explore: false,
            allow_large: false,
        };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        p.explore = true;
        assert!(p.validate().is_ok());
        p.s_prime = 0.5;
        assert!(p.validate().is_err());
        p.s_prime = 0.0;
        p.q = 4;
        assert!(p.validate().is_err());
        p.q = 1;
        p.s = -0.1;
        assert!(p.validate().is_err());
        let big = Eq21Params { d: 2, n_max: 11, explore: false, s: 0.3, ..p.clone() };
        assert!(big.validate().is_err());
        assert!(Eq21Params { allow_large: true, ..big }.validate().is_ok());
    }

    #[test]
    fn shells() {
        let s1 = shell_modes(2, 1);
        assert_eq!(s1.len(), 9);
        assert!(s1.iter().all(|m| sq(m) <= 2));
        let s2 = shell_modes(1, 2);
        assert_eq!(s2, vec![vec![-3], vec![-2], vec![2], vec![3]]);
        assert!(SlotBox::shells(1, 1, &[1, 3, 1, 1]).is_err());
    }

    #[test]
    fn ascent_never_decreases() {
        let set = DyadicTuples::new(2, 1, &[2, 2, 1, 1], false).unwrap();
        let tuples = set.tuples(Some(0));
        let mut psis = dyadic_starts(&set.supports, 2, 5).pop().unwrap();
        let start = dyadic_lhs(&tuples, 4, &psis);
        let end = ascend(&tuples, 4, &mut psis, 50);
        assert!(end >= start);
        for p in &psis {
            assert!((p.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dyadic_argument_errors() {
        assert!(dyadic_block_ratio(EstimateId::Eq26, &[1, 1, 1, 1], None, 1, 1, 0.1, 1, 0).is_err());
        assert!(dyadic_block_ratio(EstimateId::Eq27, &[1, 1, 1], None, 1, 1, 0.1, 1, 0).is_err());
        assert!(dyadic_block_ratio(EstimateId::Eq26, &[1, 1, 1, 1], Some(10_000), 1, 1, 0.1, 1, 0).is_err());
        let r = dyadic_block_ratio(EstimateId::Eq26, &[1, 1, 1, 1], Some(0), 2, 1, 0.1, 3, 0).unwrap();
        assert!(r.ratio > 0.0 && r.ratio.is_finite());
    }
}
