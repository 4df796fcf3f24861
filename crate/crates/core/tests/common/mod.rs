//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls the library's own kernels or transforms.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use ynls::paths::SamplePath;
use ynls::spectral::SpectralState;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// `∫_a^b f` by composite Gauss–Legendre with `subs` panels of `order` nodes.
pub fn integrate<F: FnMut(f64) -> Complex64>(a: f64, b: f64, subs: usize, order: usize, mut f: F) -> Complex64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / subs as f64;
    let mut acc = c(0.0, 0.0);
    for p in 0..subs {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            acc += f(lo + 0.5 * h * (xi + 1.0)) * (0.5 * h * wi);
        }
    }
    acc
}

/// Raw path value (offset included) by direct linear interpolation.
pub fn path_value(path: &SamplePath, t: f64) -> f64 {
    let g = path.t_grid();
    let v = path.raw_values();
    let j = match g.iter().position(|&x| x > t) {
        Some(0) => 0,
        Some(j) => j - 1,
        None => g.len() - 2,
    };
    v[j] + (v[j + 1] - v[j]) * (t - g[j]) / (g[j + 1] - g[j])
}

/// `Φ_t(a) - Φ_s(a)` by dense quadrature, panel edges aligned to path nodes.
pub fn phi_quadrature(path: &SamplePath, a: f64, s: f64, t: f64) -> Complex64 {
    let g = path.t_grid();
    let mut acc = c(0.0, 0.0);
    let mut edges = vec![s];
    edges.extend(g.iter().copied().filter(|&x| x > s && x < t));
    edges.push(t);
    for e in edges.windows(2) {
        acc += integrate(e[0], e[1], 4, 24, |r| Complex64::from_polar(1.0, a * path_value(path, r)));
    }
    acc
}

/// Modes of `[-N, N]^d`, first coordinate most significant.
pub fn box_modes(d: usize, n: usize) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::new();
        for p in &out {
            for x in -(n as i64)..=n as i64 {
                let mut m = p.clone();
                m.push(x);
                next.push(m);
            }
        }
        out = next;
    }
    out
}

fn sq(n: &[i64]) -> i64 {
    n.iter().map(|x| x * x).sum()
}

/// Values on the uniform grid of `L^d` points by a naive sum.
pub fn to_grid(state: &SpectralState, l: usize) -> Vec<Complex64> {
    let d = state.d();
    let modes = box_modes(d, state.n_max());
    let pts = l.pow(d as u32);
    (0..pts)
        .map(|p| {
            let mut x = vec![0usize; d];
            let mut r = p;
            for i in (0..d).rev() {
                x[i] = r % l;
                r /= l;
            }
            modes
                .iter()
                .zip(state.coeffs())
                .map(|(m, cf)| {
                    let phase: f64 = m.iter().zip(&x).map(|(&mi, &xi)| mi as f64 * xi as f64).sum::<f64>() * 2.0 * PI
                        / l as f64;
                    cf * Complex64::from_polar(1.0, phase)
                })
                .sum()
        })
        .collect()
}

/// Fourier coefficients on `[-N, N]^d` of grid values by a naive sum.
pub fn from_grid(values: &[Complex64], l: usize, d: usize, n: usize) -> SpectralState {
    let pts = l.pow(d as u32);
    let coeffs = box_modes(d, n)
        .iter()
        .map(|m| {
            let mut acc = c(0.0, 0.0);
            for (p, v) in values.iter().enumerate() {
                let mut r = p;
                let mut phase = 0.0;
                for i in (0..d).rev() {
                    phase += m[i] as f64 * (r % l) as f64;
                    r /= l;
                }
                acc += v * Complex64::from_polar(1.0, -phase * 2.0 * PI / l as f64);
            }
            acc / pts as f64
        })
        .collect();
    SpectralState::from_coeffs(d, n, coeffs).unwrap()
}

/// Galerkin product `P_N(u_1 ū_2 u_3 ū_4 ⋯ u_{2k+1})` through point values on a
/// grid of `(2k+2)N+1` points per axis, which is alias-free for the box.
pub fn product_oracle(states: &[&SpectralState]) -> SpectralState {
    let d = states[0].d();
    let n = states[0].n_max();
    let l = (states.len() + 1) * n + 1;
    let grids: Vec<Vec<Complex64>> = states.iter().map(|s| to_grid(s, l)).collect();
    let prod: Vec<Complex64> = (0..grids[0].len())
        .map(|p| {
            grids
                .iter()
                .enumerate()
                .map(|(j, g)| if j % 2 == 1 { g[p].conj() } else { g[p] })
                .product()
        })
        .collect();
    from_grid(&prod, l, d, n)
}

/// `e^{∓i|n|² w}` applied mode by mode.
pub fn rotate(state: &SpectralState, w: f64, sign: f64) -> SpectralState {
    let modes = box_modes(state.d(), state.n_max());
    let coeffs = modes
        .iter()
        .zip(state.coeffs())
        .map(|(m, cf)| cf * Complex64::from_polar(1.0, sign * sq(m) as f64 * w))
        .collect();
    SpectralState::from_coeffs(state.d(), state.n_max(), coeffs).unwrap()
}

/// `-i ∫_s^t U^{-w(τ)} 𝒩(U^{w(τ)} ψ_1, …) dτ` by composite Gauss–Legendre
/// on every path segment, with the product taken in physical space.
pub fn duhamel_oracle(path: &SamplePath, s: f64, t: f64, states: &[&SpectralState], subs: usize, order: usize) -> SpectralState {
    let d = states[0].d();
    let n = states[0].n_max();
    let g = path.t_grid();
    let mut edges = vec![s];
    edges.extend(g.iter().copied().filter(|&x| x > s && x < t));
    edges.push(t);
    let (x, wts) = gauss_legendre(order);
    let mut acc = SpectralState::zeros(d, n);
    for e in edges.windows(2) {
        let h = (e[1] - e[0]) / subs as f64;
        for p in 0..subs {
            let lo = e[0] + p as f64 * h;
            for (xi, wi) in x.iter().zip(&wts) {
                let tau = lo + 0.5 * h * (xi + 1.0);
                let w = path_value(path, tau);
                let rotated: Vec<SpectralState> = states.iter().map(|st| rotate(st, w, -1.0)).collect();
                let refs: Vec<&SpectralState> = rotated.iter().collect();
                let back = rotate(&product_oracle(&refs), w, 1.0);
                acc.axpy(c(0.0, -0.5 * h * wi), &back);
            }
        }
    }
    acc
}

pub fn l2_diff(a: &SpectralState, b: &SpectralState) -> f64 {
    a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn l2(a: &SpectralState) -> f64 {
    a.coeffs().iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖ψ‖_{H^s}` by its definition.
pub fn hs(a: &SpectralState, s: f64) -> f64 {
    box_modes(a.d(), a.n_max())
        .iter()
        .zip(a.coeffs())
        .map(|(m, cf)| (1.0 + sq(m) as f64).powf(s) * cf.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Smooth datum `g(n) e^{-|n|²/8}` with seeded pseudo-random `g`, scaled to
/// `‖·‖_{H^1} = target`.
pub fn smooth_datum(d: usize, n: usize, seed: u64, target: f64) -> SpectralState {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let coeffs: Vec<Complex64> = box_modes(d, n)
        .iter()
        .map(|m| c(next(), next()) * (-(sq(m) as f64) / 8.0).exp())
        .collect();
    let raw = SpectralState::from_coeffs(d, n, coeffs).unwrap();
    let scale = target / hs(&raw, 1.0);
    raw.scaled(c(scale, 0.0))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}
