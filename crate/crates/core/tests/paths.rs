mod common;

use common::*;
use proptest::prelude::*;
use ynls::paths::{eval_path, make_constant_path, make_fbm_path, make_linear_path, make_modulated_path, uniform_grid};
use ynls::phi::phi_increment;

#[test]
fn brownian_increments_are_iid_with_variance_mesh() {
    let (m, paths) = (8usize, 10_000usize);
    let var = 1.0 / m as f64;
    let mut second = vec![0.0; m];
    let mut cross = 0.0;
    let mut end = 0.0;
    for seed in 0..paths as u64 {
        let p = make_fbm_path(0.5, 1.0, m, seed).unwrap();
        let v = p.values();
        let inc: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
        for (acc, x) in second.iter_mut().zip(&inc) {
            *acc += x * x;
        }
        cross += inc[2] * inc[5];
        end += v[m] * v[m];
    }
    let n = paths as f64;
    let sd_var = (2.0 / n).sqrt() * var;
    for acc in &second {
        assert!((acc / n - var).abs() < 3.0 * sd_var, "increment variance {}", acc / n);
    }
    assert!((cross / n).abs() < 3.0 * var / n.sqrt(), "cross moment {}", cross / n);
    assert!((end / n - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "E w(1)^2 = {}", end / n);
}

#[test]
fn fbm_covariance_matches_kernel() {
    let (h, m, paths) = (0.7, 16usize, 6_000usize);
    let (i, j) = (5usize, 12usize);
    let grid = uniform_grid(1.0, m).unwrap();
    let (s, t) = (grid[i], grid[j]);
    let kernel = 0.5 * (s.powf(2.0 * h) + t.powf(2.0 * h) - (t - s).powf(2.0 * h));
    let samples: Vec<f64> = (0..paths as u64)
        .map(|seed| {
            let p = make_fbm_path(h, 1.0, m, 1000 + seed).unwrap();
            p.values()[i] * p.values()[j]
        })
        .collect();
    let n = paths as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
    assert!((mean - kernel).abs() < 3.0 * sd, "E w(s)w(t) = {mean}, kernel {kernel}, sd {sd}");
}

#[test]
fn modulated_square_wave_matches_quadrature() {
    let profile = [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
    let (eps, t_end, m) = (0.5, 1.0, 64);
    let path = make_modulated_path(&profile, eps, t_end, m).unwrap();
    let p = profile.len();
    let interp = |x: f64| {
        let f = (x - x.floor()) * p as f64;
        let cell = (f.floor() as usize).min(p - 1);
        let u = f - cell as f64;
        profile[cell] * (1.0 - u) + profile[(cell + 1) % p] * u
    };
    let period = eps * eps;
    let knot = period / p as f64;
    let mut sup = 0.0f64;
    for (&t, &w) in path.t_grid().iter().zip(&path.raw_values()) {
        let mut edges = vec![0.0];
        let mut e = knot;
        while e < t {
            edges.push(e);
            e += knot;
        }
        edges.push(t);
        let oracle: f64 = edges
            .windows(2)
            .filter(|e| e[1] > e[0])
            .map(|e| integrate(e[0], e[1], 1, 8, |r| c(interp(r / period) / eps, 0.0)).re)
            .sum();
        assert!((w - oracle).abs() < 1e-12, "t={t}: {w} vs {oracle}");
        sup = sup.max(oracle.abs());
    }
    // mean-zero profile: w stays within eps * (largest partial integral over one period)
    assert!(sup <= eps * 0.5 + 1e-12, "sup |w| = {sup}");
}

#[test]
fn constant_path_phi_is_phase_times_length() {
    let c0 = 1.3;
    let path = make_constant_path(c0, 1.0, 10).unwrap();
    for &(a, s, t) in &[(2.0, 0.1, 0.7), (-5.5, 0.0, 1.0), (0.25, 0.33, 0.34)] {
        let got = phi_increment(&path, a, s, t).unwrap();
        let expect = num_complex::Complex64::from_polar(t - s, a * c0);
        assert!((got - expect).norm() < 1e-14);
    }
}

proptest! {
    #[test]
    fn linear_path_eval_is_identity(m in 1usize..200, x in 0.0f64..1.0) {
        let path = make_linear_path(1.0, m).unwrap();
        prop_assert!((eval_path(&path, x).unwrap() - x).abs() < 1e-14);
    }

    #[test]
    fn eval_is_linear_between_nodes(seed in 0u64..1000, cell in 0usize..32, u in 0.0f64..1.0) {
        let path = make_fbm_path(0.6, 1.0, 32, seed).unwrap();
        let g = path.t_grid();
        let v = path.values();
        let t = g[cell] + u * (g[cell + 1] - g[cell]);
        let expect = v[cell] + u * (v[cell + 1] - v[cell]);
        prop_assert!((eval_path(&path, t).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn fbm_is_deterministic_per_seed(seed in any::<u64>()) {
        let a = make_fbm_path(0.3, 2.0, 16, seed).unwrap();
        let b = make_fbm_path(0.3, 2.0, 16, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
