mod common;

use common::*;
use ynls::paths::{make_fbm_path, make_linear_path, SamplePath};
use ynls::phi::{build_phi_table, OscillatoryTable};
use ynls::solver::{
    fit_order, holder_distance, holder_norm, reference_split_step, solve_euler_young, solve_picard, solve_picard_from,
    young_integral, Scheme, SolverConfig, Trajectory,
};
use ynls::spectral::{random_state, SpectralState};
use ynls::young::required_mu_max;

fn setup(path: &SamplePath, d: usize, k: usize, n: usize, t_end: f64, steps: usize) -> (SolverConfig, OscillatoryTable) {
    let cfg = SolverConfig::uniform(d, k, n, t_end, steps, Scheme::Picard).unwrap();
    let table = build_phi_table(path, required_mu_max(d, k, n) as i64, &cfg.partition).unwrap();
    (cfg, table)
}

fn sample(traj: &Trajectory, t: f64) -> &SpectralState {
    let i = traj.times.iter().position(|&x| (x - t).abs() < 1e-12).unwrap();
    &traj.states[i]
}

#[test]
fn riemann_sums_converge_at_the_sewing_rate() {
    // |Φ_t - Φ_s| <= t - s on a finite box, so X is Lipschitz in time and the
    // refinement error of a C^λ integrand decays like mesh^λ
    let (d, k, n, lambda) = (1, 1, 4, 0.5);
    let path = make_fbm_path(0.5, 1.0, 1 << 12, 17).unwrap();
    let psi_a = random_state(d, n, 0.5, 1);
    let psi_b = random_state(d, n, 0.5, 2);
    let g_at = |t: f64| psi_a.add(&psi_b.scaled(c(t.powf(lambda), 0.0)));
    let sums: Vec<SpectralState> = (4..=10)
        .map(|j| {
            let (cfg, table) = setup(&path, d, k, n, 1.0, 1 << j);
            let g = Trajectory::new(cfg.partition.clone(), cfg.partition.iter().map(|&t| g_at(t)).collect()).unwrap();
            young_integral(&cfg, &table, &g, 0, cfg.partition.len() - 1).unwrap()
        })
        .collect();
    let meshes: Vec<f64> = (4..10).map(|j| 0.5f64.powi(j)).collect();
    let diffs: Vec<f64> = sums.windows(2).map(|w| l2_diff(&w[0], &w[1])).collect();
    let rate = log_slope(&meshes, &diffs);
    assert!(rate >= lambda - 0.2, "refinement rate {rate}, diffs {diffs:?}");
}

#[test]
fn zero_integrand_gives_zero() {
    let path = make_fbm_path(0.5, 1.0, 64, 1).unwrap();
    let (cfg, table) = setup(&path, 1, 1, 3, 1.0, 64);
    let g = Trajectory::constant(&cfg.partition, &SpectralState::zeros(1, 3));
    let out = young_integral(&cfg, &table, &g, 3, 40).unwrap();
    assert_eq!(l2(&out), 0.0);
}

#[test]
fn picard_fixed_point_agrees_with_euler() {
    let path = make_fbm_path(0.5, 0.5, 512, 4).unwrap();
    let (cfg, table) = setup(&path, 1, 1, 6, 0.5, 256);
    let phi0 = smooth_datum(1, 6, 3, 0.5);
    let picard = solve_picard(&cfg, &phi0, &table).unwrap();
    let euler = solve_euler_young(&cfg, &phi0, &table).unwrap();
    let dist = holder_distance(&picard, &euler, cfg.lambda, cfg.s).unwrap();
    assert!(dist < 1e-8, "distance {dist}");
}

#[test]
fn fixed_point_does_not_depend_on_the_initial_iterate() {
    let path = make_fbm_path(0.5, 0.5, 128, 5).unwrap();
    let (cfg, table) = setup(&path, 1, 1, 5, 0.5, 128);
    let phi0 = smooth_datum(1, 5, 4, 0.3);
    let a = solve_picard(&cfg, &phi0, &table).unwrap();
    let junk: Vec<SpectralState> = cfg.partition.iter().enumerate().map(|(i, _)| random_state(1, 5, 1.0, i as u64)).collect();
    let b = solve_picard_from(&cfg, &phi0, &table, &Trajectory::new(cfg.partition.clone(), junk).unwrap()).unwrap();
    assert!(holder_distance(&a, &b, cfg.lambda, cfg.s).unwrap() < 1e-8);
}

#[test]
fn solution_is_lipschitz_in_the_datum() {
    let path = make_fbm_path(0.5, 0.5, 256, 6).unwrap();
    let (cfg, table) = setup(&path, 1, 1, 6, 0.5, 256);
    let phi0 = smooth_datum(1, 6, 5, 0.5);
    let dir = smooth_datum(1, 6, 6, 1.0);
    let base = solve_picard(&cfg, &phi0, &table).unwrap();
    let gain = |eps: f64| {
        let moved = solve_picard(&cfg, &phi0.add(&dir.scaled(c(eps, 0.0))), &table).unwrap();
        holder_distance(&base, &moved, cfg.lambda, cfg.s).unwrap() / eps
    };
    let (g1, g2) = (gain(1e-3), gain(1e-5));
    assert!(g1.is_finite() && g1 < 10.0, "gain {g1}");
    assert!((g1 / g2 - 1.0).abs() < 0.05, "gains {g1} vs {g2}");
}

#[test]
fn refining_the_partition_converges_at_first_order() {
    let path = make_fbm_path(0.5, 0.25, 1 << 11, 7).unwrap();
    let phi0 = smooth_datum(1, 6, 7, 0.5);
    let finals: Vec<SpectralState> = [64usize, 128, 256, 2048]
        .iter()
        .map(|&m| {
            let (cfg, table) = setup(&path, 1, 1, 6, 0.25, m);
            solve_picard(&cfg, &phi0, &table).unwrap().last().clone()
        })
        .collect();
    let errs: Vec<f64> = finals[..3].iter().map(|f| l2_diff(f, &finals[3])).collect();
    let order = fit_order(&[0.25 / 64.0, 0.25 / 128.0, 0.25 / 256.0], &errs);
    assert!((order - 1.0).abs() < 0.25, "order {order}, errors {errs:?}");
}

#[test]
fn holder_norm_stays_bounded_under_refinement() {
    let path = make_fbm_path(0.5, 0.25, 1 << 10, 8).unwrap();
    let phi0 = smooth_datum(1, 6, 8, 0.5);
    let norms: Vec<f64> = [64usize, 256, 1024]
        .iter()
        .map(|&m| {
            let (cfg, table) = setup(&path, 1, 1, 6, 0.25, m);
            holder_norm(&solve_picard(&cfg, &phi0, &table).unwrap(), cfg.lambda, cfg.s)
        })
        .collect();
    assert!(norms[2] / norms[0] < 1.5, "norms {norms:?}");
}

#[test]
fn small_data_contract_on_a_longer_horizon() {
    let path = make_fbm_path(0.5, 0.5, 512, 9).unwrap();
    let (cfg, table) = setup(&path, 1, 1, 8, 0.5, 500);
    let phi0 = smooth_datum(1, 8, 9, 1.0).scaled(c(1e-2, 0.0));
    let traj = solve_picard(&cfg, &phi0, &table).unwrap();
    let r = &traj.meta.residuals;
    assert!(r.windows(2).all(|w| w[1] < 0.5 * w[0]), "residuals {r:?}");
}

#[test]
fn partition_times_are_solution_samples() {
    // the coarse solution sampled on a sub-partition of a finer run differs by O(mesh)
    let path = make_linear_path(0.2, 400).unwrap();
    let phi0 = smooth_datum(1, 8, 10, 0.5);
    let (cc, tc) = setup(&path, 1, 1, 8, 0.2, 100);
    let (cf, tf) = setup(&path, 1, 1, 8, 0.2, 400);
    let coarse = solve_picard(&cc, &phi0, &tc).unwrap();
    let fine = solve_picard(&cf, &phi0, &tf).unwrap();
    let worst = cc.partition.iter().map(|&t| l2_diff(sample(&coarse, t), sample(&fine, t))).fold(0.0, f64::max);
    assert!(worst < 5.0 * cc.mesh(), "worst {worst}");
}

#[test]
fn split_step_has_second_order() {
    let (d, k, n, t_end) = (1, 1, 16, 0.1);
    let phi0 = smooth_datum(d, n, 11, 0.5);
    let run = |dt: f64| reference_split_step(&phi0, t_end, dt, d, k, n).unwrap().last().clone();
    let reference = run(1e-4 / 8.0);
    let dts = [4e-3, 2e-3, 1e-3];
    let errs: Vec<f64> = dts.iter().map(|&dt| l2_diff(&run(dt), &reference)).collect();
    let order = fit_order(&dts, &errs);
    assert!((order - 2.0).abs() < 0.3, "order {order}, errors {errs:?}");
}

#[test]
fn split_step_conserves_mass_per_step_on_gaussian_data() {
    let (d, k, n) = (1, 1, 16);
    let coeffs = (-16i64..=16).map(|m| c(0.3 * (-(m * m) as f64 / 2.0).exp(), 0.1 * m as f64 * (-(m * m) as f64 / 2.0).exp())).collect();
    let phi0 = SpectralState::from_coeffs(d, n, coeffs).unwrap();
    let traj = reference_split_step(&phi0, 0.1, 1e-3, d, k, n).unwrap();
    let worst = traj.states.windows(2).map(|w| (w[1].mass() - w[0].mass()).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-13, "per-step mass change {worst}");
}
