use std::f64::consts::PI;
use std::path::Path;

use leibenson_core::config::{InitialTable, RunConfig};
use leibenson_core::integrator::{run_continuation, run_limit, space_time_l1};
use leibenson_core::oracle::{oracle_residual, BarenblattFamily, BarenblattProfile};
use leibenson_core::propagation::{dead_core_time, fit_rate, SupportTrace};
use leibenson_core::suite::run_limit_from;
use leibenson_core::{
    build_grid, ContinuationSchedule, Error, Grading, LeibensonParams, ModelManifold, StateField, TimeStepConfig,
};

#[test]
fn heat_mode_decays_at_its_eigenvalue() {
    // cos(πr/2) on (0, 1) with u(1) = 0 decays like exp(-π²t/4).
    let g = build_grid(&ModelManifold::euclidean(1), 1.0, 400, Grading::Uniform).unwrap();
    let params = LeibensonParams::new(2.0, 1.0).unwrap();
    let u0 = StateField::new(g.sample(|r| (0.5 * PI * r).cos()), 0.0, 0.0).unwrap();
    let cfg = TimeStepConfig::new(1e-4, 0.2);
    let traj = run_limit(&g, &u0, &params, &cfg, 100).unwrap();
    let expect = (-PI * PI / 4.0 * 0.2).exp();
    let got = traj.last().values()[0];
    assert!((got - expect).abs() < 1e-3 * expect, "{got} vs {expect}");
}

#[test]
fn barenblatt_residual_shrinks_with_refinement() {
    let profile = BarenblattProfile::with_support(BarenblattFamily::PorousMedium { q: 2.0 }, 1, 0.3, 0.05).unwrap();
    let res: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&m| {
            let g = build_grid(&ModelManifold::euclidean(1), 1.0, m, Grading::Uniform).unwrap();
            oracle_residual(&profile, &g, 0.0, 1e-6, 0.8)
        })
        .collect();
    assert!(res[1] < 0.6 * res[0] && res[2] < 0.6 * res[1], "{res:?}");
}

#[test]
fn continuation_converges_to_limit() {
    let g = build_grid(&ModelManifold::euclidean(1), 1.0, 100, Grading::Uniform).unwrap();
    let params = LeibensonParams::new(3.0, 1.0).unwrap();
    let u0 = StateField::new(g.sample(|r| (1.0 - 4.0 * r * r).max(0.0)), 0.0, 0.0).unwrap();
    let cfg = TimeStepConfig::new(1e-3, 0.1);
    let out = run_continuation(&g, &u0, &params, &ContinuationSchedule::default_ladder(), &cfg, 1).unwrap();
    let gaps: Vec<f64> = out.levels.iter().filter_map(|l| l.distance).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(out.limit_distance <= 2.0 * out.last_gap().unwrap());
    // Relative to the size of the solution, the last level is already close.
    assert!(out.limit_distance / space_time_l1(&g, &out.limit) < 1e-3);
    for l in &out.levels {
        assert!(l.barriers.passed(), "N = {}", l.reg.n());
        assert!(l.truncation_inactive);
    }
}

#[test]
fn continuation_requires_pq_at_least_one() {
    let g = build_grid(&ModelManifold::euclidean(1), 1.0, 20, Grading::Uniform).unwrap();
    let params = LeibensonParams::new(1.5, 0.5).unwrap();
    let u0 = StateField::zeros(&g);
    let cfg = TimeStepConfig::new(1e-3, 0.01);
    let err = run_continuation(&g, &u0, &params, &ContinuationSchedule::default_ladder(), &cfg, 1).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
}

#[test]
fn zero_data_stay_zero() {
    let g = build_grid(&ModelManifold::hyperbolic(2), 1.0, 30, Grading::Uniform).unwrap();
    let params = LeibensonParams::new(2.5, 0.8).unwrap();
    let traj = run_limit(&g, &StateField::zeros(&g), &params, &TimeStepConfig::new(1e-3, 0.05), 1).unwrap();
    assert!(traj.snapshots.iter().all(|s| s.values().iter().all(|&v| v == 0.0)));
}

#[test]
fn fast_diffusion_empties_the_domain() {
    let g = build_grid(&ModelManifold::euclidean(1), 1.0, 100, Grading::Uniform).unwrap();
    let params = LeibensonParams::new(1.5, 1.0).unwrap();
    let u0 = StateField::new(g.sample(|r| 1.0 - r * r), 0.0, 0.0).unwrap();
    let cfg = TimeStepConfig::new(1e-3, 5.0).with_growth(0.02, 0.1);
    let traj = run_limit(&g, &u0, &params, &cfg, 10).unwrap();
    assert_eq!(traj.last().max(), 0.0);
}

fn rate_config(cells: usize) -> RunConfig {
    let text = format!(
        "[manifold]\nkind = \"euclidean\"\ndimension = 1\n[equation]\np = 3.0\nq = 1.0\n\
         [grid]\nradius = 1.0\ncells = {cells}\n[time]\nt_end = 1.0\n[continuation]\nenabled = false\n\
         [initial]\nkind = \"bump\"\nwidth = 0.05\namplitude = 1.0\n"
    );
    RunConfig::from_toml_str(&text, Path::new(".")).unwrap()
}

#[test]
fn dead_core_time_grows_with_radius_and_shrinks_with_amplitude() {
    let base = rate_config(200);
    let t0 = |b0: f64, a: f64| {
        let s = base.dead_core_layout(b0, a).prepare().unwrap();
        let traj = run_limit_from(&s, &s.u0).unwrap();
        dead_core_time(&traj, &s.grid, b0, 1e-6 * a).unwrap()
    };
    let by_radius = [t0(0.5, 1.0), t0(1.0, 1.0), t0(2.0, 1.0)];
    let by_amp = [t0(1.0, 0.5), t0(1.0, 1.0), t0(1.0, 2.0)];
    assert!(by_radius.windows(2).all(|w| w[1] > w[0]), "{by_radius:?}");
    assert!(by_amp.windows(2).all(|w| w[1] < w[0]), "{by_amp:?}");
}

#[test]
fn rate_fit_recovers_a_synthetic_power_law() {
    // ρ = 0.01 t^{1/4}, the p = 3, q = 1 rate on the line.
    let times: Vec<f64> = (0..400).map(|k| 1e-3 * 1.05f64.powi(k)).collect();
    let support_radius: Vec<f64> = times.iter().map(|t| (0.01 * t.powf(0.25)).min(1.0)).collect();
    let trace = SupportTrace {
        times,
        support_radius,
        threshold: 1e-8,
        domain_radius: 1.0,
    };
    let params = LeibensonParams::new(3.0, 1.0).unwrap();
    let fit = fit_rate(&trace, &params, &ModelManifold::euclidean(1), 1.0).unwrap();
    assert!((fit.beta_hat - 4.0).abs() < 1e-9, "{fit:?}");
    assert_eq!(fit.beta_theory, 4.0);
}

#[test]
fn config_round_trips_through_the_manifest() {
    let cfg = rate_config(64);
    let resolved = cfg.prepare().unwrap().resolved;
    let again = RunConfig::from_toml_str(&resolved.to_toml().unwrap(), Path::new(".")).unwrap();
    let a = resolved.prepare().unwrap();
    let b = again.prepare().unwrap();
    assert_eq!(a.u0.values(), b.u0.values());
    assert_eq!(a.time.dt, b.time.dt);
    assert_eq!(a.sigma, b.sigma);
}

#[test]
fn initial_table_interpolates_and_vanishes_outside() {
    let t = InitialTable::parse("# r u\n0 1\n0.5 0.5\n1 0\n").unwrap();
    assert_eq!(t.eval(0.25), 0.75);
    assert_eq!(t.eval(2.0), 0.0);
    for bad in ["0 1\n0 2\n", "0.1 1\n1 0\n", "0 -1\n1 0\n", "0 1\n1 x\n", "0 1 2\n1 0\n"] {
        assert!(InitialTable::parse(bad).is_err(), "{bad:?}");
    }
}
