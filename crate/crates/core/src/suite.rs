//! The solve pipeline and the property suite run by `verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Mutation, RunSetup};
use crate::degiorgi::{
    caccioppoli_check, calibrate_faber_krahn, faber_krahn_exponent, mean_value_check, norm_decay_check,
    run_iteration, CaccioppoliReport, CutOff, IterationSetup, IterationTrace, MeanValueReport, NormDecayReport,
    Verdict,
};
use crate::error::{Error, Result};
use crate::grid::{FluxMode, Operator, StateField};
use crate::integrator::{integrate, run_continuation, ContinuationOutcome, Trajectory};
use crate::monitors::{
    comparison_check, energy_balance, mass_accounting, minimum_value, norm_monotonicity, COMPARISON_TOL,
    ENERGY_TOL, MASS_TOL, NONNEG_TOL, NORM_TOL,
};

/// Result of the solve pipeline.
#[derive(Debug, Clone)]
pub struct Solution {
    pub continuation: Option<ContinuationOutcome>,
    /// Set when the continuation ran but its distances did not shrink.
    pub stalled: Option<String>,
    pub limit: Trajectory,
}

fn limit_operator(setup: &RunSetup, mutation: Mutation) -> Operator<'_> {
    let op = Operator::new(&setup.grid, setup.params, FluxMode::Limit);
    match mutation {
        Mutation::None => op,
        Mutation::FlippedFlux => op.with_flipped_flux(),
    }
}

fn mutation(setup: &RunSetup) -> Mutation {
    setup.resolved.diagnostics.mutation
}

/// Limit-mode run from `u0` under the configured operator.
pub fn run_limit_from(setup: &RunSetup, u0: &StateField) -> Result<Trajectory> {
    let start = StateField::new(u0.values().to_vec(), u0.time(), 0.0)?;
    integrate(&limit_operator(setup, mutation(setup)), start, &setup.time, setup.snapshot_every)
}

/// N-continuation (when configured) followed by the limit-mode run.
pub fn solve(setup: &RunSetup) -> Result<Solution> {
    let schedule = match (&setup.schedule, mutation(setup)) {
        (Some(s), Mutation::None) => s,
        _ => {
            return Ok(Solution {
                continuation: None,
                stalled: None,
                limit: run_limit_from(setup, &setup.u0)?,
            })
        }
    };
    match run_continuation(&setup.grid, &setup.u0, &setup.params, schedule, &setup.time, setup.snapshot_every) {
        Ok(outcome) => {
            let limit = outcome.limit.clone();
            Ok(Solution {
                continuation: Some(outcome),
                stalled: None,
                limit,
            })
        }
        Err(e @ Error::ContinuationStalled { .. }) => Ok(Solution {
            continuation: None,
            stalled: Some(e.to_string()),
            limit: run_limit_from(setup, &setup.u0)?,
        }),
        Err(e) => Err(e),
    }
}

/// Ordered pairs `(upper, lower)` with `lower = w · upper`, where `w` is a
/// random smooth multiplier with values in `[0.1, 0.9]`.
pub fn random_pairs(setup: &RunSetup, count: usize, seed: u64) -> Vec<(StateField, StateField)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = setup.grid.radius();
    (0..count)
        .map(|_| {
            let freq: f64 = rng.random_range(0.5..3.0);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let lower: Vec<f64> = setup
                .grid
                .nodes()
                .iter()
                .zip(setup.u0.values())
                .map(|(&r, &u)| u * (0.5 + 0.4 * (std::f64::consts::TAU * freq * r / radius + phase).sin()))
                .collect();
            let lower = StateField::new(lower, 0.0, 0.0).expect("finite data");
            (setup.u0.clone(), lower)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorResult {
    pub monitor: &'static str,
    pub passed: bool,
    pub skipped: bool,
    /// The monitored quantity; its meaning is given in `detail`.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl MonitorResult {
    fn check(monitor: &'static str, passed: bool, value: f64, tolerance: f64, detail: String) -> Self {
        Self {
            monitor,
            passed,
            skipped: false,
            value,
            tolerance,
            detail,
        }
    }

    fn skip(monitor: &'static str, why: impl Into<String>) -> Self {
        Self {
            monitor,
            passed: true,
            skipped: true,
            value: f64::NAN,
            tolerance: f64::NAN,
            detail: why.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub solution: Solution,
    pub monitors: Vec<MonitorResult>,
    pub ladder: Option<IterationTrace>,
    pub mean_value: Option<MeanValueReport>,
    pub caccioppoli: Option<CaccioppoliReport>,
    pub norm_decay: Option<NormDecayReport>,
    /// Worst comparison slack over the pairs.
    pub comparison_slack: Option<f64>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.monitors.iter().all(|m| m.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.monitors.iter().filter(|m| !m.passed).map(|m| m.monitor).collect()
    }
}

/// `σ = max(p, pq)`, the range where the Caccioppoli inequality holds.
pub fn energy_sigma(setup: &RunSetup) -> f64 {
    let (p, q) = (setup.params.p(), setup.params.q());
    p.max(p * q)
}

/// Worst slack of the comparison inequality over `pairs`.
pub fn comparison_slack(setup: &RunSetup, pairs: &[(StateField, StateField)]) -> Result<f64> {
    let runs: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|(upper, lower)| {
                scope.spawn(move || {
                    let a = run_limit_from(setup, upper)?;
                    let b = run_limit_from(setup, lower)?;
                    Ok(comparison_check(&setup.grid, &a, &b).slack)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("comparison worker panicked")).collect()
    });
    let mut worst = f64::INFINITY;
    for r in runs {
        worst = worst.min(r?);
    }
    Ok(worst)
}

/// Cut-offs and level pairs used by the Caccioppoli monitor, scaled to the
/// domain radius and the solution maximum.
pub fn caccioppoli_probes(radius: f64, peak: f64) -> (Vec<(f64, f64)>, Vec<CutOff>) {
    let levels = vec![(0.1 * peak, 0.3 * peak), (0.3 * peak, 0.6 * peak), (0.05 * peak, 0.5 * peak)];
    let cuts = [(0.15, 0.45), (0.25, 0.75), (0.0, 0.6), (0.4, 1.0)]
        .iter()
        .map(|&(a, b)| CutOff::new(a * radius, b * radius).expect("ordered"))
        .collect();
    (levels, cuts)
}

/// Ladder and mean-value setup for a ball of radius `radius`.
pub fn iteration_setup(setup: &RunSetup, radius: f64) -> Result<IterationSetup> {
    let d = &setup.resolved.diagnostics;
    let p = setup.params.p();
    let n = setup.grid.manifold().dimension();
    let nu = faber_krahn_exponent(n, p);
    let cells = setup.grid.nodes_below(radius).max(200);
    let iota = calibrate_faber_krahn(setup.grid.manifold(), radius, p, nu, cells)?;
    let mut s = IterationSetup::new(&setup.params, energy_sigma(setup), radius, nu, iota)?
        .with_constant(d.mean_value_constant)
        .with_k_max(d.k_max);
    s.rho_max = d.rho_max;
    Ok(s)
}

/// Runs the solve pipeline and every enabled monitor.
pub fn verify(setup: &RunSetup) -> Result<VerifyReport> {
    let d = setup.resolved.diagnostics;
    let solution = solve(setup)?;
    let traj = &solution.limit;
    let mut monitors = Vec::new();

    let comparison_slack = if d.comparison && d.comparison_pairs > 0 {
        let pairs = random_pairs(setup, d.comparison_pairs, setup.resolved.seed);
        let slack = comparison_slack(setup, &pairs)?;
        monitors.push(MonitorResult::check(
            "comparison principle",
            slack >= -COMPARISON_TOL,
            slack,
            COMPARISON_TOL,
            format!("min over {} pairs of ∫(v0-u0)₊² - max_t ∫(v-u)₊²", pairs.len()),
        ));
        Some(slack)
    } else {
        monitors.push(MonitorResult::skip("comparison principle", "disabled"));
        None
    };

    if d.norms {
        let rep = norm_monotonicity(traj);
        let worst = rep.worst_increase.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let detail = match rep.first_failure(NORM_TOL) {
            Some(label) => format!("{label} increased"),
            None => "largest per-step increase of L1, L2, Lq+1, Linf".into(),
        };
        monitors.push(MonitorResult::check("norm monotonicity", rep.passed(NORM_TOL), worst, NORM_TOL, detail));
    } else {
        monitors.push(MonitorResult::skip("norm monotonicity", "disabled"));
    }

    monitors.push(MonitorResult::check(
        "non-negativity",
        minimum_value(traj) >= -NONNEG_TOL,
        minimum_value(traj),
        NONNEG_TOL,
        "minimum over every step".into(),
    ));

    if d.energy {
        let rep = energy_balance(traj);
        monitors.push(MonitorResult::check(
            "energy identity",
            rep.passed(ENERGY_TOL),
            rep.relative,
            ENERGY_TOL,
            "relative imbalance of ½∫u² against the dissipation".into(),
        ));
    } else {
        monitors.push(MonitorResult::skip("energy identity", "disabled"));
    }

    if d.mass {
        let rep = mass_accounting(traj);
        monitors.push(MonitorResult::check(
            "mass accounting",
            rep.passed(MASS_TOL),
            rep.worst_relative,
            MASS_TOL,
            "per-step |ΔΣVu - dt·boundary flux| relative".into(),
        ));
    } else {
        monitors.push(MonitorResult::skip("mass accounting", "disabled"));
    }

    match (&solution.continuation, &solution.stalled) {
        (Some(c), _) => {
            let worst_low = c.levels.iter().map(|l| l.barriers.min_excess).fold(f64::INFINITY, f64::min);
            let low_ok = c.levels.iter().all(|l| l.barriers.lower_ok());
            monitors.push(MonitorResult::check(
                "lower barrier",
                low_ok,
                worst_low,
                -crate::integrator::BARRIER_TOL,
                "min over levels of min(u - 1/N)".into(),
            ));
            let worst_high = c
                .levels
                .iter()
                .map(|l| l.barriers.max_value - l.barriers.ceiling)
                .fold(f64::NEG_INFINITY, f64::max);
            monitors.push(MonitorResult::check(
                "upper barrier",
                c.levels.iter().all(|l| l.barriers.upper_ok()),
                worst_high,
                crate::integrator::BARRIER_TOL,
                "max over levels of max u - (‖u0‖∞ + 1/N)".into(),
            ));
            let gap = c.last_gap().unwrap_or(0.0);
            monitors.push(MonitorResult::check(
                "N-continuation",
                true,
                c.limit_distance,
                2.0 * gap,
                "distance of the limit run to the last level".into(),
            ));
        }
        (None, Some(reason)) => {
            monitors.push(MonitorResult::skip("lower barrier", "continuation stalled"));
            monitors.push(MonitorResult::skip("upper barrier", "continuation stalled"));
            monitors.push(MonitorResult::check("N-continuation", false, f64::NAN, f64::NAN, reason.clone()));
        }
        (None, None) => {
            for m in ["lower barrier", "upper barrier", "N-continuation"] {
                monitors.push(MonitorResult::skip(m, "continuation disabled"));
            }
        }
    }

    let sigma_e = energy_sigma(setup);
    let peak = traj.running_max().max(traj.initial().max());
    let caccioppoli = if d.caccioppoli && peak > 0.0 {
        let (levels, cuts) = caccioppoli_probes(setup.grid.radius(), peak);
        let rep = caccioppoli_check(traj, &setup.grid, sigma_e, &levels, &cuts, (traj.start_time(), traj.end_time()))?;
        monitors.push(MonitorResult::check(
            "Caccioppoli inequality",
            rep.passed(),
            rep.worst_ratio,
            1.0,
            format!("max lhs/rhs over {} probes, sigma = {sigma_e}", rep.samples.len()),
        ));
        Some(rep)
    } else {
        monitors.push(MonitorResult::skip(
            "Caccioppoli inequality",
            if d.caccioppoli { "zero data" } else { "disabled" },
        ));
        None
    };

    let norm_decay = if d.caccioppoli && peak > 0.0 {
        let rep = norm_decay_check(traj, &setup.grid, sigma_e, 4)?;
        monitors.push(MonitorResult::check(
            "norm decay inequality",
            rep.passed(),
            rep.c1_min,
            0.0,
            "smallest fitted c1 over four windows".into(),
        ));
        Some(rep)
    } else {
        monitors.push(MonitorResult::skip("norm decay inequality", "disabled or zero data"));
        None
    };

    let (mut ladder, mut mean_value) = (None, None);
    let radius = setup.resolved.diagnostics.degiorgi_radius;
    let b = traj.initial().boundary_value();
    let vanishes = |r: f64| {
        let k = setup.grid.nodes_below(r);
        traj.initial().values()[..k].iter().all(|&v| v - b == 0.0)
    };
    match radius {
        Some(r) if d.degiorgi && vanishes(r) => {
            let it = iteration_setup(setup, r)?;
            let mv = mean_value_check(traj, &setup.grid, &it)?;
            // The ladder runs at the equality case of this run, θ = sup u on
            // the half ball, the most demanding admissible level.
            let tight = if mv.c_star > 0.0 { it.with_constant(mv.c_star) } else { it };
            let trace = run_iteration(traj, &setup.grid, &tight)?;
            monitors.push(MonitorResult::check(
                "De Giorgi ladder",
                trace.verdict == Verdict::GeometricDecay,
                trace.rho,
                it.rho_max,
                format!("largest J_(k+1)/J_k; recursion ratio {:.3e}", trace.recursion_ratio),
            ));
            monitors.push(MonitorResult::check(
                "mean value inequality",
                mv.lhs <= mv.rhs * (1.0 + 1e-12),
                mv.ratio,
                1.0,
                format!("sup u on the half ball over the bound; fitted C* = {:.4e}", mv.c_star),
            ));
            ladder = Some(trace);
            mean_value = Some(mv);
        }
        _ => {
            let why = if !d.degiorgi {
                "disabled"
            } else if radius.is_none() {
                "no ball radius"
            } else {
                "data do not vanish on the ball"
            };
            monitors.push(MonitorResult::skip("De Giorgi ladder", why));
            monitors.push(MonitorResult::skip("mean value inequality", why));
        }
    }

    Ok(VerifyReport {
        solution,
        monitors,
        ladder,
        mean_value,
        caccioppoli,
        norm_decay,
        comparison_slack,
    })
}
