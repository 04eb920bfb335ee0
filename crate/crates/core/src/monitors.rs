//! Structural checks on finished trajectories: comparison, L^λ monotonicity,
//! the discrete energy identity, mass accounting and non-negativity.

use crate::integrator::Trajectory;
use crate::grid::RadialGrid;

/// Default tolerances of the individual monitors.
pub const COMPARISON_TOL: f64 = 1e-8;
pub const NORM_TOL: f64 = 1e-8;
pub const ENERGY_TOL: f64 = 1e-6;
pub const MASS_TOL: f64 = 1e-10;
pub const NONNEG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    /// `Σ V (v₀ - u₀)₊²`.
    pub initial: f64,
    /// `max_t Σ V (v - u)₊²`.
    pub worst: f64,
    /// `initial - worst`; the inequality holds when `slack ≥ -tol`.
    pub slack: f64,
}

impl ComparisonReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.slack >= -tol
    }
}

fn positive_part_sq(vols: &[f64], upper: &[f64], lower: &[f64]) -> f64 {
    vols.iter()
        .zip(upper.iter().zip(lower))
        .map(|(w, (v, u))| {
            let d = (v - u).max(0.0);
            w * d * d
        })
        .sum()
}

/// Checks `Σ V (v - u)₊²(t) ≤ Σ V (v₀ - u₀)₊²` at every snapshot of `upper`,
/// with `lower` interpolated to the same times.
pub fn comparison_check(grid: &RadialGrid, lower: &Trajectory, upper: &Trajectory) -> ComparisonReport {
    let vols = grid.cell_volumes();
    let initial = positive_part_sq(vols, upper.initial().values(), lower.initial().values());
    let mut worst = initial;
    for s in upper.snapshots.iter().skip(1) {
        let u = lower.state_at(s.time());
        worst = worst.max(positive_part_sq(vols, s.values(), &u));
    }
    ComparisonReport {
        initial,
        worst,
        slack: initial - worst,
    }
}

/// Labels for the four monitored norms.
pub const NORM_LABELS: [&str; 4] = ["L1", "L2", "Lq+1", "Linf"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    /// Largest single-step increase of each norm (negative when every step
    /// decreased it).
    pub worst_increase: [f64; 4],
    /// Time of the worst step, per norm.
    pub worst_time: [f64; 4],
}

impl NormReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.worst_increase.iter().all(|&d| d <= tol)
    }

    /// The first norm whose trace went up by more than `tol`.
    pub fn first_failure(&self, tol: f64) -> Option<&'static str> {
        self.worst_increase.iter().position(|&d| d > tol).map(|i| NORM_LABELS[i])
    }
}

pub fn norm_monotonicity(traj: &Trajectory) -> NormReport {
    let mut worst = [f64::NEG_INFINITY; 4];
    let mut when = [traj.start_time(); 4];
    let mut prev = traj.initial_norms.as_array();
    for s in &traj.steps {
        let now = s.norms.as_array();
        for k in 0..4 {
            let d = now[k] - prev[k];
            if d > worst[k] {
                worst[k] = d;
                when[k] = s.time;
            }
        }
        prev = now;
    }
    if traj.steps.is_empty() {
        worst = [0.0; 4];
    }
    NormReport {
        worst_increase: worst,
        worst_time: when,
    }
}

/// Discrete form of `[∫G(u)]₀ᵗ + ∫∫⟨A, ∇u⟩ = 0` with `G(s) = ½(s - b)²`.
/// Implicit Euler adds the non-negative term `½ Σ V (u⁺ - u)²` per step,
/// which is accounted for separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub dissipation: f64,
    pub numerical_dissipation: f64,
    /// `final - initial + dissipation + numerical`.
    pub imbalance: f64,
    pub relative: f64,
}

impl EnergyReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.relative <= tol
    }
}

pub fn energy_balance(traj: &Trajectory) -> EnergyReport {
    let initial = traj.initial_energy;
    let last = traj.steps.last().map_or(initial, |s| s.energy);
    let dissipation: f64 = traj.steps.iter().map(|s| s.dissipation).sum();
    let numerical: f64 = traj.steps.iter().map(|s| s.numerical_dissipation).sum();
    let imbalance = last - initial + dissipation + numerical;
    let scale = initial.max(dissipation.abs() + numerical).max(f64::MIN_POSITIVE);
    EnergyReport {
        initial_energy: initial,
        final_energy: last,
        dissipation,
        numerical_dissipation: numerical,
        imbalance,
        relative: if initial == 0.0 && dissipation == 0.0 && numerical == 0.0 {
            0.0
        } else {
            imbalance.abs() / scale
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassReport {
    /// `max_step |Σ V Δu - dt · T_boundary| / max(Σ V |u⁺|, ‖u₀‖₁)`; the data
    /// mass keeps the ratio meaningful as a fast-diffusion run dies out.
    pub worst_relative: f64,
    pub worst_time: f64,
    /// Net change of `Σ_{i<M} V u` over the run.
    pub total_change: f64,
}

impl MassReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.worst_relative <= tol
    }
}

pub fn mass_accounting(traj: &Trajectory) -> MassReport {
    let mut worst = 0.0;
    let mut when = traj.start_time();
    let mut total = 0.0;
    let data = traj.initial_norms.l1;
    for s in &traj.steps {
        total += s.mass_change;
        let defect = (s.mass_change - s.boundary_inflow).abs();
        let scale = s.mass_scale.max(data);
        let rel = if scale > 0.0 { defect / scale } else { defect };
        if rel > worst {
            worst = rel;
            when = s.time;
        }
    }
    MassReport {
        worst_relative: worst,
        worst_time: when,
        total_change: total,
    }
}

/// Smallest value over every step of the run.
pub fn minimum_value(traj: &Trajectory) -> f64 {
    traj.running_min()
}
