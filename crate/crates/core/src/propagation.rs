//! Front tracking, propagation-rate fits and dead-core times.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{linear_fit, log_log_slope};
use crate::flux::LeibensonParams;
use crate::geometry::{volume_growth_exponent, ModelManifold};
use crate::grid::RadialGrid;
use crate::integrator::Trajectory;

/// Minimum number of samples in a rate-fit window.
pub const MIN_FIT_SAMPLES: usize = 10;

/// Default support threshold relative to the initial maximum.
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SupportTrace {
    pub times: Vec<f64>,
    pub support_radius: Vec<f64>,
    pub threshold: f64,
    /// Radius of the domain the trace was measured on.
    pub domain_radius: f64,
}

impl SupportTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest backwards jump of the front, in length units.
    pub fn max_retreat(&self) -> f64 {
        let mut best: f64 = 0.0;
        let mut high = f64::NEG_INFINITY;
        for &r in &self.support_radius {
            high = high.max(r);
            best = best.max(high - r);
        }
        best
    }
}

/// Threshold `rel · max u₀` measured above the boundary value.
pub fn default_threshold(traj: &Trajectory, rel: f64) -> f64 {
    let init = traj.initial();
    (init.max() - init.boundary_value()).max(0.0) * rel
}

/// Outermost node with `u - b > u_thresh`, per snapshot (0 if none).
pub fn track_support(traj: &Trajectory, grid: &RadialGrid, u_thresh: f64) -> Result<SupportTrace> {
    if !(u_thresh > 0.0) {
        return Err(Error::Domain(format!("support threshold must be positive, got {u_thresh}")));
    }
    let nodes = grid.nodes();
    let mut times = Vec::with_capacity(traj.snapshots.len());
    let mut radii = Vec::with_capacity(traj.snapshots.len());
    for s in &traj.snapshots {
        let b = s.boundary_value();
        let r = s
            .values()
            .iter()
            .rposition(|&v| v - b > u_thresh)
            .map_or(0.0, |i| nodes[i]);
        times.push(s.time());
        radii.push(r);
    }
    Ok(SupportTrace {
        times,
        support_radius: radii,
        threshold: u_thresh,
        domain_radius: grid.radius(),
    })
}

/// `σ = 1` for `δ < 1`, otherwise `δ + 0.1` rounded up to one decimal.
pub fn default_sigma(params: &LeibensonParams) -> f64 {
    let d = params.delta();
    if d < 1.0 {
        1.0
    } else {
        ((d + 0.1) * 10.0).ceil() / 10.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub p: f64,
    pub q: f64,
    pub n: u32,
    pub sigma: f64,
    pub beta_theory: f64,
    pub beta_hat: f64,
    pub rel_err: f64,
    pub window_lo: f64,
    pub window_hi: f64,
    /// Volume growth exponent `α` used in `β = p + αδ/σ`.
    #[serde(skip)]
    pub alpha: f64,
    #[serde(skip)]
    pub samples: usize,
}

/// Options for the asymptotic window of [`fit_rate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRule {
    /// Samples start once the front exceeds this multiple of its initial radius.
    pub start_factor: f64,
    /// Samples stop once the front exceeds this fraction of the domain.
    pub stop_fraction: f64,
}

impl Default for WindowRule {
    fn default() -> Self {
        Self {
            start_factor: 2.0,
            stop_fraction: 0.9,
        }
    }
}

pub fn fit_rate(trace: &SupportTrace, params: &LeibensonParams, m: &ModelManifold, sigma: f64) -> Result<RateFit> {
    fit_rate_with(trace, params, m, sigma, WindowRule::default())
}

/// Least-squares slope of `ln ρ̂` against `ln t` over the asymptotic window,
/// reported as `β̂ = 1/slope` next to `β = p + αδ/σ`.
pub fn fit_rate_with(
    trace: &SupportTrace,
    params: &LeibensonParams,
    m: &ModelManifold,
    sigma: f64,
    rule: WindowRule,
) -> Result<RateFit> {
    let delta = params.delta();
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!(
            "rate fits need the slow regime (δ > 0), got δ = {delta}"
        )));
    }
    // σ = δ is admitted: at δ = 1 the self-similar fronts still move with
    // exponent 1/(p + nδ).
    if !(sigma >= 1.0 && sigma >= delta) {
        return Err(Error::config(
            "equation.sigma",
            format!("sigma must satisfy sigma >= 1 and sigma >= δ = {delta}, got {sigma}"),
        ));
    }
    if trace.is_empty() {
        return Err(Error::InsufficientWindow("empty support trace".into()));
    }
    let r0 = trace.support_radius[0];
    let lo = rule.start_factor * r0;
    let hi = rule.stop_fraction * trace.domain_radius;
    let (t, r): (Vec<f64>, Vec<f64>) = trace
        .times
        .iter()
        .zip(&trace.support_radius)
        .filter(|(&t, &r)| t > 0.0 && r >= lo && r > 0.0 && r <= hi)
        .map(|(&t, &r)| (t, r))
        .unzip();
    if t.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientWindow(format!(
            "only {} samples with {lo:.3e} <= support <= {hi:.3e}; enlarge the domain radius or extend t_end",
            t.len()
        )));
    }
    let slope = log_log_slope(&t, &r)
        .ok_or_else(|| Error::InsufficientWindow("degenerate time window".into()))?;
    if !(slope > 0.0) {
        return Err(Error::InsufficientWindow(format!("front did not advance (slope {slope:.3e})")));
    }
    let r_lo = r.first().copied().unwrap();
    let r_hi = r.last().copied().unwrap();
    let alpha = if m.is_euclidean() {
        m.dimension() as f64
    } else {
        volume_growth_exponent(m, r_lo.max(1e-12), r_hi.max(2.0 * r_lo))?.exponent
    };
    let beta_theory = params.p() + alpha * delta / sigma;
    let beta_hat = 1.0 / slope;
    Ok(RateFit {
        p: params.p(),
        q: params.q(),
        n: m.dimension(),
        sigma,
        beta_theory,
        beta_hat,
        rel_err: (beta_hat - beta_theory).abs() / beta_theory,
        window_lo: t[0],
        window_hi: *t.last().unwrap(),
        alpha,
        samples: t.len(),
    })
}

/// First time the maximum of `u - b` over `r < b0_radius / 2` exceeds
/// `eps_dead`, interpolated linearly between snapshots; the final time if it
/// never does.
pub fn dead_core_time(traj: &Trajectory, grid: &RadialGrid, b0_radius: f64, eps_dead: f64) -> Result<f64> {
    if !(b0_radius > 0.0 && b0_radius <= grid.radius()) {
        return Err(Error::Domain(format!(
            "dead-core ball radius must lie in (0, {}], got {b0_radius}",
            grid.radius()
        )));
    }
    if !(eps_dead > 0.0) {
        return Err(Error::Domain(format!("dead-core threshold must be positive, got {eps_dead}")));
    }
    let inside = grid.nodes_below(b0_radius);
    let init = traj.initial();
    let b = init.boundary_value();
    if let Some(v) = init.values()[..inside].iter().find(|&&v| v - b != 0.0) {
        return Err(Error::Precondition(format!(
            "initial data must vanish on the ball of radius {b0_radius}, found {}",
            v - b
        )));
    }
    let half = grid.nodes_below(0.5 * b0_radius).max(1);
    let peak = |vals: &[f64], bv: f64| vals[..half].iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v - bv));
    let mut prev = (init.time(), peak(init.values(), b));
    for s in traj.snapshots.iter().skip(1) {
        let now = (s.time(), peak(s.values(), s.boundary_value()));
        if now.1 > eps_dead {
            let w = (eps_dead - prev.1) / (now.1 - prev.1);
            return Ok(prev.0 + w.clamp(0.0, 1.0) * (now.0 - prev.0));
        }
        prev = now;
    }
    Ok(traj.end_time())
}

/// Slope and intercept of `ln t₀` against `ln x` for a scaling sweep.
pub fn scaling_slope(x: &[f64], t0: &[f64]) -> Option<f64> {
    let (lx, lt): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(t0)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    linear_fit(&lx, &lt).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(beta: f64, count: usize) -> SupportTrace {
        let times: Vec<f64> = (0..count).map(|k| 1e-3 * 1.2f64.powi(k as i32)).collect();
        let support_radius = times.iter().map(|t| 0.01 * (t / 1e-3).powf(1.0 / beta)).collect();
        SupportTrace {
            times,
            support_radius,
            threshold: 1e-8,
            domain_radius: 1e9,
        }
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let m = ModelManifold::euclidean(1);
        let prm = LeibensonParams::new(2.0, 2.0).unwrap();
        let fit = fit_rate(&synthetic(3.0, 40), &prm, &m, 1.0).unwrap();
        assert!((fit.beta_hat - 3.0).abs() < 1e-6, "{fit:?}");
        assert!(fit.rel_err < 1e-6);
        assert_eq!(fit.beta_theory, 3.0);
    }

    #[test]
    fn regime_and_sigma_gates() {
        let m = ModelManifold::euclidean(1);
        let heat = LeibensonParams::new(2.0, 1.0).unwrap();
        assert!(matches!(
            fit_rate(&synthetic(2.0, 40), &heat, &m, 1.0),
            Err(Error::Precondition(_))
        ));
        let pm = LeibensonParams::new(2.0, 3.0).unwrap();
        assert!(fit_rate(&synthetic(3.0, 40), &pm, &m, 1.0).is_err());
    }

    #[test]
    fn short_window_is_reported() {
        let m = ModelManifold::euclidean(1);
        let prm = LeibensonParams::new(2.0, 2.0).unwrap();
        let mut tr = synthetic(3.0, 40);
        tr.domain_radius = 0.03;
        assert!(matches!(fit_rate(&tr, &prm, &m, 1.0), Err(Error::InsufficientWindow(_))));
    }

    #[test]
    fn sigma_defaults() {
        assert_eq!(default_sigma(&LeibensonParams::new(2.5, 1.2).unwrap()), 1.0);
        assert_eq!(default_sigma(&LeibensonParams::new(2.0, 3.0).unwrap()), 2.1);
        assert_eq!(default_sigma(&LeibensonParams::new(3.0, 1.0).unwrap()), 1.1);
    }

    #[test]
    fn retreat_measure() {
        let tr = SupportTrace {
            times: vec![0.0, 1.0, 2.0, 3.0],
            support_radius: vec![0.1, 0.3, 0.25, 0.4],
            threshold: 1.0,
            domain_radius: 1.0,
        };
        assert!((tr.max_retreat() - 0.05).abs() < 1e-15);
    }
}
