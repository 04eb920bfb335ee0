//! Self-similar reference solutions where the equation collapses to the
//! porous-medium, evolutionary p-Laplace or heat equation.
//!
//! With `u = τ^{-nb} F(r τ^{-b})`, `b = 1/(p + nδ)`, the radial equation
//! integrates once to `|(F^q)'|^{p-2}(F^q)' = -b ξ F`, and once more to
//! `F = (C - κ ξ^{p/(p-1)})₊^{(p-1)/δ}`, `κ = δ b^{1/(p-1)} / (pq)`.
//! For `δ = 0` the second integration gives an exponential instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::LeibensonParams;
use crate::grid::{FluxMode, Operator, RadialGrid};
use crate::quadrature::panel_rule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BarenblattFamily {
    /// `p = 2`, `q > 1`.
    PorousMedium { q: f64 },
    /// `q = 1`, `p > 2`.
    PLaplace { p: f64 },
    /// `p = 2`, `q = 1`.
    Heat,
}

impl BarenblattFamily {
    pub fn params(&self) -> Result<LeibensonParams> {
        match *self {
            BarenblattFamily::PorousMedium { q } => {
                if !(q > 1.0) {
                    return Err(Error::Domain(format!("porous-medium family needs q > 1, got {q}")));
                }
                LeibensonParams::new(2.0, q)
            }
            BarenblattFamily::PLaplace { p } => {
                if !(p > 2.0) {
                    return Err(Error::Domain(format!("p-Laplace family needs p > 2, got {p}")));
                }
                LeibensonParams::new(p, 1.0)
            }
            BarenblattFamily::Heat => LeibensonParams::new(2.0, 1.0),
        }
    }

    /// The family matching `params`, if any.
    pub fn for_params(params: &LeibensonParams) -> Option<Self> {
        let (p, q) = (params.p(), params.q());
        if p == 2.0 && q == 1.0 {
            Some(BarenblattFamily::Heat)
        } else if p == 2.0 && q > 1.0 {
            Some(BarenblattFamily::PorousMedium { q })
        } else if q == 1.0 && p > 2.0 {
            Some(BarenblattFamily::PLaplace { p })
        } else {
            None
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BarenblattFamily::PorousMedium { .. } => "porous-medium",
            BarenblattFamily::PLaplace { .. } => "p-laplace",
            BarenblattFamily::Heat => "heat",
        }
    }
}

/// One member of a family: `c` is the constant `C` of the profile (for the
/// heat family the prefactor of the Gaussian), `t_offset` shifts time so the
/// profile is evaluated at `τ = t + t_offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarenblattProfile {
    family: BarenblattFamily,
    params: LeibensonParams,
    n: u32,
    c: f64,
    t_offset: f64,
    /// `b = 1/(p + nδ)`.
    b: f64,
    kappa: f64,
}

impl BarenblattProfile {
    pub fn new(family: BarenblattFamily, n: u32, c: f64, t_offset: f64) -> Result<Self> {
        let params = family.params()?;
        if n == 0 {
            return Err(Error::Domain("dimension must be >= 1".into()));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!("profile constant must be positive, got {c}")));
        }
        if !(t_offset > 0.0 && t_offset.is_finite()) {
            return Err(Error::Domain(format!("time offset must be positive, got {t_offset}")));
        }
        let (p, q, d) = (params.p(), params.q(), params.delta());
        let b = 1.0 / (p + n as f64 * d);
        let kappa = if d > 0.0 {
            d * b.powf(1.0 / (p - 1.0)) / (p * q)
        } else {
            (p - 1.0) * b.powf(1.0 / (p - 1.0)) / (p * q)
        };
        Ok(Self {
            family,
            params,
            n,
            c,
            t_offset,
            b,
            kappa,
        })
    }

    /// Slow family member whose support has radius `support` at `t = 0`.
    pub fn with_support(family: BarenblattFamily, n: u32, support: f64, t_offset: f64) -> Result<Self> {
        if matches!(family, BarenblattFamily::Heat) {
            return Err(Error::Domain("the heat kernel has no compact support".into()));
        }
        if !(support > 0.0) {
            return Err(Error::Domain(format!("support radius must be positive, got {support}")));
        }
        let probe = Self::new(family, n, 1.0, t_offset)?;
        let p = probe.params.p();
        let xi0 = support * t_offset.powf(-probe.b);
        Self::new(family, n, probe.kappa * xi0.powf(p / (p - 1.0)), t_offset)
    }

    /// Slow family member with support radius `support` and peak `amplitude`
    /// at `t = 0`. At fixed support the peak scales like `τ^{-1/δ}`.
    pub fn with_support_amplitude(family: BarenblattFamily, n: u32, support: f64, amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::Domain(format!("amplitude must be positive, got {amplitude}")));
        }
        let probe = Self::with_support(family, n, support, 1.0)?;
        let tau = (probe.max_value(0.0) / amplitude).powf(probe.params.delta());
        Self::with_support(family, n, support, tau)
    }

    pub fn family(&self) -> BarenblattFamily {
        self.family
    }

    pub fn params(&self) -> &LeibensonParams {
        &self.params
    }

    pub fn dimension(&self) -> u32 {
        self.n
    }

    pub fn t_offset(&self) -> f64 {
        self.t_offset
    }

    /// Support exponent `b`: the front moves like `τ^b`.
    pub fn exponent(&self) -> f64 {
        self.b
    }

    fn shape(&self, xi: f64) -> f64 {
        let p = self.params.p();
        let s = self.kappa * xi.abs().powf(p / (p - 1.0));
        let d = self.params.delta();
        if d > 0.0 {
            let base = self.c - s;
            if base <= 0.0 {
                0.0
            } else {
                base.powf((p - 1.0) / d)
            }
        } else {
            self.c * (-s).exp()
        }
    }

    /// `u(r, t)`; `t + t_offset` must be positive.
    pub fn evaluate(&self, r: f64, t: f64) -> f64 {
        let tau = t + self.t_offset;
        assert!(tau > 0.0, "profile evaluated before its singular time");
        tau.powf(-(self.n as f64) * self.b) * self.shape(r * tau.powf(-self.b))
    }

    /// Front position at time `t`; `None` for the heat kernel.
    pub fn support_radius(&self, t: f64) -> Option<f64> {
        if self.params.delta() <= 0.0 {
            return None;
        }
        let p = self.params.p();
        let xi0 = (self.c / self.kappa).powf((p - 1.0) / p);
        Some(xi0 * (t + self.t_offset).powf(self.b))
    }

    /// Time at which the front reaches `radius`.
    pub fn time_to_reach(&self, radius: f64) -> Option<f64> {
        let now = self.support_radius(0.0)?;
        Some(self.t_offset * (radius / now).powf(1.0 / self.b) - self.t_offset)
    }

    pub fn max_value(&self, t: f64) -> f64 {
        self.evaluate(0.0, t)
    }

    /// Total mass `∫ u dμ` on ℝⁿ, constant in time.
    pub fn mass(&self) -> f64 {
        let omega = crate::geometry::unit_sphere_area(self.n);
        let n = self.n as f64;
        let extent = match self.support_radius(0.0) {
            Some(r) => r * self.t_offset.powf(-self.b),
            // exp(-κ ξ^{p/(p-1)}) < 1e-30 beyond this.
            None => (70.0 / self.kappa).powf((self.params.p() - 1.0) / self.params.p()),
        };
        let rule = panel_rule();
        let panels = 400;
        let h = extent / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let a = k as f64 * h;
            total += rule.integrate(a, a + h, |x| self.shape(x) * x.powf(n - 1.0));
        }
        omega * total
    }

    pub fn sample(&self, grid: &RadialGrid, t: f64) -> Vec<f64> {
        let mut v = grid.sample(|r| self.evaluate(r, t));
        *v.last_mut().unwrap() = 0.0;
        v
    }
}

/// `‖(u(t+dt) - u(t))/dt - L(u(t+dt))‖` in the weighted L² norm, with the
/// oracle sampled on the grid. Only nodes with `r ≤ interior · ρ(t+dt)` enter
/// (all nodes for the heat kernel), which keeps the free boundary out.
pub fn oracle_residual(profile: &BarenblattProfile, grid: &RadialGrid, t: f64, dt: f64, interior: f64) -> f64 {
    let now = profile.sample(grid, t);
    let next = profile.sample(grid, t + dt);
    let op = Operator::new(grid, *profile.params(), FluxMode::Limit);
    let l = op.apply(&next);
    let cutoff = profile
        .support_radius(t + dt)
        .map_or(grid.radius() * interior, |s| s * interior);
    let vols = grid.cell_volumes();
    let mut sq = 0.0;
    for i in 0..grid.cells() {
        if grid.nodes()[i] > cutoff {
            break;
        }
        let r = (next[i] - now[i]) / dt - l[i];
        sq += vols[i] * r * r;
    }
    sq.sqrt()
}

/// Relative L¹ error `Σ V|u - U| / Σ V U` at time `state_time`, skipping the
/// nodes within `collar` cells of the oracle front.
pub fn relative_l1_error(profile: &BarenblattProfile, grid: &RadialGrid, values: &[f64], t: f64, collar: usize) -> f64 {
    let exact = profile.sample(grid, t);
    let vols = grid.cell_volumes();
    let front = profile.support_radius(t).map(|s| grid.nodes_below(s));
    let mut err = 0.0;
    let mut mass = 0.0;
    for i in 0..grid.len() {
        if let Some(k) = front {
            if i + collar >= k && i < k + collar {
                continue;
            }
        }
        err += vols[i] * (values[i] - exact[i]).abs();
        mass += vols[i] * exact[i].abs();
    }
    if mass > 0.0 {
        err / mass
    } else {
        err
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_gates() {
        assert!(BarenblattFamily::PorousMedium { q: 1.0 }.params().is_err());
        assert!(BarenblattFamily::PLaplace { p: 2.0 }.params().is_err());
        let prm = LeibensonParams::new(2.0, 2.0).unwrap();
        assert_eq!(BarenblattFamily::for_params(&prm), Some(BarenblattFamily::PorousMedium { q: 2.0 }));
        let prm = LeibensonParams::new(2.5, 1.2).unwrap();
        assert_eq!(BarenblattFamily::for_params(&prm), None);
    }

    #[test]
    fn support_exponents() {
        let pm = BarenblattProfile::new(BarenblattFamily::PorousMedium { q: 2.0 }, 1, 1.0, 1.0).unwrap();
        assert!((pm.exponent() - 1.0 / 3.0).abs() < 1e-15);
        let pl = BarenblattProfile::new(BarenblattFamily::PLaplace { p: 3.0 }, 1, 1.0, 1.0).unwrap();
        assert!((pl.exponent() - 0.25).abs() < 1e-15);
        let ratio = pm.support_radius(7.0).unwrap() / pm.support_radius(0.0).unwrap();
        assert!((ratio - 8.0f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn with_support_places_front() {
        let f = BarenblattFamily::PLaplace { p: 3.0 };
        let prof = BarenblattProfile::with_support(f, 1, 0.2, 0.01).unwrap();
        assert!((prof.support_radius(0.0).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(prof.evaluate(0.2001, 0.0), 0.0);
        assert!(prof.evaluate(0.1999, 0.0) > 0.0);
        let t = prof.time_to_reach(0.5).unwrap();
        assert!((prof.support_radius(t).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn heat_kernel_matches_gaussian() {
        let prof = BarenblattProfile::new(BarenblattFamily::Heat, 1, 1.0, 1.0).unwrap();
        // u = τ^{-1/2} exp(-r²/(4τ)), mass 2√π.
        let v = prof.evaluate(1.0, 1.0);
        assert!((v - 2f64.powf(-0.5) * (-1.0f64 / 8.0).exp()).abs() < 1e-14);
        assert!((prof.mass() - 2.0 * std::f64::consts::PI.sqrt()).abs() < 1e-10);
        let ratio = prof.max_value(3.0) / prof.max_value(0.0);
        assert!((ratio - 0.5).abs() < 1e-14);
    }

    #[test]
    fn porous_medium_mass_is_closed_form() {
        // n = 1, q = 2: F = (C - ξ²/12)₊, mass = (8/3) C^{3/2} √3.
        let prof = BarenblattProfile::new(BarenblattFamily::PorousMedium { q: 2.0 }, 1, 0.5, 1.0).unwrap();
        let exact = 8.0 / 3.0 * 0.5f64.powf(1.5) * 3f64.sqrt();
        assert!((prof.mass() - exact).abs() < 1e-9 * exact);
    }
}
