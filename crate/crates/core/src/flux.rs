//! Exponents, the truncated flux of the regularized problem and the
//! degenerate flux `|∇u^q|^{p-2}∇u^q` of the limit problem.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative size of the gradient desingularization used in Jacobians when
/// `p < 2`.
pub const GRADIENT_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `δ > 0`: finite propagation speed.
    Slow,
    /// `δ = 0`.
    Critical,
    /// `δ < 0`: instantaneous positivity.
    Fast,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Slow => "slow",
            Regime::Critical => "critical",
            Regime::Fast => "fast",
        })
    }
}

/// Exponents `p > 1`, `q > 0` with the derived `δ = q(p-1) - 1` frozen at
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeibensonParams {
    p: f64,
    q: f64,
    delta: f64,
    regime: Regime,
    pq_ok: bool,
}

impl LeibensonParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::config("equation.p", format!("p must be a finite real > 1, got {p}")));
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::config("equation.q", format!("q must be a finite real > 0, got {q}")));
        }
        let delta = q * (p - 1.0) - 1.0;
        let regime = if delta > 0.0 {
            Regime::Slow
        } else if delta < 0.0 {
            Regime::Fast
        } else {
            Regime::Critical
        };
        Ok(Self {
            p,
            q,
            delta,
            regime,
            pq_ok: p * q >= 1.0,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `δ = q(p-1) - 1`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// `pq ≥ 1`, required by the existence pipeline.
    pub fn pq_ok(&self) -> bool {
        self.pq_ok
    }

    /// Exponent `(q-1)(p-1)` of the truncated diffusivity.
    pub fn diffusivity_exponent(&self) -> f64 {
        (self.q - 1.0) * (self.p - 1.0)
    }

    pub fn require_pq(&self) -> Result<()> {
        if self.pq_ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "existence runs need pq >= 1, got p={} q={} (pq={})",
                self.p,
                self.q,
                self.p * self.q
            )))
        }
    }
}

/// Regularization level `N > 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RegLevel(f64);

impl RegLevel {
    pub fn new(n: f64) -> Result<Self> {
        if n > 1.0 && n.is_finite() {
            Ok(Self(n))
        } else {
            Err(Error::Domain(format!("regularization level must be > 1, got {n}")))
        }
    }

    pub fn n(self) -> f64 {
        self.0
    }

    /// Lower barrier and Dirichlet value `1/N`.
    pub fn floor(self) -> f64 {
        1.0 / self.0
    }
}

/// `χ(u) = min(N, max(u, 1/N))`.
pub fn truncate(u: f64, reg: RegLevel) -> f64 {
    u.max(reg.floor()).min(reg.n())
}

/// `|x|^{p-2} x` written as `sign(x)|x|^{p-1}`, finite for every `p > 1`.
#[inline]
pub fn p_power(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if p == 2.0 {
        x
    } else if p == 3.0 {
        x.abs() * x
    } else {
        x.signum() * x.abs().powf(p - 1.0)
    }
}

/// Derivative of [`p_power`]; for `p < 2` uses `|x|² → |x|² + ε²`.
#[inline]
pub fn p_power_derivative(x: f64, p: f64, eps: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else if p > 2.0 {
        (p - 1.0) * x.abs().powf(p - 2.0)
    } else {
        (p - 1.0) * (x * x + eps * eps).powf(0.5 * (p - 2.0))
    }
}

/// `|u|^{q-1} u`, the odd extension of `u^q`.
#[inline]
pub fn signed_pow(u: f64, q: f64) -> f64 {
    if q == 1.0 {
        u
    } else if q == 2.0 {
        u.abs() * u
    } else if u == 0.0 {
        0.0
    } else {
        u.signum() * u.abs().powf(q)
    }
}

/// `q|u|^{q-1}` with `|u|` floored at `floor` so the derivative stays finite
/// for `q < 1`.
#[inline]
pub fn signed_pow_derivative(u: f64, q: f64, floor: f64) -> f64 {
    if q == 1.0 {
        1.0
    } else if q == 2.0 {
        2.0 * u.abs()
    } else {
        q * u.abs().max(floor).powf(q - 1.0)
    }
}

/// `q^{p-1} χ(u)^{(q-1)(p-1)}`: the diffusivity factor of the regularized flux.
pub fn reg_coefficient(u: f64, reg: RegLevel, params: &LeibensonParams) -> f64 {
    let e = params.diffusivity_exponent();
    let head = params.q.powf(params.p - 1.0);
    if e == 0.0 {
        head
    } else {
        head * truncate(u, reg).powf(e)
    }
}

/// d/du of [`reg_coefficient`]; zero where the truncation is active.
pub fn reg_coefficient_derivative(u: f64, reg: RegLevel, params: &LeibensonParams) -> f64 {
    let e = params.diffusivity_exponent();
    if e == 0.0 || u <= reg.floor() || u >= reg.n() {
        return 0.0;
    }
    params.q.powf(params.p - 1.0) * e * u.powf(e - 1.0)
}

/// `A(u, g) = q^{p-1} χ(u)^{(q-1)(p-1)} |g|^{p-2} g` for a radial gradient `g`.
pub fn reg_flux(u: f64, g: f64, reg: RegLevel, params: &LeibensonParams) -> f64 {
    reg_coefficient(u, reg, params) * p_power(g, params.p)
}

/// `|w|^{p-2} w` where `w` is already the gradient of `u^q`.
pub fn limit_flux(w: f64, params: &LeibensonParams) -> f64 {
    p_power(w, params.p)
}

pub fn classify(params: &LeibensonParams) -> Regime {
    params.regime
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(p: f64, q: f64) -> LeibensonParams {
        LeibensonParams::new(p, q).unwrap()
    }

    #[test]
    fn truncation_examples() {
        let reg = RegLevel::new(2.0).unwrap();
        assert_eq!(truncate(0.5, reg), 0.5);
        assert_eq!(truncate(5.0, reg), 2.0);
        assert_eq!(truncate(0.1, reg), 0.5);
    }

    #[test]
    fn reg_flux_examples() {
        let reg = RegLevel::new(10.0).unwrap();
        assert_eq!(reg_flux(7.0, 2.0, reg, &params(3.0, 1.0)), 4.0);
        assert!((reg_flux(3.0, 1.0, reg, &params(2.0, 2.0)) - 6.0).abs() < 1e-15);
        // (1/2)^2 · 4^{-1} · (-1)
        let got = reg_flux(4.0, -1.0, reg, &params(3.0, 0.5));
        assert!((got + 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(reg_flux(3.0, 0.0, reg, &params(1.5, 2.0)), 0.0);
    }

    #[test]
    fn limit_flux_examples() {
        assert!((limit_flux(0.7, &params(2.0, 1.0)) - 0.7).abs() < 1e-15);
        assert_eq!(limit_flux(-2.0, &params(3.0, 1.0)), -4.0);
        assert!((limit_flux(4.0, &params(1.5, 1.0)) - 2.0).abs() < 1e-15);
        assert_eq!(limit_flux(0.0, &params(1.5, 1.0)), 0.0);
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&params(3.0, 1.0)), Regime::Slow);
        assert_eq!(params(3.0, 1.0).delta(), 1.0);
        assert_eq!(classify(&params(2.0, 1.0)), Regime::Critical);
        assert_eq!(classify(&params(2.0, 0.5)), Regime::Fast);
        assert_eq!(params(2.0, 0.5).delta(), -0.5);
    }

    #[test]
    fn invalid_parameters() {
        assert!(LeibensonParams::new(1.0, 1.0).is_err());
        assert!(LeibensonParams::new(2.0, 0.0).is_err());
        assert!(LeibensonParams::new(f64::NAN, 1.0).is_err());
        assert!(RegLevel::new(1.0).is_err());
        assert!(!params(1.5, 0.5).pq_ok());
        assert!(params(1.5, 0.5).require_pq().is_err());
    }

    #[test]
    fn singular_jacobian_is_finite() {
        assert!(p_power_derivative(0.0, 1.5, 1e-10).is_finite());
        assert!(signed_pow_derivative(0.0, 0.5, 1e-12).is_finite());
    }

    proptest! {
        #[test]
        fn regularized_matches_limit_inside_band(
            p in 1.1f64..5.0,
            q in 0.2f64..4.0,
            frac in 0.01f64..0.99,
            g in -10.0f64..10.0,
        ) {
            let reg = RegLevel::new(50.0).unwrap();
            let lo = reg.floor().ln();
            let hi = reg.n().ln();
            let u = (lo + frac * (hi - lo)).exp();
            let prm = params(p, q);
            let w = q * u.powf(q - 1.0) * g;
            let a = reg_flux(u, g, reg, &prm);
            let b = limit_flux(w, &prm);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())), "{a} vs {b}");
        }

        #[test]
        fn odd_symmetry(p in 1.05f64..6.0, w in -100.0f64..100.0) {
            let prm = params(p, 1.0);
            prop_assert_eq!(limit_flux(-w, &prm), -limit_flux(w, &prm));
        }
    }

    #[test]
    fn strict_monotonicity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for p in [1.5, 2.0, 3.0, 4.0] {
            let prm = params(p, 1.0);
            for _ in 0..10_000 {
                let a: f64 = rng.random_range(-5.0..5.0);
                let b: f64 = rng.random_range(-5.0..5.0);
                if a == b {
                    continue;
                }
                let s = (limit_flux(a, &prm) - limit_flux(b, &prm)) * (a - b);
                assert!(s > 0.0, "p={p} a={a} b={b}");
            }
        }
    }
}
