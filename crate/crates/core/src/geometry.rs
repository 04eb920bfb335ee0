//! Radially symmetric model manifolds.
//!
//! A model manifold of dimension `n` is described in its pole-centered chart by
//! a warping profile `ψ(r)`; the Riemannian measure of a ball of radius `r`
//! about the pole is `ω_{n-1} ∫₀^r ψ(s)^{n-1} ds`, with `ω_{n-1}` the area of
//! the unit sphere in ℝⁿ. Euclidean space is `ψ(r) = r`.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::fit;
use crate::quadrature::panel_rule;

/// Largest panel width used for analytic profiles.
const MAX_PANEL: f64 = 0.25;

/// Samples used by [`volume_growth_exponent`].
const GROWTH_SAMPLES: usize = 32;

/// Area of the unit sphere `S^{n-1} ⊂ ℝⁿ`; `ω₀ = 2` counts the two endpoints of
/// the interval.
pub fn unit_sphere_area(n: u32) -> f64 {
    assert!(n >= 1);
    // a(n+2) = 2π a(n) / n
    let (mut a, mut k) = if n % 2 == 1 { (2.0, 1) } else { (2.0 * PI, 2) };
    while k < n {
        a *= 2.0 * PI / k as f64;
        k += 2;
    }
    a
}

/// Reads whitespace-separated `r value` pairs, one per line. `#` starts a
/// comment and blank lines are skipped.
pub fn read_columns(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = Vec::new();
    let mut v = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace();
        let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::Parse {
                line: idx + 1,
                message: "expected exactly two columns `r value`".into(),
            });
        };
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("`{s}`: {e}"),
            })
        };
        r.push(parse(a)?);
        v.push(parse(b)?);
    }
    Ok((r, v))
}

/// A warping profile sampled from a file, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpingTable {
    r: Vec<f64>,
    psi: Vec<f64>,
}

impl WarpingTable {
    pub fn new(r: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        if r.len() != psi.len() {
            return Err(Error::Domain("warping table columns differ in length".into()));
        }
        if r.len() < 2 {
            return Err(Error::Domain("warping table needs at least two rows".into()));
        }
        if r[0] != 0.0 {
            return Err(Error::Domain("warping table must start at r = 0".into()));
        }
        if psi[0] != 0.0 {
            return Err(Error::Domain("warping table must have ψ(0) = 0".into()));
        }
        for w in r.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Domain("warping table radii must be strictly increasing".into()));
            }
        }
        if r.iter().chain(&psi).any(|v| !v.is_finite()) {
            return Err(Error::Domain("warping table contains non-finite values".into()));
        }
        if psi[1..].iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain("warping table must have ψ(r) > 0 for r > 0".into()));
        }
        Ok(Self { r, psi })
    }

    /// Parses the two-column `r value` format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let (r, psi) = read_columns(text)?;
        Self::new(r, psi)
    }

    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.r
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = match self.r.partition_point(|&v| v <= x) {
            0 => 1,
            k if k >= self.r.len() => self.r.len() - 1,
            k => k,
        };
        let (r0, r1) = (self.r[k - 1], self.r[k]);
        let (p0, p1) = (self.psi[k - 1], self.psi[k]);
        p0 + (p1 - p0) * (x - r0) / (r1 - r0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warping {
    /// ψ(r) = r.
    Euclidean,
    /// ψ(r) = sinh r, the hyperbolic-space profile.
    Sinh,
    Tabulated(WarpingTable),
}

impl Warping {
    pub fn name(&self) -> &'static str {
        match self {
            Warping::Euclidean => "euclidean",
            Warping::Sinh => "hyperbolic",
            Warping::Tabulated(_) => "tabulated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelManifold {
    dimension: u32,
    warping: Warping,
    label: String,
    r_max: f64,
    sphere_area: f64,
}

impl ModelManifold {
    pub fn new(dimension: u32, warping: Warping, r_max: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::Domain(format!("r_max must be positive, got {r_max}")));
        }
        let r_max = match &warping {
            Warping::Tabulated(t) => {
                if r_max > t.r_max() {
                    return Err(Error::Domain(format!(
                        "r_max {r_max} exceeds the tabulated range {}",
                        t.r_max()
                    )));
                }
                r_max
            }
            // sinh^(n-1) overflows past this radius
            Warping::Sinh if (dimension as f64 - 1.0) * r_max > 700.0 => {
                return Err(Error::Domain(format!("r_max {r_max} too large for ψ = sinh r in dimension {dimension}")));
            }
            _ => r_max,
        };
        let label = format!("{}-n{}", warping.name(), dimension);
        Ok(Self {
            dimension,
            warping,
            label,
            r_max,
            sphere_area: unit_sphere_area(dimension),
        })
    }

    pub fn euclidean(dimension: u32) -> Self {
        Self::new(dimension, Warping::Euclidean, 1e6).expect("valid preset")
    }

    pub fn hyperbolic(dimension: u32) -> Self {
        let r_max = if dimension > 1 { 600.0 / (dimension as f64 - 1.0) } else { 1e6 };
        Self::new(dimension, Warping::Sinh, r_max.min(1e6)).expect("valid preset")
    }

    pub fn tabulated(dimension: u32, table: WarpingTable) -> Result<Self> {
        let r_max = table.r_max();
        Self::new(dimension, Warping::Tabulated(table), r_max)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dimension(&self) -> u32 {
        self.dimension
    }

    pub fn warping(&self) -> &Warping {
        &self.warping
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// `ω_{n-1}`.
    pub fn sphere_area(&self) -> f64 {
        self.sphere_area
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.warping, Warping::Euclidean)
    }

    pub fn psi(&self, r: f64) -> f64 {
        match &self.warping {
            Warping::Euclidean => r,
            Warping::Sinh => r.sinh(),
            Warping::Tabulated(t) => t.eval(r),
        }
    }

    /// Area of the geodesic sphere of radius `r`: `ω_{n-1} ψ(r)^{n-1}`.
    pub fn sphere_measure(&self, r: f64) -> f64 {
        self.sphere_area * self.psi(r).powi(self.dimension as i32 - 1)
    }

    /// Measure of the shell `a ≤ |x| ≤ b`, by composite Gauss-Legendre with
    /// panel breaks at the table knots (tabulated profiles) or at most
    /// [`MAX_PANEL`] apart (analytic profiles).
    pub fn shell_measure(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        if a == b {
            return 0.0;
        }
        let rule = panel_rule();
        let n1 = self.dimension as i32 - 1;
        let density = |s: f64| self.psi(s).powi(n1);
        let mut total = 0.0;
        match &self.warping {
            Warping::Tabulated(t) => {
                let knots = t.knots();
                let mut lo = a;
                let start = knots.partition_point(|&k| k <= a);
                for &k in &knots[start..] {
                    if k >= b {
                        break;
                    }
                    total += rule.integrate(lo, k, density);
                    lo = k;
                }
                total += rule.integrate(lo, b, density);
            }
            _ => {
                let panels = ((b - a) / MAX_PANEL).ceil().max(1.0) as usize;
                let h = (b - a) / panels as f64;
                for i in 0..panels {
                    let lo = a + h * i as f64;
                    let hi = if i + 1 == panels { b } else { lo + h };
                    total += rule.integrate(lo, hi, density);
                }
            }
        }
        self.sphere_area * total
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        if !(r >= 0.0) || r > self.r_max {
            return Err(Error::Domain(format!(
                "radius {r} outside [0, {}] for manifold {}",
                self.r_max, self.label
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ModelManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (n={}, ψ={})", self.label, self.dimension, self.warping.name())
    }
}

/// μ(B(o, r)) for the ball about the pole.
pub fn volume_of_ball(m: &ModelManifold, r: f64) -> Result<f64> {
    m.check_radius(r)?;
    Ok(m.shell_measure(0.0, r))
}

/// Result of a log-log regression of ball volume against radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    pub exponent: f64,
    pub samples: usize,
    /// `r_hi / r_lo < 2`: the window is too narrow to say much.
    pub narrow_window: bool,
    /// The local slope over the upper half of the window exceeds the lower
    /// half by more than 5%: growth is faster than any fixed power.
    pub superpolynomial: bool,
}

/// Estimates `α` in `μ(B(r)) ≈ c r^α` over `[r_lo, r_hi]`.
pub fn volume_growth_exponent(m: &ModelManifold, r_lo: f64, r_hi: f64) -> Result<GrowthFit> {
    if !(r_lo > 0.0 && r_hi > r_lo) {
        return Err(Error::Domain(format!("need 0 < r_lo < r_hi, got [{r_lo}, {r_hi}]")));
    }
    m.check_radius(r_hi)?;
    let radii = fit::geometric_ladder(r_lo, r_hi, GROWTH_SAMPLES);
    let vols = radii
        .iter()
        .map(|&r| volume_of_ball(m, r))
        .collect::<Result<Vec<_>>>()?;
    let exponent = fit::log_log_slope(&radii, &vols)
        .ok_or_else(|| Error::Domain("degenerate volume samples".into()))?;
    let half = GROWTH_SAMPLES / 2;
    let lower = fit::log_log_slope(&radii[..=half], &vols[..=half]).unwrap_or(exponent);
    let upper = fit::log_log_slope(&radii[half..], &vols[half..]).unwrap_or(exponent);
    Ok(GrowthFit {
        exponent,
        samples: GROWTH_SAMPLES,
        narrow_window: r_hi / r_lo < 2.0,
        superpolynomial: upper > lower * 1.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert_eq!(unit_sphere_area(1), 2.0);
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-15);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn interval_and_unit_ball() {
        let line = ModelManifold::euclidean(1);
        assert!((volume_of_ball(&line, 2.0).unwrap() - 4.0).abs() < 1e-14);
        let space = ModelManifold::euclidean(3);
        assert!((volume_of_ball(&space, 1.0).unwrap() - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn euclidean_consistency() {
        for n in 1..=3 {
            let m = ModelManifold::euclidean(n);
            for r in [0.5f64, 1.0, 2.0, 5.0] {
                let exact = unit_sphere_area(n) * r.powi(n as i32) / n as f64;
                let got = volume_of_ball(&m, r).unwrap();
                assert!(((got - exact) / exact).abs() <= 1e-10, "n={n} r={r}");
            }
        }
    }

    #[test]
    fn monotone_ladder() {
        let table = WarpingTable::new(vec![0.0, 1.0, 2.0, 4.0], vec![0.0, 0.8, 2.5, 3.0]).unwrap();
        let presets = [
            ModelManifold::euclidean(2),
            ModelManifold::hyperbolic(2),
            ModelManifold::tabulated(3, table).unwrap(),
        ];
        for m in &presets {
            let top = m.r_max().min(4.0);
            let mut prev = 0.0;
            for k in 1..=100 {
                let v = volume_of_ball(m, top * k as f64 / 100.0).unwrap();
                assert!(v > prev, "{m} not monotone at step {k}");
                prev = v;
            }
        }
    }

    #[test]
    fn domain_errors() {
        let m = ModelManifold::hyperbolic(3);
        assert!(volume_of_ball(&m, -0.1).is_err());
        assert!(volume_of_ball(&m, m.r_max() * 1.01).is_err());
        assert!(volume_growth_exponent(&m, 2.0, 1.0).is_err());
    }

    #[test]
    fn euclidean_growth_is_dimension() {
        for n in [2, 3] {
            let fit = volume_growth_exponent(&ModelManifold::euclidean(n), 1.0, 8.0).unwrap();
            assert!((fit.exponent - n as f64).abs() < 1e-6);
            assert!(!fit.superpolynomial && !fit.narrow_window);
        }
        let fit = volume_growth_exponent(&ModelManifold::euclidean(2), 3.0, 4.0).unwrap();
        assert!(fit.narrow_window);
        assert!((fit.exponent - 2.0).abs() < 1e-6);
    }

    #[test]
    fn tabulated_parse_and_interpolate() {
        let text = "# r psi\n0 0\n1.0 2.0  # comment\n\n3 4\n";
        let t = WarpingTable::parse(text).unwrap();
        assert_eq!(t.eval(0.5), 1.0);
        assert_eq!(t.eval(2.0), 3.0);
        assert_eq!(t.r_max(), 3.0);
        assert!(WarpingTable::parse("0 0\n1 2 3\n").is_err());
        assert!(WarpingTable::parse("0 0\n1 x\n").is_err());
        assert!(WarpingTable::parse("0.1 0\n1 2\n").is_err());
        assert!(WarpingTable::parse("0 0\n1 2\n1 3\n").is_err());
        assert!(WarpingTable::parse("0 1\n1 2\n").is_err());
    }

    #[test]
    fn tabulated_linear_profile_matches_euclidean() {
        let t = WarpingTable::new(vec![0.0, 0.3, 1.0, 2.5], vec![0.0, 0.3, 1.0, 2.5]).unwrap();
        let m = ModelManifold::tabulated(3, t).unwrap();
        let e = ModelManifold::euclidean(3);
        for r in [0.2, 0.7, 1.9, 2.5] {
            let a = volume_of_ball(&m, r).unwrap();
            let b = volume_of_ball(&e, r).unwrap();
            assert!((a - b).abs() < 1e-13 * b);
        }
    }
}
