//! Level-set energies on shrinking cylinders, the iteration ladder behind the
//! mean value inequality, and discrete Caccioppoli / norm-decay checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flux::{p_power, LeibensonParams};
use crate::geometry::{volume_of_ball, ModelManifold};
use crate::grid::{build_grid, Grading, RadialGrid};
use crate::integrator::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSetup {
    pub sigma: f64,
    /// `λ = σ - δ`.
    pub lambda: f64,
    /// Top level `θ`; when `None` it is set from `c_const` by the equality
    /// case `θ = (C J₀ / (ι μ(B) R^p))^{1/λ}`.
    pub theta: Option<f64>,
    /// Constant `C` of the mean value inequality.
    pub c_const: f64,
    /// Radius `R` of the outer ball `B`.
    pub radius: f64,
    /// Faber-Krahn exponent.
    pub nu: f64,
    /// Faber-Krahn constant.
    pub iota: f64,
    pub k_max: usize,
    /// Verdict threshold on the largest ratio `J_{k+1}/J_k`.
    pub rho_max: f64,
}

impl IterationSetup {
    pub fn new(params: &LeibensonParams, sigma: f64, radius: f64, nu: f64, iota: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::config("diagnostics.sigma", format!("sigma must be positive, got {sigma}")));
        }
        let lambda = sigma - params.delta();
        if !(lambda > 0.0) {
            return Err(Error::config(
                "diagnostics.sigma",
                format!("lambda = sigma - δ must be positive, got {lambda}"),
            ));
        }
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("ball radius must be positive, got {radius}")));
        }
        if !(nu > 0.0 && iota > 0.0) {
            return Err(Error::Domain("Faber-Krahn data must be positive".into()));
        }
        Ok(Self {
            sigma,
            lambda,
            theta: None,
            c_const: 1.0,
            radius,
            nu,
            iota,
            k_max: 8,
            rho_max: 0.9,
        })
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.c_const = c;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn with_k_max(mut self, k: usize) -> Self {
        self.k_max = k;
        self
    }

    /// `σ ≥ max(p, pq)`, the range of the Caccioppoli inequality.
    pub fn caccioppoli_range(&self, params: &LeibensonParams) -> bool {
        self.sigma >= params.p().max(params.p() * params.q())
    }

    fn validate(&self) -> Result<()> {
        if self.k_max < 6 {
            return Err(Error::config("diagnostics.k_max", format!("k_max must be >= 6, got {}", self.k_max)));
        }
        if !(self.rho_max > 0.0 && self.rho_max < 1.0) {
            return Err(Error::config("diagnostics.rho_max", "rho_max must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// `ν = p/n`, the exponent adopted for Euclidean-type presets.
pub fn faber_krahn_exponent(n: u32, p: f64) -> f64 {
    p / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    GeometricDecay,
    Violated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// `r_k = (1/2 + 2^{-k-1}) R`.
    pub radii: Vec<f64>,
    /// `θ_k = (1 - 2^{-k}) θ`.
    pub levels: Vec<f64>,
    /// `J_k = ∫_{Q_k} (u - θ_k)₊^σ`.
    pub energies: Vec<f64>,
    pub theta: f64,
    /// `Θ = (ι μ(B) θ^λ R^p)^ν`.
    pub big_theta: f64,
    /// `A = 2^{λν + p(1+ν) + (q-1)(p-1) + ν((q-1)(p-1))₊}`.
    pub a_const: f64,
    /// Largest `J_{k+1}/J_k`; 0 when the ladder is identically zero.
    pub rho: f64,
    /// `max_k J_{k+1} Θ / (A^k J_k^{1+ν})`.
    pub recursion_ratio: f64,
    /// Right side of the ladder bound, `A^{-k/ν} J₀`.
    pub bound_rhs: Vec<f64>,
    pub verdict: Verdict,
}

impl IterationTrace {
    /// Rows `(k, r_k, θ_k, J_k, bound_rhs)`.
    pub fn rows(&self) -> Vec<LadderRow> {
        (0..self.energies.len())
            .map(|k| LadderRow {
                k,
                r_k: self.radii[k],
                theta_k: self.levels[k],
                j_k: self.energies[k],
                bound_rhs: self.bound_rhs[k],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderRow {
    pub k: usize,
    pub r_k: f64,
    pub theta_k: f64,
    #[serde(rename = "J_k")]
    pub j_k: f64,
    pub bound_rhs: f64,
}

fn check_window(traj: &Trajectory, window: (f64, f64)) -> Result<()> {
    let (a, b) = window;
    let eps = 1e-12 * traj.end_time().abs().max(1.0);
    if !(a <= b) || a < traj.start_time() - eps || b > traj.end_time() + eps {
        return Err(Error::Domain(format!(
            "time window [{a}, {b}] is outside the trajectory span [{}, {}]",
            traj.start_time(),
            traj.end_time()
        )));
    }
    Ok(())
}

/// Times of the quadrature: `t₁`, every snapshot strictly inside, `t₂`.
fn window_times(traj: &Trajectory, window: (f64, f64)) -> Vec<f64> {
    let mut t = vec![window.0];
    t.extend(traj.times().into_iter().filter(|&s| s > window.0 && s < window.1));
    if window.1 > window.0 {
        t.push(window.1);
    }
    t
}

fn trapezoid<F: FnMut(&[f64]) -> f64>(traj: &Trajectory, window: (f64, f64), mut f: F) -> f64 {
    let times = window_times(traj, window);
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &t in &times {
        let v = f(&traj.state_at(t));
        if let Some((t0, v0)) = prev {
            total += 0.5 * (t - t0) * (v + v0);
        }
        prev = Some((t, v));
    }
    total
}

fn level_sum(grid: &RadialGrid, u: &[f64], b: f64, r: f64, theta: f64, sigma: f64) -> f64 {
    let k = grid.nodes_below(r);
    grid.cell_volumes()[..k]
        .iter()
        .zip(&u[..k])
        .map(|(v, x)| {
            let d = x - b - theta;
            if d > 0.0 {
                v * d.powf(sigma)
            } else {
                0.0
            }
        })
        .sum()
}

/// `∫_{t₁}^{t₂} Σ_{rᵢ<r} Vᵢ (uᵢ - θ)₊^σ dt`, trapezoid over the snapshots.
pub fn level_energy(
    traj: &Trajectory,
    grid: &RadialGrid,
    r: f64,
    theta_level: f64,
    sigma: f64,
    window: (f64, f64),
) -> Result<f64> {
    if !(r > 0.0 && r <= grid.radius()) {
        return Err(Error::Domain(format!("radius {r} outside (0, {}]", grid.radius())));
    }
    if !(theta_level >= 0.0) {
        return Err(Error::Domain(format!("level must be non-negative, got {theta_level}")));
    }
    check_window(traj, window)?;
    let b = traj.initial().boundary_value();
    Ok(trapezoid(traj, window, |u| level_sum(grid, u, b, r, theta_level, sigma)))
}

fn require_zero_start(traj: &Trajectory, grid: &RadialGrid, radius: f64) -> Result<()> {
    if radius > grid.radius() {
        return Err(Error::Domain(format!(
            "ball radius {radius} exceeds the domain radius {}",
            grid.radius()
        )));
    }
    let init = traj.initial();
    let b = init.boundary_value();
    let k = grid.nodes_below(radius);
    if let Some(v) = init.values()[..k].iter().find(|&&v| v - b != 0.0) {
        return Err(Error::Precondition(format!(
            "the iteration needs u(·,0) = 0 on the ball of radius {radius}, found {}",
            v - b
        )));
    }
    Ok(())
}

fn manifold_measure(m: &ModelManifold, r: f64) -> Result<f64> {
    volume_of_ball(m, r)
}

fn a_constant(params: &LeibensonParams, setup: &IterationSetup) -> f64 {
    let (p, nu, lam) = (params.p(), setup.nu, setup.lambda);
    let e = params.diffusivity_exponent();
    2f64.powf(lam * nu + p * (1.0 + nu) + e + nu * e.max(0.0))
}

/// Computes `J_k` on the ladder of shrinking cylinders `B(r_k) × [0, T]`.
pub fn run_iteration(traj: &Trajectory, grid: &RadialGrid, setup: &IterationSetup) -> Result<IterationTrace> {
    setup.validate()?;
    require_zero_start(traj, grid, setup.radius)?;
    let params = traj.params;
    let big_r = setup.radius;
    let window = (traj.start_time(), traj.end_time());
    let mu = manifold_measure(grid.manifold(), big_r)?;
    let j0 = level_energy(traj, grid, big_r, 0.0, setup.sigma, window)?;
    let theta = setup.theta.unwrap_or_else(|| {
        (setup.c_const * j0 / (setup.iota * mu * big_r.powf(params.p()))).powf(1.0 / setup.lambda)
    });
    let ks = setup.k_max + 1;
    let radii: Vec<f64> = (0..ks).map(|k| (0.5 + 0.5f64.powi(k as i32 + 1)) * big_r).collect();
    let levels: Vec<f64> = (0..ks).map(|k| (1.0 - 0.5f64.powi(k as i32)) * theta).collect();
    let b = traj.initial().boundary_value();
    // One pass over time for every rung.
    let energies = {
        let times = window_times(traj, window);
        let mut acc = vec![0.0; ks];
        let mut prev: Option<(f64, Vec<f64>)> = None;
        for &t in &times {
            let u = traj.state_at(t);
            let vals: Vec<f64> = (0..ks)
                .map(|k| level_sum(grid, &u, b, radii[k], levels[k], setup.sigma))
                .collect();
            if let Some((t0, v0)) = &prev {
                for k in 0..ks {
                    acc[k] += 0.5 * (t - t0) * (vals[k] + v0[k]);
                }
            }
            prev = Some((t, vals));
        }
        acc
    };
    let a = a_constant(&params, setup);
    let big_theta = (setup.iota * mu * theta.powf(setup.lambda) * big_r.powf(params.p())).powf(setup.nu);
    let mut rho: f64 = 0.0;
    let mut recursion: f64 = 0.0;
    let mut monotone = true;
    for k in 0..setup.k_max {
        let (jk, jn) = (energies[k], energies[k + 1]);
        if jn > jk * (1.0 + 1e-12) {
            monotone = false;
        }
        if jk > 0.0 {
            rho = rho.max(jn / jk);
            let denom = a.powi(k as i32) * jk.powf(1.0 + setup.nu);
            if denom > 0.0 {
                recursion = recursion.max(jn * big_theta / denom);
            }
        }
    }
    let bound_rhs = (0..ks).map(|k| a.powf(-(k as f64) / setup.nu) * j0).collect();
    let verdict = if j0 == 0.0 || (monotone && rho <= setup.rho_max) {
        Verdict::GeometricDecay
    } else {
        Verdict::Violated
    };
    Ok(IterationTrace {
        radii,
        levels,
        energies,
        theta,
        big_theta,
        a_const: a,
        rho,
        recursion_ratio: recursion,
        bound_rhs,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanValueReport {
    /// `sup u` over `B(R/2) × [0, T]`.
    pub lhs: f64,
    /// `(C J₀ / (ι μ(B) R^p))^{1/λ}` with the setup's constant.
    pub rhs: f64,
    pub ratio: f64,
    /// The constant that turns the inequality into an equality.
    pub c_star: f64,
    pub j0: f64,
}

/// Evaluates both sides of the mean value inequality on `B(R) × [0, T]`.
pub fn mean_value_check(traj: &Trajectory, grid: &RadialGrid, setup: &IterationSetup) -> Result<MeanValueReport> {
    require_zero_start(traj, grid, setup.radius)?;
    let p = traj.params.p();
    let big_r = setup.radius;
    let mu = manifold_measure(grid.manifold(), big_r)?;
    let window = (traj.start_time(), traj.end_time());
    let j0 = level_energy(traj, grid, big_r, 0.0, setup.sigma, window)?;
    let half = grid.nodes_below(0.5 * big_r).max(1);
    // Every step is covered through the per-step maxima only at the pole
    // region, so use the snapshots, which include the final state.
    let b = traj.initial().boundary_value();
    let lhs = traj
        .snapshots
        .iter()
        .flat_map(|s| s.values()[..half].iter().map(move |v| v - b))
        .fold(0.0f64, f64::max);
    let denom = setup.iota * mu * big_r.powf(p);
    let rhs = (setup.c_const * j0 / denom).powf(1.0 / setup.lambda);
    let c_star = if j0 > 0.0 { lhs.powf(setup.lambda) * denom / j0 } else { 0.0 };
    Ok(MeanValueReport {
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY },
        c_star,
        j0,
    })
}

/// Piecewise-linear radial cut-off: 1 on `[0, inner]`, 0 beyond the midpoint
/// of `[inner, outer]`, so `|∇η| = 2/(outer - inner)` on the ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutOff {
    pub inner: f64,
    pub outer: f64,
}

impl CutOff {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner) {
            return Err(Error::Domain(format!("cut-off needs 0 <= inner < outer, got [{inner}, {outer}]")));
        }
        Ok(Self { inner, outer })
    }

    pub fn eval(&self, r: f64) -> f64 {
        let mid = 0.5 * (self.inner + self.outer);
        if r <= self.inner {
            1.0
        } else if r >= mid {
            0.0
        } else {
            (mid - r) / (mid - self.inner)
        }
    }
}

/// The constants of the Caccioppoli inequality with `ε^{p'} = (λ - 1)/(2p)`.
pub fn caccioppoli_constants(params: &LeibensonParams, sigma: f64) -> (f64, f64) {
    let (p, q) = (params.p(), params.q());
    let lambda = sigma - params.delta();
    let alpha = sigma / p;
    let p_conj = p / (p - 1.0);
    let eps = ((lambda - 1.0) / (2.0 * p)).powf(1.0 / p_conj);
    let core = lambda - 1.0 - p * eps.powf(p_conj);
    let qp = q.powf(p - 1.0);
    let c1 = lambda * qp * core * 2f64.powf(1.0 - p).min(2f64.powf(q * (p - 1.0))) * alpha.powf(-p);
    let c2 = lambda * qp * (core * alpha.powf(-p) + p / eps.powf(p));
    (c1, c2)
}

/// `Σ_faces area·h·|Δg/h|^p`, the discrete `∫|∇g|^p`.
fn gradient_p(grid: &RadialGrid, g: &[f64], p: f64) -> f64 {
    let areas = grid.face_areas();
    (0..grid.cells())
        .map(|f| {
            let h = grid.spacing(f);
            areas[f] * h * ((g[f + 1] - g[f]) / h).abs().powf(p)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaccioppoliSample {
    pub theta0: f64,
    pub theta1: f64,
    pub inner: f64,
    pub outer: f64,
    pub t1: f64,
    pub t2: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaccioppoliReport {
    pub c1: f64,
    pub c2: f64,
    pub samples: Vec<CaccioppoliSample>,
    /// `max lhs/rhs`; at most 1 when every sample satisfies the inequality.
    pub worst_ratio: f64,
}

impl CaccioppoliReport {
    pub fn passed(&self) -> bool {
        self.samples.iter().all(|s| s.lhs <= s.rhs * (1.0 + 1e-12) + 1e-300)
    }
}

/// Discrete Caccioppoli inequality for time-independent cut-offs:
/// `[Σ V (u-θ₁)₊^λ η^p]_{t₁}^{t₂} + c₁ κ₋ ∫∫|∇((u-θ₁)₊^α η)|^p
///  ≤ c₂ κ₊ ∫∫ (u-θ₀)₊^σ |∇η|^p`, `κ± = (θ₁/(θ₁-θ₀))^{((q-1)(p-1))±}`.
pub fn caccioppoli_check(
    traj: &Trajectory,
    grid: &RadialGrid,
    sigma: f64,
    levels: &[(f64, f64)],
    cutoffs: &[CutOff],
    window: (f64, f64),
) -> Result<CaccioppoliReport> {
    let params = traj.params;
    let (p, q) = (params.p(), params.q());
    if sigma < p.max(p * q) {
        return Err(Error::Precondition(format!(
            "Caccioppoli needs sigma >= max(p, pq) = {}, got {sigma}",
            p.max(p * q)
        )));
    }
    check_window(traj, window)?;
    let lambda = sigma - params.delta();
    let alpha = sigma / p;
    let (c1, c2) = caccioppoli_constants(&params, sigma);
    let e = params.diffusivity_exponent();
    let b = traj.initial().boundary_value();
    let nodes = grid.nodes();
    let vols = grid.cell_volumes();
    let areas = grid.face_areas();
    let mut samples = Vec::new();
    for &(theta0, theta1) in levels {
        if !(theta1 > theta0 && theta0 > 0.0) {
            return Err(Error::Domain(format!("levels need θ₁ > θ₀ > 0, got ({theta0}, {theta1})")));
        }
        let ratio = theta1 / (theta1 - theta0);
        let k_minus = ratio.powf((-e).max(0.0));
        let k_plus = ratio.powf(e.max(0.0));
        for cut in cutoffs {
            let eta: Vec<f64> = nodes.iter().map(|&r| cut.eval(r)).collect();
            let top = |u: &[f64]| -> f64 {
                vols.iter()
                    .zip(u)
                    .zip(&eta)
                    .map(|((v, x), h)| v * (x - b - theta1).max(0.0).powf(lambda) * h.powf(p))
                    .sum()
            };
            let grad = trapezoid(traj, window, |u| {
                let g: Vec<f64> = u
                    .iter()
                    .zip(&eta)
                    .map(|(x, h)| (x - b - theta1).max(0.0).powf(alpha) * h)
                    .collect();
                gradient_p(grid, &g, p)
            });
            let rhs_int = trapezoid(traj, window, |u| {
                (0..grid.cells())
                    .map(|f| {
                        let h = grid.spacing(f);
                        let de = ((eta[f + 1] - eta[f]) / h).abs().powf(p);
                        if de == 0.0 {
                            return 0.0;
                        }
                        let a = (u[f] - b - theta0).max(0.0).powf(sigma);
                        let c = (u[f + 1] - b - theta0).max(0.0).powf(sigma);
                        areas[f] * h * 0.5 * (a + c) * de
                    })
                    .sum()
            });
            let change = top(&traj.state_at(window.1)) - top(&traj.state_at(window.0));
            samples.push(CaccioppoliSample {
                theta0,
                theta1,
                inner: cut.inner,
                outer: cut.outer,
                t1: window.0,
                t2: window.1,
                lhs: change + c1 * k_minus * grad,
                rhs: c2 * k_plus * rhs_int,
            });
        }
    }
    let worst_ratio = samples
        .iter()
        .map(|s| {
            if s.rhs > 0.0 {
                s.lhs / s.rhs
            } else if s.lhs <= 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CaccioppoliReport {
        c1,
        c2,
        samples,
        worst_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormDecaySample {
    pub t1: f64,
    pub t2: f64,
    /// `[Σ V u^λ]_{t₁}^{t₂}`.
    pub change: f64,
    /// `∫∫ |∇u^α|^p`.
    pub gradient: f64,
    /// Largest `c₁` for which the inequality holds on this window.
    pub c1_fit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormDecayReport {
    pub samples: Vec<NormDecaySample>,
    /// Smallest fitted `c₁` over windows with a non-zero gradient term.
    pub c1_min: f64,
}

impl NormDecayReport {
    pub fn passed(&self) -> bool {
        self.samples.iter().all(|s| s.change <= 1e-12 * s.gradient.max(1.0) && (s.gradient == 0.0 || s.c1_fit > 0.0))
    }
}

/// `[Σ V u^λ]_{t₁}^{t₂} + c₁ ∫∫|∇u^α|^p ≤ 0` on `windows` consecutive windows.
pub fn norm_decay_check(traj: &Trajectory, grid: &RadialGrid, sigma: f64, windows: usize) -> Result<NormDecayReport> {
    let params = traj.params;
    let (p, q) = (params.p(), params.q());
    if sigma < p * q {
        return Err(Error::Precondition(format!("norm decay needs sigma >= pq = {}, got {sigma}", p * q)));
    }
    let lambda = sigma - params.delta();
    let alpha = sigma / p;
    let b = traj.initial().boundary_value();
    let vols = grid.cell_volumes();
    let power_sum = |u: &[f64]| -> f64 { vols.iter().zip(u).map(|(v, x)| v * (x - b).max(0.0).powf(lambda)).sum() };
    let (t0, t_end) = (traj.start_time(), traj.end_time());
    let count = windows.max(1);
    let mut samples = Vec::with_capacity(count);
    for k in 0..count {
        let t1 = t0 + (t_end - t0) * k as f64 / count as f64;
        let t2 = if k + 1 == count { t_end } else { t0 + (t_end - t0) * (k + 1) as f64 / count as f64 };
        let change = power_sum(&traj.state_at(t2)) - power_sum(&traj.state_at(t1));
        let gradient = trapezoid(traj, (t1, t2), |u| {
            let g: Vec<f64> = u.iter().map(|x| (x - b).max(0.0).powf(alpha)).collect();
            gradient_p(grid, &g, p)
        });
        let c1_fit = if gradient > 0.0 { -change / gradient } else { f64::INFINITY };
        samples.push(NormDecaySample {
            t1,
            t2,
            change,
            gradient,
            c1_fit,
        });
    }
    let c1_min = samples
        .iter()
        .filter(|s| s.gradient > 0.0)
        .map(|s| s.c1_fit)
        .fold(f64::INFINITY, f64::min);
    Ok(NormDecayReport { samples, c1_min })
}

/// Smallest discrete `p`-Rayleigh quotient `∫|∇f|^p / ∫|f|^p` on the ball of
/// radius `radius` with zero boundary values, by inverse power iteration.
/// Each inverse step is explicit in radial symmetry: the flux through the
/// sphere of radius `r` equals the mass of the right side inside it.
pub fn principal_eigenvalue(m: &ModelManifold, radius: f64, p: f64, cells: usize) -> Result<f64> {
    let grid = build_grid(m, radius, cells, Grading::Uniform)?;
    let n = grid.len();
    let vols = grid.cell_volumes();
    let areas = grid.face_areas();
    let mut f: Vec<f64> = grid.nodes().iter().map(|r| 1.0 - r / radius).collect();
    let rayleigh = |f: &[f64]| -> f64 {
        let num = gradient_p(&grid, f, p);
        let den: f64 = vols.iter().zip(f).map(|(v, x)| v * x.abs().powf(p)).sum();
        num / den
    };
    let mut last = rayleigh(&f);
    for _ in 0..500 {
        let mut w = vec![0.0; n];
        let mut inside = 0.0;
        let mut slopes = vec![0.0; grid.cells()];
        for face in 0..grid.cells() {
            inside += vols[face] * p_power(f[face], p);
            // |w'|^{p-2} w' = -inside / area
            slopes[face] = -p_power(inside / areas[face], p / (p - 1.0));
        }
        for face in (0..grid.cells()).rev() {
            w[face] = w[face + 1] - slopes[face] * grid.spacing(face);
        }
        let top = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        f = w.iter().map(|v| v / top).collect();
        let now = rayleigh(&f);
        if (now - last).abs() <= 1e-13 * now {
            last = now;
            break;
        }
        last = now;
    }
    Ok(last)
}

/// `ι = (R^p λ₁)^{1/ν}`: the constant that makes the Faber-Krahn bound
/// `∫ f^p ≤ R^p (μ(D)/(ι μ(B)))^ν ∫|∇f|^p` sharp for `D = B`.
pub fn calibrate_faber_krahn(m: &ModelManifold, radius: f64, p: f64, nu: f64, cells: usize) -> Result<f64> {
    let lambda1 = principal_eigenvalue(m, radius, p, cells)?;
    Ok((radius.powf(p) * lambda1).powf(1.0 / nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StateField;
    use crate::integrator::{run_limit, TimeStepConfig};
    use std::f64::consts::PI;

    #[test]
    fn laplacian_eigenvalue_on_interval() {
        let m = ModelManifold::euclidean(1);
        let l = principal_eigenvalue(&m, 1.0, 2.0, 400).unwrap();
        let exact = PI * PI / 4.0;
        assert!((l - exact).abs() < 1e-4 * exact, "{l} vs {exact}");
        let iota = calibrate_faber_krahn(&m, 1.0, 2.0, 2.0, 400).unwrap();
        assert!((iota - PI / 2.0).abs() < 1e-4);
    }

    #[test]
    fn disc_eigenvalue_is_bessel_zero() {
        // j_{0,1}² on the unit disc.
        let m = ModelManifold::euclidean(2);
        let l = principal_eigenvalue(&m, 1.0, 2.0, 800).unwrap();
        let j01: f64 = 2.404_825_557_695_773;
        assert!((l - j01 * j01).abs() < 1e-3 * j01 * j01, "{l}");
    }

    #[test]
    fn cutoff_shape() {
        let c = CutOff::new(0.2, 0.6).unwrap();
        assert_eq!(c.eval(0.1), 1.0);
        assert_eq!(c.eval(0.5), 0.0);
        assert!((c.eval(0.3) - 0.5).abs() < 1e-15);
        assert!(CutOff::new(0.5, 0.5).is_err());
    }

    #[test]
    fn caccioppoli_constants_positive() {
        for (p, q) in [(2.0, 2.0), (3.0, 1.0), (2.5, 0.8), (1.5, 1.5)] {
            let prm = LeibensonParams::new(p, q).unwrap();
            let sigma = p.max(p * q);
            let (c1, c2) = caccioppoli_constants(&prm, sigma);
            assert!(c1 > 0.0 && c2 > c1, "p={p} q={q}: {c1} {c2}");
        }
    }

    fn zero_run() -> (RadialGrid, Trajectory) {
        let g = build_grid(&ModelManifold::euclidean(1), 2.0, 64, Grading::Uniform).unwrap();
        let prm = LeibensonParams::new(3.0, 1.0).unwrap();
        let t = run_limit(&g, &StateField::zeros(&g), &prm, &TimeStepConfig::new(1e-2, 0.1), 1).unwrap();
        (g, t)
    }

    #[test]
    fn zero_trajectory_is_trivial() {
        let (g, t) = zero_run();
        let prm = t.params;
        let setup = IterationSetup::new(&prm, 3.0, 1.0, 3.0, 1.0).unwrap();
        let tr = run_iteration(&t, &g, &setup).unwrap();
        assert!(tr.energies.iter().all(|&j| j == 0.0));
        assert_eq!(tr.verdict, Verdict::GeometricDecay);
        let mv = mean_value_check(&t, &g, &setup).unwrap();
        assert_eq!((mv.lhs, mv.rhs), (0.0, 0.0));
        assert_eq!(level_energy(&t, &g, 1.0, 5.0, 1.0, (0.0, 0.1)).unwrap(), 0.0);
    }

    #[test]
    fn window_and_setup_errors() {
        let (g, t) = zero_run();
        assert!(level_energy(&t, &g, 1.0, 0.0, 1.0, (0.0, 0.2)).is_err());
        let prm = LeibensonParams::new(3.0, 1.0).unwrap();
        assert!(IterationSetup::new(&prm, 1.0, 1.0, 3.0, 1.0).is_err());
        let bad = IterationSetup::new(&prm, 3.0, 1.0, 3.0, 1.0).unwrap().with_k_max(4);
        assert!(run_iteration(&t, &g, &bad).is_err());
    }
}
