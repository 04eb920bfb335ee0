//! Implicit Euler in time with a damped Newton inner solve, the regularized
//! runs with their barrier reports, and the N-continuation pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{ContinuationRow, DistanceTable, Error, Result};
use crate::flux::{signed_pow, LeibensonParams, RegLevel, GRADIENT_EPS};
use crate::grid::{norm_of, FluxMode, Operator, RadialGrid, StateField};

/// Halvings allowed before a step is declared failed (`dt · 2^-10`).
pub const MAX_HALVINGS: u32 = 10;

/// Tolerance on the discrete barrier checks.
pub const BARRIER_TOL: f64 = 1e-8;

/// Sup norm below which a state with zero boundary value counts as extinct;
/// one more fast-diffusion step from here stays clear of underflow.
const EXTINCT: f64 = 1e-60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepping {
    Fixed,
    #[default]
    AdaptiveHalving,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStepConfig {
    /// Base step. With `dt_growth > 0` this is the floor of the step size.
    pub dt: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub stepping: Stepping,
    /// When positive the nominal step is `max(dt, dt_growth · t)`, so the
    /// relative time resolution stays fixed on long self-similar runs.
    pub dt_growth: f64,
    pub dt_max: f64,
}

impl TimeStepConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            newton_tol: 1e-10,
            newton_max: 30,
            stepping: Stepping::AdaptiveHalving,
            dt_growth: 0.0,
            dt_max: f64::INFINITY,
        }
    }

    pub fn with_growth(mut self, growth: f64, dt_max: f64) -> Self {
        self.dt_growth = growth;
        self.dt_max = dt_max;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.newton_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("time.dt", format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("time.t_end", format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.newton_tol > 0.0 && self.newton_tol <= 1e-2) {
            return Err(Error::config(
                "time.newton_tol",
                format!("newton_tol must lie in (0, 1e-2], got {}", self.newton_tol),
            ));
        }
        if self.newton_max < 5 {
            return Err(Error::config("time.newton_max", format!("newton_max must be >= 5, got {}", self.newton_max)));
        }
        if !(self.dt_growth >= 0.0 && self.dt_growth < 1.0) {
            return Err(Error::config("time.dt_growth", format!("dt_growth must lie in [0, 1), got {}", self.dt_growth)));
        }
        if !(self.dt_max >= self.dt) {
            return Err(Error::config("time.dt_max", "dt_max must be >= dt"));
        }
        Ok(())
    }

    fn nominal_step(&self, elapsed: f64) -> f64 {
        (self.dt.max(self.dt_growth * elapsed)).min(self.dt_max)
    }
}

/// Default step size: `(h/R)^{p/(p-1)} R^p a^{-δ}`, i.e. the grid-scale
/// diffusion time for data of amplitude `a`.
pub fn heuristic_dt(grid: &RadialGrid, params: &LeibensonParams, amplitude: f64) -> f64 {
    let r = grid.radius();
    let h = grid.max_spacing();
    let p = params.p();
    let a = if amplitude > 0.0 { amplitude } else { 1.0 };
    (h / r).powf(p / (p - 1.0)) * r.powf(p) * a.powf(-params.delta())
}

/// `N`-ladder for the continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSchedule {
    levels: Vec<RegLevel>,
    barrier_margin: f64,
}

impl ContinuationSchedule {
    pub fn new(n_values: &[f64], barrier_margin: f64) -> Result<Self> {
        if n_values.is_empty() {
            return Err(Error::config("continuation.n_values", "schedule is empty"));
        }
        let levels = n_values
            .iter()
            .map(|&n| RegLevel::new(n).map_err(|e| Error::config("continuation.n_values", e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if n_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("continuation.n_values", "levels must be strictly increasing"));
        }
        if !(barrier_margin > 0.0 && barrier_margin < 1.0) {
            return Err(Error::config(
                "continuation.barrier_margin",
                format!("barrier_margin must lie in (0, 1), got {barrier_margin}"),
            ));
        }
        Ok(Self { levels, barrier_margin })
    }

    /// `N ∈ {10, 10², 10³, 10⁴}`.
    pub fn default_ladder() -> Self {
        Self::new(&[1e1, 1e2, 1e3, 1e4], 0.5).expect("valid default")
    }

    pub fn levels(&self) -> &[RegLevel] {
        &self.levels
    }

    pub fn barrier_margin(&self) -> f64 {
        self.barrier_margin
    }
}

/// Discrete L¹, L², L^{q+1}, L^∞ norms of one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormSample {
    pub l1: f64,
    pub l2: f64,
    pub lq1: f64,
    pub linf: f64,
}

impl NormSample {
    pub fn of(grid: &RadialGrid, values: &[f64], q: f64) -> Self {
        let v = grid.cell_volumes();
        Self {
            l1: norm_of(v, values, 1.0),
            l2: norm_of(v, values, 2.0),
            lq1: norm_of(v, values, q + 1.0),
            linf: norm_of(v, values, f64::INFINITY),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.l1, self.l2, self.lq1, self.linf]
    }
}

/// Per-step bookkeeping for the structural monitors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Time at the end of the step.
    pub time: f64,
    pub dt: f64,
    pub iterations: usize,
    pub residual: f64,
    pub picard: bool,
    /// `Σ_{i<M} V_i (u⁺_i - u_i)`.
    pub mass_change: f64,
    /// `dt · A_{M-1/2} Φ_{M-1/2}(u⁺)`, the signed inflow through `r = R`.
    pub boundary_inflow: f64,
    /// `Σ_{i<M} V_i |u⁺_i|`, the scale for relative mass checks.
    pub mass_scale: f64,
    /// `dt · Σ_f A_f Φ_f (u⁺_{f+1} - u⁺_f)`.
    pub dissipation: f64,
    /// `½ Σ_{i<M} V_i (u⁺_i - u_i)²`, the implicit-Euler numerical dissipation.
    pub numerical_dissipation: f64,
    /// `½ Σ V_i (u⁺_i - b)²`.
    pub energy: f64,
    pub min: f64,
    pub max: f64,
    pub norms: NormSample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
    pub picard: bool,
}

/// A sequence of snapshots plus the per-step log of the run that made them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode: FluxMode,
    pub params: LeibensonParams,
    pub snapshots: Vec<StateField>,
    pub steps: Vec<StepRecord>,
    pub initial_norms: NormSample,
    pub initial_energy: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &StateField {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &StateField {
        self.snapshots.last().unwrap()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }

    pub fn start_time(&self) -> f64 {
        self.initial().time()
    }

    pub fn end_time(&self) -> f64 {
        self.last().time()
    }

    /// Linear interpolation in time between stored snapshots.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let snaps = &self.snapshots;
        if t <= snaps[0].time() {
            return snaps[0].values().to_vec();
        }
        let k = snaps.partition_point(|s| s.time() < t);
        if k >= snaps.len() {
            return self.last().values().to_vec();
        }
        let (a, b) = (&snaps[k - 1], &snaps[k]);
        let span = b.time() - a.time();
        let w = if span > 0.0 { (t - a.time()) / span } else { 1.0 };
        a.values().iter().zip(b.values()).map(|(x, y)| x + w * (y - x)).collect()
    }

    /// Minimum over every step (not only snapshots), including the data.
    pub fn running_min(&self) -> f64 {
        self.steps.iter().map(|s| s.min).fold(self.initial().min(), f64::min)
    }

    pub fn running_max(&self) -> f64 {
        self.steps.iter().map(|s| s.max).fold(self.initial().max(), f64::max)
    }
}

fn thomas(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    for i in 1..n {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
}

struct Workspace {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    trial: Vec<f64>,
    transfers: Vec<f64>,
}

impl Workspace {
    fn new(nodes: usize) -> Self {
        Self {
            lower: vec![0.0; nodes],
            diag: vec![0.0; nodes],
            upper: vec![0.0; nodes],
            rhs: vec![0.0; nodes],
            trial: vec![0.0; nodes],
            transfers: vec![0.0; nodes],
        }
    }
}

/// One implicit Euler step `(u⁺ - u)/dt = L(u⁺)` on a fixed operator.
struct StepSolver<'a, 'b> {
    op: &'b Operator<'a>,
    tol: f64,
    max_iter: usize,
}

impl StepSolver<'_, '_> {
    fn residual(&self, x: &[f64], old: &[f64], dt: f64, ws_transfers: &mut [f64], out: &mut [f64]) -> f64 {
        let grid = self.op.grid();
        let m = grid.cells();
        let areas = grid.face_areas();
        let vols = grid.cell_volumes();
        for f in 0..m {
            ws_transfers[f] = areas[f] * self.op.face_flux(f, x[f], x[f + 1]);
        }
        let mut sq = 0.0;
        for i in 0..m {
            let west = if i == 0 { 0.0 } else { ws_transfers[i - 1] };
            let r = vols[i] * (x[i] - old[i]) - dt * (ws_transfers[i] - west);
            out[i] = r;
            sq += r * r / vols[i];
        }
        sq.sqrt()
    }

    /// Residual left by rounding alone: the flux driven by node differences of
    /// a few ulps. Negligible for `p ≥ 2`; for `p < 2` the flux is only Hölder
    /// in the gradient and this floor can exceed a relative tolerance.
    fn rounding_floor(&self, x: &[f64], dt: f64) -> f64 {
        let grid = self.op.grid();
        let areas = grid.face_areas();
        let vols = grid.cell_volumes();
        let m = grid.cells();
        let mut prev = 0.0;
        let mut sq = 0.0;
        for i in 0..m {
            let a = x[i];
            let ulp = 4.0 * f64::EPSILON * a.abs().max(x[i + 1].abs());
            let here = (areas[i] * self.op.face_flux(i, a, a + ulp)).abs();
            let r = dt * (here + prev);
            sq += r * r / vols[i];
            prev = here;
        }
        sq.sqrt()
    }

    fn scale(&self, old: &[f64], x: &[f64]) -> f64 {
        let v = self.op.grid().cell_volumes();
        let a = norm_of(v, old, 2.0);
        let b = norm_of(v, x, 2.0);
        a.max(b)
    }

    /// Newton with backtracking, then Picard if Newton stalls.
    ///
    /// In limit mode with `q < 1` Newton iterates on `v = u^q`: the map
    /// `u ↦ u^q` has an unbounded derivative at 0, while `v ↦ v^{1/q}` does not.
    fn solve(&self, old: &[f64], dt: f64, ws: &mut Workspace) -> std::result::Result<(Vec<f64>, NewtonStats), f64> {
        let grid = self.op.grid();
        let m = grid.cells();
        let q = self.op.params().q();
        let power = self.op.mode() == FluxMode::Limit && q < 1.0;
        let amp = old.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if amp < EXTINCT && old[m] == 0.0 {
            // Fast diffusion empties the domain in finite time; below this
            // level squared norms underflow, so settle on the zero steady state.
            return Ok((vec![0.0; m + 1], NewtonStats { iterations: 0, residual: 0.0, picard: false }));
        }
        let mut x = old.to_vec();
        let mut f = vec![0.0; m];
        let mut res = self.residual(&x, old, dt, &mut ws.transfers, &mut f);
        let mut scale = self.scale(old, &x);
        let rel = |r: f64, s: f64| if s > 0.0 { r / s } else { r };
        let target = |s: f64| self.tol * if s > 0.0 { s } else { 1.0 };
        let done = |r: f64, s: f64| r <= target(s);
        // Accepts an iterate that stagnated at the rounding floor.
        let stalled_ok = |r: f64, s: f64, x: &[f64]| r <= target(s) + self.rounding_floor(x, dt);
        if done(res, scale) {
            return Ok((x, NewtonStats { iterations: 0, residual: rel(res, scale), picard: false }));
        }
        let floor = 1e-12 * amp;
        let mut y: Vec<f64> = if power {
            x.iter().map(|&u| signed_pow(u, q)).collect()
        } else {
            x.clone()
        };
        let mut y_trial = y.clone();
        let mut ft = vec![0.0; m];
        for it in 1..=self.max_iter {
            let eps = GRADIENT_EPS * self.op.gradient_scale(&x).max(1e-300);
            if power {
                self.assemble_newton_power(&y, dt, eps, floor.powf(q), ws);
            } else {
                self.assemble_newton(&x, dt, eps, floor, ws);
            }
            for i in 0..m {
                ws.rhs[i] = -f[i];
            }
            thomas(&ws.lower[..m], &mut ws.diag[..m], &ws.upper[..m], &mut ws.rhs[..m]);
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                ws.trial.copy_from_slice(&x);
                for i in 0..m {
                    y_trial[i] = y[i] + lambda * ws.rhs[i];
                    ws.trial[i] = if power { signed_pow(y_trial[i], 1.0 / q) } else { y_trial[i] };
                }
                let r_try = self.residual(&ws.trial, old, dt, &mut ws.transfers, &mut ft);
                if r_try.is_finite() && r_try <= (1.0 - 1e-4 * lambda) * res {
                    x.copy_from_slice(&ws.trial);
                    y[..m].copy_from_slice(&y_trial[..m]);
                    f.copy_from_slice(&ft);
                    res = r_try;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            scale = self.scale(old, &x);
            if done(res, scale) {
                return Ok((x, NewtonStats { iterations: it, residual: rel(res, scale), picard: false }));
            }
            if !accepted {
                break;
            }
        }
        if stalled_ok(res, scale, &x) {
            return Ok((x, NewtonStats { iterations: self.max_iter, residual: rel(res, scale), picard: false }));
        }
        // Picard on frozen secant diffusivities.
        for it in 1..=self.max_iter {
            self.assemble_picard(&x, dt, ws);
            for i in 0..m {
                ws.rhs[i] = grid.cell_volumes()[i] * old[i];
            }
            ws.rhs[m - 1] += ws.upper[m - 1] * -x[m];
            ws.upper[m - 1] = 0.0;
            thomas(&ws.lower[..m], &mut ws.diag[..m], &ws.upper[..m], &mut ws.rhs[..m]);
            x[..m].copy_from_slice(&ws.rhs[..m]);
            res = self.residual(&x, old, dt, &mut ws.transfers, &mut f);
            scale = self.scale(old, &x);
            if !res.is_finite() {
                return Err(f64::NAN);
            }
            if done(res, scale) {
                return Ok((
                    x,
                    NewtonStats { iterations: self.max_iter + it, residual: rel(res, scale), picard: true },
                ));
            }
        }
        if res.is_finite() && stalled_ok(res, scale, &x) {
            return Ok((x, NewtonStats { iterations: 2 * self.max_iter, residual: rel(res, scale), picard: true }));
        }
        Err(rel(res, scale))
    }

    fn assemble_newton(&self, x: &[f64], dt: f64, eps: f64, floor: f64, ws: &mut Workspace) {
        let grid = self.op.grid();
        let m = grid.cells();
        let areas = grid.face_areas();
        let vols = grid.cell_volumes();
        for i in 0..m {
            ws.diag[i] = vols[i];
            ws.lower[i] = 0.0;
            ws.upper[i] = 0.0;
        }
        for f in 0..m {
            let (dl, dr) = self.op.face_flux_derivatives(f, x[f], x[f + 1], eps, floor);
            let a = dt * areas[f];
            // F_f gets -T_f, F_{f+1} gets +T_f.
            ws.diag[f] -= a * dl;
            if f + 1 < m {
                ws.upper[f] -= a * dr;
                ws.lower[f + 1] += a * dl;
                ws.diag[f + 1] += a * dr;
            }
        }
    }

    /// Jacobian with respect to `v = u^q` (limit mode only).
    fn assemble_newton_power(&self, y: &[f64], dt: f64, eps: f64, floor: f64, ws: &mut Workspace) {
        let grid = self.op.grid();
        let m = grid.cells();
        let areas = grid.face_areas();
        let vols = grid.cell_volumes();
        let inv_q = 1.0 / self.op.params().q();
        for i in 0..m {
            ws.diag[i] = vols[i] * inv_q * y[i].abs().max(floor).powf(inv_q - 1.0);
            ws.lower[i] = 0.0;
            ws.upper[i] = 0.0;
        }
        for f in 0..m {
            let d = self.op.power_flux_derivative(f, y[f], y[f + 1], eps);
            let a = dt * areas[f] * d;
            ws.diag[f] += a;
            if f + 1 < m {
                ws.upper[f] -= a;
                ws.lower[f + 1] -= a;
                ws.diag[f + 1] += a;
            }
        }
    }

    /// Linear system with `T_f ≈ D_f (x_{f+1} - x_f)` where `D_f` is the
    /// secant transfer coefficient at the current iterate.
    fn assemble_picard(&self, x: &[f64], dt: f64, ws: &mut Workspace) {
        let grid = self.op.grid();
        let m = grid.cells();
        let areas = grid.face_areas();
        let vols = grid.cell_volumes();
        let amp = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        for i in 0..m {
            ws.diag[i] = vols[i];
            ws.lower[i] = 0.0;
            ws.upper[i] = 0.0;
        }
        for f in 0..m {
            let du = x[f + 1] - x[f];
            let d = if du.abs() > 1e-14 * amp {
                self.op.face_flux(f, x[f], x[f + 1]) / du
            } else {
                let eps = GRADIENT_EPS * amp;
                self.op.face_flux_derivatives(f, x[f], x[f + 1], eps, 1e-12 * amp).1
            };
            let c = dt * areas[f] * d.max(0.0);
            ws.diag[f] += c;
            ws.upper[f] -= c;
            if f + 1 < m {
                ws.lower[f + 1] -= c;
                ws.diag[f + 1] += c;
            }
        }
        // upper[m-1] couples to the pinned node; the caller moves it to the rhs.
    }
}

fn record(op: &Operator, old: &[f64], new: &[f64], time: f64, dt: f64, stats: NewtonStats) -> StepRecord {
    let grid = op.grid();
    let m = grid.cells();
    let vols = grid.cell_volumes();
    let b = new[m];
    let transfers = op.face_transfers(new);
    let mut mass_change = 0.0;
    let mut mass_scale = 0.0;
    let mut numerical = 0.0;
    for i in 0..m {
        let d = new[i] - old[i];
        mass_change += vols[i] * d;
        mass_scale += vols[i] * new[i].abs();
        numerical += 0.5 * vols[i] * d * d;
    }
    let dissipation: f64 = dt * (0..m).map(|f| transfers[f] * (new[f + 1] - new[f])).sum::<f64>();
    StepRecord {
        time,
        dt,
        iterations: stats.iterations,
        residual: stats.residual,
        picard: stats.picard,
        mass_change,
        boundary_inflow: dt * transfers[m - 1],
        mass_scale,
        dissipation,
        numerical_dissipation: numerical,
        energy: energy_of(vols, new, b),
        min: new.iter().copied().fold(f64::INFINITY, f64::min),
        max: new.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        norms: NormSample::of(grid, new, op.params().q()),
    }
}

fn energy_of(vols: &[f64], u: &[f64], b: f64) -> f64 {
    vols.iter().zip(u).map(|(v, x)| 0.5 * v * (x - b) * (x - b)).sum()
}

/// A single implicit step of size `dt`, without halving.
pub fn step_with(op: &Operator, state: &StateField, dt: f64, cfg: &TimeStepConfig) -> Result<(StateField, StepRecord)> {
    let grid = op.grid();
    if state.len() != grid.len() {
        return Err(Error::Contract(format!(
            "state has {} values but the grid has {} nodes",
            state.len(),
            grid.len()
        )));
    }
    let solver = StepSolver {
        op,
        tol: cfg.newton_tol,
        max_iter: cfg.newton_max,
    };
    let mut ws = Workspace::new(grid.len());
    let old = state.values();
    let time = state.time() + dt;
    match solver.solve(old, dt, &mut ws) {
        Ok((x, stats)) if x.iter().all(|v| v.is_finite()) => {
            let rec = record(op, old, &x, time, dt, stats);
            Ok((StateField::from_parts_unchecked(x, time, state.boundary_value()), rec))
        }
        Ok(_) => Err(Error::SolverFailure {
            time,
            dt,
            residual: f64::NAN,
            iterations: 2 * cfg.newton_max,
        }),
        Err(residual) => Err(Error::SolverFailure {
            time,
            dt,
            residual,
            iterations: 2 * cfg.newton_max,
        }),
    }
}

/// One step of nominal size `cfg.dt`, halving on failure when the config
/// allows it.
pub fn step_implicit(
    grid: &RadialGrid,
    state: &StateField,
    params: &LeibensonParams,
    reg: Option<RegLevel>,
    cfg: &TimeStepConfig,
) -> Result<StateField> {
    let mode = reg.map_or(FluxMode::Limit, FluxMode::Regularized);
    let op = Operator::new(grid, *params, mode);
    let mut dt = cfg.dt;
    let mut state = state.clone();
    let target = state.time() + cfg.dt;
    // A halved step must still cover the full nominal interval.
    while state.time() < target * (1.0 - 1e-15) {
        let h = dt.min(target - state.time());
        match step_with(&op, &state, h, cfg) {
            Ok((next, _)) => state = next,
            Err(e @ Error::SolverFailure { .. }) => {
                if cfg.stepping == Stepping::Fixed || dt < cfg.dt * 0.5f64.powi(MAX_HALVINGS as i32) * 1.5 {
                    return Err(e);
                }
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(state.with_time(target))
}

/// Advances `initial` to `cfg.t_end` (absolute time).
pub fn integrate(op: &Operator, initial: StateField, cfg: &TimeStepConfig, snapshot_every: usize) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = op.grid();
    if initial.len() != grid.len() {
        return Err(Error::Contract(format!(
            "state has {} values but the grid has {} nodes",
            initial.len(),
            grid.len()
        )));
    }
    let every = snapshot_every.max(1);
    let q = op.params().q();
    let initial_norms = NormSample::of(grid, initial.values(), q);
    let initial_energy = energy_of(grid.cell_volumes(), initial.values(), initial.boundary_value());
    let t0 = initial.time();
    let mut traj = Trajectory {
        mode: op.mode(),
        params: *op.params(),
        snapshots: vec![initial.clone()],
        steps: Vec::new(),
        initial_norms,
        initial_energy,
    };
    let mut state = initial;
    let mut halvings = 0u32;
    let mut since_snapshot = 0usize;
    let end = cfg.t_end;
    while state.time() < end {
        let nominal = cfg.nominal_step(state.time() - t0);
        let mut dt = nominal * 0.5f64.powi(halvings as i32);
        let remaining = end - state.time();
        let last = dt >= remaining * (1.0 - 1e-12);
        if last {
            dt = remaining;
        }
        match step_with(op, &state, dt, cfg) {
            Ok((mut next, rec)) => {
                if last {
                    next = next.with_time(end);
                }
                traj.steps.push(rec);
                state = next;
                since_snapshot += 1;
                if since_snapshot >= every || state.time() >= end {
                    traj.snapshots.push(state.clone());
                    since_snapshot = 0;
                }
                halvings = halvings.saturating_sub(1);
            }
            Err(e @ Error::SolverFailure { .. }) => {
                if cfg.stepping == Stepping::Fixed || halvings >= MAX_HALVINGS {
                    return Err(e);
                }
                halvings += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

/// Outcome of the two barrier checks on a regularized run.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierReport {
    pub n: f64,
    /// `1/N`.
    pub floor: f64,
    /// `‖u₀‖_∞ + 1/N`.
    pub ceiling: f64,
    /// `min (u - 1/N)` over every step.
    pub min_excess: f64,
    pub max_value: f64,
    pub tol: f64,
    /// `(time, value)` of steps that dipped below `1/N - tol`.
    pub lower_violations: Vec<(f64, f64)>,
    /// `(time, value)` of steps that rose above the ceiling by more than `tol`.
    pub upper_violations: Vec<(f64, f64)>,
}

impl BarrierReport {
    pub fn lower_ok(&self) -> bool {
        self.lower_violations.is_empty()
    }

    pub fn upper_ok(&self) -> bool {
        self.upper_violations.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.lower_ok() && self.upper_ok()
    }
}

fn barrier_report(traj: &Trajectory, reg: RegLevel, data_max: f64) -> BarrierReport {
    let floor = reg.floor();
    let ceiling = data_max + floor;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for s in &traj.steps {
        if s.min < floor - BARRIER_TOL {
            lower.push((s.time, s.min));
        }
        if s.max > ceiling + BARRIER_TOL {
            upper.push((s.time, s.max));
        }
    }
    BarrierReport {
        n: reg.n(),
        floor,
        ceiling,
        min_excess: traj.running_min() - floor,
        max_value: traj.running_max(),
        tol: BARRIER_TOL,
        lower_violations: lower,
        upper_violations: upper,
    }
}

fn check_data(grid: &RadialGrid, u0: &StateField) -> Result<()> {
    if u0.len() != grid.len() {
        return Err(Error::Contract(format!(
            "initial data has {} values but the grid has {} nodes",
            u0.len(),
            grid.len()
        )));
    }
    if let Some(v) = u0.values().iter().find(|&&v| v < 0.0) {
        return Err(Error::Precondition(format!("initial data must be non-negative, found {v}")));
    }
    Ok(())
}

/// Solves the regularized problem from `u₀ + 1/N` with boundary value `1/N`.
pub fn run_regularized(
    grid: &RadialGrid,
    u0: &StateField,
    params: &LeibensonParams,
    reg: RegLevel,
    cfg: &TimeStepConfig,
    snapshot_every: usize,
) -> Result<(Trajectory, BarrierReport)> {
    params.require_pq()?;
    check_data(grid, u0)?;
    let base = StateField::new(u0.values().to_vec(), u0.time(), 0.0)?;
    let start = base.shifted(reg.floor());
    let op = Operator::new(grid, *params, FluxMode::Regularized(reg));
    let traj = integrate(&op, start, cfg, snapshot_every)?;
    let report = barrier_report(&traj, reg, base.max().max(0.0));
    Ok((traj, report))
}

/// Limit-mode run from `u₀` with zero boundary value.
pub fn run_limit(
    grid: &RadialGrid,
    u0: &StateField,
    params: &LeibensonParams,
    cfg: &TimeStepConfig,
    snapshot_every: usize,
) -> Result<Trajectory> {
    check_data(grid, u0)?;
    let start = StateField::new(u0.values().to_vec(), u0.time(), 0.0)?;
    let op = Operator::new(grid, *params, FluxMode::Limit);
    integrate(&op, start, cfg, snapshot_every)
}

/// `∫∫ |u - v|` over space and time, trapezoid in time over the snapshots of
/// `a`; `b` is interpolated in time.
pub fn space_time_l1_distance(grid: &RadialGrid, a: &Trajectory, b: &Trajectory) -> f64 {
    let vols = grid.cell_volumes();
    let mut prev: Option<(f64, f64)> = None;
    let mut total = 0.0;
    for s in &a.snapshots {
        let other = b.state_at(s.time());
        let d: f64 = vols
            .iter()
            .zip(s.values())
            .zip(&other)
            .map(|((v, x), y)| v * (x - y).abs())
            .sum();
        if let Some((t0, d0)) = prev {
            total += 0.5 * (s.time() - t0) * (d + d0);
        }
        prev = Some((s.time(), d));
    }
    total
}

/// Space-time L¹ norm of a trajectory (trapezoid over snapshots).
pub fn space_time_l1(grid: &RadialGrid, a: &Trajectory) -> f64 {
    let vols = grid.cell_volumes();
    let mut prev: Option<(f64, f64)> = None;
    let mut total = 0.0;
    for s in &a.snapshots {
        let d: f64 = vols.iter().zip(s.values()).map(|(v, x)| v * x.abs()).sum();
        if let Some((t0, d0)) = prev {
            total += 0.5 * (s.time() - t0) * (d + d0);
        }
        prev = Some((s.time(), d));
    }
    total
}

#[derive(Debug, Clone)]
pub struct ContinuationLevel {
    pub reg: RegLevel,
    pub trajectory: Trajectory,
    pub barriers: BarrierReport,
    /// Distance to the previous level's trajectory.
    pub distance: Option<f64>,
    /// `max u ≤ barrier_margin · N`: the upper truncation never engaged.
    pub truncation_inactive: bool,
}

#[derive(Debug, Clone)]
pub struct ContinuationOutcome {
    pub levels: Vec<ContinuationLevel>,
    pub limit: Trajectory,
    /// Distance from the limit run to the last regularized run.
    pub limit_distance: f64,
}

impl ContinuationOutcome {
    pub fn table(&self) -> DistanceTable {
        DistanceTable(
            self.levels
                .iter()
                .map(|l| ContinuationRow {
                    n: l.reg.n(),
                    distance: l.distance,
                })
                .collect(),
        )
    }

    pub fn last_gap(&self) -> Option<f64> {
        self.levels.last().and_then(|l| l.distance)
    }
}

/// Regularized runs along the schedule, then a limit-mode run, with the
/// successive distances required to shrink and the limit run to sit within
/// twice the last gap.
pub fn run_continuation(
    grid: &RadialGrid,
    u0: &StateField,
    params: &LeibensonParams,
    schedule: &ContinuationSchedule,
    cfg: &TimeStepConfig,
    snapshot_every: usize,
) -> Result<ContinuationOutcome> {
    params.require_pq()?;
    check_data(grid, u0)?;
    cfg.validate()?;
    // Levels are independent initial-value problems.
    let (runs, limit) = std::thread::scope(|scope| {
        let handles: Vec<_> = schedule
            .levels()
            .iter()
            .map(|&reg| scope.spawn(move || run_regularized(grid, u0, params, reg, cfg, snapshot_every)))
            .collect();
        let limit = run_limit(grid, u0, params, cfg, snapshot_every);
        let runs: Vec<_> = handles.into_iter().map(|h| h.join().expect("level worker panicked")).collect();
        (runs, limit)
    });
    let limit = limit?;
    let mut levels: Vec<ContinuationLevel> = Vec::with_capacity(runs.len());
    for (run, &reg) in runs.into_iter().zip(schedule.levels()) {
        let (trajectory, barriers) = run?;
        let distance = levels
            .last()
            .map(|prev| space_time_l1_distance(grid, &trajectory, &prev.trajectory));
        let truncation_inactive = barriers.max_value <= schedule.barrier_margin() * reg.n();
        levels.push(ContinuationLevel {
            reg,
            trajectory,
            barriers,
            distance,
            truncation_inactive,
        });
    }
    let limit_distance = space_time_l1_distance(grid, &limit, &levels.last().unwrap().trajectory);
    let outcome = ContinuationOutcome {
        levels,
        limit,
        limit_distance,
    };
    let gaps: Vec<f64> = outcome.levels.iter().filter_map(|l| l.distance).collect();
    if gaps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::ContinuationStalled {
            reason: "successive distances are not strictly decreasing".into(),
            table: outcome.table(),
        });
    }
    if let Some(&last) = gaps.last() {
        if !(outcome.limit_distance <= 2.0 * last) {
            return Err(Error::ContinuationStalled {
                reason: format!(
                    "limit run sits {:.3e} from the last level, more than twice the last gap {:.3e}",
                    outcome.limit_distance, last
                ),
                table: outcome.table(),
            });
        }
    }
    Ok(outcome)
}
