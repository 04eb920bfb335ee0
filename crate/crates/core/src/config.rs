//! Run configuration: a TOML file with one table per concern. Unknown keys are
//! rejected and every error names the offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{LeibensonParams, RegLevel};
use crate::geometry::{read_columns, ModelManifold, Warping, WarpingTable};
use crate::grid::{build_grid, Grading, RadialGrid, StateField};
use crate::integrator::{heuristic_dt, ContinuationSchedule, Stepping, TimeStepConfig};
use crate::oracle::{BarenblattFamily, BarenblattProfile};
use crate::propagation::default_sigma;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for the randomized comparison pairs.
    #[serde(default)]
    pub seed: u64,
    pub manifold: ManifoldSpec,
    pub equation: EquationSpec,
    pub grid: GridSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub continuation: ContinuationSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory that relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldKind {
    Euclidean,
    Hyperbolic,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub dimension: u32,
    /// Two-column `r ψ(r)` file, for `kind = "tabulated"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSpec {
    pub p: f64,
    pub q: f64,
    /// Exponent of the level energies and rate fits; defaults by regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Domain radius R.
    pub radius: f64,
    /// Number of cells M.
    pub cells: usize,
    #[serde(default)]
    pub grading: Grading,
}

fn default_newton_tol() -> f64 {
    1e-10
}
fn default_newton_max() -> usize {
    30
}
fn default_one() -> f64 {
    1.0
}
fn default_snapshot_every() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    /// Time step; the grid heuristic times `dt_scale` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_one")]
    pub dt_scale: f64,
    pub t_end: f64,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max")]
    pub newton_max: usize,
    #[serde(default)]
    pub stepping: Stepping,
    /// Step grows like `dt_growth · t` once that exceeds `dt`.
    #[serde(default)]
    pub dt_growth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    /// Steps between stored snapshots.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_ladder() -> Vec<f64> {
    vec![1e1, 1e2, 1e3, 1e4]
}
fn default_margin() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSpec {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_ladder")]
    pub n_values: Vec<f64>,
    /// Truncation counts as inactive while `max u ≤ margin · N`.
    #[serde(default = "default_margin")]
    pub barrier_margin: f64,
}

impl Default for ContinuationSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            n_values: default_ladder(),
            barrier_margin: default_margin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `amplitude · (1 - ((r - center)/width)²)₊^power`.
    Bump {
        #[serde(default)]
        center: f64,
        width: f64,
        amplitude: f64,
        #[serde(default = "default_one")]
        power: f64,
    },
    /// `amplitude · 4(r - inner)(outer - r)/(outer - inner)²` on the annulus.
    Annulus { inner: f64, outer: f64, amplitude: f64 },
    /// A self-similar profile at `t = 0`: give `support` with `amplitude` or
    /// `t_offset`, or `constant` with `t_offset`.
    BarenblattSnapshot {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        family: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amplitude: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_offset: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constant: Option<f64>,
    },
    /// Two-column `r u` file, linearly interpolated, zero past the last row.
    Tabulated {
        file: PathBuf,
        #[serde(default = "default_one")]
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// Reverses the sign of every face flux; used to check that the
    /// monitors catch a broken operator.
    FlippedFlux,
}

fn default_pairs() -> usize {
    1
}
fn default_k_max() -> usize {
    8
}
fn default_rho_max() -> f64 {
    0.9
}
fn default_mean_value_constant() -> f64 {
    32.0
}
fn default_threshold() -> f64 {
    1e-8
}
fn default_rate_tolerance() -> f64 {
    0.1
}
fn default_scaling_tolerance() -> f64 {
    0.15
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default = "default_true")]
    pub comparison: bool,
    /// Random ordered pairs in the comparison check.
    #[serde(default = "default_pairs")]
    pub comparison_pairs: usize,
    #[serde(default = "default_true")]
    pub norms: bool,
    #[serde(default = "default_true")]
    pub energy: bool,
    #[serde(default = "default_true")]
    pub mass: bool,
    #[serde(default = "default_true")]
    pub caccioppoli: bool,
    #[serde(default = "default_true")]
    pub degiorgi: bool,
    /// Radius of the ball B(R) of the De Giorgi ladder; the inner radius of
    /// annulus data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degiorgi_radius: Option<f64>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
    /// Constant C of the mean value inequality.
    #[serde(default = "default_mean_value_constant")]
    pub mean_value_constant: f64,
    /// Support threshold relative to the initial maximum.
    #[serde(default = "default_threshold")]
    pub support_threshold: f64,
    /// Largest accepted `rel_err` of a rate fit.
    #[serde(default = "default_rate_tolerance")]
    pub rate_tolerance: f64,
    /// Largest accepted relative error of a dead-core scaling slope.
    #[serde(default = "default_scaling_tolerance")]
    pub scaling_tolerance: f64,
    #[serde(default)]
    pub mutation: Mutation,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            comparison: true,
            comparison_pairs: default_pairs(),
            norms: true,
            energy: true,
            mass: true,
            caccioppoli: true,
            degiorgi: true,
            degiorgi_radius: None,
            k_max: default_k_max(),
            rho_max: default_rho_max(),
            mean_value_constant: default_mean_value_constant(),
            support_threshold: default_threshold(),
            rate_tolerance: default_rate_tolerance(),
            scaling_tolerance: default_scaling_tolerance(),
            mutation: Mutation::None,
        }
    }
}

fn default_amplitudes() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Amplitude factors applied to the initial data.
    #[serde(default = "default_amplitudes")]
    pub amplitudes: Vec<f64>,
    /// Dead-core ball radii B0; data live on (B0, 1.5 B0) in a domain of 2 B0.
    #[serde(default)]
    pub dead_core_radii: Vec<f64>,
    /// Radius B0 used for the dead-core amplitude sweep.
    #[serde(default = "default_one")]
    pub dead_core_radius: f64,
    /// Horizon of the dead-core run at `dead_core_radius` and unit amplitude;
    /// other runs scale it by `(B0/dead_core_radius)^p · amplitude^{-δ}`.
    /// Defaults to `time.t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dead_core_t_end: Option<f64>,
    /// `[p, q]` points for the `sweep` command.
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            amplitudes: default_amplitudes(),
            dead_core_radii: Vec::new(),
            dead_core_radius: 1.0,
            dead_core_t_end: None,
            points: Vec::new(),
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

/// Sampled initial data, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialTable {
    r: Vec<f64>,
    u: Vec<f64>,
}

impl InitialTable {
    pub fn new(r: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if r.len() != u.len() || r.len() < 2 {
            return Err(Error::Domain("initial-data table needs at least two rows".into()));
        }
        if r[0] != 0.0 {
            return Err(Error::Domain("initial-data table must start at r = 0".into()));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("initial-data radii must be strictly increasing".into()));
        }
        if r.iter().chain(&u).any(|v| !v.is_finite()) {
            return Err(Error::Domain("initial-data table contains non-finite values".into()));
        }
        if let Some(v) = u.iter().find(|&&v| v < 0.0) {
            return Err(Error::Domain(format!("initial data must be non-negative, found {v}")));
        }
        Ok(Self { r, u })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (r, u) = read_columns(text)?;
        Self::new(r, u)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.r.partition_point(|&v| v <= x);
        if k >= self.r.len() {
            return if x == *self.r.last().unwrap() { *self.u.last().unwrap() } else { 0.0 };
        }
        let k = k.max(1);
        let (r0, r1) = (self.r[k - 1], self.r[k]);
        let (u0, u1) = (self.u[k - 1], self.u[k]);
        u0 + (u1 - u0) * (x - r0) / (r1 - r0)
    }
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub params: LeibensonParams,
    pub grid: RadialGrid,
    pub u0: StateField,
    pub time: TimeStepConfig,
    pub snapshot_every: usize,
    pub schedule: Option<ContinuationSchedule>,
    pub sigma: f64,
    /// The profile behind a Barenblatt snapshot.
    pub oracle: Option<BarenblattProfile>,
    /// The config with every default filled in and file paths absolute.
    pub resolved: RunConfig,
}

fn field_err(field: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::config(field, other.to_string()),
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Parses TOML text; relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.message().to_string()))?;
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().message().to_string();
            // Name the missing key itself rather than its parent table.
            let field = match message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
                Some(name) if path == "." || path.is_empty() => name.to_string(),
                Some(name) => format!("{path}.{name}"),
                None if path == "." => "<document>".into(),
                None => path,
            };
            Error::config(field, message)
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    fn path_of(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn params(&self) -> Result<LeibensonParams> {
        let e = &self.equation;
        LeibensonParams::new(e.p, e.q).map_err(|err| field_err(if e.p > 1.0 { "equation.q" } else { "equation.p" }, err))
    }

    pub fn manifold(&self) -> Result<ModelManifold> {
        let m = &self.manifold;
        if m.dimension == 0 {
            return Err(Error::config("manifold.dimension", "dimension must be >= 1"));
        }
        let radius = self.grid.radius;
        positive("grid.radius", radius)?;
        match m.kind {
            ManifoldKind::Euclidean | ManifoldKind::Hyperbolic => {
                if m.file.is_some() {
                    return Err(Error::config("manifold.file", "only tabulated manifolds take a file"));
                }
                let w = if m.kind == ManifoldKind::Euclidean { Warping::Euclidean } else { Warping::Sinh };
                ModelManifold::new(m.dimension, w, radius.max(1.0)).map_err(|e| field_err("grid.radius", e))
            }
            ManifoldKind::Tabulated => {
                let file = m
                    .file
                    .as_ref()
                    .ok_or_else(|| Error::config("manifold.file", "tabulated manifolds need a file"))?;
                let path = self.path_of(file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::config("manifold.file", format!("cannot read {}: {e}", path.display())))?;
                let table = WarpingTable::parse(&text).map_err(|e| field_err("manifold.file", e))?;
                let top = table.r_max();
                ModelManifold::new(m.dimension, Warping::Tabulated(table), top)
                    .map_err(|e| field_err("manifold.file", e))
            }
        }
    }

    pub fn sigma(&self, params: &LeibensonParams) -> Result<f64> {
        match self.equation.sigma {
            Some(s) => {
                positive("equation.sigma", s)?;
                Ok(s)
            }
            None => Ok(default_sigma(params)),
        }
    }

    fn initial_values(&self, grid: &RadialGrid, params: &LeibensonParams) -> Result<(Vec<f64>, Option<BarenblattProfile>)> {
        match &self.initial {
            InitialSpec::Bump {
                center,
                width,
                amplitude,
                power,
            } => {
                positive("initial.width", *width)?;
                positive("initial.power", *power)?;
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::config("initial.amplitude", "amplitude must be >= 0"));
                }
                if !center.is_finite() || *center < 0.0 {
                    return Err(Error::config("initial.center", "center must be >= 0"));
                }
                let v = grid.sample(|r| {
                    let s = (r - center) / width;
                    amplitude * (1.0 - s * s).max(0.0).powf(*power)
                });
                Ok((v, None))
            }
            InitialSpec::Annulus { inner, outer, amplitude } => {
                if !(*inner >= 0.0 && outer > inner && outer.is_finite()) {
                    return Err(Error::config("initial.outer", "annulus needs 0 <= inner < outer"));
                }
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::config("initial.amplitude", "amplitude must be >= 0"));
                }
                let w = outer - inner;
                let v = grid.sample(|r| {
                    if r > *inner && r < *outer {
                        amplitude * 4.0 * (r - inner) * (outer - r) / (w * w)
                    } else {
                        0.0
                    }
                });
                Ok((v, None))
            }
            InitialSpec::BarenblattSnapshot {
                family,
                support,
                amplitude,
                t_offset,
                constant,
            } => {
                let fam = BarenblattFamily::for_params(params).ok_or_else(|| {
                    Error::config(
                        "initial.kind",
                        format!("no self-similar family has p = {}, q = {}", params.p(), params.q()),
                    )
                })?;
                if let Some(name) = family {
                    if name != fam.name() {
                        return Err(Error::config(
                            "initial.family",
                            format!("equation exponents select `{}`, not `{name}`", fam.name()),
                        ));
                    }
                }
                let n = grid.manifold().dimension();
                if !grid.manifold().is_euclidean() {
                    return Err(Error::config("manifold.kind", "self-similar snapshots need a euclidean manifold"));
                }
                let profile = match (support, amplitude, t_offset, constant) {
                    (Some(s), Some(a), None, None) => BarenblattProfile::with_support_amplitude(fam, n, *s, *a),
                    (Some(s), None, Some(t), None) => BarenblattProfile::with_support(fam, n, *s, *t),
                    (None, None, Some(t), Some(c)) => BarenblattProfile::new(fam, n, *c, *t),
                    _ => {
                        return Err(Error::config(
                            "initial",
                            "give `support` with `amplitude` or `t_offset`, or `constant` with `t_offset`",
                        ))
                    }
                }
                .map_err(|e| field_err("initial", e))?;
                Ok((profile.sample(grid, 0.0), Some(profile)))
            }
            InitialSpec::Tabulated { file, scale } => {
                if !(*scale >= 0.0 && scale.is_finite()) {
                    return Err(Error::config("initial.scale", "scale must be >= 0"));
                }
                let path = self.path_of(file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::config("initial.file", format!("cannot read {}: {e}", path.display())))?;
                let table = InitialTable::parse(&text).map_err(|e| field_err("initial.file", e))?;
                Ok((grid.sample(|r| scale * table.eval(r)), None))
            }
        }
    }

    /// Validates everything and builds the grid, data and solver settings.
    pub fn prepare(&self) -> Result<RunSetup> {
        let params = self.params()?;
        let manifold = self.manifold()?;
        if self.grid.cells < 4 {
            return Err(Error::config("grid.cells", format!("need at least 4 cells, got {}", self.grid.cells)));
        }
        let grid =
            build_grid(&manifold, self.grid.radius, self.grid.cells, self.grid.grading).map_err(|e| field_err("grid", e))?;
        let sigma = self.sigma(&params)?;
        let (values, oracle) = self.initial_values(&grid, &params)?;
        let u0 = StateField::nonnegative(values, 0.0, 0.0).map_err(|e| field_err("initial", e))?;

        let t = &self.time;
        positive("time.dt_scale", t.dt_scale)?;
        let dt = match t.dt {
            Some(dt) => dt,
            None => {
                let amp = u0.max();
                let mut dt = t.dt_scale * heuristic_dt(&grid, &params, amp);
                // A fresh self-similar profile changes on the scale of its offset.
                if let Some(o) = &oracle {
                    dt = dt.min(0.01 * o.t_offset());
                }
                dt
            }
        };
        let mut time = TimeStepConfig::new(dt, t.t_end).with_tolerance(t.newton_tol);
        time.newton_max = t.newton_max;
        time.stepping = t.stepping;
        time = time.with_growth(t.dt_growth, t.dt_max.unwrap_or(f64::INFINITY));
        time.validate()?;
        if t.snapshot_every == 0 {
            return Err(Error::config("time.snapshot_every", "must be >= 1"));
        }

        let schedule = if self.continuation.enabled {
            for &n in &self.continuation.n_values {
                RegLevel::new(n).map_err(|e| field_err("continuation.n_values", e))?;
            }
            Some(
                ContinuationSchedule::new(&self.continuation.n_values, self.continuation.barrier_margin)
                    .map_err(|e| field_err("continuation", e))?,
            )
        } else {
            None
        };
        if schedule.is_some() {
            params.require_pq().map_err(|e| field_err("equation.q", e))?;
        }

        let d = &self.diagnostics;
        if d.k_max < 6 {
            return Err(Error::config("diagnostics.k_max", format!("k_max must be >= 6, got {}", d.k_max)));
        }
        if !(d.rho_max > 0.0 && d.rho_max < 1.0) {
            return Err(Error::config("diagnostics.rho_max", "rho_max must lie in (0, 1)"));
        }
        positive("diagnostics.mean_value_constant", d.mean_value_constant)?;
        positive("diagnostics.support_threshold", d.support_threshold)?;
        positive("diagnostics.rate_tolerance", d.rate_tolerance)?;
        positive("diagnostics.scaling_tolerance", d.scaling_tolerance)?;
        if let Some(r) = d.degiorgi_radius {
            positive("diagnostics.degiorgi_radius", r)?;
            if r > self.grid.radius {
                return Err(Error::config("diagnostics.degiorgi_radius", "must not exceed grid.radius"));
            }
        }
        for (i, a) in self.sweep.amplitudes.iter().enumerate() {
            positive(&format!("sweep.amplitudes[{i}]"), *a)?;
        }
        for (i, r) in self.sweep.dead_core_radii.iter().enumerate() {
            positive(&format!("sweep.dead_core_radii[{i}]"), *r)?;
        }
        positive("sweep.dead_core_radius", self.sweep.dead_core_radius)?;
        if let Some(t) = self.sweep.dead_core_t_end {
            positive("sweep.dead_core_t_end", t)?;
        }
        for (i, [p, q]) in self.sweep.points.iter().enumerate() {
            LeibensonParams::new(*p, *q).map_err(|e| field_err(&format!("sweep.points[{i}]"), e))?;
        }

        let mut resolved = self.clone();
        resolved.equation.sigma = Some(sigma);
        resolved.time.dt = Some(dt);
        if let Some(f) = &self.manifold.file {
            resolved.manifold.file = Some(self.path_of(f));
        }
        if let InitialSpec::Tabulated { file, .. } = &mut resolved.initial {
            *file = self.path_of(file);
        }
        if resolved.diagnostics.degiorgi_radius.is_none() {
            resolved.diagnostics.degiorgi_radius = self.default_degiorgi_radius();
        }
        Ok(RunSetup {
            params,
            grid,
            u0,
            time,
            snapshot_every: t.snapshot_every,
            schedule,
            sigma,
            oracle,
            resolved,
        })
    }

    fn default_degiorgi_radius(&self) -> Option<f64> {
        match self.initial {
            InitialSpec::Annulus { inner, .. } if inner > 0.0 => Some(inner),
            _ => None,
        }
    }

    /// Same run with the initial data multiplied by `factor`.
    pub fn with_amplitude(&self, factor: f64) -> Result<Self> {
        let mut c = self.clone();
        match &mut c.initial {
            InitialSpec::Bump { amplitude, .. } | InitialSpec::Annulus { amplitude, .. } => *amplitude *= factor,
            InitialSpec::Tabulated { scale, .. } => *scale *= factor,
            InitialSpec::BarenblattSnapshot { .. } => {
                return Err(Error::config("sweep.amplitudes", "self-similar snapshots cannot be rescaled"))
            }
        }
        Ok(c)
    }

    /// Same run with different exponents.
    pub fn with_exponents(&self, p: f64, q: f64) -> Self {
        let mut c = self.clone();
        c.equation.p = p;
        c.equation.q = q;
        c.equation.sigma = None;
        c.time.dt = None;
        c
    }

    /// The dead-core layout at ball radius `b0`: annulus data on
    /// `(b0, 1.5 b0)` with peak `amplitude` in a domain of radius `2 b0`.
    pub fn dead_core_layout(&self, b0: f64, amplitude: f64) -> Self {
        let mut c = self.clone();
        let delta = self.equation.q * (self.equation.p - 1.0) - 1.0;
        let reference = self.sweep.dead_core_t_end.unwrap_or(self.time.t_end);
        c.time.t_end = reference * (b0 / self.sweep.dead_core_radius).powf(self.equation.p) * amplitude.powf(-delta);
        c.grid.radius = 2.0 * b0;
        c.initial = InitialSpec::Annulus {
            inner: b0,
            outer: 1.5 * b0,
            amplitude,
        };
        c.time.dt = None;
        c.continuation.enabled = false;
        c.diagnostics.degiorgi_radius = Some(b0);
        c
    }
}
