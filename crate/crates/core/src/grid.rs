//! Vertex-centred finite volumes on `[0, R]` in the radial chart.
//!
//! Node `i` owns the dual cell `[r_{i-1/2}, r_{i+1/2}]` (with `r_{-1/2} = 0`
//! and `r_{M+1/2} = R`). Fluxes live on the faces `r_{i+1/2}`; the pole face
//! carries zero flux and node `M` is a pinned Dirichlet node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{self, LeibensonParams, RegLevel};
use crate::geometry::ModelManifold;

pub const MIN_CELLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grading {
    #[default]
    Uniform,
    /// 30% of the cells in the outer 10% of the radius.
    BoundaryRefined,
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    manifold: ModelManifold,
    nodes: Vec<f64>,
    cell_volumes: Vec<f64>,
    face_areas: Vec<f64>,
    face_weights: Vec<f64>,
}

impl RadialGrid {
    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `V_i`, the measure of the dual cell of node `i`.
    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volumes
    }

    /// `ω_{n-1} ψ(r_{i+1/2})^{n-1}`, one entry per face `i + 1/2`.
    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    /// `ω_{n-1} ψ(r_{i+1/2})^{n-1} / (r_{i+1} - r_i)`.
    pub fn face_weights(&self) -> &[f64] {
        &self.face_weights
    }

    /// Number of cells `M`; there are `M + 1` nodes.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn radius(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn spacing(&self, face: usize) -> f64 {
        self.nodes[face + 1] - self.nodes[face]
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn total_volume(&self) -> f64 {
        self.cell_volumes.iter().sum()
    }

    /// Samples `f` at the nodes.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }

    /// Index one past the last node with `r_i < r`.
    pub fn nodes_below(&self, r: f64) -> usize {
        self.nodes.partition_point(|&x| x < r)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.nodes.len() {
            return Err(Error::Contract(format!(
                "state has {len} values but the grid has {} nodes",
                self.nodes.len()
            )));
        }
        Ok(())
    }
}

pub fn build_grid(m: &ModelManifold, radius: f64, cells: usize, grading: Grading) -> Result<RadialGrid> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::config("grid.radius", format!("radius must be positive, got {radius}")));
    }
    if radius > m.r_max() {
        return Err(Error::config(
            "grid.radius",
            format!("radius {radius} exceeds the manifold range {}", m.r_max()),
        ));
    }
    if cells < MIN_CELLS {
        return Err(Error::config("grid.cells", format!("need at least {MIN_CELLS} cells, got {cells}")));
    }
    let nodes: Vec<f64> = match grading {
        Grading::Uniform => (0..=cells)
            .map(|i| if i == cells { radius } else { radius * i as f64 / cells as f64 })
            .collect(),
        Grading::BoundaryRefined => {
            let outer = (0.3 * cells as f64).ceil() as usize;
            let inner = cells - outer;
            let knee = 0.9 * radius;
            (0..=cells)
                .map(|i| {
                    if i <= inner {
                        knee * i as f64 / inner as f64
                    } else if i == cells {
                        radius
                    } else {
                        knee + (radius - knee) * (i - inner) as f64 / outer as f64
                    }
                })
                .collect()
        }
    };
    let faces: Vec<f64> = nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut cell_volumes = Vec::with_capacity(nodes.len());
    for i in 0..nodes.len() {
        let lo = if i == 0 { 0.0 } else { faces[i - 1] };
        let hi = if i == cells { radius } else { faces[i] };
        cell_volumes.push(m.shell_measure(lo, hi));
    }
    let face_areas: Vec<f64> = faces.iter().map(|&r| m.sphere_measure(r)).collect();
    let face_weights = face_areas
        .iter()
        .zip(nodes.windows(2))
        .map(|(a, w)| a / (w[1] - w[0]))
        .collect();
    Ok(RadialGrid {
        manifold: m.clone(),
        nodes,
        cell_volumes,
        face_areas,
        face_weights,
    })
}

/// Which flux the operator uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxMode {
    /// Truncated flux `A(u, ∇u)`, boundary value `1/N`.
    Regularized(RegLevel),
    /// Degenerate flux `|∇u^q|^{p-2}∇u^q`, boundary value 0.
    Limit,
}

impl FluxMode {
    pub fn boundary_value(self) -> f64 {
        match self {
            FluxMode::Regularized(reg) => reg.floor(),
            FluxMode::Limit => 0.0,
        }
    }

    pub fn reg_level(self) -> Option<RegLevel> {
        match self {
            FluxMode::Regularized(r) => Some(r),
            FluxMode::Limit => None,
        }
    }
}

/// Nodal values at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    values: Vec<f64>,
    time: f64,
    boundary_value: f64,
}

impl StateField {
    /// Pins the last value to `boundary_value`; rejects non-finite data.
    pub fn new(mut values: Vec<f64>, time: f64, boundary_value: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Contract("a state needs at least two nodes".into()));
        }
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::Contract(format!("state time must be finite and >= 0, got {time}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite value at node {i}")));
        }
        *values.last_mut().unwrap() = boundary_value;
        Ok(Self {
            values,
            time,
            boundary_value,
        })
    }

    /// As [`StateField::new`], additionally requiring non-negative values.
    pub fn nonnegative(values: Vec<f64>, time: f64, boundary_value: f64) -> Result<Self> {
        if let Some(i) = values.iter().position(|&v| v < 0.0) {
            return Err(Error::Domain(format!("negative value {} at node {i}", values[i])));
        }
        Self::new(values, time, boundary_value)
    }

    pub fn zeros(grid: &RadialGrid) -> Self {
        Self::new(vec![0.0; grid.len()], 0.0, 0.0).expect("zero state")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn boundary_value(&self) -> f64 {
        self.boundary_value
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Adds `shift` to every value, including the boundary value.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + shift).collect(),
            time: self.time,
            boundary_value: self.boundary_value + shift,
        }
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub(crate) fn from_parts_unchecked(values: Vec<f64>, time: f64, boundary_value: f64) -> Self {
        Self {
            values,
            time,
            boundary_value,
        }
    }
}

/// The discrete divergence-form operator on a fixed grid.
#[derive(Debug, Clone)]
pub struct Operator<'a> {
    grid: &'a RadialGrid,
    params: LeibensonParams,
    mode: FluxMode,
    flux_sign: f64,
}

impl<'a> Operator<'a> {
    pub fn new(grid: &'a RadialGrid, params: LeibensonParams, mode: FluxMode) -> Self {
        Self {
            grid,
            params,
            mode,
            flux_sign: 1.0,
        }
    }

    /// Reverses the sign of every face flux. Only used to check that the
    /// monitors catch a broken operator.
    pub fn with_flipped_flux(mut self) -> Self {
        self.flux_sign = -self.flux_sign;
        self
    }

    pub fn grid(&self) -> &'a RadialGrid {
        self.grid
    }

    pub fn params(&self) -> &LeibensonParams {
        &self.params
    }

    pub fn mode(&self) -> FluxMode {
        self.mode
    }

    pub fn flux_sign(&self) -> f64 {
        self.flux_sign
    }

    /// Flux density `Φ` across face `i + 1/2` from the two adjacent values.
    #[inline]
    pub fn face_flux(&self, face: usize, left: f64, right: f64) -> f64 {
        let dr = self.grid.spacing(face);
        let phi = match self.mode {
            FluxMode::Regularized(reg) => {
                let mean = 0.5 * (left + right);
                flux::reg_flux(mean, (right - left) / dr, reg, &self.params)
            }
            FluxMode::Limit => {
                let q = self.params.q();
                let w = (flux::signed_pow(right, q) - flux::signed_pow(left, q)) / dr;
                flux::limit_flux(w, &self.params)
            }
        };
        self.flux_sign * phi
    }

    /// `∂Φ/∂left`, `∂Φ/∂right` for the Newton Jacobian.
    #[inline]
    pub fn face_flux_derivatives(&self, face: usize, left: f64, right: f64, eps: f64, floor: f64) -> (f64, f64) {
        let dr = self.grid.spacing(face);
        let p = self.params.p();
        let (dl, dr_) = match self.mode {
            FluxMode::Regularized(reg) => {
                let mean = 0.5 * (left + right);
                let g = (right - left) / dr;
                let a = flux::reg_coefficient(mean, reg, &self.params);
                let da = 0.5 * flux::reg_coefficient_derivative(mean, reg, &self.params);
                let pg = flux::p_power(g, p);
                let dpg = flux::p_power_derivative(g, p, eps) / dr;
                (da * pg - a * dpg, da * pg + a * dpg)
            }
            FluxMode::Limit => {
                let q = self.params.q();
                let w = (flux::signed_pow(right, q) - flux::signed_pow(left, q)) / dr;
                let dw = flux::p_power_derivative(w, p, eps) / dr;
                (
                    -dw * flux::signed_pow_derivative(left, q, floor),
                    dw * flux::signed_pow_derivative(right, q, floor),
                )
            }
        };
        (self.flux_sign * dl, self.flux_sign * dr_)
    }

    /// `∂Φ/∂v_right = -∂Φ/∂v_left` for the limit flux written in `v = u^q`.
    #[inline]
    pub fn power_flux_derivative(&self, face: usize, v_left: f64, v_right: f64, eps: f64) -> f64 {
        let dr = self.grid.spacing(face);
        let w = (v_right - v_left) / dr;
        self.flux_sign * flux::p_power_derivative(w, self.params.p(), eps) / dr
    }

    /// Area-weighted face fluxes `A_{i+1/2} Φ_{i+1/2}`, one per face.
    pub fn face_transfers(&self, u: &[f64]) -> Vec<f64> {
        let areas = self.grid.face_areas();
        (0..self.grid.cells())
            .map(|f| areas[f] * self.face_flux(f, u[f], u[f + 1]))
            .collect()
    }

    /// `L_i = (T_{i+1/2} - T_{i-1/2}) / V_i` with `T_{-1/2} = 0`; `L_M = 0`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let transfers = self.face_transfers(u);
        let vols = self.grid.cell_volumes();
        let m = self.grid.cells();
        let mut out = vec![0.0; m + 1];
        for i in 0..m {
            let west = if i == 0 { 0.0 } else { transfers[i - 1] };
            out[i] = (transfers[i] - west) / vols[i];
        }
        out
    }

    /// Transfer through the outer face `M - 1/2` (positive = inflow).
    pub fn boundary_transfer(&self, u: &[f64]) -> f64 {
        let f = self.grid.cells() - 1;
        self.grid.face_areas()[f] * self.face_flux(f, u[f], u[f + 1])
    }

    /// Maximum `|∇u^q|`-type scale used to size the gradient desingularization.
    pub fn gradient_scale(&self, u: &[f64]) -> f64 {
        let q = self.params.q();
        let mut s: f64 = 0.0;
        for f in 0..self.grid.cells() {
            let g = match self.mode {
                FluxMode::Regularized(_) => (u[f + 1] - u[f]) / self.grid.spacing(f),
                FluxMode::Limit => (flux::signed_pow(u[f + 1], q) - flux::signed_pow(u[f], q)) / self.grid.spacing(f),
            };
            s = s.max(g.abs());
        }
        s
    }
}

/// `L(u)` at every node; the Dirichlet row is 0.
pub fn apply_operator(
    grid: &RadialGrid,
    state: &StateField,
    params: &LeibensonParams,
    reg: Option<RegLevel>,
) -> Result<Vec<f64>> {
    grid.check_len(state.len())?;
    let mode = reg.map_or(FluxMode::Limit, FluxMode::Regularized);
    Ok(Operator::new(grid, *params, mode).apply(state.values()))
}

/// `(Σ V_i |u_i|^λ)^{1/λ}`, or `max_i u_i` for `λ = ∞`.
pub fn discrete_norm(grid: &RadialGrid, state: &StateField, lambda: f64) -> f64 {
    norm_of(grid.cell_volumes(), state.values(), lambda)
}

pub(crate) fn norm_of(volumes: &[f64], values: &[f64], lambda: f64) -> f64 {
    assert!(lambda >= 1.0, "norm exponent must be >= 1, got {lambda}");
    if lambda.is_infinite() {
        return values.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    }
    let s: f64 = volumes
        .iter()
        .zip(values)
        .map(|(v, u)| {
            let a = u.abs();
            v * if lambda == 1.0 {
                a
            } else if lambda == 2.0 {
                a * a
            } else {
                a.powf(lambda)
            }
        })
        .sum();
    if lambda == 1.0 {
        s
    } else {
        s.powf(1.0 / lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(cells: usize) -> RadialGrid {
        build_grid(&ModelManifold::euclidean(1), 1.0, cells, Grading::Uniform).unwrap()
    }

    #[test]
    fn uniform_interval() {
        let g = line(100);
        assert_eq!(g.len(), 101);
        for (i, r) in g.nodes().iter().enumerate() {
            assert!((r - i as f64 / 100.0).abs() < 1e-15);
        }
        assert!((g.total_volume() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn disc_area() {
        let g = build_grid(&ModelManifold::euclidean(2), 1.0, 100, Grading::Uniform).unwrap();
        assert!((g.total_volume() - PI).abs() < 1e-12);
        assert!(g.cell_volumes().iter().all(|&v| v > 0.0));
        assert!(g.face_weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn refined_grading() {
        let g = build_grid(&ModelManifold::euclidean(3), 2.0, 64, Grading::BoundaryRefined).unwrap();
        let outer = g.nodes().iter().filter(|&&r| r >= 1.8).count();
        assert!(outer as f64 >= 0.25 * g.len() as f64, "{outer}");
        let vol = crate::geometry::volume_of_ball(g.manifold(), 2.0).unwrap();
        assert!((g.total_volume() - vol).abs() < 1e-12 * vol);
    }

    #[test]
    fn grid_errors() {
        let m = ModelManifold::euclidean(1);
        assert!(build_grid(&m, 1.0, 15, Grading::Uniform).is_err());
        assert!(build_grid(&m, 0.0, 32, Grading::Uniform).is_err());
        assert!(build_grid(&ModelManifold::hyperbolic(3), 1e4, 32, Grading::Uniform).is_err());
    }

    #[test]
    fn constant_states_are_steady() {
        let g = build_grid(&ModelManifold::euclidean(3), 1.0, 40, Grading::BoundaryRefined).unwrap();
        let prm = LeibensonParams::new(3.0, 0.7).unwrap();
        let reg = RegLevel::new(20.0).unwrap();
        let s = StateField::new(vec![reg.floor(); g.len()], 0.0, reg.floor()).unwrap();
        assert!(apply_operator(&g, &s, &prm, Some(reg)).unwrap().iter().all(|&l| l == 0.0));
        let z = StateField::zeros(&g);
        assert!(apply_operator(&g, &z, &prm, None).unwrap().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn size_mismatch_is_contract_error() {
        let g = line(32);
        let s = StateField::new(vec![0.0; 10], 0.0, 0.0).unwrap();
        let prm = LeibensonParams::new(2.0, 1.0).unwrap();
        assert!(matches!(apply_operator(&g, &s, &prm, None), Err(Error::Contract(_))));
    }

    #[test]
    fn divergence_theorem_telescopes() {
        let g = build_grid(&ModelManifold::hyperbolic(3), 2.0, 80, Grading::Uniform).unwrap();
        let prm = LeibensonParams::new(2.5, 1.3).unwrap();
        let u = g.sample(|r| (1.0 + (3.0 * r).sin()).powi(2));
        let s = StateField::new(u, 0.0, 0.0).unwrap();
        let op = Operator::new(&g, prm, FluxMode::Limit);
        let l = op.apply(s.values());
        let total: f64 = (0..g.cells()).map(|i| g.cell_volumes()[i] * l[i]).sum();
        let boundary = op.boundary_transfer(s.values());
        assert!((total - boundary).abs() <= 1e-12 * boundary.abs());
    }

    #[test]
    fn norms() {
        let g = line(100);
        let ones = StateField::new(vec![1.0; g.len()], 0.0, 1.0).unwrap();
        assert!((discrete_norm(&g, &ones, 1.0) - 2.0).abs() < 1e-13);
        let threes = StateField::new(vec![3.0; g.len()], 0.0, 3.0).unwrap();
        assert_eq!(discrete_norm(&g, &threes, f64::INFINITY), 3.0);
        let g = line(1000);
        let s = StateField::new(g.sample(|r| 1.0 - r), 0.0, 0.0).unwrap();
        let exact = (2.0f64 / 3.0).sqrt();
        assert!((discrete_norm(&g, &s, 2.0) - exact).abs() < 1e-4);
    }

    #[test]
    fn state_pins_boundary() {
        let s = StateField::new(vec![1.0, 2.0, 3.0], 0.5, 0.25).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 0.25]);
        assert!(StateField::new(vec![1.0, f64::NAN, 0.0], 0.0, 0.0).is_err());
        assert!(StateField::nonnegative(vec![1.0, -1.0, 0.0], 0.0, 0.0).is_err());
    }
}
