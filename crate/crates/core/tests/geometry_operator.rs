use std::f64::consts::PI;

use approx::assert_relative_eq;
use leibenson_core::geometry::{unit_sphere_area, volume_growth_exponent, volume_of_ball};
use leibenson_core::{build_grid, FluxMode, Grading, LeibensonParams, ModelManifold, Operator, WarpingTable};

/// Composite Simpson rule, independent of the library quadrature.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn sphere_areas() {
    assert_relative_eq!(unit_sphere_area(1), 2.0);
    assert_relative_eq!(unit_sphere_area(2), 2.0 * PI, epsilon = 1e-14);
    assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, epsilon = 1e-13);
    assert_relative_eq!(unit_sphere_area(4), 2.0 * PI * PI, epsilon = 1e-12);
}

#[test]
fn hyperbolic_ball_volumes() {
    for n in [2u32, 3, 5] {
        let m = ModelManifold::hyperbolic(n);
        for r in [0.1, 1.0, 3.0] {
            let expect = unit_sphere_area(n) * simpson(|s| s.sinh().powi(n as i32 - 1), 0.0, r, 2000);
            let got = volume_of_ball(&m, r).unwrap();
            assert_relative_eq!(got, expect, max_relative = 1e-10);
        }
    }
    // Closed form in the plane.
    let v = volume_of_ball(&ModelManifold::hyperbolic(2), 2.0).unwrap();
    assert_relative_eq!(v, 2.0 * PI * (2f64.cosh() - 1.0), max_relative = 1e-12);
}

#[test]
fn tabulated_sinh_tracks_hyperbolic() {
    let r: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
    let psi: Vec<f64> = r.iter().map(|x| x.sinh()).collect();
    let table = WarpingTable::new(r, psi).unwrap();
    let m = ModelManifold::tabulated(3, table).unwrap();
    let exact = volume_of_ball(&ModelManifold::hyperbolic(3), 3.5).unwrap();
    assert_relative_eq!(volume_of_ball(&m, 3.5).unwrap(), exact, max_relative = 1e-4);
}

#[test]
fn euclidean_growth_exponent_is_dimension() {
    for n in 1..=4 {
        let fit = volume_growth_exponent(&ModelManifold::euclidean(n), 0.5, 5.0).unwrap();
        assert_relative_eq!(fit.exponent, n as f64, max_relative = 1e-9);
        assert!(!fit.superpolynomial);
    }
    let fit = volume_growth_exponent(&ModelManifold::hyperbolic(2), 1.0, 8.0).unwrap();
    assert!(fit.superpolynomial);
}

#[test]
fn grid_volumes_sum_to_ball() {
    for m in [ModelManifold::euclidean(2), ModelManifold::hyperbolic(3)] {
        for grading in [Grading::Uniform, Grading::BoundaryRefined] {
            let g = build_grid(&m, 1.7, 97, grading).unwrap();
            let total: f64 = g.cell_volumes().iter().sum();
            assert_relative_eq!(total, volume_of_ball(&m, 1.7).unwrap(), max_relative = 1e-12);
        }
    }
}

/// Max error of the limit operator against `exact` over `0.1 ≤ r ≤ 0.8`. The
/// pole cell matches the cell average, which differs pointwise by O(h) when
/// the exact operator is not smooth at the origin.
fn operator_error(n: u32, cells: usize, p: f64, q: f64, u: impl Fn(f64) -> f64, exact: impl Fn(f64) -> f64) -> f64 {
    let g = build_grid(&ModelManifold::euclidean(n), 1.0, cells, Grading::Uniform).unwrap();
    let op = Operator::new(&g, LeibensonParams::new(p, q).unwrap(), FluxMode::Limit);
    let lu = op.apply(&g.sample(&u));
    g.nodes()
        .iter()
        .zip(&lu)
        .filter(|(r, _)| (0.1..=0.8).contains(*r))
        .map(|(r, l)| (l - exact(*r)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn laplacian_of_r_squared() {
    // Δ r² = 2n, reproduced exactly up to rounding.
    for n in 1..=3 {
        let err = operator_error(n, 64, 2.0, 1.0, |r| r * r, |_| 2.0 * n as f64);
        assert!(err < 1e-9, "n = {n}: {err}");
    }
}

#[test]
fn porous_medium_operator_converges() {
    // u = 1 - r², Δ(u²) = 12 r² - 4 on the line.
    let errs: Vec<f64> = [50, 100, 200, 400]
        .iter()
        .map(|&m| operator_error(1, m, 2.0, 2.0, |r| 1.0 - r * r, |r| 12.0 * r * r - 4.0))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "order {order} from {errs:?}");
    }
}

#[test]
fn p_laplacian_operator_converges() {
    // p = 3, u = cos r on (0, 1): d/dr(|u'| u') = d/dr(-sin r · sin r) = -sin 2r.
    // In 3D add (n-1)/r · |u'|u' = -2 sin² r / r.
    let exact = |r: f64| {
        let lead = -(2.0 * r).sin();
        if r == 0.0 {
            lead
        } else {
            lead - 2.0 * r.sin().powi(2) / r
        }
    };
    let errs: Vec<f64> = [50, 100, 200, 400]
        .iter()
        .map(|&m| operator_error(3, m, 3.0, 1.0, |r| r.cos(), exact))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "order {order} from {errs:?}");
    }
}

#[test]
fn operator_balances_boundary_transfer() {
    let g = build_grid(&ModelManifold::hyperbolic(2), 2.0, 80, Grading::BoundaryRefined).unwrap();
    let op = Operator::new(&g, LeibensonParams::new(2.5, 1.4).unwrap(), FluxMode::Limit);
    let u = g.sample(|r| (3.0 - r).powi(2) * (1.0 + 0.3 * (5.0 * r).sin()));
    let lu = op.apply(&u);
    let total: f64 = g.cell_volumes().iter().zip(&lu).take(g.cells()).map(|(v, l)| v * l).sum();
    let scale: f64 = g.cell_volumes().iter().zip(&lu).map(|(v, l)| (v * l).abs()).sum();
    assert!((total - op.boundary_transfer(&u)).abs() <= 1e-13 * scale);
}

#[test]
fn flipped_flux_negates_operator() {
    let g = build_grid(&ModelManifold::euclidean(2), 1.0, 40, Grading::Uniform).unwrap();
    let params = LeibensonParams::new(2.0, 2.0).unwrap();
    let u = g.sample(|r| 1.0 - r * r);
    let a = Operator::new(&g, params, FluxMode::Limit).apply(&u);
    let b = Operator::new(&g, params, FluxMode::Limit).with_flipped_flux().apply(&u);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(*x, -*y);
    }
}
