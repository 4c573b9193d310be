#![allow(dead_code)]

use std::f64::consts::PI;

use degctrl::carleman::{build_psi, build_weights, s_from_normalized, select_lambda, WeightSystem};
use degctrl::control_linear::ControlProblemLinear;
use degctrl::disc::Grid;
use degctrl::model::{power_law_metadata, ControlGeometry, DegenerateCoefficient, DomainMotion, Interval, Nonlinearity};
use degctrl::transform::{build_transform, TransformedCoefficients};

pub fn geometry() -> ControlGeometry {
    ControlGeometry::new(Interval::new(0.3, 0.7), Interval::new(0.35, 0.65), Interval::new(0.4, 0.6))
}

pub fn coefficient(alpha: f64, motion: &DomainMotion) -> DegenerateCoefficient {
    power_law_metadata(alpha, motion).unwrap().allow_nondegenerate(alpha == 0.0)
}

/// `a = x̄^alpha` on `(0, 1 + rate t)`, `t ∈ (0, 1)`.
pub fn coeffs(alpha: f64, rate: f64, nl: Nonlinearity) -> TransformedCoefficients {
    let motion = DomainMotion::affine(1.0, rate, 1.0).unwrap();
    build_transform(&coefficient(alpha, &motion), &motion, &nl, None).unwrap().1
}

pub fn weights(coeffs: &TransformedCoefficients, s_norm: f64) -> WeightSystem {
    let psi = build_psi(&coeffs.coeff, &geometry()).unwrap();
    let lambda = select_lambda(&psi).unwrap();
    let s = s_from_normalized(&psi, lambda, coeffs.horizon(), s_norm);
    build_weights(&psi, s, lambda, coeffs.horizon(), None).unwrap()
}

pub fn sine(grid: &Grid, k: f64) -> Vec<f64> {
    grid.xs().iter().map(|x| (k * PI * x).sin()).collect()
}

pub fn linear_problem(alpha: f64, n: usize, m: usize, z0: Option<Vec<f64>>) -> ControlProblemLinear {
    let c = coeffs(alpha, 0.2, Nonlinearity::zero());
    let grid = Grid::new(n, m, 1.0).unwrap();
    let z0 = z0.unwrap_or_else(|| sine(&grid, 1.0));
    ControlProblemLinear::new(z0, None, weights(&c, 1.0), c, geometry(), grid)
}

pub fn l2(h: f64, v: &[f64]) -> f64 {
    (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}
