mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;

use degctrl::carleman::build_psi;
use degctrl::control_nonlinear::nonlinear_remainder;
use degctrl::disc::{FieldKind, Grid, StateField, Stepper};
use degctrl::model::{ControlGeometry, DomainMotion, Interval, Nonlinearity};

use common::coeffs;

fn vector(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

const N: usize = 24;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_step_is_transpose(
        alpha in 0.05f64..0.95,
        rate in -0.3f64..0.5,
        n in 0usize..15,
        y in vector(N, -1.0, 1.0),
        v in vector(N, -1.0, 1.0),
        hb in vector(N, -2.0, 2.0),
    ) {
        let c = coeffs(alpha, rate, Nonlinearity::zero());
        let stepper = Stepper::new(&c, Grid::new(N, 16, 1.0).unwrap());
        let fy = stepper.step_forward(&y, n, None, Some(&hb)).unwrap();
        let av = stepper.step_adjoint_backward(&v, n, None, Some(&hb)).unwrap();
        let lhs: f64 = fy.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = y.iter().zip(&av).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn backward_euler_keeps_sign(
        alpha in 0.0f64..0.95,
        y in vector(N, 0.0, 1.0),
        hb in vector(N, -5.0, 1.0),
    ) {
        let c = coeffs(alpha, 0.2, Nonlinearity::zero());
        let stepper = Stepper::new(&c, Grid::new(N, 64, 1.0).unwrap());
        let next = stepper.step_forward(&y, 3, None, Some(&hb)).unwrap();
        prop_assert!(next.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn psi_is_c2_across_the_bridge(
        alpha in 0.05f64..0.95,
        lo in 0.15f64..0.45,
        hi in 0.55f64..0.85,
    ) {
        let geom = ControlGeometry::new(
            Interval::new(lo - 0.1, hi + 0.1),
            Interval::new(lo - 0.05, hi + 0.05),
            Interval::new(lo, hi),
        );
        let c = coeffs(alpha, 0.0, Nonlinearity::zero());
        let psi = build_psi(&c.coeff, &geom).unwrap();
        // left limit against the value at the junction, which belongs to the right piece
        for x in [psi.alpha_prime(), psi.beta_prime()] {
            let l = x - 1e-12;
            prop_assert!((psi.value(l).unwrap() - psi.value(x).unwrap()).abs() < 1e-10);
            prop_assert!((psi.deriv(l) - psi.deriv(x)).abs() < 1e-8);
            prop_assert!((psi.second(l) - psi.second(x)).abs() < 1e-6 * (1.0 + psi.second(x).abs()));
        }
    }

    #[test]
    fn remainder_is_bounded_by_quadratic_constant(
        amp in 0.0f64..2.0,
        k in 1usize..4,
        offset in -1.0f64..1.0,
    ) {
        let grid = Grid::new(16, 8, 1.0).unwrap();
        let motion = DomainMotion::affine(1.0, 0.2, 1.0).unwrap();
        let y = StateField::from_fn(grid, FieldKind::State, |x, t| offset + x * t);
        let z = StateField::from_fn(grid, FieldKind::State, |x, t| {
            amp * (k as f64 * std::f64::consts::PI * x).sin() * (1.0 - 0.5 * t)
        });
        let zmax = z.max_abs();
        for nl in [Nonlinearity::sine(), Nonlinearity::saturating_cubic()] {
            let r = nonlinear_remainder(&z, &y, &nl, &motion).max_abs();
            prop_assert!(r <= nl.c_quad * zmax * zmax * (1.0 + 1e-12) + 1e-15);
        }
    }
}

#[test]
fn linear_nonlinearity_has_no_remainder() {
    let grid = Grid::new(16, 8, 1.0).unwrap();
    let motion = DomainMotion::affine(1.0, 0.2, 1.0).unwrap();
    let y = StateField::from_fn(grid, FieldKind::State, |x, t| 1.0 + x * t);
    let z = StateField::from_fn(grid, FieldKind::State, |x, _| 0.7 * x * (1.0 - x));
    let r = nonlinear_remainder(&z, &y, &Nonlinearity::linear(4.0), &motion);
    assert_relative_eq!(r.max_abs(), 0.0, epsilon = 1e-14);
}
