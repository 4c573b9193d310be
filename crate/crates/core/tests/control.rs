mod common;

use degctrl::carleman::RhoKind;
use degctrl::control_linear::{bilinear_from, solve_null_control, DualSystem};
use degctrl::disc::{FieldKind, StateField};
use degctrl::Error;

use common::{l2, linear_problem, sine};

fn rel(a: &StateField, b: &StateField) -> f64 {
    let mut d = a.clone();
    for (x, y) in d.data_mut().iter_mut().zip(b.data()) {
        *x -= y;
    }
    d.l2_q() / b.l2_q()
}

#[test]
fn control_is_linear_in_the_data() {
    let mut pu = linear_problem(0.5, 64, 128, None);
    pu.cg_tol = 1e-12;
    let grid = pu.grid;
    let u = sine(&grid, 1.0);
    let v: Vec<f64> = grid.xs().iter().map(|x| x * (1.0 - x) * (1.0 + 3.0 * x)).collect();
    let mut pv = pu.clone();
    pv.z0 = v.clone();
    let mut pw = pu.clone();
    pw.z0 = u.iter().zip(&v).map(|(a, b)| a - 2.0 * b).collect();
    let (su, sv, sw) = (
        solve_null_control(&pu).unwrap(),
        solve_null_control(&pv).unwrap(),
        solve_null_control(&pw).unwrap(),
    );
    let mut combo = su.h_tilde.clone();
    for (c, b) in combo.data_mut().iter_mut().zip(sv.h_tilde.data()) {
        *c -= 2.0 * b;
    }
    assert!(rel(&combo, &sw.h_tilde) < 1e-7, "{}", rel(&combo, &sw.h_tilde));
}

#[test]
fn control_lives_on_the_window_and_steers_to_zero() {
    let p = linear_problem(0.5, 64, 128, None);
    let sol = solve_null_control(&p).unwrap();
    let grid = p.grid;
    for n in 0..=grid.m {
        for (j, &v) in sol.h_tilde.slice(n).iter().enumerate() {
            if !p.window().contains(grid.x(j)) {
                assert_eq!(v, 0.0);
            }
        }
    }
    let d = &sol.diagnostics;
    assert!(d.certificate_ok);
    assert!(d.resimulated_terminal_norm <= 1e-3 * l2(grid.h(), &p.z0));
    let (direct, by_parts) = d.duality;
    assert!((direct - by_parts).abs() <= 1e-8 * direct.abs());
    assert!(d.state_mismatch <= 1e-6 * sol.z.max_abs());
}

#[test]
fn zero_data_gives_zero_control() {
    let mut p = linear_problem(0.25, 32, 64, None);
    p.z0 = vec![0.0; p.grid.n];
    let sol = solve_null_control(&p).unwrap();
    assert_eq!(sol.h_tilde.max_abs(), 0.0);
    assert_eq!(sol.diagnostics.cg_iters, 0);
}

#[test]
fn dual_form_is_symmetric_positive() {
    let p = linear_problem(0.5, 24, 32, None);
    let sys = DualSystem::new(&p).unwrap();
    let len = sys.len();
    let a: Vec<f64> = (0..len).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
    let b: Vec<f64> = (0..len).map(|i| ((i * 104729) % 97) as f64 / 48.0 - 1.0).collect();
    let ab = sys.bilinear(&a, &b);
    let ba = sys.bilinear(&b, &a);
    assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
    assert!(sys.bilinear(&a, &a) > 0.0);
}

#[test]
fn source_term_is_also_steered_out() {
    let mut p = linear_problem(0.5, 64, 128, None);
    // decays like ρ₀⁻² at t = T, as the sources of the fixed point do
    let ws = p.ws.clone();
    let g = StateField::from_fn(p.grid, FieldKind::State, |x, t| {
        if t >= 1.0 {
            0.0
        } else {
            x * (1.0 - x) * (-2.0 * ws.log_rho(RhoKind::Zero, t).ln()).exp()
        }
    });
    p.g = Some(g);
    let sol = solve_null_control(&p).unwrap();
    assert!(sol.diagnostics.certificate_ok);
    assert!(sol.diagnostics.estimate_ratio_31.is_finite());
}

#[test]
fn bilinear_recovery_respects_floor() {
    let p = linear_problem(0.5, 16, 16, None);
    let grid = p.grid;
    let mask = grid.indicator(0.35, 0.65);
    let h = StateField::from_fn(grid, FieldKind::Control, |_, _| 2.0);
    let y = StateField::from_fn(grid, FieldKind::State, |_, t| 1.0 - 0.5 * t);
    let hb = bilinear_from(&h, &y, &mask, 0.1).unwrap();
    let j = mask.iter().position(|&m| m == 1.0).unwrap();
    assert!((hb.slice(grid.m)[j] - 4.0).abs() < 1e-15);
    assert_eq!(hb.slice(grid.m)[0], 0.0);
    assert!(matches!(bilinear_from(&h, &y, &mask, 0.6), Err(Error::TrajectoryFloorViolated { .. })));
}
