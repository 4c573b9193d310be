//! Local controllability to trajectories for the semilinear equation.
//!
//! With `y = ỹ + z` and a bilinear control `h 1_{ω₁}`, the deviation solves
//! the linearized equation with source `G = -R(z) + h z 1_{ω₁}` and additive
//! control `h̃ = h ỹ`. The remainder and the product are frozen at the
//! previous iterate and the weighted linear problem is solved again until
//! the iterates stop moving.

use std::sync::Arc;

use crate::carleman::RhoKind;
use crate::control_linear::{bilinear_from, solve_null_control, weighted_sq, ControlDiagnostics, ControlProblemLinear};
use crate::disc::{l2, norm_h1a_sq, FieldKind, Grid, StateField, Stepper};
use crate::error::{Error, Result};
use crate::model::{DomainMotion, Nonlinearity};
use crate::transform::{pull_back_initial, push_forward_state, PhysicalProfile, TransformedCoefficients};

/// Consecutive growths of the successive change that count as divergence.
const GROWTH_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    pub max_outer: usize,
    /// Relative change `‖z^{k+1} - z^k‖ / ‖z^{k+1}‖` in `L²(Q)`.
    pub tol_fp: f64,
    pub damping: f64,
    /// Damping for one retry after a divergence at `damping = 1`.
    pub retry_damping: Option<f64>,
    /// Admissible `‖z₀‖_{H¹_a}`, if known.
    pub smallness_eps: Option<f64>,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            max_outer: 50,
            tol_fp: 1e-8,
            damping: 1.0,
            retry_damping: Some(0.5),
            smallness_eps: None,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_fp > 0.0) {
            return Err(Error::OutOfRange {
                name: "tol_fp",
                value: self.tol_fp,
                range: "(0, ∞)",
            });
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidInput("max_outer must be at least 1".into()));
        }
        for d in [Some(self.damping), self.retry_damping].into_iter().flatten() {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::OutOfRange {
                    name: "damping",
                    value: d,
                    range: "(0, 1]",
                });
            }
        }
        Ok(())
    }
}

/// The linear problem template (its `z0` and `g` are replaced on every
/// iterate, its coefficients must not carry a trajectory) and the floor that
/// guards `h = h̃ / ỹ`.
#[derive(Debug, Clone)]
pub struct NonlinearProblem {
    pub linear: ControlProblemLinear,
    pub floor: f64,
}

impl NonlinearProblem {
    pub fn new(linear: ControlProblemLinear, floor: f64) -> Self {
        Self { linear, floor }
    }

    pub fn grid(&self) -> Grid {
        self.linear.grid
    }

    pub fn mask(&self) -> Vec<f64> {
        let w = self.linear.window();
        self.linear.grid.indicator(w.lo, w.hi)
    }

    fn base_coeffs(&self) -> TransformedCoefficients {
        self.linear.coeffs.with_trajectory(None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub change: f64,
    pub h_tilde_norm: f64,
    /// `‖y(T) - ỹ(T)‖` of a semilinear re-simulation with this iterate's control.
    pub terminal_error: f64,
    pub cg_iters: usize,
    /// `max|R(z^k)| / max|z^k|²`.
    pub remainder_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct NonlinearSolution {
    pub z: StateField,
    pub h_tilde: StateField,
    /// `h̃ / ỹ` on `ω₁`; `None` in additive mode (`ỹ ≡ 0`).
    pub h: Option<StateField>,
    pub trajectory: Arc<StateField>,
    /// Semilinear re-simulation of `y = ỹ + z` with the returned control.
    pub y: StateField,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub damping: f64,
    /// `‖z(T)‖` of the final linear solve.
    pub reported_terminal: f64,
    pub terminal_error: f64,
    pub certificate_ok: bool,
    /// `max|R(z^k)| ≤ C_quad max|z^k|²` held on every iterate.
    pub remainder_bound_ok: bool,
    pub within_smallness: Option<bool>,
    pub linear: Option<ControlDiagnostics>,
}

impl NonlinearSolution {
    pub fn additive(&self) -> bool {
        self.h.is_none()
    }

    /// `y` on the moving domain at every time level.
    pub fn push_forward(&self, motion: &DomainMotion) -> Result<Vec<PhysicalProfile>> {
        let g = self.y.grid;
        (0..=g.m).map(|n| push_forward_state(self.y.slice(n), &g, motion, g.t(n))).collect()
    }
}

/// `R(z) = F(ℓx, t, z + ỹ) - F(ℓx, t, ỹ) - D₃F(ℓx, t, ỹ) z` pointwise.
pub fn nonlinear_remainder(z: &StateField, y_tilde: &StateField, nl: &Nonlinearity, motion: &DomainMotion) -> StateField {
    let g = z.grid;
    let mut out = StateField::zeros(g, FieldKind::State);
    for n in 0..=g.m {
        let t = g.t(n);
        let ell = motion.ell(t);
        let (zs, ys) = (z.slice(n), y_tilde.slice(n));
        let row: Vec<f64> = (0..g.n)
            .map(|j| {
                let xb = ell * g.x(j);
                let (zj, yj) = (zs[j], ys[j]);
                if zj == 0.0 {
                    return 0.0;
                }
                nl.eval(xb, t, zj + yj) - nl.eval(xb, t, yj) - nl.deriv(xb, t, yj) * zj
            })
            .collect();
        out.set_slice(n, &row);
    }
    out
}

fn diff_norm(a: &StateField, b: &StateField) -> f64 {
    let mut d = a.clone();
    for (x, y) in d.data_mut().iter_mut().zip(b.data()) {
        *x -= y;
    }
    d.l2_q()
}

fn blend(old: &StateField, new: &StateField, theta: f64) -> StateField {
    let mut out = new.clone();
    for (o, v) in out.data_mut().iter_mut().zip(old.data()) {
        *o = theta * *o + (1.0 - theta) * v;
    }
    out
}

fn masked_product(h: &StateField, z: &StateField, mask: &[f64]) -> StateField {
    let mut out = z.clone();
    for n in 0..=z.grid.m {
        let row: Vec<f64> = z.slice(n).iter().zip(h.slice(n)).zip(mask).map(|((a, b), m)| a * b * m).collect();
        out.set_slice(n, &row);
    }
    out
}

struct Resim {
    y: StateField,
    error: f64,
}

fn resimulate(
    stepper: &Stepper,
    z0: &[f64],
    trajectory: &StateField,
    h_tilde: &StateField,
    h: Option<&StateField>,
) -> Result<Resim> {
    let y0: Vec<f64> = z0.iter().zip(trajectory.slice(0)).map(|(a, b)| a + b).collect();
    let y = match h {
        Some(hb) => stepper.solve_semilinear(&y0, None, Some(hb))?,
        None => stepper.solve_semilinear(&y0, Some(h_tilde), None)?,
    };
    let g = y.grid;
    let end: Vec<f64> = y.slice(g.m).iter().zip(trajectory.slice(g.m)).map(|(a, b)| a - b).collect();
    Ok(Resim {
        error: l2(g.h(), &end),
        y,
    })
}

/// Fixed point on the cylinder for deviation data `z0` around `trajectory`.
/// A trajectory that vanishes identically switches to additive control.
pub fn track(
    z0: &[f64],
    trajectory: Arc<StateField>,
    cfg: &FixedPointConfig,
    p: &NonlinearProblem,
) -> Result<NonlinearSolution> {
    cfg.validate()?;
    match iterate(z0, &trajectory, cfg, cfg.damping, p) {
        Err(Error::FixedPointDiverged { .. }) if cfg.damping == 1.0 && cfg.retry_damping.is_some() => {
            iterate(z0, &trajectory, cfg, cfg.retry_damping.unwrap(), p)
        }
        r => r,
    }
}

fn iterate(
    z0: &[f64],
    trajectory: &Arc<StateField>,
    cfg: &FixedPointConfig,
    theta: f64,
    p: &NonlinearProblem,
) -> Result<NonlinearSolution> {
    let grid = p.grid();
    if trajectory.grid != grid || z0.len() != grid.n {
        return Err(Error::GridMismatch("trajectory or z0 does not match the problem grid".into()));
    }
    let mask = p.mask();
    let bilinear = trajectory.max_abs() > 0.0;
    if bilinear {
        let min = trajectory.min_abs_on(&mask);
        if min < p.floor {
            return Err(Error::TrajectoryFloorViolated { min, floor: p.floor });
        }
    }
    let base = p.base_coeffs();
    let nl = &base.nl;
    let motion = &base.motion;
    let c_quad = nl.c_quad;
    let semi = Stepper::new(&base, grid);
    let mut lin = p.linear.clone();
    lin.coeffs = base.with_trajectory(Some(trajectory.clone()));
    lin.z0 = z0.to_vec();
    lin.g = None;

    let within_smallness = cfg
        .smallness_eps
        .map(|eps| norm_h1a_sq(z0, &base.coeff, &grid).sqrt() <= eps);
    let mut z = StateField::zeros(grid, FieldKind::State);
    z.set_slice(0, z0);
    let mut h_tilde = StateField::zeros(grid, FieldKind::Control);
    let mut h = bilinear.then(|| StateField::zeros(grid, FieldKind::Control));

    if l2(grid.h(), z0) == 0.0 {
        let r = resimulate(&semi, z0, trajectory, &h_tilde, h.as_ref())?;
        return Ok(NonlinearSolution {
            z,
            h_tilde,
            h,
            trajectory: trajectory.clone(),
            y: r.y,
            iterations: 0,
            history: Vec::new(),
            damping: theta,
            reported_terminal: 0.0,
            terminal_error: r.error,
            certificate_ok: r.error == 0.0,
            remainder_bound_ok: true,
            within_smallness,
            linear: None,
        });
    }

    let mut history: Vec<IterationRecord> = Vec::new();
    let mut growth = 0;
    let mut remainder_ok = true;
    for k in 0..cfg.max_outer {
        lin.g = (k > 0).then(|| {
            let mut g = nonlinear_remainder(&z, trajectory, nl, motion);
            for v in g.data_mut() {
                *v = -*v;
            }
            if let Some(hb) = &h {
                let hz = masked_product(hb, &z, &mask);
                for (a, b) in g.data_mut().iter_mut().zip(hz.data()) {
                    *a += b;
                }
            }
            g
        });
        let sol = solve_null_control(&lin)?;
        let (z_new, ht_new) = if k == 0 || theta == 1.0 {
            (sol.z, sol.h_tilde)
        } else {
            (blend(&z, &sol.z, theta), blend(&h_tilde, &sol.h_tilde, theta))
        };
        let dz = diff_norm(&z_new, &z);
        let zn = z_new.l2_q();
        let change = if dz == 0.0 { 0.0 } else { dz / zn };
        z = z_new;
        h_tilde = ht_new;
        if bilinear {
            h = Some(bilinear_from(&h_tilde, trajectory, &mask, p.floor)?);
        }

        let rem = nonlinear_remainder(&z, trajectory, nl, motion).max_abs();
        let zmax = z.max_abs();
        let remainder_ratio = if rem == 0.0 { 0.0 } else { rem / (zmax * zmax) };
        remainder_ok &= rem <= c_quad * zmax * zmax * (1.0 + 1e-9) + 1e-14;

        let r = resimulate(&semi, z0, trajectory, &h_tilde, h.as_ref())?;
        history.push(IterationRecord {
            iteration: k + 1,
            change,
            h_tilde_norm: h_tilde.l2_q(),
            terminal_error: r.error,
            cg_iters: sol.diagnostics.cg_iters,
            remainder_ratio,
        });

        if change <= cfg.tol_fp {
            let diag = sol.diagnostics;
            let reported = diag.terminal_norm;
            let tol = (2.0 * reported).max(1e-3 * l2(grid.h(), z0));
            return Ok(NonlinearSolution {
                z,
                h_tilde,
                h,
                trajectory: trajectory.clone(),
                y: r.y,
                iterations: k + 1,
                history,
                damping: theta,
                reported_terminal: reported,
                terminal_error: r.error,
                certificate_ok: r.error <= tol,
                remainder_bound_ok: remainder_ok,
                within_smallness,
                linear: Some(diag),
            });
        }
        if k > 0 && change > history[k - 1].change {
            growth += 1;
            if growth >= GROWTH_LIMIT {
                return Err(Error::FixedPointDiverged {
                    iterations: k + 1,
                    last_change: change,
                    history: history.iter().map(|r| r.change).collect(),
                });
            }
        } else {
            growth = 0;
        }
        if !change.is_finite() {
            return Err(Error::FixedPointDiverged {
                iterations: k + 1,
                last_change: change,
                history: history.iter().map(|r| r.change).collect(),
            });
        }
    }
    Err(Error::FixedPointNotConverged {
        iterations: cfg.max_outer,
        last_change: history.last().map_or(f64::NAN, |r| r.change),
    })
}

/// Physical-domain entry point: pulls back `u0` and the trajectory datum,
/// computes the uncontrolled trajectory and runs the fixed point.
pub fn solve_trajectory_tracking(
    u0: &PhysicalProfile,
    traj_u0: &PhysicalProfile,
    cfg: &FixedPointConfig,
    p: &NonlinearProblem,
) -> Result<NonlinearSolution> {
    let grid = p.grid();
    let base = p.base_coeffs();
    let y0 = pull_back_initial(u0, &base.motion, &grid)?;
    let yt0 = pull_back_initial(traj_u0, &base.motion, &grid)?;
    let trajectory = Stepper::new(&base, grid).solve_semilinear(&yt0, None, None)?;
    let z0: Vec<f64> = y0.iter().zip(&yt0).map(|(a, b)| a - b).collect();
    track(&z0, Arc::new(trajectory), cfg, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smallness {
    /// Largest scale of the data shape for which the fixed point converged.
    pub scale: f64,
    /// `‖scale · shape‖_{H¹_a}`.
    pub eps: f64,
    pub probes: usize,
}

/// Bisection on the scale of `shape` for the largest data whose fixed point
/// converges within `max_outer` iterations (no damping retry).
pub fn find_smallness(
    shape: &[f64],
    trajectory: Arc<StateField>,
    cfg: &FixedPointConfig,
    p: &NonlinearProblem,
    steps: usize,
) -> Result<Smallness> {
    let probe_cfg = FixedPointConfig {
        retry_damping: None,
        smallness_eps: None,
        ..*cfg
    };
    let mut probes = 0;
    let mut converges = |scale: f64| -> Result<bool> {
        probes += 1;
        let z0: Vec<f64> = shape.iter().map(|v| v * scale).collect();
        match track(&z0, trajectory.clone(), &probe_cfg, p) {
            Ok(s) => Ok(s.certificate_ok),
            Err(Error::FixedPointDiverged { .. } | Error::FixedPointNotConverged { .. }) => Ok(false),
            Err(Error::CgStalled { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let (mut good, mut bad) = (0.0, f64::INFINITY);
    let mut s = 1.0;
    if converges(s)? {
        good = s;
        while bad.is_infinite() && s < 1e6 {
            s *= 4.0;
            if converges(s)? {
                good = s;
            } else {
                bad = s;
            }
        }
    } else {
        bad = s;
        while good == 0.0 && s > 1e-12 {
            s /= 4.0;
            if converges(s)? {
                good = s;
            } else {
                bad = s;
            }
        }
    }
    if good == 0.0 {
        return Err(Error::FixedPointNotConverged {
            iterations: cfg.max_outer,
            last_change: f64::NAN,
        });
    }
    if bad.is_finite() {
        for _ in 0..steps {
            let mid = (good * bad).sqrt();
            if converges(mid)? {
                good = mid;
            } else {
                bad = mid;
            }
        }
    }
    let coeff = &p.linear.coeffs.coeff;
    let scaled: Vec<f64> = shape.iter().map(|v| v * good).collect();
    Ok(Smallness {
        scale: good,
        eps: norm_h1a_sq(&scaled, coeff, &p.grid()).sqrt(),
        probes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MappingResiduals {
    /// `‖ρ₂ 𝒜₁(z, h)‖_{L²(Q)}`.
    pub a1_residual: f64,
    /// `‖z(0) - z₀‖_{H¹_a}`.
    pub a2_residual: f64,
    pub y_norm: f64,
}

/// `z_t + A z + F(ℓx,t,z+ỹ) - F(ℓx,t,ỹ) - h 1_{ω₁} (z + ỹ)` at levels `1..=m`
/// with backward differences in time; level 0 is left at zero.
pub fn mapping_a1(
    z: &StateField,
    h: &StateField,
    trajectory: &StateField,
    coeffs: &TransformedCoefficients,
    mask: &[f64],
) -> StateField {
    let g = z.grid;
    let stepper = Stepper::new(&coeffs.with_trajectory(None), g);
    let dt = g.dt();
    let mut out = StateField::zeros(g, FieldKind::State);
    for n in 1..=g.m {
        let t = g.t(n);
        let ell = coeffs.motion.ell(t);
        let (zn, zp, yn, hn) = (z.slice(n), z.slice(n - 1), trajectory.slice(n), h.slice(n));
        let az = stepper.operator(n).principal().matvec(zn);
        let row: Vec<f64> = (0..g.n)
            .map(|j| {
                let xb = ell * g.x(j);
                (zn[j] - zp[j]) / dt + az[j] + coeffs.nl.eval(xb, t, zn[j] + yn[j])
                    - coeffs.nl.eval(xb, t, yn[j])
                    - hn[j] * mask[j] * (zn[j] + yn[j])
            })
            .collect();
        out.set_slice(n, &row);
    }
    out
}

/// Directional derivative of [`mapping_a1`] at `(z, h)` along `(z̄, h̄)`.
pub fn mapping_a1_derivative(
    z: &StateField,
    h: &StateField,
    zbar: &StateField,
    hbar: &StateField,
    trajectory: &StateField,
    coeffs: &TransformedCoefficients,
    mask: &[f64],
) -> StateField {
    let g = z.grid;
    let stepper = Stepper::new(&coeffs.with_trajectory(None), g);
    let dt = g.dt();
    let mut out = StateField::zeros(g, FieldKind::State);
    for n in 1..=g.m {
        let t = g.t(n);
        let ell = coeffs.motion.ell(t);
        let (zb, zbp) = (zbar.slice(n), zbar.slice(n - 1));
        let (zn, yn, hn, hb) = (z.slice(n), trajectory.slice(n), h.slice(n), hbar.slice(n));
        let az = stepper.operator(n).principal().matvec(zb);
        let row: Vec<f64> = (0..g.n)
            .map(|j| {
                let xb = ell * g.x(j);
                (zb[j] - zbp[j]) / dt + az[j] + coeffs.nl.deriv(xb, t, zn[j] + yn[j]) * zb[j]
                    - mask[j] * (hb[j] * (zn[j] + yn[j]) + hn[j] * zb[j])
            })
            .collect();
        out.set_slice(n, &row);
    }
    out
}

/// Residuals of the nonlinear mapping and the `𝒴` norm
/// `‖ρ₀z‖² + ‖ρ₁hỹ‖²_{ω₁} + ‖ρ₂G‖² + ‖z(0)‖²_{H¹_a}` with `G` the linearized
/// residual `z_t + A z + D₃F(ỹ) z - h ỹ 1_{ω₁}`.
pub fn evaluate_mapping(
    z: &StateField,
    h: &StateField,
    z0: &[f64],
    trajectory: &StateField,
    p: &NonlinearProblem,
) -> MappingResiduals {
    let g = z.grid;
    let mask = p.mask();
    let base = p.base_coeffs();
    let ws = &p.linear.ws;
    let interior = 1..g.m;

    let a1 = mapping_a1(z, h, trajectory, &base, &mask);
    let a1_residual = weighted_sq(&a1, ws, RhoKind::Two, None, interior.clone()).sqrt();
    let d: Vec<f64> = z.slice(0).iter().zip(z0).map(|(a, b)| a - b).collect();
    let a2_residual = norm_h1a_sq(&d, &base.coeff, &g).sqrt();

    let zero = StateField::zeros(g, FieldKind::State);
    let lin = mapping_a1_derivative(&zero, &zero, z, h, trajectory, &base, &mask);
    let hy = masked_product(h, trajectory, &mask);
    let y2 = weighted_sq(z, ws, RhoKind::Zero, None, interior.clone())
        + weighted_sq(&hy, ws, RhoKind::One, None, interior.clone())
        + weighted_sq(&lin, ws, RhoKind::Two, None, interior)
        + norm_h1a_sq(z.slice(0), &base.coeff, &g);
    MappingResiduals {
        a1_residual,
        a2_residual,
        y_norm: y2.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_remainder_value() {
        let g = Grid::new(8, 8, 1.0).unwrap();
        let z = StateField::from_fn(g, FieldKind::State, |_, _| 0.1);
        let y = StateField::zeros(g, FieldKind::State);
        let motion = DomainMotion::affine(1.0, 0.2, 1.0).unwrap();
        let r = nonlinear_remainder(&z, &y, &Nonlinearity::sine(), &motion);
        assert!((r.slice(3)[2] + 1.6658e-4).abs() < 1e-8);
        assert!(r.max_abs() <= 0.5 * 0.01);
        let lin = nonlinear_remainder(&z, &y, &Nonlinearity::linear(2.0), &motion);
        assert_eq!(lin.max_abs(), 0.0);
    }
}
