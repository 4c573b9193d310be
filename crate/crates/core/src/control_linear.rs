//! Weighted null control of the linearized equation
//!
//! `z_t - b (a z_x)_x - B√a z_x + D₃F(ℓx, t, ỹ) z = h̃ 1_{ω₁} + G`
//!
//! by the discrete variational problem: find `p` with
//! `L(ρ₀⁻² L* p) + 1_{ω₁} ρ₁⁻² p = ℓ`, where `L` is the backward-Euler
//! forward operator and `L*` its exact transpose. Then `z = ρ₀⁻² L* p` and
//! `h̃ = -ρ₁⁻² p` on `ω₁`.

use crate::carleman::{RhoKind, WeightSystem};
use crate::disc::{dot, l2, norm_h1a_sq, seminorm_h1a_sq, FieldKind, Grid, StateField, Stepper, SymPenta, Tridiagonal};
use crate::error::{Error, Result};
use crate::model::{ControlGeometry, Interval};
use crate::transform::TransformedCoefficients;

/// Log-weights below `max - UNDERFLOW_LN` are treated as exactly zero.
const UNDERFLOW_LN: f64 = 690.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    /// Diagonal of the dual operator.
    Jacobi,
    /// Exact solve of each diagonal time block.
    #[default]
    TimeBlock,
}

#[derive(Debug, Clone)]
pub struct ControlProblemLinear {
    pub z0: Vec<f64>,
    pub g: Option<StateField>,
    pub ws: WeightSystem,
    pub coeffs: TransformedCoefficients,
    pub geom: ControlGeometry,
    pub grid: Grid,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub preconditioner: Preconditioner,
    /// Optional `ε ‖p‖²` regularization of the dual problem.
    pub tikhonov: f64,
    /// Defaults to `1e-3 ‖z₀‖`.
    pub terminal_tol: Option<f64>,
}

impl ControlProblemLinear {
    pub fn new(
        z0: Vec<f64>,
        g: Option<StateField>,
        ws: WeightSystem,
        coeffs: TransformedCoefficients,
        geom: ControlGeometry,
        grid: Grid,
    ) -> Self {
        Self {
            z0,
            g,
            ws,
            coeffs,
            geom,
            grid,
            cg_tol: 1e-10,
            cg_max_iter: 3000,
            preconditioner: Preconditioner::default(),
            tikhonov: 0.0,
            terminal_tol: None,
        }
    }

    pub fn window(&self) -> Interval {
        self.geom.omega1
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlDiagnostics {
    /// `‖z(T)‖` of the dual-recovered state (zero by construction).
    pub terminal_norm: f64,
    /// `‖z(T)‖` after re-simulating forward with the recovered control.
    pub resimulated_terminal_norm: f64,
    pub terminal_tol: f64,
    pub certificate_ok: bool,
    pub estimate_ratio_31: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub cg_iters: usize,
    /// Relative residual `‖ℓ - B p‖ / ‖ℓ‖` at exit.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Norm of right-hand side rows whose weights underflowed entirely.
    pub dropped_rhs: f64,
    /// Weights were divided by `e^{log_scale}` before the solve.
    pub log_scale: f64,
    /// `∫ z L*φ̂` computed directly and by discrete integration by parts.
    pub duality: (f64, f64),
    /// `max |z_{n} - ẑ_{n}|` between recovered and re-simulated states.
    pub state_mismatch: f64,
}

#[derive(Debug, Clone)]
pub struct ControlSolution {
    pub z: StateField,
    pub h_tilde: StateField,
    pub h_bilinear: Option<StateField>,
    /// Dual minimizer, scaled by `e^{log_scale}`.
    pub phi_hat: StateField,
    pub diagnostics: ControlDiagnostics,
}

/// Time-only weights `ρ₀⁻²`, `ρ₁⁻²` on levels `1..=m`, jointly rescaled.
#[derive(Debug, Clone)]
struct DualWeights {
    w0: Vec<f64>,
    w1: Vec<f64>,
    log_scale: f64,
}

fn dual_weights(ws: &WeightSystem, grid: &Grid) -> DualWeights {
    let m = grid.m;
    // index 0 is unused; level m is the final time where ρ = ∞
    let mut l0 = vec![f64::NEG_INFINITY; m + 1];
    let mut l1 = vec![f64::NEG_INFINITY; m + 1];
    for n in 1..m {
        let t = grid.t(n);
        l0[n] = -2.0 * ws.log_rho(RhoKind::Zero, t).ln();
        l1[n] = -2.0 * ws.log_rho(RhoKind::One, t).ln();
    }
    let shift = l0.iter().chain(&l1).cloned().fold(f64::NEG_INFINITY, f64::max);
    let to_w = |v: f64| if v - shift < -UNDERFLOW_LN { 0.0 } else { (v - shift).exp() };
    DualWeights {
        w0: l0.iter().map(|&v| to_w(v)).collect(),
        w1: l1.iter().map(|&v| to_w(v)).collect(),
        log_scale: shift,
    }
}

/// The discrete dual operator `B` with its right-hand side and
/// preconditioner. Vectors hold levels `1..=m`, `n` values each.
pub struct DualSystem {
    grid: Grid,
    /// `E_n` for `n = 1..=m` at index `n - 1`.
    steps: Vec<Tridiagonal>,
    weights: DualWeights,
    mask: Vec<f64>,
    tikhonov: f64,
    blocks: Option<Vec<SymPenta>>,
    diag: Option<Vec<f64>>,
    active: Vec<bool>,
}

impl DualSystem {
    pub fn new(p: &ControlProblemLinear) -> Result<Self> {
        let grid = p.grid;
        let stepper = Stepper::new(&p.coeffs, grid);
        let steps: Vec<Tridiagonal> = (1..=grid.m).map(|n| stepper.step_matrix(n, None)).collect();
        let weights = dual_weights(&p.ws, &grid);
        let mask = grid.indicator(p.window().lo, p.window().hi);
        let mut sys = Self {
            grid,
            steps,
            weights,
            mask,
            tikhonov: p.tikhonov,
            blocks: None,
            diag: None,
            active: Vec::new(),
        };
        sys.build_preconditioner(p.preconditioner)?;
        Ok(sys)
    }

    pub fn log_scale(&self) -> f64 {
        self.weights.log_scale
    }

    pub fn len(&self) -> usize {
        self.grid.m * self.grid.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn w0(&self, n: usize) -> f64 {
        self.weights.w0[n]
    }

    fn w1(&self, n: usize) -> f64 {
        self.weights.w1[n]
    }

    /// `(L* p)_n = (E_nᵀ p_n - p_{n+1}) / Δt`.
    pub fn adjoint_op(&self, p: &[f64]) -> Vec<f64> {
        let (nn, m, dt) = (self.grid.n, self.grid.m, self.grid.dt());
        let mut out = vec![0.0; nn * m];
        for k in 0..m {
            let (pk, ok) = (&p[k * nn..(k + 1) * nn], &mut out[k * nn..(k + 1) * nn]);
            self.steps[k].matvec_transpose_into(pk, ok);
            if k + 1 < m {
                for j in 0..nn {
                    ok[j] -= p[(k + 1) * nn + j];
                }
            }
            ok.iter_mut().for_each(|v| *v /= dt);
        }
        out
    }

    /// `(L z)_n = (E_n z_n - z_{n-1}) / Δt` with `z_0 = 0`.
    pub fn forward_op(&self, z: &[f64]) -> Vec<f64> {
        let (nn, m, dt) = (self.grid.n, self.grid.m, self.grid.dt());
        let mut out = vec![0.0; nn * m];
        for k in 0..m {
            let ok = &mut out[k * nn..(k + 1) * nn];
            self.steps[k].matvec_into(&z[k * nn..(k + 1) * nn], ok);
            if k > 0 {
                for j in 0..nn {
                    ok[j] -= z[(k - 1) * nn + j];
                }
            }
            ok.iter_mut().for_each(|v| *v /= dt);
        }
        out
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let nn = self.grid.n;
        let mut q = self.adjoint_op(p);
        for (k, chunk) in q.chunks_mut(nn).enumerate() {
            let w = self.w0(k + 1);
            chunk.iter_mut().for_each(|v| *v *= w);
        }
        let mut out = self.forward_op(&q);
        for k in 0..self.grid.m {
            let w = self.w1(k + 1);
            for j in 0..nn {
                let i = k * nn + j;
                out[i] += w * self.mask[j] * p[i] + self.tikhonov * p[i];
            }
        }
        out
    }

    /// `b(φ, ψ) = ⟨B φ, ψ⟩` on the unscaled Euclidean product.
    pub fn bilinear(&self, phi: &[f64], psi: &[f64]) -> f64 {
        self.apply(phi).iter().zip(psi).map(|(a, b)| a * b).sum()
    }

    fn build_preconditioner(&mut self, kind: Preconditioner) -> Result<()> {
        let (nn, m, dt) = (self.grid.n, self.grid.m, self.grid.dt());
        let inv_dt2 = 1.0 / (dt * dt);
        let mut blocks = Vec::with_capacity(m);
        let mut diag = Vec::with_capacity(nn * m);
        self.active = Vec::with_capacity(nn * m);
        for k in 0..m {
            let n = k + 1;
            let e = &self.steps[k];
            let wn = self.w0(n);
            let wprev = if n >= 2 { self.w0(n - 1) } else { 0.0 };
            // W_n E_n E_nᵀ + W_{n-1} I, pentadiagonal
            let mut d0 = vec![0.0; nn];
            let mut d1 = vec![0.0; nn];
            let mut d2 = vec![0.0; nn];
            for i in 0..nn {
                let mut s = e.diag[i] * e.diag[i];
                if i > 0 {
                    s += e.lower[i] * e.lower[i];
                }
                if i + 1 < nn {
                    s += e.upper[i] * e.upper[i];
                }
                d0[i] = (wn * s + wprev) * inv_dt2 + self.w1(n) * self.mask[i] + self.tikhonov;
                if i + 1 < nn {
                    // row i · row i+1 of E
                    let c = e.diag[i] * e.lower[i + 1] + e.upper[i] * e.diag[i + 1];
                    d1[i] = wn * c * inv_dt2;
                }
                if i + 2 < nn {
                    d2[i] = wn * e.upper[i] * e.lower[i + 2] * inv_dt2;
                }
            }
            for &v in &d0 {
                diag.push(v);
                self.active.push(v > 0.0);
            }
            if kind == Preconditioner::TimeBlock {
                blocks.push(SymPenta::new(d0, d1, d2)?);
            }
        }
        match kind {
            Preconditioner::TimeBlock => self.blocks = Some(blocks),
            Preconditioner::Jacobi => self.diag = Some(diag),
            Preconditioner::None => {}
        }
        Ok(())
    }

    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let nn = self.grid.n;
        let mut out = vec![0.0; r.len()];
        if let Some(blocks) = &self.blocks {
            for (k, b) in blocks.iter().enumerate() {
                b.solve_into(&r[k * nn..(k + 1) * nn], &mut out[k * nn..(k + 1) * nn]);
            }
        } else if let Some(d) = &self.diag {
            for i in 0..r.len() {
                out[i] = if d[i] > 0.0 { r[i] / d[i] } else { 0.0 };
            }
        } else {
            for i in 0..r.len() {
                out[i] = if self.active[i] { r[i] } else { 0.0 };
            }
        }
        out
    }

    /// `ℓ_n = G_n + δ_{n1} z₀ / Δt`.
    pub fn rhs(&self, z0: &[f64], g: Option<&StateField>) -> Vec<f64> {
        let (nn, m, dt) = (self.grid.n, self.grid.m, self.grid.dt());
        let mut out = vec![0.0; nn * m];
        if let Some(g) = g {
            for k in 0..m {
                out[k * nn..(k + 1) * nn].copy_from_slice(g.slice(k + 1));
            }
        }
        for j in 0..nn {
            out[j] += z0[j] / dt;
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct CgOutcome {
    x: Vec<f64>,
    iters: usize,
    residual: f64,
    history: Vec<f64>,
}

/// Residual growth over the best seen that triggers a restart.
const CG_RESTART_GROWTH: f64 = 100.0;
const CG_MAX_RESTARTS: usize = 20;

/// Preconditioned CG. When rounding destroys conjugacy and the residual
/// climbs well above its best, the iteration restarts from the best iterate
/// with the true residual `b - A x`.
fn pcg(sys: &DualSystem, rhs: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let bnorm = norm(rhs);
    let mut x = vec![0.0; rhs.len()];
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iters: 0,
            residual: 0.0,
            history: vec![0.0],
        });
    }
    let mut r = rhs.to_vec();
    let mut z = sys.precondition(&r);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut history = vec![1.0];
    let mut best = 1.0f64;
    let mut x_best = x.clone();
    let mut restarts = 0;
    for it in 1..=max_iter {
        let ap = sys.apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) || !pap.is_finite() {
            let res = *history.last().unwrap();
            return Err(Error::CgStalled {
                iterations: it,
                residual: res,
                best,
            });
        }
        let alpha = rz / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bnorm;
        history.push(rel);
        if rel < best {
            best = rel;
            x_best.copy_from_slice(&x);
        }
        if rel <= tol {
            return Ok(CgOutcome {
                x,
                iters: it,
                residual: rel,
                history,
            });
        }
        if rel > CG_RESTART_GROWTH * best && restarts < CG_MAX_RESTARTS {
            restarts += 1;
            x.copy_from_slice(&x_best);
            let ax = sys.apply(&x);
            for i in 0..r.len() {
                r[i] = rhs[i] - ax[i];
            }
            z = sys.precondition(&r);
            p.copy_from_slice(&z);
            rz = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            continue;
        }
        z = sys.precondition(&r);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::CgStalled {
        iterations: max_iter,
        residual: *history.last().unwrap(),
        best,
    })
}

/// Space-time weighted sum `Σ Δt h ρ(t_n)² |v_n|²` over levels `range`,
/// evaluated in log space so huge weights meet tiny values safely.
pub(crate) fn weighted_sq(field: &StateField, ws: &WeightSystem, kind: RhoKind, mask: Option<&[f64]>, range: std::ops::Range<usize>) -> f64 {
    let g = field.grid;
    let (h, dt) = (g.h(), g.dt());
    let mut total = 0.0;
    for n in range {
        let lr = 2.0 * ws.log_rho(kind, g.t(n)).ln();
        for (j, &v) in field.slice(n).iter().enumerate() {
            if v == 0.0 || mask.is_some_and(|m| m[j] == 0.0) {
                continue;
            }
            total += dt * h * (lr + 2.0 * v.abs().ln()).exp();
        }
    }
    total
}

/// `ρ(t)² q` for a non-negative quantity `q`, in log space.
fn weighted(ws: &WeightSystem, kind: RhoKind, t: f64, q: f64) -> f64 {
    if q == 0.0 {
        0.0
    } else {
        (2.0 * ws.log_rho(kind, t).ln() + q.ln()).exp()
    }
}

/// `κ₀ = ‖ρ₂ G‖² + ‖z₀‖²`; the final level is excluded.
pub fn kappa0(p: &ControlProblemLinear) -> f64 {
    let g_part = p.g.as_ref().map_or(0.0, |g| weighted_sq(g, &p.ws, RhoKind::Two, None, 1..p.grid.m));
    g_part + l2(p.grid.h(), &p.z0).powi(2)
}

/// `κ₁ = ‖ρ₂ G‖² + ‖z₀‖²_{H¹_a}`.
pub fn kappa1(p: &ControlProblemLinear) -> f64 {
    let g_part = p.g.as_ref().map_or(0.0, |g| weighted_sq(g, &p.ws, RhoKind::Two, None, 1..p.grid.m));
    g_part + norm_h1a_sq(&p.z0, &p.coeffs.coeff, &p.grid)
}

pub fn solve_null_control(p: &ControlProblemLinear) -> Result<ControlSolution> {
    let grid = p.grid;
    let (nn, m) = (grid.n, grid.m);
    if p.z0.len() != nn {
        return Err(Error::GridMismatch(format!("z0 has {} values, grid {}", p.z0.len(), nn)));
    }
    if let Some(g) = &p.g {
        if g.grid != grid {
            return Err(Error::GridMismatch("source grid differs from problem grid".into()));
        }
    }
    let k0 = kappa0(p);
    if !k0.is_finite() {
        return Err(Error::WeightOverflow(format!("‖ρ₂G‖² + ‖z₀‖² = {k0}")));
    }
    let sys = DualSystem::new(p)?;
    let mut rhs = sys.rhs(&p.z0, p.g.as_ref());
    let mut dropped = 0.0;
    for (v, &a) in rhs.iter_mut().zip(&sys.active) {
        if !a {
            dropped += *v * *v;
            *v = 0.0;
        }
    }
    let cg = pcg(&sys, &rhs, p.cg_tol, p.cg_max_iter)?;

    let lp = sys.adjoint_op(&cg.x);
    let mut z = StateField::zeros(grid, FieldKind::State);
    let mut h_tilde = StateField::zeros(grid, FieldKind::Control);
    let mut phi_hat = StateField::zeros(grid, FieldKind::Adjoint);
    z.set_slice(0, &p.z0);
    for k in 0..m {
        let n = k + 1;
        let (w0, w1) = (sys.w0(n), sys.w1(n));
        let zs: Vec<f64> = lp[k * nn..(k + 1) * nn].iter().map(|v| w0 * v).collect();
        z.set_slice(n, &zs);
        let ps = &cg.x[k * nn..(k + 1) * nn];
        phi_hat.set_slice(n, ps);
        let hs: Vec<f64> = ps.iter().zip(&sys.mask).map(|(v, mk)| -w1 * mk * v).collect();
        h_tilde.set_slice(n, &hs);
    }

    let h = grid.h();
    let dt = grid.dt();
    let direct: f64 = z.data()[nn..].iter().zip(&lp).map(|(a, b)| a * b).sum::<f64>() * h * dt;
    let lhs_ell: f64 = rhs.iter().zip(&cg.x).map(|(a, b)| a * b).sum::<f64>();
    let control_part: f64 = (0..m)
        .map(|k| {
            let w1 = sys.w1(k + 1);
            (0..nn).map(|j| w1 * sys.mask[j] * cg.x[k * nn + j].powi(2)).sum::<f64>()
        })
        .sum();
    let by_parts = (lhs_ell - control_part) * h * dt;

    let stepper = Stepper::new(&p.coeffs, grid);
    let mut source = h_tilde.clone();
    if let Some(g) = &p.g {
        for (s, v) in source.data_mut().iter_mut().zip(g.data()) {
            *s += v;
        }
    }
    let resim = stepper.solve_linear(&p.z0, Some(&source), None)?;
    let resim_terminal = l2(h, resim.slice(m));
    let state_mismatch = z.data().iter().zip(resim.data()).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
    let terminal_norm = l2(h, z.slice(m));
    let terminal_tol = p.terminal_tol.unwrap_or(1e-3 * l2(h, &p.z0));

    let mut sol = ControlSolution {
        z,
        h_tilde,
        h_bilinear: None,
        phi_hat,
        diagnostics: ControlDiagnostics {
            terminal_norm,
            resimulated_terminal_norm: resim_terminal,
            terminal_tol,
            certificate_ok: resim_terminal <= (2.0 * terminal_norm).max(terminal_tol),
            estimate_ratio_31: 0.0,
            kappa0: k0,
            kappa1: kappa1(p),
            cg_iters: cg.iters,
            residual: cg.residual,
            residual_history: cg.history,
            dropped_rhs: dropped.sqrt(),
            log_scale: sys.log_scale(),
            duality: (direct, by_parts),
            state_mismatch,
        },
    };
    sol.diagnostics.estimate_ratio_31 = check_estimate_31(&sol, p);
    Ok(sol)
}

/// `(∫ρ₀²|z|² + ∫_{ω₁}ρ₁²|h̃|²) / κ₀`, zero for zero data.
pub fn check_estimate_31(sol: &ControlSolution, p: &ControlProblemLinear) -> f64 {
    let mask = p.grid.indicator(p.window().lo, p.window().hi);
    let range = 1..p.grid.m;
    let lhs = weighted_sq(&sol.z, &p.ws, RhoKind::Zero, None, range.clone())
        + weighted_sq(&sol.h_tilde, &p.ws, RhoKind::One, Some(&mask), range);
    let k0 = kappa0(p);
    if k0 == 0.0 {
        0.0
    } else {
        lhs / k0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdditionalEstimates {
    /// `sup ρ̂²‖z‖²`.
    pub sup_rho_hat_z: f64,
    /// `∫ ρ̂² a |z_x|²`.
    pub int_rho_hat_grad: f64,
    /// `sup ρ₁² ‖√a z_x‖²`.
    pub sup_rho1_grad: f64,
    /// `∫ ρ₁² (|z_t|² + |(a z_x)_x|²)`.
    pub int_rho1_second: f64,
    pub ratio_kappa0: f64,
    pub ratio_kappa1: f64,
}

pub fn check_additional_estimates(sol: &ControlSolution, p: &ControlProblemLinear) -> AdditionalEstimates {
    let grid = p.grid;
    let (h, dt) = (grid.h(), grid.dt());
    let stiff = crate::disc::stiffness(&p.coeffs.coeff, &grid);
    let mut out = AdditionalEstimates::default();
    for n in 1..grid.m {
        let t = grid.t(n);
        let zn = sol.z.slice(n);
        let grad = seminorm_h1a_sq(zn, &p.coeffs.coeff, &grid);
        out.sup_rho_hat_z = out.sup_rho_hat_z.max(weighted(&p.ws, RhoKind::Hat, t, l2(h, zn).powi(2)));
        out.int_rho_hat_grad += dt * weighted(&p.ws, RhoKind::Hat, t, grad);
        out.sup_rho1_grad = out.sup_rho1_grad.max(weighted(&p.ws, RhoKind::One, t, grad));
        let zprev = sol.z.slice(n - 1);
        let zt: Vec<f64> = zn.iter().zip(zprev).map(|(a, b)| (a - b) / dt).collect();
        let azxx = stiff.matvec(zn);
        let second = dot(h, &zt, &zt) + dot(h, &azxx, &azxx);
        out.int_rho1_second += dt * weighted(&p.ws, RhoKind::One, t, second);
    }
    let (k0, k1) = (kappa0(p), kappa1(p));
    if k0 > 0.0 {
        out.ratio_kappa0 = (out.sup_rho_hat_z + out.int_rho_hat_grad) / k0;
    }
    if k1 > 0.0 {
        out.ratio_kappa1 = (out.sup_rho1_grad + out.int_rho1_second) / k1;
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlRegularity {
    /// `max_n |ρ̃ ρ₁² / ρ̄ - 1|`.
    pub identity_residual: f64,
    pub u_norm: f64,
    /// `‖ρ̄ h̃‖_U / (‖z₀‖ + ‖ρ₂ G‖)`.
    pub ratio: f64,
}

/// Regularity of `ρ̄ h̃` in `U = L²(H²(ω₁)) ∩ L^∞(H¹(ω₁))`, with the
/// difference quotients taken over nodes of `ω₁` only.
pub fn check_control_regularity(sol: &ControlSolution, p: &ControlProblemLinear) -> ControlRegularity {
    let grid = p.grid;
    let (h, dt) = (grid.h(), grid.dt());
    let idx: Vec<usize> = (0..grid.n).filter(|&j| p.window().contains(grid.x(j))).collect();
    let mut identity_residual: f64 = 0.0;
    let mut l2_part = 0.0;
    let mut sup_part: f64 = 0.0;
    for n in 1..grid.m {
        let t = grid.t(n);
        let lt = p.ws.log_rho(RhoKind::Tilde, t);
        let l1 = p.ws.log_rho(RhoKind::One, t);
        let lb = p.ws.log_rho(RhoKind::Bar, t);
        let de = lt.exponential + 2.0 * l1.exponential - lb.exponential;
        let da = lt.algebraic + 2.0 * l1.algebraic - lb.algebraic;
        identity_residual = identity_residual.max((de + da).exp_m1().abs());

        let lrb = lb.ln();
        let gvals: Vec<f64> = idx
            .iter()
            .map(|&j| {
                let v = sol.h_tilde.slice(n)[j];
                if v == 0.0 {
                    0.0
                } else {
                    v.signum() * (lrb + v.abs().ln()).exp()
                }
            })
            .collect();
        let l2sq: f64 = h * gvals.iter().map(|v| v * v).sum::<f64>();
        let d1sq: f64 = h * gvals.windows(2).map(|w| ((w[1] - w[0]) / h).powi(2)).sum::<f64>();
        let d2sq: f64 = h * gvals
            .windows(3)
            .map(|w| ((w[2] - 2.0 * w[1] + w[0]) / (h * h)).powi(2))
            .sum::<f64>();
        l2_part += dt * (l2sq + d1sq + d2sq);
        sup_part = sup_part.max(l2sq + d1sq);
    }
    let u_norm = (l2_part + sup_part).sqrt();
    let g_norm = p
        .g
        .as_ref()
        .map_or(0.0, |g| weighted_sq(g, &p.ws, RhoKind::Two, None, 1..grid.m))
        .sqrt();
    let denom = l2(h, &p.z0) + g_norm;
    ControlRegularity {
        identity_residual,
        u_norm,
        ratio: if denom > 0.0 { u_norm / denom } else { 0.0 },
    }
}

/// `h = h̃ / ỹ` on the window where `|ỹ| ≥ floor`.
pub fn bilinear_from(h_tilde: &StateField, trajectory: &StateField, mask: &[f64], floor: f64) -> Result<StateField> {
    let grid = h_tilde.grid;
    let mut out = StateField::zeros(grid, FieldKind::Control);
    for n in 0..=grid.m {
        let (hs, ys) = (h_tilde.slice(n), trajectory.slice(n));
        let mut row = vec![0.0; grid.n];
        for j in 0..grid.n {
            if mask[j] == 0.0 {
                continue;
            }
            if ys[j].abs() < floor {
                return Err(Error::TrajectoryFloorViolated { min: ys[j].abs(), floor });
            }
            row[j] = hs[j] / ys[j];
        }
        out.set_slice(n, &row);
    }
    Ok(out)
}
