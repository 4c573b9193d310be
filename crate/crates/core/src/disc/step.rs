use std::sync::Arc;

use crate::disc::operator::{assemble_with_stiffness, stiffness};
use crate::disc::{l2, DegenerateOperator, FieldKind, Grid, StateField, Tridiagonal};
use crate::error::{Error, Result};
use crate::transform::TransformedCoefficients;

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeScheme {
    #[default]
    BackwardEuler,
    CrankNicolson,
}

impl TimeScheme {
    fn theta(self) -> f64 {
        match self {
            TimeScheme::BackwardEuler => 1.0,
            TimeScheme::CrankNicolson => 0.5,
        }
    }
}

/// Time stepper on a fixed grid. Caches the time-independent stiffness.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub grid: Grid,
    pub coeffs: TransformedCoefficients,
    pub scheme: TimeScheme,
    stiffness: Tridiagonal,
}

impl Stepper {
    pub fn new(coeffs: &TransformedCoefficients, grid: Grid) -> Self {
        Self {
            grid,
            coeffs: coeffs.clone(),
            scheme: TimeScheme::BackwardEuler,
            stiffness: stiffness(&coeffs.coeff, &grid),
        }
    }

    pub fn with_scheme(mut self, scheme: TimeScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn operator(&self, n: usize) -> DegenerateOperator {
        assemble_with_stiffness(&self.coeffs, &self.grid, n, self.stiffness.clone())
    }

    /// Backward-Euler step matrix `E_n = I + Δt (A(t_n) - diag(bilinear))`.
    pub fn step_matrix(&self, n: usize, bilinear: Option<&[f64]>) -> Tridiagonal {
        let dt = self.grid.dt();
        let mut e = self.operator(n).matrix();
        if let Some(hb) = bilinear {
            e.add_diagonal(hb, -1.0);
        }
        e.scale(dt);
        e.add_diagonal(&vec![1.0; self.grid.n], 1.0);
        e
    }

    /// Linear step from level `n` to `n + 1`: the reaction is `D₃F` along
    /// the attached trajectory, `source` and `bilinear` (the multiplier
    /// `h 1_ω`) are taken at `t_{n+1}`.
    pub fn step_forward(
        &self,
        y_n: &[f64],
        n: usize,
        source: Option<&[f64]>,
        bilinear: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let dt = self.grid.dt();
        let theta = self.scheme.theta();
        let mut rhs = y_n.to_vec();
        if theta < 1.0 {
            let mut a = self.operator(n).matrix();
            if let Some(hb) = bilinear {
                a.add_diagonal(hb, -1.0);
            }
            let ay = a.matvec(y_n);
            for (r, v) in rhs.iter_mut().zip(&ay) {
                *r -= (1.0 - theta) * dt * v;
            }
        }
        if let Some(src) = source {
            for (r, s) in rhs.iter_mut().zip(src) {
                *r += dt * s;
            }
        }
        let mut e = self.operator(n + 1).matrix();
        if let Some(hb) = bilinear {
            e.add_diagonal(hb, -1.0);
        }
        e.scale(theta * dt);
        e.add_diagonal(&vec![1.0; self.grid.n], 1.0);
        e.solve(&rhs)
    }

    /// Semilinear step with the full nonlinearity `F(ℓ x, t, y)` in place of
    /// the linearized reaction, solved by Newton's method.
    pub fn step_semilinear(
        &self,
        y_n: &[f64],
        n: usize,
        source: Option<&[f64]>,
        bilinear: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let g = &self.grid;
        let dt = g.dt();
        let theta = self.scheme.theta();
        let xs = g.xs();
        let (t0, t1) = (g.t(n), g.t(n + 1));

        let mut base = y_n.to_vec();
        if theta < 1.0 {
            let mut a = self.operator(n).principal();
            if let Some(hb) = bilinear {
                a.add_diagonal(hb, -1.0);
            }
            let ay = a.matvec(y_n);
            for j in 0..g.n {
                let f = self.coeffs.f_pulled(xs[j], t0, y_n[j]);
                base[j] -= (1.0 - theta) * dt * (ay[j] + f);
            }
        }
        if let Some(src) = source {
            for (r, s) in base.iter_mut().zip(src) {
                *r += dt * s;
            }
        }

        let mut a1 = self.operator(n + 1).principal();
        if let Some(hb) = bilinear {
            a1.add_diagonal(hb, -1.0);
        }
        let mut y = y_n.to_vec();
        for _ in 0..NEWTON_MAX {
            let ay = a1.matvec(&y);
            let mut jac = a1.clone();
            let mut resid = vec![0.0; g.n];
            for j in 0..g.n {
                let f = self.coeffs.f_pulled(xs[j], t1, y[j]);
                let df = self.coeffs.df_pulled(xs[j], t1, y[j]);
                resid[j] = y[j] + theta * dt * (ay[j] + f) - base[j];
                jac.diag[j] += df;
            }
            jac.scale(theta * dt);
            jac.add_diagonal(&vec![1.0; g.n], 1.0);
            let delta = jac.solve(&resid)?;
            let mut dmax: f64 = 0.0;
            let mut ymax: f64 = 0.0;
            for j in 0..g.n {
                y[j] -= delta[j];
                dmax = dmax.max(delta[j].abs());
                ymax = ymax.max(y[j].abs());
            }
            if !dmax.is_finite() {
                return Err(Error::NonFiniteSample {
                    what: "Newton update".into(),
                    at: format!("t = {t1}"),
                });
            }
            if dmax <= NEWTON_TOL * (1.0 + ymax) {
                break;
            }
        }
        Ok(y)
    }

    /// Transpose of the forward step from `n` to `n + 1`:
    /// `v_n = E_{n+1}^{-T} (v_{n+1} + Δt H_n)`.
    pub fn step_adjoint_backward(
        &self,
        v_next: &[f64],
        n: usize,
        source: Option<&[f64]>,
        bilinear: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let dt = self.grid.dt();
        let mut rhs = v_next.to_vec();
        if let Some(src) = source {
            for (r, s) in rhs.iter_mut().zip(src) {
                *r += dt * s;
            }
        }
        self.step_matrix(n + 1, bilinear).solve_transpose(&rhs)
    }

    /// Full linear forward solve from `y0`; `source(n)` and `bilinear(n)`
    /// supply slices at level `n`.
    pub fn solve_linear(
        &self,
        y0: &[f64],
        source: Option<&StateField>,
        bilinear: Option<&StateField>,
    ) -> Result<StateField> {
        let mut out = StateField::zeros(self.grid, FieldKind::State);
        out.set_slice(0, y0);
        for n in 0..self.grid.m {
            let next = self.step_forward(
                out.slice(n),
                n,
                source.map(|s| s.slice(n + 1)),
                bilinear.map(|b| b.slice(n + 1)),
            )?;
            out.set_slice(n + 1, &next);
        }
        Ok(out)
    }

    pub fn solve_semilinear(
        &self,
        y0: &[f64],
        source: Option<&StateField>,
        bilinear: Option<&StateField>,
    ) -> Result<StateField> {
        let mut out = StateField::zeros(self.grid, FieldKind::State);
        out.set_slice(0, y0);
        for n in 0..self.grid.m {
            let next = self.step_semilinear(
                out.slice(n),
                n,
                source.map(|s| s.slice(n + 1)),
                bilinear.map(|b| b.slice(n + 1)),
            )?;
            out.set_slice(n + 1, &next);
        }
        Ok(out)
    }

    /// Backward adjoint solve from terminal data `v_T` at level `m`.
    pub fn solve_adjoint(&self, v_terminal: &[f64], source: Option<&StateField>) -> Result<StateField> {
        let mut out = StateField::zeros(self.grid, FieldKind::Adjoint);
        out.set_slice(self.grid.m, v_terminal);
        for n in (0..self.grid.m).rev() {
            let prev = self.step_adjoint_backward(out.slice(n + 1), n, source.map(|s| s.slice(n)), None)?;
            out.set_slice(n, &prev);
        }
        Ok(out)
    }
}

pub fn step_forward(
    y_n: &[f64],
    coeffs: &TransformedCoefficients,
    grid: &Grid,
    n: usize,
    source: Option<&[f64]>,
    bilinear: Option<&[f64]>,
) -> Result<Vec<f64>> {
    Stepper::new(coeffs, *grid).step_forward(y_n, n, source, bilinear)
}

pub fn step_adjoint_backward(
    v_next: &[f64],
    coeffs: &TransformedCoefficients,
    grid: &Grid,
    n: usize,
    source: Option<&[f64]>,
) -> Result<Vec<f64>> {
    Stepper::new(coeffs, *grid).step_adjoint_backward(v_next, n, source, None)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub field: Arc<StateField>,
    /// `min |ỹ|` over the control window and all time levels.
    pub min_on_window: f64,
    /// Set when `min_on_window` falls below the configured floor.
    pub warning: Option<Error>,
}

impl Trajectory {
    pub fn require_floor(&self) -> Result<()> {
        match &self.warning {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }
}

/// Uncontrolled semilinear solve `ỹ_t - b (a ỹ_x)_x - B√a ỹ_x + F(ℓ x, t, ỹ) = 0`.
pub fn solve_trajectory(
    y0: &[f64],
    coeffs: &TransformedCoefficients,
    grid: &Grid,
    window: &[f64],
    floor: f64,
) -> Result<Trajectory> {
    let stepper = Stepper::new(&coeffs.with_trajectory(None), *grid);
    let field = stepper.solve_semilinear(y0, None, None)?;
    let min_on_window = field.min_abs_on(window);
    let warning = (min_on_window < floor).then_some(Error::TrajectoryDegenerate {
        min: min_on_window,
        floor,
    });
    Ok(Trajectory {
        field: Arc::new(field),
        min_on_window,
        warning,
    })
}

/// Per-step energy bound check: `‖y_{n+1}‖ ≤ ‖y_n‖ (1 + Δt c_max)`.
pub fn energy_growth_ok(field: &StateField, c_max: f64) -> bool {
    let h = field.grid.h();
    let dt = field.grid.dt();
    (0..field.grid.m).all(|n| {
        l2(h, field.slice(n + 1)) <= l2(h, field.slice(n)) * (1.0 + dt * c_max) * (1.0 + 1e-12) + 1e-300
    })
}
