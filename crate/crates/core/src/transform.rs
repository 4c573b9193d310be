//! Rescaling `x = x̄ / ℓ(t)` of the moving interval onto `(0, 1)` and the
//! coefficients of the resulting fixed-cylinder equation
//!
//! `y_t - b(t) (a y_x)_x - B(x,t) √a y_x + F(ℓ(t) x, t, y) = h 1_ω y`.

use std::sync::Arc;

use crate::disc::{Grid, StateField};
use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::model::{CoefficientKind, DegenerateCoefficient, DomainMotion, Nonlinearity};

/// Derivatives of `ψ(x̄, t) = x̄ / ℓ(t)` and its inverse `τ_t(x) = ℓ(t) x`.
#[derive(Clone, Debug)]
pub struct DiffeomorphismTables {
    motion: DomainMotion,
}

impl DiffeomorphismTables {
    pub fn psi(&self, xbar: f64, t: f64) -> f64 {
        xbar / self.motion.ell(t)
    }

    pub fn psi_xbar(&self, t: f64) -> f64 {
        1.0 / self.motion.ell(t)
    }

    pub fn psi_xbar_xbar(&self, _t: f64) -> f64 {
        0.0
    }

    /// `∂ψ/∂t` expressed in the fixed variable `x`.
    pub fn psi_t(&self, x: f64, t: f64) -> f64 {
        -x * self.motion.rate(t)
    }

    pub fn tau(&self, x: f64, t: f64) -> f64 {
        self.motion.ell(t) * x
    }
}

#[derive(Clone, Debug)]
pub struct TransformedCoefficients {
    pub coeff: DegenerateCoefficient,
    pub motion: DomainMotion,
    pub nl: Nonlinearity,
    trajectory: Option<Arc<StateField>>,
}

pub fn build_transform(
    coeff: &DegenerateCoefficient,
    motion: &DomainMotion,
    nl: &Nonlinearity,
    trajectory: Option<Arc<StateField>>,
) -> Result<(DiffeomorphismTables, TransformedCoefficients)> {
    // √a must dominate x near 0 for B to stay bounded
    if coeff.k >= 2.0 {
        return Err(Error::SingularB { k: coeff.k });
    }
    Ok((
        DiffeomorphismTables {
            motion: motion.clone(),
        },
        TransformedCoefficients {
            coeff: coeff.clone(),
            motion: motion.clone(),
            nl: nl.clone(),
            trajectory,
        },
    ))
}

impl TransformedCoefficients {
    pub fn with_trajectory(&self, trajectory: Option<Arc<StateField>>) -> Self {
        Self {
            trajectory,
            ..self.clone()
        }
    }

    pub fn trajectory(&self) -> Option<&Arc<StateField>> {
        self.trajectory.as_ref()
    }

    pub fn horizon(&self) -> f64 {
        self.motion.horizon
    }

    pub fn b(&self, t: f64) -> f64 {
        self.motion.b(&self.coeff, t)
    }

    /// `B(x,t) = ℓ'(t) x / (ℓ(t) √a(x))`, extended by 0 at `x = 0`.
    pub fn big_b(&self, x: f64, t: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let r = self.motion.rate(t);
        match &self.coeff.kind {
            CoefficientKind::PowerLaw { alpha } => r * x.powf(1.0 - 0.5 * alpha),
            CoefficientKind::Custom { a, .. } => r * x / a(x).sqrt(),
        }
    }

    /// Drift velocity `B √a = (ℓ'/ℓ) x`, the quantity the discretization uses.
    pub fn drift_velocity(&self, x: f64, t: f64) -> f64 {
        self.motion.rate(t) * x
    }

    pub fn f_pulled(&self, x: f64, t: f64, r: f64) -> f64 {
        self.nl.eval(self.motion.ell(t) * x, t, r)
    }

    pub fn df_pulled(&self, x: f64, t: f64, r: f64) -> f64 {
        self.nl.deriv(self.motion.ell(t) * x, t, r)
    }

    /// `c = ℓ'/ℓ + D₃F(ℓ x, t, ỹ)` at interior node `j` of time slice `n` of
    /// the trajectory grid.
    pub fn c_node(&self, n: usize, j: usize) -> Result<f64> {
        let traj = self.trajectory.as_ref().ok_or(Error::MissingTrajectory)?;
        let g = traj.grid;
        let t = g.t(n);
        Ok(self.motion.rate(t) + self.df_pulled(g.x(j), t, traj.slice(n)[j]))
    }

    /// Linearization coefficient `D₃F(ℓ x, t, ỹ)` on one time slice. Without
    /// an attached trajectory the null trajectory `ỹ ≡ 0` is used.
    pub fn reaction_slice(&self, grid: &Grid, n: usize) -> Vec<f64> {
        let t = grid.t(n);
        match &self.trajectory {
            Some(traj) => (0..grid.n)
                .map(|j| self.df_pulled(grid.x(j), t, traj.slice(n)[j]))
                .collect(),
            None => (0..grid.n)
                .map(|j| self.df_pulled(grid.x(j), t, 0.0))
                .collect(),
        }
    }

    /// `c(x,t)` off the grid, by bilinear interpolation of the trajectory.
    pub fn c(&self, x: f64, t: f64) -> Result<f64> {
        let traj = self.trajectory.as_ref().ok_or(Error::MissingTrajectory)?;
        let g = traj.grid;
        if !(0.0..=g.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon: g.horizon });
        }
        let tn = (t / g.dt()).min(g.m as f64);
        let n0 = (tn.floor() as usize).min(g.m.saturating_sub(1));
        let wt = tn - n0 as f64;
        let node = |n: usize| -> f64 {
            let s = traj.slice(n);
            let xi = (x / g.h()).clamp(0.0, (g.n + 1) as f64);
            let i0 = (xi.floor() as usize).min(g.n);
            let wx = xi - i0 as f64;
            let val = |i: usize| if i == 0 || i > g.n { 0.0 } else { s[i - 1] };
            (1.0 - wx) * val(i0) + wx * val(i0 + 1)
        };
        let ytil = (1.0 - wt) * node(n0) + wt * node(n0 + 1);
        Ok(self.motion.rate(t) + self.df_pulled(x, t, ytil))
    }
}

/// Samples of a function on a physical interval `[0, ℓ]`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalProfile {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl PhysicalProfile {
    pub fn sample(ell: f64, count: usize, f: impl Fn(f64) -> f64) -> Self {
        let nodes: Vec<f64> = (0..count)
            .map(|i| ell * i as f64 / (count - 1) as f64)
            .collect();
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self { nodes, values }
    }
}

/// `y₀(x) = u₀(ℓ(0) x)` on the interior nodes of `grid`.
pub fn pull_back_initial(u0: &PhysicalProfile, motion: &DomainMotion, grid: &Grid) -> Result<Vec<f64>> {
    let ell0 = motion.ell(0.0);
    let (first, last) = match (u0.nodes.first(), u0.nodes.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::GridMismatch("empty initial profile".into())),
    };
    let tol = 1e-10 * ell0.max(1.0);
    if first.abs() > tol || (last - ell0).abs() > tol {
        return Err(Error::GridMismatch(format!(
            "initial profile spans [{first}, {last}], expected [0, {ell0}]"
        )));
    }
    let p = Pchip::new(u0.nodes.clone(), u0.values.clone())?;
    Ok((0..grid.n).map(|j| p.eval(ell0 * grid.x(j))).collect())
}

/// `u(x̄, t) = y(x̄ / ℓ(t), t)` on the physical nodes `x̄_i = ℓ(t) x_i`,
/// boundary nodes included.
pub fn push_forward_state(y: &[f64], grid: &Grid, motion: &DomainMotion, t: f64) -> Result<PhysicalProfile> {
    if !(0.0..=motion.horizon).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            horizon: motion.horizon,
        });
    }
    if y.len() != grid.n {
        return Err(Error::GridMismatch(format!(
            "slice has {} values, grid has {} interior nodes",
            y.len(),
            grid.n
        )));
    }
    let ell = motion.ell(t);
    let nodes: Vec<f64> = (0..grid.n + 2).map(|i| ell * grid.node(i)).collect();
    let mut values = Vec::with_capacity(grid.n + 2);
    values.push(0.0);
    values.extend_from_slice(y);
    values.push(0.0);
    Ok(PhysicalProfile { nodes, values })
}

/// Resamples a physical profile at arbitrary points by monotone cubic
/// interpolation.
pub fn resample(profile: &PhysicalProfile, at: &[f64]) -> Result<Vec<f64>> {
    let p = Pchip::new(profile.nodes.clone(), profile.values.clone())?;
    Ok(at.iter().map(|&x| p.eval(x)).collect())
}
