use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::carleman::WeightSystem;
use crate::disc::{FieldKind, Grid, StateField, Stepper};
use crate::error::{Error, Result};
use crate::model::Interval;
use crate::transform::TransformedCoefficients;

#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    pub trials: usize,
    pub seed: u64,
    pub window: Interval,
    /// Multiplies every random datum; both sides are quadratic in it.
    pub data_scale: f64,
}

/// Per-trial ratios `LHS / RHS`. `secondary` holds the ratios for the
/// alternative right-hand side when the probe has one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub name: &'static str,
    pub trials: usize,
    pub skipped: usize,
    pub ratios: Vec<f64>,
    pub secondary: Option<Vec<f64>>,
}

fn stats(v: &[f64]) -> (f64, f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    (min, v.iter().sum::<f64>() / v.len() as f64, max)
}

impl ProbeReport {
    /// Empirical constant: the largest observed ratio.
    pub fn c_emp(&self) -> f64 {
        stats(&self.ratios).2
    }

    pub fn c_emp_secondary(&self) -> Option<f64> {
        self.secondary.as_ref().map(|s| stats(s).2)
    }

    pub fn render(&self) -> String {
        let (lo, mean, hi) = stats(&self.ratios);
        let mut out = format!(
            "probe {}\n  trials {} (skipped {})\n  C_emp {:e}\n  ratio min {:e} mean {:e}\n",
            self.name, self.trials, self.skipped, hi, lo, mean
        );
        if let Some(s) = &self.secondary {
            let (lo, mean, hi) = stats(s);
            out.push_str(&format!(
                "  C_emp (alternative weights) {:e}\n  ratio min {:e} mean {:e}\n",
                hi, lo, mean
            ));
        }
        out
    }
}

/// Stream-separated generator for trial `k`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Smooth random terminal datum: first eight sine modes with decaying
/// uniform amplitudes.
pub fn random_profile(rng: &mut ChaCha8Rng, grid: &Grid, modes: usize) -> Vec<f64> {
    let c: Vec<f64> = (1..=modes).map(|k| rng.random_range(-1.0..1.0) / k as f64).collect();
    grid.xs()
        .iter()
        .map(|x| c.iter().enumerate().map(|(k, ck)| ck * ((k + 1) as f64 * PI * x).sin()).sum())
        .collect()
}

fn random_source(rng: &mut ChaCha8Rng, grid: &Grid) -> StateField {
    let d: Vec<[f64; 3]> = (0..4)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let t_end = grid.horizon;
    StateField::from_fn(*grid, FieldKind::State, |x, t| {
        d.iter()
            .enumerate()
            .map(|(k, dk)| {
                let sx = ((k + 1) as f64 * PI * x).sin();
                sx * dk.iter().enumerate().map(|(j, c)| c * (j as f64 * PI * t / t_end).cos()).sum::<f64>()
            })
            .sum()
    })
}

struct Quad<'a> {
    grid: Grid,
    ws: &'a WeightSystem,
    coeffs: &'a TransformedCoefficients,
    mask: Vec<f64>,
}

impl Quad<'_> {
    fn sum_sq(&self, v: &[f64]) -> f64 {
        self.grid.h() * v.iter().map(|x| x * x).sum::<f64>()
    }

    fn sum_sq_window(&self, v: &[f64]) -> f64 {
        self.grid.h() * v.iter().zip(&self.mask).map(|(x, w)| w * x * x).sum::<f64>()
    }

    fn grad_sq_a(&self, v: &[f64]) -> f64 {
        let g = &self.grid;
        let val = |i: usize| if i == 0 || i > g.n { 0.0 } else { v[i - 1] };
        let h = g.h();
        (0..=g.n)
            .map(|i| {
                let d = (val(i + 1) - val(i)) / h;
                self.coeffs.coeff.a(g.midpoint(i)) * d * d
            })
            .sum::<f64>()
            * h
    }

    /// Time levels entering the weighted integrals: the final node, where
    /// the weights degenerate, is excluded.
    fn levels(&self) -> std::ops::Range<usize> {
        1..self.grid.m
    }

    fn gamma_hat(&self, v: &StateField) -> f64 {
        let ws = self.ws;
        let sl = ws.s * ws.lambda;
        let dt = self.grid.dt();
        self.levels()
            .map(|n| {
                let t = self.grid.t(n);
                let b = self.coeffs.b(t);
                let lz = ws.ln_zeta_hat(t);
                let le = 2.0 * ws.s * ws.a_hat(t);
                let slice = v.slice(n);
                let w1 = (le + lz).exp() * sl * b * b;
                let w2 = (le + 2.0 * lz).exp() * sl * sl * b * b;
                dt * (w1 * self.grad_sq_a(slice) + w2 * self.sum_sq(slice))
            })
            .sum()
    }

    /// `Σ Δt e^{2sA*} (ζ*)^k ∫ f`.
    fn star_weighted(&self, k: f64, f: impl Fn(usize) -> f64) -> f64 {
        let ws = self.ws;
        let dt = self.grid.dt();
        self.levels()
            .map(|n| {
                let t = self.grid.t(n);
                let lw = 2.0 * ws.s * ws.a_star(t) + k * ws.ln_zeta_star(t);
                dt * lw.exp() * f(n)
            })
            .sum()
    }
}

fn setup<'a>(
    ws: &'a WeightSystem,
    coeffs: &'a TransformedCoefficients,
    grid: &Grid,
    opts: &ProbeOptions,
) -> Result<(Quad<'a>, Stepper)> {
    if opts.trials < 10 {
        return Err(Error::OutOfRange {
            name: "trials",
            value: opts.trials as f64,
            range: ">= 10",
        });
    }
    let quad = Quad {
        grid: *grid,
        ws,
        coeffs,
        mask: grid.indicator(opts.window.lo, opts.window.hi),
    };
    Ok((quad, Stepper::new(coeffs, *grid)))
}

fn finite_ratio(lhs: f64, rhs: f64) -> Result<Option<f64>> {
    if !(lhs.is_finite() && rhs.is_finite()) {
        return Err(Error::WeightOverflow(format!("probe integrals lhs = {lhs}, rhs = {rhs}")));
    }
    Ok((rhs > 0.0).then(|| lhs / rhs))
}

/// Weighted adjoint inequality with time-only weights: left side
/// `‖v(0)‖² + Γ̂(v)`; right side with `(ζ*)⁴ |H|²` and `(ζ*)⁸ |v|²` on `ω₁`,
/// and the alternative right side with `|H|²` and `(ζ*)³ |v|²`.
pub fn probe_carleman(
    ws: &WeightSystem,
    coeffs: &TransformedCoefficients,
    grid: &Grid,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    let (quad, stepper) = setup(ws, coeffs, grid, opts)?;
    let per_trial: Vec<Result<Option<(f64, f64)>>> = (0..opts.trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(opts.seed, k);
            let vt: Vec<f64> = random_profile(&mut rng, grid, 8).iter().map(|v| v * opts.data_scale).collect();
            let mut src = random_source(&mut rng, grid);
            src.data_mut().iter_mut().for_each(|v| *v *= opts.data_scale);
            carleman_trial(&quad, &stepper, &vt, Some(&src))
        })
        .collect();
    collect("carleman", opts.trials, per_trial)
}

/// Carleman ratios for one explicit datum; `None` when the right side vanishes.
fn carleman_trial(
    quad: &Quad<'_>,
    stepper: &Stepper,
    vt: &[f64],
    src: Option<&StateField>,
) -> Result<Option<(f64, f64)>> {
    let v = stepper.solve_adjoint(vt, src)?;
    let lhs = quad.sum_sq(v.slice(0)) + quad.gamma_hat(&v);
    let h_sq = |n: usize| src.map_or(0.0, |s| quad.sum_sq(s.slice(n)));
    let rhs1 = quad.star_weighted(4.0, h_sq) + quad.star_weighted(8.0, |n| quad.sum_sq_window(v.slice(n)));
    let rhs2 = quad.star_weighted(0.0, h_sq) + quad.star_weighted(3.0, |n| quad.sum_sq_window(v.slice(n)));
    match (finite_ratio(lhs, rhs1)?, finite_ratio(lhs, rhs2)?) {
        (Some(a), Some(b)) => Ok(Some((a, b))),
        _ => Ok(None),
    }
}

/// Carleman ratio pair for user-supplied data (`None` if degenerate).
pub fn carleman_ratio(
    ws: &WeightSystem,
    coeffs: &TransformedCoefficients,
    grid: &Grid,
    window: Interval,
    vt: &[f64],
    src: Option<&StateField>,
) -> Result<Option<(f64, f64)>> {
    let quad = Quad {
        grid: *grid,
        ws,
        coeffs,
        mask: grid.indicator(window.lo, window.hi),
    };
    carleman_trial(&quad, &Stepper::new(coeffs, *grid), vt, src)
}

/// Observability with `H = 0`: `‖v(0)‖² ≤ C ∫_{ω₁} e^{2sA} (sλζ)³ |v|²`.
pub fn probe_observability(
    ws: &WeightSystem,
    coeffs: &TransformedCoefficients,
    grid: &Grid,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    let (quad, stepper) = setup(ws, coeffs, grid, opts)?;
    let etas: Vec<f64> = grid.xs().iter().map(|&x| ws.eta(x)).collect::<Result<_>>()?;
    let top = (3.0 * ws.lambda * ws.psi.sup_abs).exp();
    let sl3 = (ws.s * ws.lambda).powi(3);
    let per_trial: Vec<Result<Option<(f64, f64)>>> = (0..opts.trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(opts.seed, k);
            let vt: Vec<f64> = random_profile(&mut rng, grid, 8).iter().map(|v| v * opts.data_scale).collect();
            let v = stepper.solve_adjoint(&vt, None)?;
            let lhs = quad.sum_sq(v.slice(0));
            let dt = grid.dt();
            let h = grid.h();
            let mut rhs = 0.0;
            for n in quad.levels() {
                let tau = ws.tau(grid.t(n));
                let slice = v.slice(n);
                for j in 0..grid.n {
                    if quad.mask[j] == 0.0 {
                        continue;
                    }
                    let la = 2.0 * ws.s * tau * (etas[j] - top) + 3.0 * (tau * etas[j]).ln();
                    rhs += dt * h * sl3 * la.exp() * slice[j] * slice[j];
                }
            }
            Ok(finite_ratio(lhs, rhs)?.map(|r| (r, r)))
        })
        .collect();
    let mut report = collect("observability", opts.trials, per_trial)?;
    report.secondary = None;
    Ok(report)
}

fn collect(name: &'static str, trials: usize, per_trial: Vec<Result<Option<(f64, f64)>>>) -> Result<ProbeReport> {
    let mut ratios = Vec::new();
    let mut secondary = Vec::new();
    let mut skipped = 0;
    for r in per_trial {
        match r? {
            Some((a, b)) => {
                ratios.push(a);
                secondary.push(b);
            }
            None => skipped += 1,
        }
    }
    Ok(ProbeReport {
        name,
        trials,
        skipped,
        ratios,
        secondary: Some(secondary),
    })
}
