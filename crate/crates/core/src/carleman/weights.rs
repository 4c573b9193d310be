use std::sync::Arc;

use crate::carleman::Psi;
use crate::error::{Error, Result};

const DENSE_T: usize = 1000;
const DENSE_X: usize = 200;
const LAMBDA_MARGIN: f64 = 1.05;

/// `log ρ` split as `exponential + algebraic`, where the exponential part is
/// a multiple of `s A*` and the algebraic part a combination of `ln ζ*` and
/// `ln ζ̂`. Keeping the parts apart makes the weight identities cancel exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogWeight {
    pub exponential: f64,
    pub algebraic: f64,
}

impl LogWeight {
    pub fn ln(&self) -> f64 {
        self.exponential + self.algebraic
    }

    pub fn value(&self) -> f64 {
        self.ln().exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoKind {
    Zero,
    One,
    Two,
    Hat,
    Bar,
    Tilde,
}

impl RhoKind {
    pub const ALL: [RhoKind; 6] = [
        RhoKind::Zero,
        RhoKind::One,
        RhoKind::Two,
        RhoKind::Hat,
        RhoKind::Bar,
        RhoKind::Tilde,
    ];

    /// Multiplier of `-s A*`, power of `ζ*`, power of `ζ̂`.
    fn exponents(self) -> (f64, f64, f64) {
        match self {
            RhoKind::Zero => (1.0, 0.0, 0.0),
            RhoKind::One => (1.0, -1.5, 0.0),
            RhoKind::Two => (1.5, 0.0, -1.0),
            RhoKind::Hat => (1.0, -0.75, 0.0),
            RhoKind::Bar => (1.0, -2.5, 0.0),
            RhoKind::Tilde => (-1.0, 0.5, 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RhoKind::Zero => "rho0",
            RhoKind::One => "rho1",
            RhoKind::Two => "rho2",
            RhoKind::Hat => "rho_hat",
            RhoKind::Bar => "rho_bar",
            RhoKind::Tilde => "rho_tilde",
        }
    }
}

/// Constants fitted on the dense grid at build time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightDiagnostics {
    /// `max ρ̄/ρ₁`, `max ρ₁/ρ̂`, `max ρ̂/ρ₀`, `max ρ₀/ρ₂`, `max ρ₂/ρ₁²`.
    pub ordering: [f64; 5],
    pub zeta_ratio_spread: f64,
    pub rho_hat_identity: f64,
    /// `max |ζ_t| / ζ²` and `max τ_t / τ^{5/4}` away from `t = T`.
    pub zeta_t_const: f64,
    pub tau_t_const: f64,
    pub m_jump: [f64; 3],
    pub lambda_margin: f64,
}

#[derive(Debug, Clone)]
pub struct WeightSystem {
    pub psi: Arc<Psi>,
    pub s: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub m_margin: f64,
    /// `e^{3λ|Ψ|∞} - e^{λ(|Ψ|∞ + max Ψ)}`, so that `A* = -c1 τ`.
    pub c1: f64,
    /// `e^{3λ|Ψ|∞} - e^{λ(|Ψ|∞ + min Ψ)}`, so that `Â = -c2 τ`.
    pub c2: f64,
    pub diagnostics: WeightDiagnostics,
}

pub fn default_m_margin(horizon: f64) -> f64 {
    0.1 * (0.5 * horizon).powi(8)
}

fn extremal_constants(psi: &Psi, lambda: f64) -> (f64, f64) {
    let p = psi.sup_abs;
    let top = (3.0 * lambda * p).exp();
    (
        top - (lambda * (p + psi.max)).exp(),
        top - (lambda * (p + psi.min)).exp(),
    )
}

/// Doubles `λ` from 1 until `3 c1 ≥ 1.05 · 2 c2`, i.e. `3A* < 2Â` with margin.
pub fn select_lambda(psi: &Psi) -> Result<f64> {
    let mut lambda = 1.0;
    for _ in 0..30 {
        let (c1, c2) = extremal_constants(psi, lambda);
        if c1.is_finite() && 3.0 * c1 >= LAMBDA_MARGIN * 2.0 * c2 {
            return Ok(lambda);
        }
        lambda *= 2.0;
    }
    Err(Error::WeightInvariant {
        name: "lambda_search",
        detail: "no lambda up to 2^30 satisfies 3A* < 2Â".into(),
    })
}

/// Converts the normalized strength `s_norm = -s A*(T/2)` into the raw `s`.
pub fn s_from_normalized(psi: &Psi, lambda: f64, horizon: f64, s_norm: f64) -> f64 {
    let (c1, _) = extremal_constants(psi, lambda);
    s_norm / (c1 * (2.0 / horizon).powi(8))
}

pub fn build_weights(psi: &Psi, s: f64, lambda: f64, horizon: f64, m_margin: Option<f64>) -> Result<WeightSystem> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::OutOfRange {
            name: "s",
            value: s,
            range: "(0, inf)",
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            range: "(0, inf)",
        });
    }
    let m_margin = m_margin.unwrap_or_else(|| default_m_margin(horizon));
    if !(m_margin > 0.0) {
        return Err(Error::OutOfRange {
            name: "m_margin",
            value: m_margin,
            range: "(0, inf)",
        });
    }
    let (c1, c2) = extremal_constants(psi, lambda);
    if !(c1.is_finite() && c2.is_finite()) {
        return Err(Error::WeightOverflow(format!("e^(3 lambda |Psi|) overflows at lambda = {lambda}")));
    }
    let mut ws = WeightSystem {
        psi: Arc::new(psi.clone()),
        s,
        lambda,
        horizon,
        m_margin,
        c1,
        c2,
        diagnostics: WeightDiagnostics::default(),
    };
    ws.diagnostics = ws.check_invariants()?;
    Ok(ws)
}

impl WeightSystem {
    pub fn theta(&self, t: f64) -> f64 {
        (t * (self.horizon - t)).powi(-4)
    }

    pub fn eta(&self, x: f64) -> Result<f64> {
        Ok((self.lambda * (self.psi.sup_abs + self.psi.value(x)?)).exp())
    }

    pub fn sigma(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.theta(t) * self.eta(x)?)
    }

    pub fn phi_weight(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.theta(t) * (self.eta(x)? - self.top()))
    }

    fn top(&self) -> f64 {
        (3.0 * self.lambda * self.psi.sup_abs).exp()
    }

    pub fn eta_max(&self) -> f64 {
        (self.lambda * (self.psi.sup_abs + self.psi.max)).exp()
    }

    pub fn eta_min(&self) -> f64 {
        (self.lambda * (self.psi.sup_abs + self.psi.min)).exp()
    }

    fn blend(&self, t: f64) -> (f64, f64, f64) {
        let half = 0.5 * self.horizon;
        if t >= half {
            return (0.0, 0.0, 0.0);
        }
        let q = (half - t) / half;
        let k = self.m_margin;
        (
            k * q.powi(4),
            -4.0 * k * q.powi(3) / half,
            12.0 * k * q.powi(2) / (half * half),
        )
    }

    pub fn m(&self, t: f64) -> f64 {
        (t * (self.horizon - t)).powi(4) + self.blend(t).0
    }

    pub fn dm(&self, t: f64) -> f64 {
        let u = t * (self.horizon - t);
        4.0 * u.powi(3) * (self.horizon - 2.0 * t) + self.blend(t).1
    }

    pub fn d2m(&self, t: f64) -> f64 {
        let u = t * (self.horizon - t);
        let du = self.horizon - 2.0 * t;
        12.0 * u * u * du * du - 8.0 * u.powi(3) + self.blend(t).2
    }

    pub fn tau(&self, t: f64) -> f64 {
        1.0 / self.m(t)
    }

    pub fn dtau(&self, t: f64) -> f64 {
        let m = self.m(t);
        -self.dm(t) / (m * m)
    }

    pub fn zeta(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.tau(t) * self.eta(x)?)
    }

    pub fn a_weight(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.tau(t) * (self.eta(x)? - self.top()))
    }

    pub fn a_star(&self, t: f64) -> f64 {
        -self.c1 * self.tau(t)
    }

    pub fn a_hat(&self, t: f64) -> f64 {
        -self.c2 * self.tau(t)
    }

    pub fn zeta_star(&self, t: f64) -> f64 {
        self.tau(t) * self.eta_max()
    }

    pub fn zeta_hat(&self, t: f64) -> f64 {
        self.tau(t) * self.eta_min()
    }

    pub fn zeta0(&self) -> f64 {
        (self.lambda * (self.psi.max - self.psi.min)).exp()
    }

    pub fn ln_zeta_star(&self, t: f64) -> f64 {
        -self.m(t).ln() + self.lambda * (self.psi.sup_abs + self.psi.max)
    }

    pub fn ln_zeta_hat(&self, t: f64) -> f64 {
        -self.m(t).ln() + self.lambda * (self.psi.sup_abs + self.psi.min)
    }

    pub fn log_rho(&self, kind: RhoKind, t: f64) -> LogWeight {
        let (e, ps, ph) = kind.exponents();
        let sa = -self.s * self.a_star(t);
        let mut algebraic = 0.0;
        if ps != 0.0 {
            algebraic += ps * self.ln_zeta_star(t);
        }
        if ph != 0.0 {
            algebraic += ph * self.ln_zeta_hat(t);
        }
        LogWeight {
            exponential: e * sa,
            algebraic,
        }
    }

    pub fn rho(&self, kind: RhoKind, t: f64) -> f64 {
        self.log_rho(kind, t).value()
    }

    /// Interior sample times of the dense invariant grid.
    fn dense_times(&self) -> impl Iterator<Item = f64> + '_ {
        (1..DENSE_T).map(move |i| self.horizon * i as f64 / DENSE_T as f64)
    }

    fn check_invariants(&self) -> Result<WeightDiagnostics> {
        let fail = |name: &'static str, detail: String| Err(Error::WeightInvariant { name, detail });
        let t_half = 0.5 * self.horizon;
        let xs: Vec<f64> = (1..DENSE_X).map(|i| i as f64 / DENSE_X as f64).collect();
        let etas: Vec<f64> = xs.iter().map(|&x| self.eta(x)).collect::<Result<_>>()?;
        let top = self.top();
        if etas.iter().any(|&e| e >= top) {
            return fail("phi_negative", "η reaches e^{3λ|Ψ|∞}".into());
        }

        if !(self.m(0.0) > 0.0) {
            return fail("m_positive_at_zero", format!("m(0) = {}", self.m(0.0)));
        }
        for t in self.dense_times() {
            let base = (t * (self.horizon - t)).powi(4);
            let m = self.m(t);
            if m < base || (t >= t_half && m != base) {
                return fail("m_profile", format!("m({t}) = {m}, t^4 (T-t)^4 = {base}"));
            }
        }
        // one-sided limits of m, m', m'' at T/2
        let left = |f: &dyn Fn(f64) -> f64| f(t_half * (1.0 - 1e-12));
        let m_jump = [
            (left(&|t| self.m(t)) - self.m(t_half)).abs() / self.m(t_half),
            (left(&|t| self.dm(t)) - self.dm(t_half)).abs(),
            (left(&|t| self.d2m(t)) - self.d2m(t_half)).abs() / self.d2m(t_half).abs().max(1e-300),
        ];
        if m_jump[0] > 1e-10 || m_jump[1] > 1e-10 * self.m(t_half) / t_half || m_jump[2] > 1e-10 {
            return fail("m_smoothness", format!("jumps at T/2: {m_jump:?}"));
        }

        if !(3.0 * self.c1 > 2.0 * self.c2 && self.c2 > 0.0) {
            let psi = self.psi.as_ref();
            return Err(Error::LambdaTooSmall {
                lambda: self.lambda,
                suggested: select_lambda(psi)?,
            });
        }

        let mut ratio_lo = f64::INFINITY;
        let mut ratio_hi = f64::NEG_INFINITY;
        let mut hat_identity: f64 = 0.0;
        let mut ordering = [0.0f64; 5];
        let mut zeta_t_const: f64 = 0.0;
        let mut tau_t_const: f64 = 0.0;
        let dt_exclude = self.horizon / DENSE_T as f64;
        for t in self.dense_times() {
            let r = (self.zeta_star(t) / self.zeta_hat(t)) / self.zeta0();
            ratio_lo = ratio_lo.min(r);
            ratio_hi = ratio_hi.max(r);

            let l0 = self.log_rho(RhoKind::Zero, t);
            let l1 = self.log_rho(RhoKind::One, t);
            let lh = self.log_rho(RhoKind::Hat, t);
            let lhs = LogWeight {
                exponential: 2.0 * lh.exponential,
                algebraic: 2.0 * lh.algebraic,
            };
            let de = lhs.exponential - (l0.exponential + l1.exponential);
            let da = lhs.algebraic - (l0.algebraic + l1.algebraic);
            hat_identity = hat_identity.max((de + da).exp_m1().abs());

            let ln = |k| self.log_rho(k, t).ln();
            let pairs = [
                ln(RhoKind::Bar) - ln(RhoKind::One),
                ln(RhoKind::One) - ln(RhoKind::Hat),
                ln(RhoKind::Hat) - ln(RhoKind::Zero),
                ln(RhoKind::Zero) - ln(RhoKind::Two),
                ln(RhoKind::Two) - 2.0 * ln(RhoKind::One),
            ];
            for (o, p) in ordering.iter_mut().zip(pairs) {
                *o = o.max(p.exp());
            }

            if t < self.horizon - dt_exclude {
                let tau = self.tau(t);
                // |ζ_t| / ζ² = |τ_t| / (τ² η), worst at η_min
                let zt = self.dtau(t).abs() / (tau * tau * self.eta_min());
                zeta_t_const = zeta_t_const.max(zt);
                tau_t_const = tau_t_const.max(self.dtau(t) / tau.powf(1.25));
            }
        }
        let spread = ratio_hi - ratio_lo;
        if spread > 1e-12 {
            return fail("zeta_ratio_constant", format!("ζ*/ζ̂ spread {spread:e}"));
        }
        if hat_identity > 1e-12 {
            return fail("rho_hat_identity", format!("|ρ̂²/(ρ₀ρ₁) - 1| = {hat_identity:e}"));
        }
        if ordering.iter().any(|c| !c.is_finite()) {
            return fail("rho_ordering", format!("unbounded ratio: {ordering:?}"));
        }
        Ok(WeightDiagnostics {
            ordering,
            zeta_ratio_spread: spread,
            rho_hat_identity: hat_identity,
            zeta_t_const,
            tau_t_const,
            m_jump,
            lambda_margin: 3.0 * self.c1 / (2.0 * self.c2),
        })
    }

    /// Checks `φ < 0` and `A < 0` on a dense `(x, t)` grid.
    pub fn check_sign_invariants(&self, nx: usize, nt: usize) -> Result<bool> {
        for i in 1..nx {
            let x = i as f64 / nx as f64;
            for k in 1..nt {
                let t = self.horizon * k as f64 / nt as f64;
                if !(self.phi_weight(x, t)? < 0.0 && self.a_weight(x, t)? < 0.0) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// CSV rows `t, A*, Â, ζ*, ζ̂, ρ₀, ρ₁, ρ₂, ρ̂, ρ̄` at `count + 1` times.
    pub fn table_csv(&self, count: usize) -> String {
        let mut out = String::from("t,A_star,A_hat,zeta_star,zeta_hat,rho0,rho1,rho2,rho_hat,rho_bar\n");
        for i in 0..=count {
            let t = self.horizon * i as f64 / count as f64;
            let row = [
                t,
                self.a_star(t),
                self.a_hat(t),
                self.zeta_star(t),
                self.zeta_hat(t),
                self.rho(RhoKind::Zero, t),
                self.rho(RhoKind::One, t),
                self.rho(RhoKind::Two, t),
                self.rho(RhoKind::Hat, t),
                self.rho(RhoKind::Bar, t),
            ];
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}
