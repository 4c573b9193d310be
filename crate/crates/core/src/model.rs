//! Problem data for the moving-domain degenerate equation
//!
//! `u_t - (a(x̄) u_x̄)_x̄ + F(x̄, t, u) = h 1_ω u` on `0 < x̄ < ℓ(t)`,
//! together with dense-sampling checks of the standing hypotheses on
//! `a`, `F` and `ℓ`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type ReactionFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Default number of sample points per axis used by [`validate_problem`].
pub const DEFAULT_SAMPLES: usize = 1024;

const IDENTITY_TOL: f64 = 1e-12;

#[derive(Clone)]
pub enum CoefficientKind {
    PowerLaw { alpha: f64 },
    /// User-supplied `a` and `a'`; the derivative is never approximated.
    Custom { a: ScalarFn, da: ScalarFn },
}

impl fmt::Debug for CoefficientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientKind::PowerLaw { alpha } => write!(f, "PowerLaw {{ alpha: {alpha} }}"),
            CoefficientKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Diffusion law `a` with its degeneracy exponent bound `K` and the scaling
/// pair `(f, g)` for which `a(f(t) y) = g(t) a(y)`.
#[derive(Clone)]
pub struct DegenerateCoefficient {
    pub kind: CoefficientKind,
    pub k: f64,
    pub f_scale: ScalarFn,
    pub g_scale: ScalarFn,
    allow_nondegenerate: bool,
}

impl fmt::Debug for DegenerateCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DegenerateCoefficient")
            .field("kind", &self.kind)
            .field("k", &self.k)
            .field("allow_nondegenerate", &self.allow_nondegenerate)
            .finish()
    }
}

impl DegenerateCoefficient {
    pub fn custom(a: ScalarFn, da: ScalarFn, k: f64, f_scale: ScalarFn, g_scale: ScalarFn) -> Self {
        Self {
            kind: CoefficientKind::Custom { a, da },
            k,
            f_scale,
            g_scale,
            allow_nondegenerate: false,
        }
    }

    /// Admit `a(0) != 0` (the `alpha = 0` heat-equation sanity mode).
    pub fn allow_nondegenerate(mut self, allow: bool) -> Self {
        self.allow_nondegenerate = allow;
        self
    }

    pub fn nondegenerate_allowed(&self) -> bool {
        self.allow_nondegenerate
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            CoefficientKind::PowerLaw { alpha } => Some(alpha),
            CoefficientKind::Custom { .. } => None,
        }
    }

    /// True for the `alpha = 0` power law, where `a ≡ 1`.
    pub fn is_nondegenerate_mode(&self) -> bool {
        matches!(self.kind, CoefficientKind::PowerLaw { alpha } if alpha == 0.0)
    }

    pub fn a(&self, x: f64) -> f64 {
        match &self.kind {
            CoefficientKind::PowerLaw { alpha } => {
                if *alpha == 0.0 {
                    1.0
                } else {
                    x.powf(*alpha)
                }
            }
            CoefficientKind::Custom { a, .. } => a(x),
        }
    }

    /// `a'(x)`, meaningful for `x > 0`.
    pub fn da(&self, x: f64) -> f64 {
        match &self.kind {
            CoefficientKind::PowerLaw { alpha } => {
                if *alpha == 0.0 {
                    0.0
                } else {
                    alpha * x.powf(alpha - 1.0)
                }
            }
            CoefficientKind::Custom { da, .. } => da(x),
        }
    }
}

/// `a(x̄) = x̄^alpha` with `K = alpha`, `f = ℓ`, `g = ℓ^alpha`.
pub fn power_law_metadata(alpha: f64, motion: &DomainMotion) -> Result<DegenerateCoefficient> {
    if !(0.0..1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(Error::OutOfRange {
            name: "alpha",
            value: alpha,
            range: "[0, 1)",
        });
    }
    let ell_f = motion.ell.clone();
    let ell_g = motion.ell.clone();
    Ok(DegenerateCoefficient {
        kind: CoefficientKind::PowerLaw { alpha },
        k: alpha,
        f_scale: Arc::new(move |t| ell_f(t)),
        g_scale: Arc::new(move |t| ell_g(t).powf(alpha)),
        allow_nondegenerate: false,
    })
}

/// Power law without the `[0, 1)` guard. Used to exercise validation of
/// strongly degenerate exponents, which the solvers never accept.
pub fn power_law_unchecked(alpha: f64, motion: &DomainMotion) -> DegenerateCoefficient {
    let ell_f = motion.ell.clone();
    let ell_g = motion.ell.clone();
    DegenerateCoefficient {
        kind: CoefficientKind::PowerLaw { alpha },
        k: alpha,
        f_scale: Arc::new(move |t| ell_f(t)),
        g_scale: Arc::new(move |t| ell_g(t).powf(alpha)),
        allow_nondegenerate: false,
    }
}

/// Right endpoint `ℓ(t)` of the physical domain and its derivative.
#[derive(Clone)]
pub struct DomainMotion {
    pub ell: ScalarFn,
    pub ell_prime: ScalarFn,
    pub horizon: f64,
    /// Declared bound on `ℓ'/ℓ`; `None` only requires finiteness.
    pub c_ell: Option<f64>,
    /// Declared bound on `b'/b`; `None` only requires finiteness.
    pub c_b: Option<f64>,
}

impl fmt::Debug for DomainMotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainMotion")
            .field("horizon", &self.horizon)
            .field("ell(0)", &(self.ell)(0.0))
            .field("c_ell", &self.c_ell)
            .field("c_b", &self.c_b)
            .finish()
    }
}

impl DomainMotion {
    pub fn new(ell: ScalarFn, ell_prime: ScalarFn, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::OutOfRange {
                name: "T",
                value: horizon,
                range: "(0, inf)",
            });
        }
        Ok(Self {
            ell,
            ell_prime,
            horizon,
            c_ell: None,
            c_b: None,
        })
    }

    /// `ℓ(t) = ell0 + rate * t`.
    pub fn affine(ell0: f64, rate: f64, horizon: f64) -> Result<Self> {
        Self::new(
            Arc::new(move |t| ell0 + rate * t),
            Arc::new(move |_| rate),
            horizon,
        )
    }

    /// `ℓ(t) = ell0 * exp(rate * t)`.
    pub fn exponential(ell0: f64, rate: f64, horizon: f64) -> Result<Self> {
        Self::new(
            Arc::new(move |t| ell0 * (rate * t).exp()),
            Arc::new(move |t| rate * ell0 * (rate * t).exp()),
            horizon,
        )
    }

    pub fn with_bounds(mut self, c_ell: Option<f64>, c_b: Option<f64>) -> Self {
        self.c_ell = c_ell;
        self.c_b = c_b;
        self
    }

    pub fn ell(&self, t: f64) -> f64 {
        (self.ell)(t)
    }

    pub fn ell_prime(&self, t: f64) -> f64 {
        (self.ell_prime)(t)
    }

    /// `ℓ'(t) / ℓ(t)`.
    pub fn rate(&self, t: f64) -> f64 {
        self.ell_prime(t) / self.ell(t)
    }

    /// `b(t) = g(t) / ℓ(t)^2`.
    pub fn b(&self, coeff: &DegenerateCoefficient, t: f64) -> f64 {
        let l = self.ell(t);
        (coeff.g_scale)(t) / (l * l)
    }
}

/// Nonlinearity `F(x̄, t, r)` with its `r`-derivative.
#[derive(Clone)]
pub struct Nonlinearity {
    pub name: String,
    pub f: ReactionFn,
    pub d3f: ReactionFn,
    /// Constant of the quadratic Taylor remainder bound.
    pub c_quad: f64,
    /// Declared bound on `|D₃F|`.
    pub d3f_bound: f64,
    /// Half-width of the `r` range sampled by validation.
    pub sample_range: f64,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("c_quad", &self.c_quad)
            .field("d3f_bound", &self.d3f_bound)
            .finish()
    }
}

impl Nonlinearity {
    /// `F = c r`.
    pub fn linear(c: f64) -> Self {
        Self {
            name: "linear".into(),
            f: Arc::new(move |_, _, r| c * r),
            d3f: Arc::new(move |_, _, _| c),
            c_quad: 0.0,
            d3f_bound: c.abs(),
            sample_range: 4.0,
        }
    }

    pub fn zero() -> Self {
        Self::linear(0.0)
    }

    /// `F = sin r`.
    pub fn sine() -> Self {
        Self {
            name: "sine".into(),
            f: Arc::new(|_, _, r| r.sin()),
            d3f: Arc::new(|_, _, r| r.cos()),
            c_quad: 0.5,
            d3f_bound: 1.0,
            sample_range: 4.0,
        }
    }

    /// `F = r^3 / (1 + r^2)`.
    pub fn saturating_cubic() -> Self {
        Self {
            name: "saturating_cubic".into(),
            f: Arc::new(|_, _, r| r * r * r / (1.0 + r * r)),
            d3f: Arc::new(|_, _, r| {
                let r2 = r * r;
                (3.0 * r2 + r2 * r2) / ((1.0 + r2) * (1.0 + r2))
            }),
            // sup |F''| / 2, attained at r = ±(√2 - 1)
            c_quad: 0.7286,
            d3f_bound: 1.125,
            sample_range: 4.0,
        }
    }

    pub fn by_name(name: &str, coefficient: f64) -> Option<Self> {
        match name {
            "linear" => Some(Self::linear(coefficient)),
            "sine" => Some(Self::sine()),
            "saturating_cubic" => Some(Self::saturating_cubic()),
            _ => None,
        }
    }

    pub fn eval(&self, xbar: f64, t: f64, r: f64) -> f64 {
        (self.f)(xbar, t, r)
    }

    pub fn deriv(&self, xbar: f64, t: f64, r: f64) -> f64 {
        (self.d3f)(xbar, t, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// Open-interval membership.
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    /// `[other.lo, other.hi]` lies inside this open interval.
    pub fn contains_closure_of(&self, other: &Interval) -> bool {
        other.lo > self.lo && other.hi < self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo)
    }
}

/// Control region `ω`, the window `ω₁ ⊂⊂ ω` where the linearized control
/// acts, and `ω′ = (α′, β′) ⊂⊂ ω` used by the Carleman weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGeometry {
    pub omega: Interval,
    pub omega1: Interval,
    pub omega_prime: Interval,
}

impl ControlGeometry {
    pub fn new(omega: Interval, omega1: Interval, omega_prime: Interval) -> Self {
        Self {
            omega,
            omega1,
            omega_prime,
        }
    }

    pub fn alpha_prime(&self) -> f64 {
        self.omega_prime.lo
    }

    pub fn beta_prime(&self) -> f64 {
        self.omega_prime.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity the check compares against its bound.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub entries: Vec<CheckEntry>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{:<28} {:<4} margin={:<14.6e} {}\n",
                e.name,
                if e.passed { "PASS" } else { "FAIL" },
                e.margin,
                e.detail
            ));
        }
        out.push_str(&format!(
            "overall: {}\n",
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

fn finite(what: &str, at: impl FnOnce() -> String, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteSample {
            what: what.to_string(),
            at: at(),
        })
    }
}

/// Dense-sampling check of every hypothesis on the problem data.
///
/// `samples` points are used per axis; spatial checks run both on `(0, 1]`
/// and on `(0, max ℓ]`.
pub fn validate_problem(
    coeff: &DegenerateCoefficient,
    motion: &DomainMotion,
    nl: &Nonlinearity,
    geom: &ControlGeometry,
    samples: usize,
) -> Result<ValidationReport> {
    if samples < 16 {
        return Err(Error::OutOfRange {
            name: "samples",
            value: samples as f64,
            range: ">= 16",
        });
    }
    let horizon = motion.horizon;
    let times: Vec<f64> = (0..samples)
        .map(|j| horizon * j as f64 / (samples - 1) as f64)
        .collect();

    let mut ell_min = f64::INFINITY;
    let mut ell_max: f64 = 0.0;
    let mut rate_max = f64::NEG_INFINITY;
    for &t in &times {
        let l = finite("ell", || format!("t={t}"), motion.ell(t))?;
        if l <= 0.0 {
            return Err(Error::DegenerateDomain { t, value: l });
        }
        let lp = finite("ell_prime", || format!("t={t}"), motion.ell_prime(t))?;
        ell_min = ell_min.min(l);
        ell_max = ell_max.max(l);
        rate_max = rate_max.max(lp / l);
    }

    let mut entries = Vec::new();

    // H1 on (0, 1] and (0, max ℓ]
    let a0 = coeff.a(0.0);
    let waived = coeff.nondegenerate_allowed() && coeff.is_nondegenerate_mode();
    entries.push(CheckEntry {
        name: "H1.a_zero_at_origin",
        passed: a0 == 0.0 || waived,
        margin: a0,
        detail: if waived {
            "waived: non-degenerate sanity mode".into()
        } else {
            "a(0) = 0".into()
        },
    });

    let mut a_min = f64::INFINITY;
    let mut da_min = f64::INFINITY;
    let mut k_meas: f64 = 0.0;
    for &right in &[1.0, ell_max.max(1.0)] {
        for i in 1..=samples {
            let x = right * i as f64 / samples as f64;
            let a = finite("a", || format!("x={x}"), coeff.a(x))?;
            let da = finite("a'", || format!("x={x}"), coeff.da(x))?;
            a_min = a_min.min(a);
            da_min = da_min.min(da);
            if a > 0.0 {
                k_meas = k_meas.max(x * da / a);
            }
        }
    }
    entries.push(CheckEntry {
        name: "H1.a_positive",
        passed: a_min > 0.0,
        margin: a_min,
        detail: "min a on sampled (0, max(1, max ell)]".into(),
    });
    entries.push(CheckEntry {
        name: "H1.a_prime_nonnegative",
        passed: da_min >= 0.0,
        margin: da_min,
        detail: "min a' on sampled grid".into(),
    });
    entries.push(CheckEntry {
        name: "H1.K_range",
        passed: (0.0..1.0).contains(&coeff.k),
        margin: coeff.k,
        detail: format!("declared K = {} must lie in [0, 1)", coeff.k),
    });
    entries.push(CheckEntry {
        name: "H1.x_a_prime_bound",
        passed: k_meas <= coeff.k * (1.0 + 1e-12) + 1e-15,
        margin: k_meas,
        detail: format!("max x a'/a = {k_meas} vs K = {}", coeff.k),
    });

    let mut scale_res: f64 = 0.0;
    let mut f_ell_res: f64 = 0.0;
    let stride = (samples / 64).max(1);
    for &t in times.iter().step_by(stride) {
        let f = finite("f", || format!("t={t}"), (coeff.f_scale)(t))?;
        let g = finite("g", || format!("t={t}"), (coeff.g_scale)(t))?;
        f_ell_res = f_ell_res.max((f - motion.ell(t)).abs() / motion.ell(t));
        for i in 1..=samples {
            let y = i as f64 / samples as f64;
            let ay = coeff.a(y);
            if ay > 0.0 {
                scale_res = scale_res.max((coeff.a(f * y) - g * ay).abs() / ay);
            }
        }
    }
    entries.push(CheckEntry {
        name: "H1.scaling_identity",
        passed: scale_res <= IDENTITY_TOL,
        margin: scale_res,
        detail: "max |a(f y) - g a(y)| / a(y)".into(),
    });
    entries.push(CheckEntry {
        name: "H1.scale_matches_ell",
        passed: f_ell_res <= IDENTITY_TOL,
        margin: f_ell_res,
        detail: "max |f(t) - ell(t)| / ell(t)".into(),
    });

    // H2
    let r_max = nl.sample_range;
    let n_r = samples.min(256);
    let r_grid: Vec<f64> = (0..n_r)
        .map(|i| -r_max + 2.0 * r_max * i as f64 / (n_r - 1) as f64)
        .collect();
    let space_time: Vec<(f64, f64)> = (0..8)
        .map(|k| {
            let t = horizon * k as f64 / 7.0;
            let xbar = motion.ell(t) * (k as f64 + 0.5) / 8.0;
            (xbar, t)
        })
        .collect();
    let mut f_zero: f64 = 0.0;
    let mut quad_ratio: f64 = 0.0;
    let mut d3f_max: f64 = 0.0;
    for &(xbar, t) in &space_time {
        f_zero = f_zero.max(finite("F", || format!("x={xbar},t={t},r=0"), nl.eval(xbar, t, 0.0))?.abs());
        for &r2 in &r_grid {
            let f2 = finite("F", || format!("r={r2}"), nl.eval(xbar, t, r2))?;
            let d2 = finite("D3F", || format!("r={r2}"), nl.deriv(xbar, t, r2))?;
            d3f_max = d3f_max.max(d2.abs());
            for &r1 in &r_grid {
                if r1 == r2 {
                    continue;
                }
                let f1 = nl.eval(xbar, t, r1);
                let lin = d2 * (r1 - r2);
                let rem = f1 - f2 - lin;
                // discount cancellation noise before dividing by a small |r1 - r2|^2
                let noise = 8.0 * f64::EPSILON * (f1.abs() + f2.abs() + lin.abs());
                let excess = (rem.abs() - noise).max(0.0);
                quad_ratio = quad_ratio.max(excess / ((r1 - r2) * (r1 - r2)));
            }
        }
    }
    entries.push(CheckEntry {
        name: "H2.F_vanishes_at_zero",
        passed: f_zero <= 1e-14,
        margin: f_zero,
        detail: "max |F(x,t,0)|".into(),
    });
    entries.push(CheckEntry {
        name: "H2.quadratic_remainder",
        passed: quad_ratio <= nl.c_quad * (1.0 + 1e-9) + 1e-14,
        margin: quad_ratio,
        detail: format!("max remainder / |r1-r2|^2 vs C = {}", nl.c_quad),
    });
    entries.push(CheckEntry {
        name: "H2.D3F_bounded",
        passed: d3f_max <= nl.d3f_bound * (1.0 + 1e-12),
        margin: d3f_max,
        detail: format!("max |D3F| vs declared {}", nl.d3f_bound),
    });

    // H3
    entries.push(CheckEntry {
        name: "H3.ell_positive",
        passed: ell_min > 0.0,
        margin: ell_min,
        detail: "min ell(t)".into(),
    });
    entries.push(CheckEntry {
        name: "H3.ell_rate",
        passed: rate_max.is_finite() && motion.c_ell.is_none_or(|c| rate_max <= c + 1e-12),
        margin: rate_max,
        detail: format!("max ell'/ell vs declared {:?}", motion.c_ell),
    });
    let mut b_min = f64::INFINITY;
    let mut b_rate_max = f64::NEG_INFINITY;
    let dt = 1e-6 * horizon;
    for &t in &times {
        let b = finite("b", || format!("t={t}"), motion.b(coeff, t))?;
        b_min = b_min.min(b);
        let (t0, t1) = ((t - dt).max(0.0), (t + dt).min(horizon));
        let lb0 = motion.b(coeff, t0).ln();
        let lb1 = motion.b(coeff, t1).ln();
        b_rate_max = b_rate_max.max((lb1 - lb0) / (t1 - t0));
    }
    entries.push(CheckEntry {
        name: "H3.b_positive",
        passed: b_min > 0.0,
        margin: b_min,
        detail: "min b(t) = g/ell^2".into(),
    });
    entries.push(CheckEntry {
        name: "H3.b_rate",
        passed: b_rate_max.is_finite() && motion.c_b.is_none_or(|c| b_rate_max <= c + 1e-6),
        margin: b_rate_max,
        detail: format!("max b'/b vs declared {:?}", motion.c_b),
    });

    // geometry
    let unit = Interval::new(0.0, 1.0);
    entries.push(CheckEntry {
        name: "geometry.omega",
        passed: unit.contains_closure_of(&geom.omega) && !geom.omega.is_empty(),
        margin: geom.omega.len(),
        detail: format!("omega = ({}, {})", geom.omega.lo, geom.omega.hi),
    });
    entries.push(CheckEntry {
        name: "geometry.omega_prime",
        passed: !geom.omega_prime.is_empty() && geom.omega.contains_closure_of(&geom.omega_prime),
        margin: geom.omega_prime.len(),
        detail: format!(
            "omega' = ({}, {}) inside omega",
            geom.omega_prime.lo, geom.omega_prime.hi
        ),
    });
    entries.push(CheckEntry {
        name: "geometry.omega1",
        passed: !geom.omega1.is_empty() && geom.omega.contains_closure_of(&geom.omega1),
        margin: geom.omega1.len(),
        detail: format!("omega1 = ({}, {}) inside omega", geom.omega1.lo, geom.omega1.hi),
    });

    Ok(ValidationReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> ControlGeometry {
        ControlGeometry::new(
            Interval::new(0.3, 0.7),
            Interval::new(0.35, 0.65),
            Interval::new(0.4, 0.6),
        )
    }

    #[test]
    fn power_law_half_passes_with_exact_k_margin() {
        let motion = DomainMotion::affine(1.0, 1.0, 1.0)
            .unwrap()
            .with_bounds(Some(1.0), Some(0.0));
        let coeff = power_law_metadata(0.5, &motion).unwrap();
        let report =
            validate_problem(&coeff, &motion, &Nonlinearity::sine(), &geometry(), 64).unwrap();
        assert!(report.passed(), "{}", report.render());
        let k = report.get("H1.x_a_prime_bound").unwrap().margin;
        assert!((k - 0.5).abs() < 1e-14);
        // b'/b = -1.5/(1+t) <= -0.75
        let br = report.get("H3.b_rate").unwrap().margin;
        assert!((br + 0.75).abs() < 1e-6, "{br}");
    }

    #[test]
    fn strongly_degenerate_exponent_is_rejected() {
        let motion = DomainMotion::affine(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            power_law_metadata(1.5, &motion),
            Err(Error::OutOfRange { name: "alpha", .. })
        ));
        let coeff = power_law_unchecked(1.5, &motion);
        let report =
            validate_problem(&coeff, &motion, &Nonlinearity::sine(), &geometry(), 32).unwrap();
        assert!(!report.passed());
        assert!(!report.get("H1.K_range").unwrap().passed);
    }

    #[test]
    fn power_law_values_and_scaling() {
        let motion = DomainMotion::affine(1.0, 1.0, 4.0).unwrap();
        let coeff = power_law_metadata(0.5, &motion).unwrap();
        assert!((coeff.a(0.25) - 0.5).abs() < 1e-15);
        let lhs = coeff.a((coeff.f_scale)(3.0) * 0.1);
        let rhs = (coeff.g_scale)(3.0) * coeff.a(0.1);
        assert!((lhs - 0.632456).abs() < 1e-6);
        assert!((lhs - rhs).abs() / rhs < 1e-14);
    }

    #[test]
    fn alpha_zero_needs_override() {
        let motion = DomainMotion::affine(1.0, 0.0, 1.0).unwrap();
        let coeff = power_law_metadata(0.0, &motion).unwrap();
        assert!(coeff.is_nondegenerate_mode());
        assert_eq!(coeff.a(0.0), 1.0);
        let nl = Nonlinearity::zero();
        let r = validate_problem(&coeff, &motion, &nl, &geometry(), 16).unwrap();
        assert!(!r.get("H1.a_zero_at_origin").unwrap().passed);
        let r = validate_problem(&coeff.allow_nondegenerate(true), &motion, &nl, &geometry(), 16)
            .unwrap();
        assert!(r.passed(), "{}", r.render());
    }

    #[test]
    fn errors_on_bad_domain_and_samples() {
        let motion = DomainMotion::affine(1.0, -2.0, 1.0).unwrap();
        let coeff = power_law_unchecked(0.5, &motion);
        let nl = Nonlinearity::sine();
        assert!(matches!(
            validate_problem(&coeff, &motion, &nl, &geometry(), 32),
            Err(Error::DegenerateDomain { .. })
        ));
        assert!(matches!(
            validate_problem(&coeff, &motion, &nl, &geometry(), 8),
            Err(Error::OutOfRange { .. })
        ));
        let motion = DomainMotion::new(
            Arc::new(|t: f64| if t > 0.5 { f64::NAN } else { 1.0 }),
            Arc::new(|_| 0.0),
            1.0,
        )
        .unwrap();
        assert!(matches!(
            validate_problem(&coeff, &motion, &nl, &geometry(), 32),
            Err(Error::NonFiniteSample { .. })
        ));
    }

    #[test]
    fn builtin_nonlinearities_satisfy_their_constants() {
        let motion = DomainMotion::affine(1.0, 0.2, 1.0).unwrap();
        let coeff = power_law_metadata(0.25, &motion).unwrap();
        for nl in [
            Nonlinearity::linear(-3.0),
            Nonlinearity::sine(),
            Nonlinearity::saturating_cubic(),
        ] {
            let r = validate_problem(&coeff, &motion, &nl, &geometry(), 64).unwrap();
            assert!(r.passed(), "{}: {}", nl.name, r.render());
        }
    }

    #[test]
    fn geometry_nesting_is_checked() {
        let motion = DomainMotion::affine(1.0, 0.2, 1.0).unwrap();
        let coeff = power_law_metadata(0.5, &motion).unwrap();
        let geom = ControlGeometry::new(
            Interval::new(0.3, 0.7),
            Interval::new(0.3, 0.65),
            Interval::new(0.4, 0.6),
        );
        let r = validate_problem(&coeff, &motion, &Nonlinearity::sine(), &geom, 16).unwrap();
        assert!(!r.get("geometry.omega1").unwrap().passed);
    }

    #[test]
    fn validation_is_deterministic() {
        let motion = DomainMotion::exponential(1.0, 0.3, 2.0).unwrap();
        let coeff = power_law_metadata(0.75, &motion).unwrap();
        let nl = Nonlinearity::saturating_cubic();
        let a = validate_problem(&coeff, &motion, &nl, &geometry(), 48).unwrap();
        let b = validate_problem(&coeff, &motion, &nl, &geometry(), 48).unwrap();
        assert_eq!(a, b);
    }
}
