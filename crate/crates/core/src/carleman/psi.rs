use crate::error::{Error, Result};
use crate::model::{CoefficientKind, ControlGeometry, DegenerateCoefficient};
use crate::quad::adaptive_simpson;

const QUAD_TOL: f64 = 1e-13;
const SCAN: usize = 4000;

/// Spatial Carleman weight: `∫₀ˣ s/a(s) ds` on `[0, α′)`,
/// `-∫_{β′}ˣ s/a(s) ds` on `[β′, 1]`, and a quintic bridge in between
/// matching value, slope and curvature at both ends.
#[derive(Debug, Clone)]
pub struct Psi {
    coeff: DegenerateCoefficient,
    alpha_p: f64,
    beta_p: f64,
    /// Monomial coefficients of the bridge in `u = (x - α′)/(β′ - α′)`.
    bridge: [f64; 6],
    pub sup_abs: f64,
    pub max: f64,
    pub min: f64,
    pub argmax: f64,
    /// `Ψ'` changes sign exactly once on the bridge.
    pub bridge_unimodal: bool,
}

/// `∫ s/a(s)` branch values, plus slope `x/a` and curvature `(a - x a')/a²`.
fn branch(coeff: &DegenerateCoefficient, lo: f64, x: f64) -> Result<(f64, f64, f64)> {
    let a = coeff.a(x);
    let da = coeff.da(x);
    let d1 = x / a;
    let d2 = (a - x * da) / (a * a);
    let v = match coeff.kind {
        CoefficientKind::PowerLaw { alpha } => {
            let p = 2.0 - alpha;
            (x.powf(p) - lo.powf(p)) / p
        }
        CoefficientKind::Custom { .. } => {
            let f = |s: f64| if s == 0.0 { 0.0 } else { s / coeff.a(s) };
            adaptive_simpson(&f, lo, x, QUAD_TOL).ok_or_else(|| {
                Error::NonIntegrableDegeneracy(format!("quadrature of s/a(s) on [{lo}, {x}] failed"))
            })?
        }
    };
    Ok((v, d1, d2))
}

const HERMITE5: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
];

pub fn build_psi(coeff: &DegenerateCoefficient, geom: &ControlGeometry) -> Result<Psi> {
    if coeff.k >= 2.0 {
        return Err(Error::NonIntegrableDegeneracy(format!(
            "s/a(s) ~ s^(1-K) is not integrable at 0 for K = {}",
            coeff.k
        )));
    }
    let (ap, bp) = (geom.alpha_prime(), geom.beta_prime());
    if !(0.0 < ap && ap < bp && bp < 1.0) {
        return Err(Error::InvalidInput(format!("need 0 < α′ < β′ < 1, got ({ap}, {bp})")));
    }
    let l = bp - ap;
    let (y0, d0, s0) = branch(coeff, 0.0, ap)?;
    let (_, d1, s1) = branch(coeff, bp, bp)?;
    let data = [y0, l * d0, l * l * s0, 0.0, -l * d1, -l * l * s1];
    let mut bridge = [0.0; 6];
    for (w, basis) in data.iter().zip(HERMITE5.iter()) {
        for k in 0..6 {
            bridge[k] += w * basis[k];
        }
    }
    let mut psi = Psi {
        coeff: coeff.clone(),
        alpha_p: ap,
        beta_p: bp,
        bridge,
        sup_abs: 0.0,
        max: 0.0,
        min: 0.0,
        argmax: 0.0,
        bridge_unimodal: false,
    };

    let mut sign_changes = 0;
    let mut prev = psi.bridge_deriv(0.0);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=SCAN {
        let u = i as f64 / SCAN as f64;
        let v = psi.bridge_value(u);
        if v > best.0 {
            best = (v, u);
        }
        let d = psi.bridge_deriv(u);
        if i > 0 && d.signum() != prev.signum() && d != 0.0 {
            sign_changes += 1;
        }
        if d != 0.0 {
            prev = d;
        }
    }
    // refine the bridge maximum with Newton on Ψ'
    let mut u = best.1;
    for _ in 0..50 {
        let (d, dd) = (psi.bridge_deriv(u), psi.bridge_second(u));
        if dd >= 0.0 {
            break;
        }
        let nu = (u - d / dd).clamp(0.0, 1.0);
        if (nu - u).abs() < 1e-16 {
            break;
        }
        u = nu;
    }
    let bridge_max = psi.bridge_value(u).max(best.0);
    // the left branch increases to Ψ(α′), the right decreases from 0
    let right_min = psi.value(1.0)?;
    let mut max = bridge_max.max(y0);
    let mut min = right_min.min(0.0);
    for i in 0..=SCAN {
        let u = i as f64 / SCAN as f64;
        let v = psi.bridge_value(u);
        max = max.max(v);
        min = min.min(v);
    }
    psi.max = max;
    psi.min = min;
    psi.argmax = ap + l * u;
    psi.sup_abs = max.abs().max(min.abs());
    psi.bridge_unimodal = sign_changes == 1;
    Ok(psi)
}

impl Psi {
    pub fn alpha_prime(&self) -> f64 {
        self.alpha_p
    }

    pub fn beta_prime(&self) -> f64 {
        self.beta_p
    }

    fn width(&self) -> f64 {
        self.beta_p - self.alpha_p
    }

    fn bridge_value(&self, u: f64) -> f64 {
        self.bridge.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    fn bridge_deriv(&self, u: f64) -> f64 {
        let c = &self.bridge;
        (c[1] + u * (2.0 * c[2] + u * (3.0 * c[3] + u * (4.0 * c[4] + u * 5.0 * c[5])))) / self.width()
    }

    fn bridge_second(&self, u: f64) -> f64 {
        let c = &self.bridge;
        (2.0 * c[2] + u * (6.0 * c[3] + u * (12.0 * c[4] + u * 20.0 * c[5]))) / (self.width() * self.width())
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        if x < self.alpha_p {
            Ok(branch(&self.coeff, 0.0, x)?.0)
        } else if x < self.beta_p {
            Ok(self.bridge_value((x - self.alpha_p) / self.width()))
        } else {
            Ok(-branch(&self.coeff, self.beta_p, x)?.0)
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        if x < self.alpha_p {
            x / self.coeff.a(x)
        } else if x < self.beta_p {
            self.bridge_deriv((x - self.alpha_p) / self.width())
        } else {
            -x / self.coeff.a(x)
        }
    }

    pub fn second(&self, x: f64) -> f64 {
        let a = self.coeff.a(x);
        let s = (a - x * self.coeff.da(x)) / (a * a);
        if x < self.alpha_p {
            s
        } else if x < self.beta_p {
            self.bridge_second((x - self.alpha_p) / self.width())
        } else {
            -s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{power_law_metadata, DomainMotion, Interval};

    fn geom(ap: f64, bp: f64) -> ControlGeometry {
        ControlGeometry::new(Interval::new(0.2, 0.8), Interval::new(0.25, 0.75), Interval::new(ap, bp))
    }

    fn half() -> DegenerateCoefficient {
        power_law_metadata(0.5, &DomainMotion::affine(1.0, 0.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn closed_form_branches() {
        let psi = build_psi(&half(), &geom(0.4, 0.75)).unwrap();
        assert!((psi.value(0.125).unwrap() - 0.0294628).abs() < 1e-7);
        assert_eq!(psi.value(0.0).unwrap(), 0.0);
        let exact = -(2.0 / 3.0) * (1.0 - 0.75f64.powf(1.5));
        assert!((psi.value(1.0).unwrap() - exact).abs() < 1e-14);
        assert!((psi.value(1.0).unwrap() + 0.23366).abs() < 1e-5);
    }

    #[test]
    fn bridge_is_c2() {
        let psi = build_psi(&half(), &geom(0.4, 0.6)).unwrap();
        for x0 in [0.4, 0.6] {
            let e = 1e-12;
            assert!((psi.value(x0 - e).unwrap() - psi.value(x0 + e).unwrap()).abs() < 1e-11);
            assert!((psi.deriv(x0 - e) - psi.deriv(x0 + e)).abs() < 1e-9);
            assert!((psi.second(x0 - e) - psi.second(x0 + e)).abs() < 1e-7);
        }
        assert!(psi.bridge_unimodal);
        assert!((psi.max - 0.1834).abs() < 5e-4, "{}", psi.max);
        assert!((psi.min + 0.3568).abs() < 5e-4, "{}", psi.min);
    }
}
