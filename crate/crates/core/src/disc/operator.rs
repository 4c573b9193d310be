use crate::disc::{Grid, Tridiagonal};
use crate::model::DegenerateCoefficient;
use crate::transform::TransformedCoefficients;

/// Spatial operator `A(t) y = -b(t) (a y_x)_x - B√a y_x + r y` at one time.
#[derive(Debug, Clone)]
pub struct DegenerateOperator {
    pub b: f64,
    /// `-(a y_x)_x` with `a` at cell interfaces; symmetric.
    pub stiffness: Tridiagonal,
    /// `-(ℓ'/ℓ) x y_x`, upwinded.
    pub drift: Tridiagonal,
    pub reaction: Vec<f64>,
}

impl DegenerateOperator {
    pub fn matrix(&self) -> Tridiagonal {
        let mut a = self.drift.clone();
        a.add_scaled(self.b, &self.stiffness);
        a.add_diagonal(&self.reaction, 1.0);
        a
    }

    /// Principal part only (no reaction).
    pub fn principal(&self) -> Tridiagonal {
        let mut a = self.drift.clone();
        a.add_scaled(self.b, &self.stiffness);
        a
    }
}

pub fn stiffness(coeff: &DegenerateCoefficient, grid: &Grid) -> Tridiagonal {
    let n = grid.n;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let am: Vec<f64> = (0..=n).map(|i| coeff.a(grid.midpoint(i))).collect();
    let mut s = Tridiagonal::zeros(n);
    for j in 0..n {
        s.diag[j] = (am[j] + am[j + 1]) * inv_h2;
        if j > 0 {
            s.lower[j] = -am[j] * inv_h2;
        }
        if j + 1 < n {
            s.upper[j] = -am[j + 1] * inv_h2;
        }
    }
    s
}

pub fn drift(coeffs: &TransformedCoefficients, grid: &Grid, t: f64) -> Tridiagonal {
    let n = grid.n;
    let h = grid.h();
    let mut d = Tridiagonal::zeros(n);
    for j in 0..n {
        let v = coeffs.drift_velocity(grid.x(j), t);
        if v >= 0.0 {
            // -v (y_{j+1} - y_j) / h
            d.diag[j] = v / h;
            if j + 1 < n {
                d.upper[j] = -v / h;
            }
        } else {
            // -v (y_j - y_{j-1}) / h
            d.diag[j] = -v / h;
            if j > 0 {
                d.lower[j] = v / h;
            }
        }
    }
    d
}

/// Operator at time level `n`. The reaction is `D₃F` along the attached
/// trajectory (or along `0` without one).
pub fn assemble_operator(coeffs: &TransformedCoefficients, grid: &Grid, n: usize) -> DegenerateOperator {
    let s = stiffness(&coeffs.coeff, grid);
    assemble_with_stiffness(coeffs, grid, n, s)
}

pub(crate) fn assemble_with_stiffness(
    coeffs: &TransformedCoefficients,
    grid: &Grid,
    n: usize,
    stiffness: Tridiagonal,
) -> DegenerateOperator {
    let t = grid.t(n);
    DegenerateOperator {
        b: coeffs.b(t),
        stiffness,
        drift: drift(coeffs, grid, t),
        reaction: coeffs.reaction_slice(grid, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{power_law_metadata, DomainMotion, Nonlinearity};
    use crate::transform::build_transform;

    fn coeffs(alpha: f64, rate: f64) -> TransformedCoefficients {
        let motion = DomainMotion::affine(1.0, rate, 1.0).unwrap();
        let coeff = power_law_metadata(alpha, &motion)
            .unwrap()
            .allow_nondegenerate(alpha == 0.0);
        build_transform(&coeff, &motion, &Nonlinearity::zero(), None).unwrap().1
    }

    #[test]
    fn laplacian_stencil_for_constant_coefficient() {
        let c = coeffs(0.0, 0.0);
        let g = Grid { n: 3, m: 8, horizon: 1.0 };
        let s = stiffness(&c.coeff, &g);
        assert_eq!(s.diag, vec![32.0; 3]);
        assert_eq!(&s.upper[..2], &[-16.0, -16.0]);
        assert_eq!(&s.lower[1..], &[-16.0, -16.0]);
    }

    #[test]
    fn degenerate_first_row() {
        let c = coeffs(0.5, 0.0);
        let g = Grid { n: 3, m: 8, horizon: 1.0 };
        let s = stiffness(&c.coeff, &g);
        assert!((s.diag[0] - 15.4548).abs() < 1e-4);
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn drift_is_upwind_m_matrix() {
        for rate in [0.4, -0.4] {
            let c = coeffs(0.5, rate);
            let g = Grid::new(16, 8, 1.0).unwrap();
            let a = assemble_operator(&c, &g, 3).matrix();
            for j in 0..g.n {
                assert!(a.diag[j] > 0.0);
                assert!(a.lower[j] <= 0.0 && a.upper[j] <= 0.0);
            }
        }
    }
}
