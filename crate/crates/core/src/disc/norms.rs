use crate::disc::Grid;
use crate::model::DegenerateCoefficient;

/// `‖√a y_x‖²` by midpoint quadrature of interface differences.
pub fn seminorm_h1a_sq(y: &[f64], coeff: &DegenerateCoefficient, grid: &Grid) -> f64 {
    let h = grid.h();
    let n = grid.n;
    let val = |i: usize| if i == 0 || i > n { 0.0 } else { y[i - 1] };
    (0..=n)
        .map(|i| {
            let d = (val(i + 1) - val(i)) / h;
            coeff.a(grid.midpoint(i)) * d * d
        })
        .sum::<f64>()
        * h
}

pub fn norm_h1a_sq(y: &[f64], coeff: &DegenerateCoefficient, grid: &Grid) -> f64 {
    grid.h() * y.iter().map(|v| v * v).sum::<f64>() + seminorm_h1a_sq(y, coeff, grid)
}

/// Discrete `H¹_a` norm `(‖y‖² + ‖√a y_x‖²)^{1/2}`.
pub fn norm_h1a(y: &[f64], coeff: &DegenerateCoefficient, grid: &Grid) -> f64 {
    norm_h1a_sq(y, coeff, grid).sqrt()
}
