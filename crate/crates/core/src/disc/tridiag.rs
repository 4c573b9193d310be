use crate::error::{Error, Result};

/// Square tridiagonal matrix. `lower[0]` and `upper[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n);
        t.diag.iter_mut().for_each(|d| *d = 1.0);
        t
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        let mut t = Self::zeros(n);
        t.diag.copy_from_slice(&self.diag);
        for i in 1..n {
            t.lower[i] = self.upper[i - 1];
            t.upper[i - 1] = self.lower[i];
        }
        t
    }

    /// `self + s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &Tridiagonal) {
        for i in 0..self.len() {
            self.lower[i] += s * other.lower[i];
            self.diag[i] += s * other.diag[i];
            self.upper[i] += s * other.upper[i];
        }
    }

    pub fn scale(&mut self, s: f64) {
        for i in 0..self.len() {
            self.lower[i] *= s;
            self.diag[i] *= s;
            self.upper[i] *= s;
        }
    }

    pub fn add_diagonal(&mut self, d: &[f64], s: f64) {
        for (a, b) in self.diag.iter_mut().zip(d) {
            *a += s * b;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * x[i + 1];
            }
            y[i] = v;
        }
    }

    /// `selfᵀ x` without forming the transpose.
    pub fn matvec_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.upper[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.lower[i + 1] * x[i + 1];
            }
            y[i] = v;
        }
    }

    /// Thomas algorithm without pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        check_pivot(0, pivot)?;
        c[0] = if n > 1 { self.upper[0] / pivot } else { 0.0 };
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * c[i - 1];
            check_pivot(i, pivot)?;
            if i + 1 < n {
                c[i] = self.upper[i] / pivot;
            }
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }

    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.transpose().solve(rhs)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i > 0 {
                m[i][i - 1] = self.lower[i];
            }
            if i + 1 < n {
                m[i][i + 1] = self.upper[i];
            }
        }
        m
    }
}

fn check_pivot(row: usize, pivot: f64) -> Result<()> {
    if pivot == 0.0 || !pivot.is_finite() {
        Err(Error::LinearSolveFailure { row, pivot })
    } else {
        Ok(())
    }
}

/// Symmetric positive (semi)definite pentadiagonal matrix, stored by
/// its diagonal and first two super-diagonals, with an in-place
/// `L D Lᵀ` factorization. Rows whose diagonal is exactly zero are treated
/// as decoupled and map to zero.
#[derive(Debug, Clone)]
pub struct SymPenta {
    d0: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    null_rows: Vec<bool>,
}

impl SymPenta {
    pub fn new(mut d0: Vec<f64>, mut d1: Vec<f64>, mut d2: Vec<f64>) -> Result<Self> {
        let n = d0.len();
        let null_rows: Vec<bool> = d0.iter().map(|&v| v == 0.0).collect();
        for i in 0..n {
            if null_rows[i] {
                d0[i] = 1.0;
                if i + 1 < n {
                    d1[i] = 0.0;
                }
                if i + 2 < n {
                    d2[i] = 0.0;
                }
                if i >= 1 {
                    d1[i - 1] = 0.0;
                }
                if i >= 2 {
                    d2[i - 2] = 0.0;
                }
            }
        }
        // L D Lᵀ with unit lower factor of bandwidth 2:
        // d0 <- D, d1[i] <- L[i+1][i], d2[i] <- L[i+2][i]
        for i in 0..n {
            let mut di = d0[i];
            if i >= 1 {
                di -= d1[i - 1] * d1[i - 1] * d0[i - 1];
            }
            if i >= 2 {
                di -= d2[i - 2] * d2[i - 2] * d0[i - 2];
            }
            if !(di > 0.0) || !di.is_finite() {
                return Err(Error::LinearSolveFailure { row: i, pivot: di });
            }
            d0[i] = di;
            if i + 1 < n {
                let mut e = d1[i];
                if i >= 1 {
                    e -= d2[i - 1] * d1[i - 1] * d0[i - 1];
                }
                d1[i] = e / di;
            }
            if i + 2 < n {
                d2[i] /= di;
            }
        }
        Ok(Self {
            d0,
            d1,
            d2,
            null_rows,
        })
    }

    pub fn solve_into(&self, rhs: &[f64], out: &mut [f64]) {
        let n = self.d0.len();
        out.copy_from_slice(rhs);
        self.clear_null_rows(out);
        for i in 0..n {
            if i >= 1 {
                out[i] -= self.d1[i - 1] * out[i - 1];
            }
            if i >= 2 {
                out[i] -= self.d2[i - 2] * out[i - 2];
            }
        }
        for (o, d) in out.iter_mut().zip(&self.d0) {
            *o /= d;
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                out[i] -= self.d1[i] * out[i + 1];
            }
            if i + 2 < n {
                out[i] -= self.d2[i] * out[i + 2];
            }
        }
        self.clear_null_rows(out);
    }

    fn clear_null_rows(&self, out: &mut [f64]) {
        for (o, &null) in out.iter_mut().zip(&self.null_rows) {
            if null {
                *o = 0.0;
            }
        }
    }
}
