use crate::error::{Error, Result};

/// Uniform space-time grid on the unit cylinder `(0,1) × (0,T)`.
///
/// `n` interior nodes `x_i = i h`, `i = 1..=n`, with `h = 1/(n+1)`; the
/// boundary nodes `x_0 = 0` and `x_{n+1} = 1` carry homogeneous Dirichlet
/// data and are not stored. `m` backward-Euler steps of size `T/m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
}

impl Grid {
    pub fn new(n: usize, m: usize, horizon: f64) -> Result<Self> {
        if n < 8 {
            return Err(Error::OutOfRange {
                name: "N",
                value: n as f64,
                range: ">= 8",
            });
        }
        if m < 8 {
            return Err(Error::OutOfRange {
                name: "M",
                value: m as f64,
                range: ">= 8",
            });
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::OutOfRange {
                name: "T",
                value: horizon,
                range: "(0, inf)",
            });
        }
        Ok(Self { n, m, horizon })
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.m as f64
    }

    /// Position of interior unknown `j` (0-based), i.e. node `j + 1`.
    pub fn x(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.h()
    }

    /// Position of node `i` including boundary nodes, `i = 0..=n+1`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    /// Cell interface `x_{i+1/2}`, `i = 0..=n`.
    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Indicator of an open interval on the interior nodes.
    pub fn indicator(&self, lo: f64, hi: f64) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                let x = self.x(j);
                if x > lo && x < hi {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    State,
    Adjoint,
    Control,
    Weight,
}

impl FieldKind {
    pub fn code(self) -> u32 {
        match self {
            FieldKind::State => 0,
            FieldKind::Adjoint => 1,
            FieldKind::Control => 2,
            FieldKind::Weight => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(FieldKind::State),
            1 => Some(FieldKind::Adjoint),
            2 => Some(FieldKind::Control),
            3 => Some(FieldKind::Weight),
            _ => None,
        }
    }
}

/// Space-time grid function stored on interior nodes, `m + 1` time slices
/// of `n` values each (row-major by time). Boundary values are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub grid: Grid,
    pub kind: FieldKind,
    data: Vec<f64>,
}

impl StateField {
    pub fn zeros(grid: Grid, kind: FieldKind) -> Self {
        Self {
            grid,
            kind,
            data: vec![0.0; (grid.m + 1) * grid.n],
        }
    }

    pub fn from_fn(grid: Grid, kind: FieldKind, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, kind);
        for n in 0..=grid.m {
            let t = grid.t(n);
            for (j, v) in out.slice_mut(n).iter_mut().enumerate() {
                *v = f(grid.x(j), t);
            }
        }
        out
    }

    pub fn from_data(grid: Grid, kind: FieldKind, data: Vec<f64>) -> Result<Self> {
        if data.len() != (grid.m + 1) * grid.n {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                (grid.m + 1) * grid.n,
                data.len()
            )));
        }
        Ok(Self { grid, kind, data })
    }

    pub fn slice(&self, n: usize) -> &[f64] {
        let w = self.grid.n;
        &self.data[n * w..(n + 1) * w]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        let w = self.grid.n;
        &mut self.data[n * w..(n + 1) * w]
    }

    pub fn set_slice(&mut self, n: usize, values: &[f64]) {
        self.slice_mut(n).copy_from_slice(values);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, kind: FieldKind, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            kind,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete `L²(Q)` norm over interior time nodes `1..m` plus the final
    /// node (rectangle rule in time).
    pub fn l2_q(&self) -> f64 {
        let (h, dt) = (self.grid.h(), self.grid.dt());
        let s: f64 = (1..=self.grid.m)
            .map(|n| self.slice(n).iter().map(|v| v * v).sum::<f64>())
            .sum();
        (s * h * dt).sqrt()
    }

    /// Minimum of `|field|` over nodes inside `window` and all time slices.
    pub fn min_abs_on(&self, window_mask: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for n in 0..=self.grid.m {
            for (v, w) in self.slice(n).iter().zip(window_mask) {
                if *w != 0.0 {
                    m = m.min(v.abs());
                }
            }
        }
        m
    }
}

/// Spatial `L²(0,1)` norm of one slice (trapezoid rule, zero boundary).
pub fn l2(h: f64, v: &[f64]) -> f64 {
    (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// Spatial `L²(0,1)` inner product of two slices.
pub fn dot(h: f64, u: &[f64], v: &[f64]) -> f64 {
    h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}
