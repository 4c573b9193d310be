//! Shape-preserving piecewise cubic Hermite interpolation (Fritsch–Carlson).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl Pchip {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::GridMismatch(format!(
                "interpolation needs >= 2 matching nodes, got {} and {}",
                n,
                ys.len()
            )));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch("interpolation nodes must increase".into()));
        }
        let hs: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / hs[k]).collect();
        let mut ds = vec![0.0; n];
        if n == 2 {
            ds[0] = del[0];
            ds[1] = del[0];
        } else {
            for k in 1..n - 1 {
                if del[k - 1] * del[k] > 0.0 {
                    let w1 = 2.0 * hs[k] + hs[k - 1];
                    let w2 = hs[k] + 2.0 * hs[k - 1];
                    ds[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
                }
            }
            ds[0] = end_slope(hs[0], hs[1], del[0], del[1]);
            ds[n - 1] = end_slope(hs[n - 2], hs[n - 3], del[n - 2], del[n - 3]);
        }
        Ok(Self { xs, ys, ds })
    }

    /// Evaluates at `x`; outside the node range the end cubic is clamped to
    /// the end value.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[k + 1] - self.xs[k];
        let s = (x - self.xs[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.ys[k] + h10 * h * self.ds[k] + h01 * self.ys[k + 1] + h11 * h * self.ds[k + 1]
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes_and_lines() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let p = Pchip::new(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(p.eval(*x), *y);
        }
        assert!((p.eval(0.537) - (3.0 * 0.537 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn monotone_data_stays_monotone() {
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = vec![0.0, 0.0, 0.0, 1.0, 1.0];
        let p = Pchip::new(xs, ys).unwrap();
        let mut prev = p.eval(0.0);
        for i in 1..=400 {
            let v = p.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-15 && (-1e-15..=1.0 + 1e-15).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(Pchip::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Pchip::new(vec![0.0], vec![1.0]).is_err());
    }
}
