//! Adaptive Simpson quadrature.

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`. Returns `None`
/// if a non-finite value is met or the recursion depth is exhausted without
/// meeting the tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = recurse(f, a, b, fa, fm, fb, whole, tol, 60)?;
    v.is_finite().then_some(v)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    if !(fa.is_finite() && fm.is_finite() && fb.is_finite()) {
        return None;
    }
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_root_singularity() {
        let v = adaptive_simpson(&|s: f64| s.sqrt(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
        let w = adaptive_simpson(&|s: f64| s.powf(-0.5), 0.0, 1.0, 1e-10);
        assert!(w.is_none());
    }
}
