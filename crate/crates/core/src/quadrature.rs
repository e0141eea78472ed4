//! Small numeric helpers: adaptive quadrature and bracketed root finding.

use crate::error::{Error, Result};

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fa = f(lo)?;
    let fm = f(0.5 * (lo + hi))?;
    let fb = f(hi)?;
    let whole = simpson(lo, hi, fa, fm, fb);
    let v = adaptive(f, lo, hi, fa, fm, fb, whole, tol, 48)?;
    Ok(sign * v)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 {
        return Err(Error::Sampling("quadrature did not converge".into()));
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

/// Root of a continuous monotone function on a bracketing interval, by
/// bisection refined with secant steps.
pub fn bracketed_root(f: &dyn Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Sampling(format!(
            "no sign change on [{lo}, {hi}] ({flo} .. {fhi})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid)?;
        if fmid == 0.0 || (hi - lo).abs() < 1e-14 * mid.abs().max(1.0) {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_smooth_functions() {
        let v = integrate(&|x| Ok(x * x), 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-10);
        let v = integrate(&|x| Ok((-x).exp()), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn finds_roots() {
        let r = bracketed_root(&|x| Ok(x * x - 2.0), 0.0, 2.0).unwrap();
        assert!((r - 2.0f64.sqrt()).abs() < 1e-12);
    }
}
