//! Real Lambert W function: principal branch `W0` on `[-1/e, inf)` and lower
//! branch `W-1` on `[-1/e, 0)`.
//!
//! Both branches start from a branch-appropriate guess (series in
//! `p = sqrt(2(e x + 1))` near the branch point, logarithmic asymptotics
//! elsewhere) and polish with Halley steps on `w e^w - x`.

use std::f64::consts::E;

use crate::error::{Error, Result};

const MAX_ITER: usize = 50;
/// Inputs this far below `-1/e` are treated as the branch point.
pub const BRANCH_SLACK: f64 = 1e-15;
pub const NEG_INV_E: f64 = -1.0 / E;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertResult {
    pub value: f64,
    pub iterations: usize,
    /// `|w e^w - x|` at the returned value.
    pub residual: f64,
}

fn residual(w: f64, x: f64) -> f64 {
    (w * w.exp() - x).abs()
}

fn branch_point_offset(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::domain("LambertW of NaN"));
    }
    if x < NEG_INV_E - BRANCH_SLACK {
        return Err(Error::domain(format!("LambertW argument {x} below -1/e")));
    }
    // e x + 1, clamped at the branch point
    Ok((E * x + 1.0).max(0.0))
}

fn halley(mut w: f64, x: f64) -> (f64, usize) {
    for it in 1..=MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            return (w, it);
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            return (w, it);
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            return (w, it);
        }
        let step = f / denom;
        let next = w - step;
        if !next.is_finite() {
            return (w, it);
        }
        let settled = (next - w).abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs());
        w = next;
        if settled {
            return (w, it);
        }
    }
    (w, MAX_ITER)
}

fn finish(w: f64, iterations: usize, x: f64) -> LambertResult {
    LambertResult {
        value: w,
        iterations,
        residual: residual(w, x),
    }
}

/// Principal branch: the solution `w >= -1` of `w e^w = x`.
pub fn lambert_w0(x: f64) -> Result<LambertResult> {
    let q = branch_point_offset(x)?;
    if x == f64::INFINITY {
        return Err(Error::domain("LambertW of +inf"));
    }
    if x == 0.0 {
        return Ok(finish(0.0, 0, x));
    }
    if q == 0.0 {
        return Ok(finish(-1.0, 0, NEG_INV_E));
    }
    let guess = if x < -0.3 {
        let p = (2.0 * q).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p() * (1.0 - x.ln_1p() / (2.0 + x.ln_1p()))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    let (w, iterations) = halley(guess, x);
    Ok(finish(w.max(-1.0), iterations, x))
}

/// Lower branch: the solution `w <= -1` of `w e^w = x` for `x` in `[-1/e, 0)`.
pub fn lambert_wm1(x: f64) -> Result<LambertResult> {
    let q = branch_point_offset(x)?;
    if x >= 0.0 {
        return Err(Error::domain(format!(
            "lower LambertW branch needs x < 0, got {x}"
        )));
    }
    if q == 0.0 {
        return Ok(finish(-1.0, 0, NEG_INV_E));
    }
    let guess = if x < -0.25 {
        let p = (2.0 * q).sqrt();
        -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    let (w, iterations) = halley(guess, x);
    Ok(finish(w.min(-1.0), iterations, x))
}
