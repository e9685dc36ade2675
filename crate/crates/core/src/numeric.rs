//! One-dimensional root finding and maximisation.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Bracketed root of `f` on `[lo, hi]`: secant steps that stay inside the
/// bracket, bisection otherwise. Stops when the bracket is narrower than
/// `xtol` or `f` vanishes exactly.
pub fn bisect_secant<F>(what: &'static str, f: F, lo: f64, hi: f64, xtol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::NoRoot { what, lo, hi });
    }
    let mut use_secant = true;
    for _ in 0..400 {
        if (b - a).abs() <= xtol {
            break;
        }
        let mid = 0.5 * (a + b);
        let mut x = mid;
        if use_secant {
            let s = b - fb * (b - a) / (fb - fa);
            // keep the secant point strictly inside and away from the ends
            let margin = 0.05 * (b - a).abs();
            if s.is_finite() && s > a.min(b) + margin && s < a.max(b) - margin {
                x = s;
            }
        }
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        let old_width = (b - a).abs();
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // fall back to pure bisection for a step when secant stalls
        use_secant = (b - a).abs() < 0.5 * old_width || !use_secant;
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// Widens `[lo, hi]` geometrically around its centre until `f` changes sign.
/// `floor` bounds the lower end from below.
pub fn widen_bracket<F>(
    what: &'static str,
    f: &F,
    mut lo: f64,
    mut hi: f64,
    floor: f64,
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let sign_change = |a: f64, b: f64| {
        let (fa, fb) = (f(a), f(b));
        fa.is_finite() && fb.is_finite() && (fa == 0.0 || fb == 0.0 || fa.signum() != fb.signum())
    };
    for _ in 0..60 {
        if sign_change(lo, hi) {
            return Ok((lo, hi));
        }
        let width = hi - lo;
        lo = (lo - 0.5 * width).max(floor);
        hi += 0.5 * width;
    }
    Err(Error::NoRoot { what, lo, hi })
}

/// Golden-section maximisation on `[lo, hi]` until the bracket is within
/// `rtol` of its midpoint. Ties shrink the bracket from the right.
pub fn golden_max<F>(f: &F, lo: f64, hi: f64, rtol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..300 {
        let scale = (0.5 * (a + b)).abs().max(f64::MIN_POSITIVE);
        if (b - a) <= rtol * scale {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Coarse scan of `points` equally spaced samples over `[lo, hi]` (both ends
/// included) followed by golden-section refinement of the best neighbourhood.
pub fn scan_max<F>(f: &F, lo: f64, hi: f64, points: usize, rtol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let points = points.max(3);
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = (lo, f(lo));
    let mut best_i = 0;
    for i in 1..points {
        let x = if i == points - 1 {
            hi
        } else {
            lo + step * i as f64
        };
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    let refined = golden_max(f, a, b, rtol);
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}
