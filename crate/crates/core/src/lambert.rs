//! Principal branch of the Lambert W function on `[0, inf)`.

use crate::error::{Error, Result};

const MAX_ITER: usize = 64;

/// Solves `w * exp(w) = x` for `w >= 0`.
///
/// Starts from `ln(1 + x)` for small arguments and from the two-term
/// asymptotic `ln x - ln ln x` above `e`, then applies Halley steps. A step that
/// would leave the branch (`w < 0`) is halved. Converges to relative error
/// below 1e-12 in a handful of iterations across the whole range.
pub fn lambert_w(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::range(format!(
            "lambert_w is only supported for x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }

    let mut w = if x <= std::f64::consts::E {
        x.ln_1p()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let mut step = f / denom;
        while w - step < 0.0 {
            step *= 0.5;
        }
        w -= step;
        if step.abs() <= 1e-15 * w.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection on `w e^w - x`, independent of the Halley path.
    fn bisect(x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, if x > std::f64::consts::E { x.ln() } else { 1.0 });
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn known_points() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-14);
        assert!(lambert_w(-1e-3).is_err());
        assert!(lambert_w(f64::NAN).is_err());
    }

    #[test]
    fn matches_bisection() {
        // Bisection gives W(9.875) = 1.737537455...
        let w = lambert_w(9.875).unwrap();
        assert!((w - 1.737_537_455_462_187).abs() < 1e-12);
        assert!((w * w.exp() - 9.875).abs() <= 1e-10);
        for &x in &[1e-12, 1e-6, 0.1, 0.5, 1.0, 2.0, 5.0, 9.875, 30.0, 1e3, 1e6, 1e12, 1e100] {
            let w = lambert_w(x).unwrap();
            let oracle = bisect(x);
            assert!(
                (w - oracle).abs() <= 1e-12 * oracle.max(1e-300) + 1e-300,
                "x={x} w={w} oracle={oracle}"
            );
            let rel = (w * w.exp() - x).abs() / x;
            assert!(rel <= 1e-12, "x={x} residual {rel}");
        }
    }
}
