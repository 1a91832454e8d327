//! Small helpers around `rug::Float` extended-precision reals.
//!
//! All detectors and the numeric verifier work in configurable-precision
//! arithmetic (default 256 bits) because high-order differences lose roughly
//! `order * log2(range/step)` bits to cancellation.

use rug::{Float, Rational};

/// Default working precision in bits.
pub const DEFAULT_PREC: u32 = 256;

/// Shorthand for `Float::with_val(prec, x)`.
pub fn f(prec: u32, x: f64) -> Float {
    Float::with_val(prec, x)
}

/// Exact conversion of a rational into a float of the given precision.
pub fn fr(prec: u32, x: &Rational) -> Float {
    Float::with_val(prec, x)
}

/// Relative evaluation-error bound assumed for values produced at `prec` bits
/// by the quadrature engine and closed-form evaluators: `2^(4 - prec/2)`.
///
/// The engine targets half the mantissa so that difference kernels have
/// headroom; the slack factor 16 absorbs accumulation.
pub fn eval_rel_err(prec: u32) -> f64 {
    let e = 4.0 - 0.5 * prec as f64;
    e.exp2().max(f64::MIN_POSITIVE)
}

/// `true` if `x` is finite (not NaN/Inf).
pub fn finite(x: &Float) -> bool {
    x.is_finite()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_roundtrip_is_exact() {
        let r = Rational::from((1i64, 3i64));
        let x = fr(128, &r);
        let three = f(128, 3.0);
        let back = x * three;
        assert_eq!(back.to_f64(), 1.0);
    }

    #[test]
    fn eval_err_scales_with_precision() {
        assert!(eval_rel_err(256) < 1e-37);
        assert!(eval_rel_err(128) < 1e-18);
        assert!(eval_rel_err(64) < eval_rel_err(32));
    }
}
