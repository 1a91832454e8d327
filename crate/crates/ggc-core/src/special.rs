//! Special functions needed by the closed-form catalog and the verifier.

use rug::float::Constant;
use rug::{Float, Integer, Rational};

use crate::error::{Error, Result};
use crate::mp;

/// Exponential integral `int_1^inf y^(-1) e^(-x y) dy` for `x > 0`.
///
/// Series around 0 (with the Euler constant) for small arguments, modified
/// Lentz continued fraction for large ones. The crossover is chosen so the
/// series' alternating cancellation stays well inside the working precision.
pub fn e1(x: &Float, prec: u32) -> Result<Float> {
    let prec = prec.max(x.prec());
    if !x.is_finite() || *x <= 0.0 {
        return Err(Error::Domain(format!(
            "exponential integral defined for x > 0, got {}",
            x.to_f64()
        )));
    }
    let xf = x.to_f64();
    if xf < 24.0 {
        // Cancellation loses about x*log2(e) bits; pad the working precision.
        let work = prec + 48 + (1.5 * xf) as u32;
        let x = Float::with_val(work, x);
        let mut sum = Float::with_val(work, 0.0);
        let mut term = Float::with_val(work, 1.0);
        let limit = (-((work + 8) as f64)).exp2();
        for k in 1..10_000u32 {
            // term_k = (-1)^(k+1) x^k / (k * k!)
            term *= -x.clone() / Float::with_val(work, k);
            let contrib = -term.clone() / Float::with_val(work, k);
            sum += &contrib;
            if contrib.abs().to_f64().abs() < limit * (1.0 + sum.clone().abs().to_f64()) {
                break;
            }
        }
        let euler = Float::with_val(work, Constant::Euler);
        let v = sum - euler - x.ln();
        Ok(Float::with_val(prec, &v))
    } else {
        // E1(x) = e^(-x) / (x + 1 - 1/(x + 3 - 4/(x + 5 - 9/(...))))
        // evaluated by the modified Lentz algorithm.
        let work = prec + 32;
        let x = Float::with_val(work, x);
        let tiny = Float::with_val(work, (-(2.0 * work as f64)).exp2());
        let mut b = x.clone() + 1.0f64;
        let mut c = Float::with_val(work, (2.0 * work as f64).exp2());
        let mut d = b.clone().recip();
        let mut h = d.clone();
        for i in 1..100_000u32 {
            let a = -Float::with_val(work, i) * Float::with_val(work, i);
            b += 2.0f64;
            d = b.clone() + a.clone() * d;
            if d.clone().abs() < tiny {
                d = tiny.clone();
            }
            c = b.clone() + a / c;
            if c.clone().abs() < tiny {
                c = tiny.clone();
            }
            d = d.recip();
            let delta = d.clone() * &c;
            h *= &delta;
            let dev = (delta - Float::with_val(work, 1.0)).abs().to_f64();
            if dev < (-(work as f64 + 4.0)).exp2() {
                break;
            }
        }
        let v = (-x).exp() * h;
        Ok(Float::with_val(prec, &v))
    }
}

/// `e1` at machine precision.
pub fn e1_f64(x: f64) -> Result<f64> {
    Ok(e1(&mp::f(96, x), 96)?.to_f64())
}

/// Exact Beta(k, k) = (k-1)!^2 / (2k-1)! for integer k >= 1.
pub fn beta_kk_exact(k: u32) -> Rational {
    let num = Integer::from(Integer::factorial(k - 1)) * Integer::from(Integer::factorial(k - 1));
    let den = Integer::from(Integer::factorial(2 * k - 1));
    Rational::from((num, den))
}

/// Beta function for real positive arguments.
pub fn beta_fn(a: &Float, b: &Float, prec: u32) -> Float {
    let la = Float::with_val(prec, a).ln_gamma();
    let lb = Float::with_val(prec, b).ln_gamma();
    let lab = (a.clone() + b).ln_gamma();
    (la + lb - lab).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{Domain, Quad};

    #[test]
    fn e1_at_one_matches_defining_integral() {
        // Independent oracle: quadrature of int_1^inf y^(-1) e^(-y x) dy.
        let prec = 192;
        let quad = Quad::new(prec).with_rel_tol(1e-30);
        let x = mp::f(prec, 1.0);
        let oracle = quad
            .integrate(
                |y| Ok((-(y.clone() * &x)).exp() / y.clone()),
                &Domain::to_infinity(prec, 1.0),
            )
            .unwrap();
        let v = e1(&mp::f(prec, 1.0), prec).unwrap();
        let diff = (v.clone() - oracle).abs().to_f64();
        assert!(diff < 1e-30, "diff {diff}");
        // Known value to double precision.
        assert!((v.to_f64() - 0.21938393439552027).abs() < 1e-15);
    }

    #[test]
    fn e1_continued_fraction_branch() {
        let prec = 192;
        let quad = Quad::new(prec).with_rel_tol(1e-30);
        for xv in [30.0, 50.0] {
            let x = mp::f(prec, xv);
            let oracle = quad
                .integrate(
                    |y| Ok((-(y.clone() * &x)).exp() / y.clone()),
                    &Domain::to_infinity(prec, 1.0),
                )
                .unwrap();
            let v = e1(&x, prec).unwrap();
            let rel = ((v - &oracle) / oracle).abs().to_f64();
            assert!(rel < 1e-25, "x={xv}: rel {rel}");
        }
    }

    #[test]
    fn e1_rejects_nonpositive() {
        assert!(e1(&mp::f(64, 0.0), 64).is_err());
        assert!(e1(&mp::f(64, -1.0), 64).is_err());
    }

    #[test]
    fn beta_kk_small_values() {
        assert_eq!(beta_kk_exact(1), Rational::from((1, 1)));
        assert_eq!(beta_kk_exact(2), Rational::from((1, 6)));
        assert_eq!(beta_kk_exact(3), Rational::from((1, 30)));
    }

    #[test]
    fn beta_fn_matches_exact() {
        let prec = 128;
        let v = beta_fn(&mp::f(prec, 2.0), &mp::f(prec, 2.0), prec).to_f64();
        assert!((v - 1.0 / 6.0).abs() < 1e-25);
    }
}
