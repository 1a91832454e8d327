//! Density specifications: named families and numeric compositions on
//! subintervals of `(0, inf)`, with extended-precision evaluation, CDF and
//! quantile helpers, seeded samplers and the Thorin parameterization of
//! generalized gamma convolutions.

pub(crate) mod sample;
pub mod table;
mod thorin;

pub use sample::{sample, SimBatch};
pub use thorin::{ThorinSpec, UDensity};

use std::sync::{Arc, OnceLock};

use rug::ops::Pow;
use rug::{Float, Integer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mp;
use crate::quad::{Domain, Quad};

/// Internal precision at which lazy normalization constants are computed.
const NORM_PREC: u32 = 384;

/// An evaluable probability density on a subinterval of `(0, inf)`.
///
/// Every constructible spec integrates to one; compositions that need a
/// normalization constant compute it on first use and cache it.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum DensitySpec {
    /// Gamma with shape `k > 0` and rate `theta > 0` on `(0, inf)`.
    Gamma { shape: f64, rate: f64 },
    /// Uniform on `(a, b)` with `0 <= a < b`.
    Uniform { a: f64, b: f64 },
    /// Beta on `(0, 1)`.
    Beta { alpha: f64, beta: f64 },
    /// `2(1 - x)` on `(0, 1)`; the law of `min(U1, U2)`.
    TriangularDown,
    /// Product of `count` independent uniforms on `(0, 1)`:
    /// `(-ln x)^(count-1) / (count-1)!`.
    UniformProduct { count: u32 },
    /// Gamma shifted right by `shift > 0`, supported on `(shift, inf)`.
    ShiftedGamma { shape: f64, rate: f64, shift: f64 },
    /// Law of `X^exponent` for `X ~ base`.
    PowerOf {
        base: Box<DensitySpec>,
        exponent: f64,
    },
    /// Law of `factor * X` for `X ~ base`, `factor > 0`.
    Scaled { base: Box<DensitySpec>, factor: f64 },
    /// Normalized `x^(-alpha) e^(-delta/x) base(x)`.
    Tilted {
        base: Box<DensitySpec>,
        alpha: f64,
        delta: f64,
        #[serde(skip, default)]
        norm: Arc<OnceLock<Float>>,
    },
    /// Uniform indicator density `1/(r-l)` on `(l, r)`.
    IndicatorInterval { l: f64, r: f64 },
    /// Piecewise-constant density on consecutive cells of `breaks`.
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<f64> },
    /// Tabulated density with monotone cubic interpolation inside the grid
    /// and hard zero outside.
    Table {
        xs: Vec<f64>,
        ys: Vec<f64>,
        #[serde(skip, default)]
        slopes: Arc<OnceLock<Vec<f64>>>,
    },
}

impl DensitySpec {
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma requires shape > 0 and rate > 0, got ({shape}, {rate})"
            )));
        }
        Ok(DensitySpec::Gamma { shape, rate })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b > a) {
            return Err(Error::InvalidParameter(format!(
                "uniform requires 0 <= a < b, got ({a}, {b})"
            )));
        }
        Ok(DensitySpec::Uniform { a, b })
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta requires positive parameters, got ({alpha}, {beta})"
            )));
        }
        Ok(DensitySpec::Beta { alpha, beta })
    }

    pub fn triangular_down() -> Self {
        DensitySpec::TriangularDown
    }

    pub fn uniform_product(count: u32) -> Result<Self> {
        if count < 1 {
            return Err(Error::InvalidParameter(
                "uniform-product requires count >= 1".into(),
            ));
        }
        Ok(DensitySpec::UniformProduct { count })
    }

    pub fn shifted_gamma(shape: f64, rate: f64, shift: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shift > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "shifted-gamma requires positive shape, rate, shift; got ({shape}, {rate}, {shift})"
            )));
        }
        Ok(DensitySpec::ShiftedGamma { shape, rate, shift })
    }

    pub fn power_of(base: DensitySpec, exponent: f64) -> Result<Self> {
        if exponent == 0.0 || !exponent.is_finite() {
            return Err(Error::InvalidParameter(
                "power-of requires a finite nonzero exponent".into(),
            ));
        }
        Ok(DensitySpec::PowerOf {
            base: Box::new(base),
            exponent,
        })
    }

    pub fn scaled(base: DensitySpec, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter(
                "scaled requires factor > 0".into(),
            ));
        }
        Ok(DensitySpec::Scaled {
            base: Box::new(base),
            factor,
        })
    }

    /// Normalized `x^(-alpha) e^(-delta/x) base(x)`. The normalization
    /// constant is computed here, so a non-integrable tilt is rejected
    /// at construction.
    pub fn tilted(base: DensitySpec, alpha: f64, delta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && delta >= 0.0) {
            return Err(Error::InvalidParameter(
                "tilted requires alpha >= 0 and delta >= 0".into(),
            ));
        }
        let spec = DensitySpec::Tilted {
            base: Box::new(base),
            alpha,
            delta,
            norm: Arc::new(OnceLock::new()),
        };
        spec.tilt_norm()?;
        Ok(spec)
    }

    pub fn indicator_interval(l: f64, r: f64) -> Result<Self> {
        if !(l >= 0.0 && r > l) {
            return Err(Error::InvalidParameter(format!(
                "indicator-interval requires 0 <= l < r, got ({l}, {r})"
            )));
        }
        Ok(DensitySpec::IndicatorInterval { l, r })
    }

    /// Piecewise-constant density; `values` are per-cell heights, normalized
    /// here to integrate to one.
    pub fn piecewise_constant(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 || values.len() + 1 != breaks.len() {
            return Err(Error::InvalidParameter(
                "piecewise-constant requires n+1 breaks for n cells".into(),
            ));
        }
        if breaks[0] < 0.0 || breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "piecewise-constant breaks must be nonnegative and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "piecewise-constant values must be finite and nonnegative".into(),
            ));
        }
        let mass: f64 = values
            .iter()
            .zip(breaks.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum();
        if mass <= 0.0 {
            return Err(Error::Degenerate(
                "piecewise-constant density has zero total mass".into(),
            ));
        }
        let values = values.iter().map(|v| v / mass).collect();
        Ok(DensitySpec::PiecewiseConstant { breaks, values })
    }

    /// Tabulated density; `ys` are renormalized so the interpolant
    /// integrates to one over the grid.
    pub fn table(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 4 || xs.len() != ys.len() {
            return Err(Error::InvalidParameter(
                "table requires at least 4 grid points with matching values".into(),
            ));
        }
        if xs[0] <= 0.0 || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "table grid must be positive and strictly increasing".into(),
            ));
        }
        if ys.iter().any(|y| !y.is_finite() || *y < 0.0) {
            return Err(Error::InvalidParameter(
                "table values must be finite and nonnegative".into(),
            ));
        }
        let ms = table::fc_slopes(&xs, &ys);
        let mass = table::hermite_integral(&xs, &ys, &ms);
        if mass <= 0.0 {
            return Err(Error::Degenerate("table density has zero mass".into()));
        }
        let ys: Vec<f64> = ys.iter().map(|y| y / mass).collect();
        Ok(DensitySpec::Table {
            xs,
            ys,
            slopes: Arc::new(OnceLock::new()),
        })
    }

    /// Support `(l, r)`; `r` may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match self {
            DensitySpec::Gamma { .. } => (0.0, f64::INFINITY),
            DensitySpec::Uniform { a, b } => (*a, *b),
            DensitySpec::Beta { .. } => (0.0, 1.0),
            DensitySpec::TriangularDown => (0.0, 1.0),
            DensitySpec::UniformProduct { .. } => (0.0, 1.0),
            DensitySpec::ShiftedGamma { shift, .. } => (*shift, f64::INFINITY),
            DensitySpec::PowerOf { base, exponent } => {
                let (l, r) = base.support();
                let q = *exponent;
                let pl = if l == 0.0 && q < 0.0 {
                    f64::INFINITY
                } else {
                    l.powf(q)
                };
                let pr = if r.is_infinite() && q < 0.0 {
                    0.0
                } else {
                    r.powf(q)
                };
                if q > 0.0 {
                    (pl, pr)
                } else {
                    (pr, pl)
                }
            }
            DensitySpec::Scaled { base, factor } => {
                let (l, r) = base.support();
                (l * factor, r * factor)
            }
            DensitySpec::Tilted { base, .. } => base.support(),
            DensitySpec::IndicatorInterval { l, r } => (*l, *r),
            DensitySpec::PiecewiseConstant { breaks, .. } => {
                (breaks[0], *breaks.last().unwrap())
            }
            DensitySpec::Table { xs, .. } => (xs[0], *xs.last().unwrap()),
        }
    }

    /// Structural flags for finite endpoints where the density is not
    /// polynomial-smooth: blowups, fractional powers, or essential decay.
    /// Flagged endpoints are approached through geometric quadrature shells;
    /// conservative over-flagging only costs time.
    pub fn endpoint_singular(&self) -> (bool, bool) {
        fn rough(exponent: f64) -> bool {
            exponent < 1.0 || exponent.fract() != 0.0
        }
        match self {
            DensitySpec::Gamma { shape, .. } => (rough(*shape), false),
            DensitySpec::Uniform { .. } | DensitySpec::IndicatorInterval { .. } => (false, false),
            DensitySpec::Beta { alpha, beta } => (rough(*alpha), rough(*beta)),
            DensitySpec::TriangularDown => (false, false),
            DensitySpec::UniformProduct { count } => (*count >= 2, false),
            DensitySpec::ShiftedGamma { shape, .. } => (rough(*shape), false),
            DensitySpec::PowerOf { exponent, .. } => {
                // The Jacobian y^(1/q - 1) and the base-argument map y^(1/q)
                // are both non-smooth at finite endpoints unless q = 1.
                (*exponent != 1.0, *exponent != 1.0)
            }
            DensitySpec::Scaled { base, .. } => base.endpoint_singular(),
            DensitySpec::Tilted {
                base, alpha, delta, ..
            } => {
                let (bl, bh) = base.endpoint_singular();
                (bl || *alpha > 0.0 || *delta > 0.0, bh)
            }
            DensitySpec::PiecewiseConstant { .. } | DensitySpec::Table { .. } => (false, false),
        }
    }

    /// Interior points where the density is non-smooth (support edges of a
    /// composed base, cell boundaries, table knots). Quadrature splits here.
    pub fn interior_breaks(&self) -> Vec<f64> {
        match self {
            DensitySpec::PowerOf { base, exponent } => base
                .interior_breaks()
                .into_iter()
                .map(|b| b.powf(*exponent))
                .collect(),
            DensitySpec::Scaled { base, factor } => base
                .interior_breaks()
                .into_iter()
                .map(|b| b * factor)
                .collect(),
            DensitySpec::Tilted { base, .. } => base.interior_breaks(),
            DensitySpec::PiecewiseConstant { breaks, .. } => {
                breaks[1..breaks.len() - 1].to_vec()
            }
            DensitySpec::Table { xs, .. } => xs[1..xs.len() - 1].to_vec(),
            _ => Vec::new(),
        }
    }

    /// Relative noise floor of evaluations: tabulated families carry f64
    /// data, so refining a quadrature below ~1e-15 of scale chases roundoff.
    pub fn eval_noise_rel(&self) -> f64 {
        match self {
            DensitySpec::Table { .. } => 3e-16,
            DensitySpec::PiecewiseConstant { .. } => 0.0,
            DensitySpec::PowerOf { base, .. }
            | DensitySpec::Scaled { base, .. }
            | DensitySpec::Tilted { base, .. } => base.eval_noise_rel(),
            _ => 0.0,
        }
    }

    /// Quadrature domain covering the support with singularity flags and
    /// interior breakpoints set.
    pub fn integration_domain(&self, prec: u32) -> Domain {
        let (l, r) = self.support();
        let (sl, sh) = self.endpoint_singular();
        let d = if r.is_infinite() {
            Domain::to_infinity(prec, l).singular(sl, false)
        } else {
            Domain::finite(prec, l, r).singular(sl, sh)
        };
        d.with_breaks(self.interior_breaks())
    }

    /// Density value at `x > 0` in extended precision; zero outside the
    /// support.
    pub fn eval_mp(&self, x: &Float, prec: u32) -> Result<Float> {
        // Honor nodes of higher precision than the requested target:
        // distances to support edges computed below must stay exact
        // relative to the node's own resolution.
        let prec = prec.max(x.prec());
        let xf = x.to_f64();
        if !(xf > 0.0) {
            return Err(Error::Domain(format!(
                "density evaluated at nonpositive x = {xf}"
            )));
        }
        let (l, r) = self.support();
        if xf < l || xf > r {
            return Ok(mp::f(prec, 0.0));
        }
        match self {
            DensitySpec::Gamma { shape, rate } => Ok(gamma_pdf(x, *shape, *rate, prec)),
            DensitySpec::Uniform { a, b } => {
                if xf <= *a || xf >= *b {
                    return Ok(mp::f(prec, 0.0));
                }
                Ok(mp::f(prec, 1.0) / (mp::f(prec, *b) - mp::f(prec, *a)))
            }
            DensitySpec::Beta { alpha, beta } => {
                if xf <= 0.0 || xf >= 1.0 {
                    return Ok(mp::f(prec, 0.0));
                }
                let a = mp::f(prec, *alpha);
                let b = mp::f(prec, *beta);
                let lnb = crate::special::beta_fn(&a, &b, prec).ln();
                let x = Float::with_val(prec, x);
                let one_minus = mp::f(prec, 1.0) - x.clone();
                let lp = (a - 1.0f64) * x.ln() + (b - 1.0f64) * one_minus.ln() - lnb;
                Ok(lp.exp())
            }
            DensitySpec::TriangularDown => {
                if xf >= 1.0 {
                    return Ok(mp::f(prec, 0.0));
                }
                Ok(mp::f(prec, 2.0) * (mp::f(prec, 1.0) - Float::with_val(prec, x)))
            }
            DensitySpec::UniformProduct { count } => {
                if xf >= 1.0 {
                    return Ok(mp::f(prec, 0.0));
                }
                let k = *count;
                let neg_log = -Float::with_val(prec, x).ln();
                let fact = Float::with_val(prec, Integer::from(Integer::factorial(k - 1)));
                Ok(neg_log.pow(k - 1) / fact)
            }
            DensitySpec::ShiftedGamma { shape, rate, shift } => {
                let y = Float::with_val(prec, x) - mp::f(prec, *shift);
                if y <= 0.0 {
                    return Ok(mp::f(prec, 0.0));
                }
                Ok(gamma_pdf(&y, *shape, *rate, prec))
            }
            DensitySpec::PowerOf { base, exponent } => {
                let q = *exponent;
                let inv_q = mp::f(prec, 1.0) / mp::f(prec, q);
                let y = Float::with_val(prec, x);
                let x_base = y.clone().pow(&inv_q);
                let jac = inv_q.clone().abs() * y.pow(&(inv_q.clone() - 1.0f64));
                Ok(base.eval_mp(&x_base, prec)? * jac)
            }
            DensitySpec::Scaled { base, factor } => {
                let c = mp::f(prec, *factor);
                let y = Float::with_val(prec, x) / c.clone();
                Ok(base.eval_mp(&y, prec)? / c)
            }
            DensitySpec::Tilted {
                base, alpha, delta, ..
            } => {
                let z = self.tilt_norm()?;
                let x = Float::with_val(prec, x);
                let mut v = base.eval_mp(&x, prec)?;
                if *alpha > 0.0 {
                    v *= x.clone().pow(&mp::f(prec, -*alpha));
                }
                if *delta > 0.0 {
                    v *= (-mp::f(prec, *delta) / x).exp();
                }
                Ok(v / Float::with_val(prec, &z))
            }
            DensitySpec::IndicatorInterval { l, r } => {
                if xf <= *l || xf >= *r {
                    return Ok(mp::f(prec, 0.0));
                }
                Ok(mp::f(prec, 1.0) / (mp::f(prec, *r) - mp::f(prec, *l)))
            }
            DensitySpec::PiecewiseConstant { breaks, values } => {
                let i = match breaks.binary_search_by(|v| v.partial_cmp(&xf).unwrap()) {
                    Ok(i) => i.min(values.len().saturating_sub(1)),
                    Err(0) => return Ok(mp::f(prec, 0.0)),
                    Err(i) => i - 1,
                };
                if i >= values.len() {
                    return Ok(mp::f(prec, 0.0));
                }
                Ok(mp::f(prec, values[i]))
            }
            DensitySpec::Table { xs, ys, slopes } => {
                let ms =
                    slopes.get_or_init(|| table::fc_slopes(xs, ys));
                if xf < xs[0] || xf > *xs.last().unwrap() {
                    return Ok(mp::f(prec, 0.0));
                }
                let v = table::hermite_eval(xs, ys, ms, xf).max(0.0);
                Ok(mp::f(prec, v))
            }
        }
    }

    /// Density value at machine precision.
    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.eval_mp(&mp::f(96, x), 96)?.to_f64())
    }

    /// `| integral - 1 |` under the module's quadrature at `prec` bits.
    pub fn normalization_defect(&self, prec: u32) -> Result<f64> {
        let quad = Quad::new(prec)
            .with_rel_tol(mp::eval_rel_err(prec))
            .with_noise_rel(self.eval_noise_rel());
        let d = self.integration_domain(prec);
        let total = quad.integrate(|x| self.eval_mp(x, x.prec()), &d)?;
        Ok((total - mp::f(prec, 1.0)).abs().to_f64())
    }

    /// CDF at `x` by quadrature.
    pub fn cdf(&self, x: f64, prec: u32) -> Result<f64> {
        let (l, r) = self.support();
        if x <= l {
            return Ok(0.0);
        }
        let hi = if x >= r { r } else { x };
        let (sl, sh) = self.endpoint_singular();
        if hi.is_infinite() {
            return Ok(1.0);
        }
        let d = Domain::finite(prec, l, hi)
            .singular(sl, sh && x >= r)
            .with_breaks(self.interior_breaks());
        let quad = Quad::new(prec)
            .with_rel_tol(mp::eval_rel_err(prec).max(1e-14))
            .with_noise_rel(self.eval_noise_rel());
        let v = quad.integrate(|t| self.eval_mp(t, t.prec()), &d)?;
        Ok(v.to_f64().min(1.0))
    }

    /// Quantile by bisection on the quadrature CDF (to `xtol` on the
    /// abscissa).
    pub fn quantile(&self, p: f64, xtol: f64) -> Result<f64> {
        if !(0.0 < p && p < 1.0) {
            return Err(Error::Domain(format!("quantile requires p in (0,1), got {p}")));
        }
        let prec = 96;
        let (l, mut r) = self.support();
        if r.is_infinite() {
            r = l.max(1.0);
            let mut tries = 0;
            while self.cdf(r, prec)? < p {
                r *= 2.0;
                tries += 1;
                if tries > 300 {
                    return Err(Error::Quadrature(
                        "quantile bracket expansion failed".into(),
                    ));
                }
            }
        }
        let mut lo = l;
        let mut hi = r;
        for _ in 0..200 {
            if hi - lo <= xtol * (1.0 + hi.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid, prec)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn tilt_norm(&self) -> Result<Float> {
        let DensitySpec::Tilted {
            base,
            alpha,
            delta,
            norm,
        } = self
        else {
            unreachable!("tilt_norm on a non-tilted spec");
        };
        if let Some(z) = norm.get() {
            return Ok(z.clone());
        }
        let prec = NORM_PREC;
        let quad = Quad::new(prec).with_rel_tol(1e-40);
        let (l, _) = base.support();
        let (bs_lo, bs_hi) = base.endpoint_singular();
        let mut d = base.integration_domain(prec);
        d.sing_lo = bs_lo || (*alpha > 0.0 && l == 0.0) || *delta > 0.0;
        d.sing_hi = bs_hi;
        let z = quad
            .integrate(
                |x| {
                    let wp = x.prec();
                    let mut v = base.eval_mp(x, wp)?;
                    if *alpha > 0.0 {
                        v *= x.clone().pow(&mp::f(wp, -*alpha));
                    }
                    if *delta > 0.0 {
                        v *= (-mp::f(wp, *delta) / x.clone()).exp();
                    }
                    Ok(v)
                },
                &d,
            )
            .map_err(|e| match e {
                Error::Integrability(m) => Error::Integrability(format!(
                    "tilt x^(-{alpha}) e^(-{delta}/x) is not integrable against the base: {m}"
                )),
                other => other,
            })?;
        if !z.is_finite() || z <= 0.0 {
            return Err(Error::Integrability(
                "tilt normalization constant is not positive".into(),
            ));
        }
        Ok(norm.get_or_init(|| z).clone())
    }
}

fn gamma_pdf(x: &Float, shape: f64, rate: f64, prec: u32) -> Float {
    let k = mp::f(prec, shape);
    let theta = mp::f(prec, rate);
    let x = Float::with_val(prec, x);
    let lg = k.clone().ln_gamma();
    let lp = (k.clone() - 1.0f64) * x.clone().ln() + k * theta.clone().ln() - theta * x - lg;
    lp.exp()
}

/// Evaluate the spec's JSON form; this schema is the CLI density argument.
pub fn from_json(text: &str) -> Result<DensitySpec> {
    serde_json::from_str(text)
        .map_err(|e| Error::InvalidParameter(format!("malformed density JSON: {e}")))
}

pub fn to_json(spec: &DensitySpec) -> String {
    serde_json::to_string(spec).expect("density spec serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm_defect(spec: &DensitySpec) -> f64 {
        spec.normalization_defect(192).unwrap()
    }

    #[test]
    fn uniform_density_value() {
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.eval(0.5).unwrap(), 1.0);
        assert_eq!(u.eval(2.0).unwrap(), 0.0);
        assert!(u.eval(-1.0).is_err());
        assert!(u.eval(0.0).is_err());
    }

    #[test]
    fn uniform_product_example_value() {
        // density (1/(k-1)!) (-ln x)^(k-1); at k = 2, x = e^(-1) the value is 1
        let f = DensitySpec::uniform_product(2).unwrap();
        let x = (-1.0f64).exp();
        assert!((f.eval(x).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn triangular_down_value() {
        let f = DensitySpec::triangular_down();
        assert!((f.eval(0.25).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn named_families_normalize() {
        let specs = [
            DensitySpec::gamma(0.5, 1.0).unwrap(),
            DensitySpec::gamma(2.0, 3.0).unwrap(),
            DensitySpec::uniform(0.5, 2.0).unwrap(),
            DensitySpec::beta(0.7, 2.5).unwrap(),
            DensitySpec::triangular_down(),
            DensitySpec::uniform_product(3).unwrap(),
            DensitySpec::shifted_gamma(0.5, 1.0, 1.0).unwrap(),
            DensitySpec::indicator_interval(1.0, 2.0).unwrap(),
        ];
        for s in &specs {
            let d = norm_defect(s);
            assert!(d < 1e-8, "{s:?} defect {d}");
        }
    }

    #[test]
    fn power_of_normalizes_and_maps_support() {
        let base = DensitySpec::gamma(1.0, 1.0).unwrap();
        let inv = DensitySpec::power_of(base, -1.0).unwrap();
        assert_eq!(inv.support(), (0.0, f64::INFINITY));
        assert!(norm_defect(&inv) < 1e-8);

        let sq = DensitySpec::power_of(DensitySpec::uniform(0.0, 1.0).unwrap(), 2.0).unwrap();
        assert_eq!(sq.support(), (0.0, 1.0));
        assert!(norm_defect(&sq) < 1e-8);

        let u12 = DensitySpec::uniform(1.0, 2.0).unwrap();
        let p = DensitySpec::power_of(u12, 2.0).unwrap();
        assert_eq!(p.support(), (1.0, 4.0));
        assert!(norm_defect(&p) < 1e-8);
    }

    #[test]
    fn tilt_gamma2_alpha1_is_exponential() {
        // x^(-1) * x e^(-x) is proportional to e^(-x)
        let t = DensitySpec::tilted(DensitySpec::gamma(2.0, 1.0).unwrap(), 1.0, 0.0).unwrap();
        let g1 = DensitySpec::gamma(1.0, 1.0).unwrap();
        for x in [0.3, 1.0, 2.5] {
            assert!((t.eval(x).unwrap() - g1.eval(x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn tilt_non_integrable_rejected() {
        // x^(-1) * uniform(0,1) near zero diverges logarithmically
        let r = DensitySpec::tilted(DensitySpec::uniform(0.0, 1.0).unwrap(), 1.0, 0.0);
        assert!(r.is_err(), "non-integrable tilt must be rejected");
    }

    #[test]
    fn tilt_delta_rescues_integrability() {
        let t = DensitySpec::tilted(DensitySpec::uniform(0.0, 1.0).unwrap(), 1.0, 0.1).unwrap();
        assert!(norm_defect(&t) < 1e-8);
    }

    #[test]
    fn piecewise_constant_normalizes() {
        let p = DensitySpec::piecewise_constant(vec![0.5, 1.0, 2.0], vec![3.0, 1.0]).unwrap();
        assert!(norm_defect(&p) < 1e-12);
        // cell heights 3:1 before normalization, mass = 3*0.5 + 1*1 = 2.5
        assert!((p.eval(0.75).unwrap() - 1.2).abs() < 1e-12);
        assert!((p.eval(1.5).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(p.eval(2.5).unwrap(), 0.0);
    }

    #[test]
    fn table_roundtrip_and_hard_zero() {
        let xs: Vec<f64> = (1..=64).map(|i| i as f64 / 16.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (-x).exp()).collect();
        let t = DensitySpec::table(xs, ys).unwrap();
        assert!(norm_defect(&t) < 1e-9);
        assert_eq!(t.eval(0.01).unwrap(), 0.0);
        assert_eq!(t.eval(5.0).unwrap(), 0.0);
    }

    #[test]
    fn cdf_and_quantile_agree() {
        let g = DensitySpec::gamma(2.0, 1.0).unwrap();
        let q = g.quantile(0.5, 1e-10).unwrap();
        let back = g.cdf(q, 128).unwrap();
        assert!((back - 0.5).abs() < 1e-8, "q={q} back={back}");
    }

    #[test]
    fn json_schema_roundtrip() {
        let spec = from_json(r#"{"family":"uniform","params":{"a":0.0,"b":1.0}}"#).unwrap();
        assert!((spec.eval(0.5).unwrap() - 1.0).abs() < 1e-15);
        let text = to_json(&spec);
        let again = from_json(&text).unwrap();
        assert_eq!(to_json(&again), text);

        let nested = DensitySpec::power_of(DensitySpec::gamma(1.0, 1.0).unwrap(), -1.0).unwrap();
        let text = to_json(&nested);
        assert!(text.contains("power-of"), "{text}");
        let back = from_json(&text).unwrap();
        assert!((back.eval(1.0).unwrap() - nested.eval(1.0).unwrap()).abs() < 1e-14);
    }
}
