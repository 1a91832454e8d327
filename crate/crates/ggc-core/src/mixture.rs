//! Product and ratio densities of independent positive random variables,
//! closure operators, and a catalog of closed-form transform/density pairs.
//!
//! Densities are computed pointwise by quadrature (supports vary wildly and
//! endpoint singularities dominate the error budget, so a global transform
//! grid would be a poor fit); a table wrapper caches evaluations for
//! detector sweeps.

use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::mp;
use crate::quad::{Domain, Quad};
use crate::special::e1;

/// A product or ratio of two independent positive random variables.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub left: DensitySpec,
    pub right: DensitySpec,
    pub op: MixtureOp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureOp {
    Product,
    Ratio,
}

impl MixtureSpec {
    pub fn product(left: DensitySpec, right: DensitySpec) -> Self {
        MixtureSpec {
            left,
            right,
            op: MixtureOp::Product,
        }
    }

    pub fn ratio(left: DensitySpec, right: DensitySpec) -> Self {
        MixtureSpec {
            left,
            right,
            op: MixtureOp::Ratio,
        }
    }

    pub fn density_mp(&self, z: &Float, prec: u32) -> Result<Float> {
        match self.op {
            MixtureOp::Product => product_density_mp(&self.left, &self.right, z, prec),
            MixtureOp::Ratio => ratio_density_mp(&self.left, &self.right, z, prec),
        }
    }

    pub fn density(&self, z: f64) -> Result<f64> {
        Ok(self.density_mp(&mp::f(128, z), 128)?.to_f64())
    }

    /// Support of the mixture variable.
    pub fn support(&self) -> (f64, f64) {
        let (ly, ry) = self.left.support();
        let (lx, rx) = self.right.support();
        match self.op {
            MixtureOp::Product => (ly * lx, ry * rx),
            MixtureOp::Ratio => (
                if rx.is_infinite() { 0.0 } else { ly / rx },
                if lx == 0.0 { f64::INFINITY } else { ry / lx },
            ),
        }
    }

    /// Cache the mixture density into a table spec on a geometric grid, for
    /// detector sweeps. Verdict signs are unaffected by the table's
    /// renormalization over the truncated grid.
    pub fn table_density(&self, points: usize, prec: u32) -> Result<DensitySpec> {
        let (lo, hi) = self.support();
        let lo = if lo <= 0.0 { 1e-7 } else { lo * (1.0 + 1e-9) };
        let hi = if hi.is_infinite() {
            // expand until the density is negligible
            let mut h = lo.max(1.0);
            let mut tries = 0;
            loop {
                h *= 2.0;
                let v = self.density(h)?;
                if v * h < 1e-13 {
                    break h;
                }
                tries += 1;
                if tries > 60 {
                    break h;
                }
            }
        } else {
            hi * (1.0 - 1e-9)
        };
        let grid = crate::hyperbolic::geometric_grid(lo, hi, points);
        let mut ys = Vec::with_capacity(points);
        for z in &grid {
            ys.push(self.density_mp(&mp::f(prec, *z), prec)?.to_f64().max(0.0));
        }
        DensitySpec::table(grid, ys)
    }
}

/// Shared setup: intersection of the x-range demanded by both factors,
/// with mapped interior breaks. `map` sends an x to the left factor's
/// argument.
struct MixtureIntegrand {
    x_lo: f64,
    x_hi: f64,
    breaks: Vec<f64>,
}

fn mixture_domain(
    left: &DensitySpec,
    right: &DensitySpec,
    z: f64,
    ratio: bool,
) -> MixtureIntegrand {
    let (ly, ry) = left.support();
    let (lx, rx) = right.support();
    let (mut x_lo, mut x_hi) = (lx, rx);
    if ratio {
        // left factor evaluated at z*x: need ly <= z*x <= ry
        x_lo = x_lo.max(ly / z);
        if ry.is_finite() {
            x_hi = x_hi.min(ry / z);
        }
    } else {
        // left factor evaluated at z/x: need ly <= z/x <= ry
        if ry.is_finite() && ry > 0.0 {
            x_lo = x_lo.max(z / ry);
        }
        if ly > 0.0 {
            x_hi = x_hi.min(z / ly);
        }
    }
    let mut breaks = right.interior_breaks();
    for b in left.interior_breaks() {
        if b > 0.0 {
            breaks.push(if ratio { b / z } else { z / b });
        }
    }
    MixtureIntegrand { x_lo, x_hi, breaks }
}

/// Density of `Y * X` at `z`: `int (1/x) f_Y(z/x) f_X(x) dx`.
pub fn product_density_mp(
    left: &DensitySpec,
    right: &DensitySpec,
    z: &Float,
    prec: u32,
) -> Result<Float> {
    let zf = z.to_f64();
    if !(zf > 0.0) {
        return Err(Error::Domain(format!(
            "product density requires z > 0, got {zf}"
        )));
    }
    let m = mixture_domain(left, right, zf, false);
    if m.x_hi <= m.x_lo {
        return Ok(mp::f(prec, 0.0));
    }
    let z = Float::with_val(prec, z);
    let quad = Quad::new(prec)
        .with_rel_tol(mp::eval_rel_err(prec) * 0.25)
        .with_noise_rel(left.eval_noise_rel().max(right.eval_noise_rel()));
    let d = if m.x_hi.is_infinite() {
        Domain::to_infinity(prec, m.x_lo).singular(true, false)
    } else {
        Domain::finite(prec, m.x_lo, m.x_hi).singular(true, true)
    }
    .with_breaks(m.breaks);
    quad.integrate(
        |x| {
            let wp = x.prec();
            let arg = Float::with_val(wp, &z) / x;
            let fy = left.eval_mp(&arg, wp)?;
            let fx = right.eval_mp(x, wp)?;
            Ok(fy * fx / x.clone())
        },
        &d,
    )
}

pub fn product_density(left: &DensitySpec, right: &DensitySpec, z: f64) -> Result<f64> {
    Ok(product_density_mp(left, right, &mp::f(128, z), 128)?.to_f64())
}

/// Density of `Y / X` at `z`: `int x f_Y(z x) f_X(x) dx`.
pub fn ratio_density_mp(
    left: &DensitySpec,
    right: &DensitySpec,
    z: &Float,
    prec: u32,
) -> Result<Float> {
    let zf = z.to_f64();
    if !(zf > 0.0) {
        return Err(Error::Domain(format!(
            "ratio density requires z > 0, got {zf}"
        )));
    }
    let m = mixture_domain(left, right, zf, true);
    if m.x_hi <= m.x_lo {
        return Ok(mp::f(prec, 0.0));
    }
    let z = Float::with_val(prec, z);
    let quad = Quad::new(prec)
        .with_rel_tol(mp::eval_rel_err(prec) * 0.25)
        .with_noise_rel(left.eval_noise_rel().max(right.eval_noise_rel()));
    let d = if m.x_hi.is_infinite() {
        Domain::to_infinity(prec, m.x_lo).singular(true, false)
    } else {
        Domain::finite(prec, m.x_lo, m.x_hi).singular(true, true)
    }
    .with_breaks(m.breaks);
    quad.integrate(
        |x| {
            let wp = x.prec();
            let arg = Float::with_val(wp, &z) * x;
            let fy = left.eval_mp(&arg, wp)?;
            let fx = right.eval_mp(x, wp)?;
            Ok(fy * fx * x.clone())
        },
        &d,
    )
}

pub fn ratio_density(left: &DensitySpec, right: &DensitySpec, z: f64) -> Result<f64> {
    Ok(ratio_density_mp(left, right, &mp::f(128, z), 128)?.to_f64())
}

/// Normalized tilt `x^(-alpha) e^(-delta/x) f(x)`; the identity when both
/// parameters vanish.
pub fn tilt(f: &DensitySpec, alpha: f64, delta: f64) -> Result<DensitySpec> {
    if alpha == 0.0 && delta == 0.0 {
        return Ok(f.clone());
    }
    DensitySpec::tilted(f.clone(), alpha, delta)
}

/// Catalog of mixtures with closed-form Laplace transforms and densities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CatalogName {
    /// `Gamma(1,1) * U(0,1)`.
    YU,
    /// `Gamma(1,1) / U(0,1)`.
    YOverU,
    /// `Gamma(2,1) * min(U1, U2)`.
    YX2,
    /// `Gamma(2,1) / min(U1, U2)`.
    YOverX2,
}

impl CatalogName {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "YU" => Ok(CatalogName::YU),
            "Y/U" => Ok(CatalogName::YOverU),
            "YX2" => Ok(CatalogName::YX2),
            "Y/X2" => Ok(CatalogName::YOverX2),
            other => Err(Error::UnknownCatalog(format!(
                "{other:?} (expected one of YU, Y/U, YX2, Y/X2)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CatalogName::YU => "YU",
            CatalogName::YOverU => "Y/U",
            CatalogName::YX2 => "YX2",
            CatalogName::YOverX2 => "Y/X2",
        }
    }

    pub fn all() -> [CatalogName; 4] {
        [
            CatalogName::YU,
            CatalogName::YOverU,
            CatalogName::YX2,
            CatalogName::YOverX2,
        ]
    }
}

/// A catalog entry: closed forms plus the generating mixture construction.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub name: CatalogName,
    pub construction: MixtureSpec,
}

/// Look up a catalog entry by name (`YU`, `Y/U`, `YX2`, `Y/X2`).
pub fn catalog(name: &str) -> Result<CatalogEntry> {
    let name = CatalogName::parse(name)?;
    let gamma1 = DensitySpec::gamma(1.0, 1.0).expect("valid");
    let gamma2 = DensitySpec::gamma(2.0, 1.0).expect("valid");
    let uniform = DensitySpec::uniform(0.0, 1.0).expect("valid");
    let tri = DensitySpec::triangular_down();
    let construction = match name {
        CatalogName::YU => MixtureSpec::product(gamma1, uniform),
        CatalogName::YOverU => MixtureSpec::ratio(gamma1, uniform),
        CatalogName::YX2 => MixtureSpec::product(gamma2, tri),
        CatalogName::YOverX2 => MixtureSpec::ratio(gamma2, tri),
    };
    Ok(CatalogEntry { name, construction })
}

impl CatalogEntry {
    /// Closed-form Laplace transform. Values near `s = 0` cancel, so the
    /// working precision is padded by the lost bits.
    pub fn lt_mp(&self, s: &Float, prec: u32) -> Result<Float> {
        let prec = prec.max(s.prec());
        let sf = s.to_f64();
        if !(sf >= 0.0) {
            return Err(Error::Domain(format!("transform requires s >= 0, got {sf}")));
        }
        if sf == 0.0 {
            return Ok(mp::f(prec, 1.0));
        }
        let pad = if sf < 1.0 {
            (1.0 / sf).log2().ceil() as u32 * 4 + 16
        } else {
            16
        };
        let work = prec + pad;
        let s = Float::with_val(work, s);
        let one = mp::f(work, 1.0);
        let v = match self.name {
            CatalogName::YU => (one + &s).ln() / s,
            CatalogName::YOverU => {
                // 1 + s ln(s/(1+s))
                let ratio = s.clone() / (one.clone() + &s);
                one + s * ratio.ln()
            }
            CatalogName::YX2 => {
                // (2/s)(1 - ln(1+s)/s)
                let l = (one.clone() + &s).ln() / s.clone();
                (one - l) * mp::f(work, 2.0) / s
            }
            CatalogName::YOverX2 => {
                // 1 + 6s + (6s^2 + 4s) ln(s/(1+s))
                let ratio = s.clone() / (one.clone() + &s);
                let poly = mp::f(work, 6.0) * s.clone() * &s + mp::f(work, 4.0) * &s;
                one + mp::f(work, 6.0) * &s + poly * ratio.ln()
            }
        };
        Ok(Float::with_val(prec, &v))
    }

    /// Closed-form density. Small arguments cancel; precision is padded.
    pub fn pdf_mp(&self, x: &Float, prec: u32) -> Result<Float> {
        let prec = prec.max(x.prec());
        let xf = x.to_f64();
        if !(xf > 0.0) {
            return Err(Error::Domain(format!("density requires x > 0, got {xf}")));
        }
        let pad = if xf < 1.0 {
            (1.0 / xf).log2().ceil() as u32 * 5 + 16
        } else {
            16
        };
        let work = prec + pad;
        let x = Float::with_val(work, x);
        let one = mp::f(work, 1.0);
        let v = match self.name {
            CatalogName::YU => e1(&x, work)?,
            CatalogName::YOverU => {
                // (1 - (1+x) e^(-x)) / x^2
                let e = (-x.clone()).exp();
                (one.clone() - (one + &x) * e) / (x.clone() * &x)
            }
            CatalogName::YX2 => {
                // 2 e^(-x) - 2 x E1(x)
                let e = (-x.clone()).exp();
                mp::f(work, 2.0) * e - mp::f(work, 2.0) * x.clone() * e1(&x, work)?
            }
            CatalogName::YOverX2 => {
                // (-12 + 4x + (2x^2 + 8x + 12) e^(-x)) / x^3
                let e = (-x.clone()).exp();
                let poly = mp::f(work, 2.0) * x.clone() * &x
                    + mp::f(work, 8.0) * &x
                    + mp::f(work, 12.0);
                let num = mp::f(work, -12.0) + mp::f(work, 4.0) * &x + poly * e;
                num / x.clone().pow(3u32)
            }
        };
        Ok(Float::with_val(prec, &v))
    }

    pub fn lt(&self, s: f64) -> Result<f64> {
        Ok(self.lt_mp(&mp::f(128, s), 128)?.to_f64())
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        Ok(self.pdf_mp(&mp::f(128, x), 128)?.to_f64())
    }
}

/// Closed-form catalog transform as an [`MpFn`] handle.
pub struct CatalogLt(pub CatalogEntry);

impl crate::transform::MpFn for CatalogLt {
    fn eval(&self, s: &Float, prec: u32) -> Result<Float> {
        self.0.lt_mp(s, prec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn e_inv() -> f64 {
        (-1.0f64).exp()
    }

    #[test]
    fn product_density_gamma_uniform_is_e1() {
        // density of Gamma(1,1) * U(0,1) at 1 equals int_1^inf y^(-1) e^(-y) dy
        let g = DensitySpec::gamma(1.0, 1.0).unwrap();
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        let v = product_density(&g, &u, 1.0).unwrap();
        let oracle = crate::special::e1_f64(1.0).unwrap();
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
    }

    #[test]
    fn product_density_gamma2_triangular_value() {
        let g2 = DensitySpec::gamma(2.0, 1.0).unwrap();
        let t = DensitySpec::triangular_down();
        let v = product_density(&g2, &t, 1.0).unwrap();
        let expect = 2.0 * e_inv() - 2.0 * crate::special::e1_f64(1.0).unwrap();
        assert!((v - expect).abs() < 1e-10, "{v} vs {expect}");
    }

    #[test]
    fn ratio_density_values_and_small_z_limit() {
        let g = DensitySpec::gamma(1.0, 1.0).unwrap();
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        let v = ratio_density(&g, &u, 1.0).unwrap();
        let expect = 1.0 - 2.0 * e_inv();
        assert!((v - expect).abs() < 1e-10, "{v} vs {expect}");
        // z -> 0+ tends to 1/2 (oracle: quadrature at z = 1e-4 of the same
        // formula's series limit)
        let near = ratio_density(&g, &u, 1e-4).unwrap();
        assert!((near - 0.5).abs() < 1e-3, "near-zero value {near}");
    }

    #[test]
    fn ratio_density_gamma2_triangular_value() {
        let g2 = DensitySpec::gamma(2.0, 1.0).unwrap();
        let t = DensitySpec::triangular_down();
        let v = ratio_density(&g2, &t, 1.0).unwrap();
        let expect = -8.0 + 22.0 * e_inv();
        assert!((v - expect).abs() < 1e-10, "{v} vs {expect}");
    }

    #[test]
    fn product_density_normalizes() {
        let g = DensitySpec::gamma(1.0, 1.0).unwrap();
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        let spec = MixtureSpec::product(g, u);
        let prec = 128;
        let quad = Quad::new(prec).with_rel_tol(1e-10);
        let d = Domain::to_infinity(prec, 0.0).singular(true, false);
        let total = quad
            .integrate(|z| spec.density_mp(z, prec), &d)
            .unwrap()
            .to_f64();
        assert!((total - 1.0).abs() < 1e-8, "total {total}");
    }

    #[test]
    fn min_of_uniforms_equals_scaled_power_product() {
        // min(U1,U2) has the same law as U1 * U2^(1/2)
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        let sqrt_u = DensitySpec::power_of(u.clone(), 0.5).unwrap();
        let tri = DensitySpec::triangular_down();
        for z in [0.1, 0.35, 0.8] {
            let alt = product_density(&u, &sqrt_u, z).unwrap();
            let direct = tri.eval(z).unwrap();
            assert!((alt - direct).abs() < 1e-8, "z={z}: {alt} vs {direct}");
        }
    }

    #[test]
    fn catalog_lt_values() {
        assert!((catalog("YU").unwrap().lt(1.0).unwrap() - LN2).abs() < 1e-12);
        let v = catalog("Y/X2").unwrap().pdf(1.0).unwrap();
        assert!((v - (-8.0 + 22.0 * e_inv())).abs() < 1e-12);
        for name in ["YU", "Y/U", "YX2", "Y/X2"] {
            let e = catalog(name).unwrap();
            let near_zero = e.lt(1e-9).unwrap();
            assert!((near_zero - 1.0).abs() < 1e-6, "{name}: lt(0+) = {near_zero}");
            assert!((e.lt(0.0).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn catalog_unknown_name() {
        assert!(matches!(catalog("nope"), Err(Error::UnknownCatalog(_))));
    }

    #[test]
    fn catalog_pdf_matches_numeric_mixture() {
        for name in ["YU", "Y/U", "YX2", "Y/X2"] {
            let e = catalog(name).unwrap();
            for z in [0.4, 1.0, 2.3] {
                let closed = e.pdf(z).unwrap();
                let numeric = e.construction.density(z).unwrap();
                assert!(
                    (closed - numeric).abs() < 1e-9 * (1.0 + closed.abs()),
                    "{name} at {z}: closed {closed} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn catalog_small_x_cancellation_is_tamed() {
        let e = catalog("Y/X2").unwrap();
        for x in [1e-3, 1e-6] {
            let v = e.pdf(x).unwrap();
            // series: x/6 - x^2/10 + O(x^3)
            let expect = x / 6.0 - x * x / 10.0;
            assert!(
                (v - expect).abs() < 1e-12 * (1.0 + expect.abs()) + x.powi(3),
                "x={x}: {v} vs {expect}"
            );
        }
    }

    #[test]
    fn tilt_identity_and_gamma_reduction() {
        let g2 = DensitySpec::gamma(2.0, 1.0).unwrap();
        let same = tilt(&g2, 0.0, 0.0).unwrap();
        assert!((same.eval(1.3).unwrap() - g2.eval(1.3).unwrap()).abs() < 1e-15);
        let g1 = DensitySpec::gamma(1.0, 1.0).unwrap();
        let tilted = tilt(&g2, 1.0, 0.0).unwrap();
        for x in [0.2, 1.0, 4.0] {
            assert!((tilted.eval(x).unwrap() - g1.eval(x).unwrap()).abs() < 1e-11);
        }
    }

    #[test]
    fn tilt_uniform_normalizes() {
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        let t = tilt(&u, 1.0, 0.1).unwrap();
        assert!(t.normalization_defect(192).unwrap() < 1e-8);
    }

    #[test]
    fn mellin_consistency_ratio_vs_stieltjes() {
        // LT of the ratio density Gamma(k,1)/X equals the order-k Stieltjes
        // transform of f_X
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        let g = DensitySpec::gamma(1.0, 1.0).unwrap();
        let prec = 128;
        let quad = Quad::new(prec).with_rel_tol(1e-11);
        for s in [0.7, 2.0] {
            let s_mp = mp::f(prec, s);
            let d = Domain::to_infinity(prec, 0.0).singular(true, false);
            let lt = quad
                .integrate(
                    |z| {
                        let wp = z.prec();
                        let e = (-(Float::with_val(wp, &s_mp) * z)).exp();
                        Ok(e * ratio_density_mp(&g, &u, z, prec)?)
                    },
                    &d,
                )
                .unwrap()
                .to_f64();
            let st = crate::transform::stieltjes_k(&u, 1.0, s).unwrap();
            assert!((lt - st).abs() < 1e-7, "s={s}: {lt} vs {st}");
        }
    }

    #[test]
    fn table_density_wrapper_tracks_mixture() {
        let g = DensitySpec::gamma(1.0, 1.0).unwrap();
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        let spec = MixtureSpec::ratio(g, u);
        let table = spec.table_density(257, 96).unwrap();
        for z in [0.2, 1.0, 3.0] {
            let a = table.eval(z).unwrap();
            let b = spec.density(z).unwrap();
            assert!((a - b).abs() < 1e-4 * (1.0 + b), "z={z}: {a} vs {b}");
        }
    }
}
