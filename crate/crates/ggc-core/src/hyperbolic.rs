//! The hyperbolic reparameterization `w = v + 1/v` and grid detectors for
//! hyperbolic monotonicity of order `k`.
//!
//! For a density `f` and fixed center `u > 0`, the slice
//! `h(w) = f(u v) f(u / v)` is a function of `w` alone because the value of
//! `w` determines the set `{v, 1/v}`. Order-`k` hyperbolic monotonicity asks
//! for alternating signs of the first `k-1` derivatives with the last one
//! non-increasing. Densities in scope may be discontinuous, so the detector
//! works with divided differences on a geometric `w`-grid: for a function
//! with the order-`k` integral representation, every divided difference up
//! to order `k` has the required sign for any node placement, which makes a
//! negative margin a genuine witness rather than a discretization artifact.

use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::mp;
use crate::report::Verdict;

/// The root `v >= 1` of `v + 1/v = w`.
pub fn v_of_w_mp(w: &Float, prec: u32) -> Result<Float> {
    if !w.is_finite() || *w < 2.0 {
        return Err(Error::Domain(format!(
            "v_of_w requires w >= 2, got {}",
            w.to_f64()
        )));
    }
    let w = Float::with_val(prec, w);
    let disc = (w.clone() * &w - 4.0f64).sqrt();
    Ok((w + disc) / 2.0f64)
}

pub fn v_of_w(w: f64) -> Result<f64> {
    Ok(v_of_w_mp(&mp::f(96, w), 96)?.to_f64())
}

/// `h(w) = f(u v) f(u / v)` with `v = v_of_w(w)`.
pub fn h_slice_mp(f: &DensitySpec, u: &Float, w: &Float, prec: u32) -> Result<Float> {
    if !(u.to_f64() > 0.0) {
        return Err(Error::Domain("h_slice requires u > 0".into()));
    }
    let v = v_of_w_mp(w, prec)?;
    let u = Float::with_val(prec, u);
    let a = f.eval_mp(&(u.clone() * &v), prec)?;
    let b = f.eval_mp(&(u / v), prec)?;
    Ok(a * b)
}

pub fn h_slice(f: &DensitySpec, u: f64, w: f64) -> Result<f64> {
    Ok(h_slice_mp(f, &mp::f(128, u), &mp::f(128, w), 128)?.to_f64())
}

/// Grid and tolerance policy for [`hm_test`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HmConfig {
    /// Logarithmic centers `u`; range defaults to the interior quantile span.
    pub u_points: usize,
    /// Optional explicit `u` range (lo, hi).
    pub u_range: Option<(f64, f64)>,
    /// Points of the `w`-grid (first point is exactly 2).
    pub w_points: usize,
    /// Largest `w`; offsets `w - 2` are log-spaced.
    pub w_max: f64,
    pub w_offset_min: f64,
    /// Working precision in bits for all `h` evaluations and differences.
    pub prec: u32,
    /// A sign violation counts only if its magnitude (in `h` units at the
    /// stencil's mean spacing) exceeds `tol_abs + tol_rel * local h scale`.
    pub tol_abs: f64,
    pub tol_rel: f64,
}

impl Default for HmConfig {
    fn default() -> Self {
        HmConfig {
            u_points: 33,
            u_range: None,
            w_points: 65,
            w_max: 50.0,
            w_offset_min: 1e-6,
            prec: mp::DEFAULT_PREC,
            tol_abs: 1e-10,
            tol_rel: 1e-6,
        }
    }
}

/// A sign violation: at center `u`, the order-`j` divided difference around
/// `w` has the wrong sign with the given margin (negative means violated).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HmWitness {
    pub u: f64,
    pub w: f64,
    pub order: u32,
    pub margin: f64,
}

/// Detector verdict with reproducible witnesses and the grids used.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HmReport {
    pub order: u32,
    pub verdict: Verdict,
    pub witnesses: Vec<HmWitness>,
    pub grid: HmConfig,
    /// Largest `h` value seen over all slices.
    pub h_scale: f64,
    /// `h` was identically zero for every sampled `u`: the pass is vacuous.
    pub vacuous: bool,
}

pub(crate) fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo; n];
    }
    let ratio = (hi / lo).ln();
    (0..n)
        .map(|i| lo * (ratio * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default `u` range: the interior quantile span of `f`, so slices stay
/// where the density actually lives.
fn default_u_range(f: &DensitySpec) -> Result<(f64, f64)> {
    let (l, r) = f.support();
    let lo = if l > 0.0 {
        let q = f.quantile(1e-4, 1e-9)?;
        l.max(q * 0.999 + l * 0.001)
    } else {
        f.quantile(1e-4, 1e-9)?
    };
    let hi = if r.is_finite() {
        r.min(f.quantile(1.0 - 1e-4, 1e-9)?)
    } else {
        f.quantile(1.0 - 1e-4, 1e-9)?
    };
    if !(hi > lo && lo > 0.0) {
        return Err(Error::Degenerate(format!(
            "could not derive a u-range from support ({l}, {r})"
        )));
    }
    Ok((lo, hi))
}

/// Hyperbolic monotonicity of order `k` on a `(u, w)` grid.
///
/// For each `u`, checks `(-1)^j D_j >= 0` for divided differences `D_j` of
/// `h` up to order `k`; order `k` itself encodes the required monotonicity
/// of the `(k-1)`-st derivative. Slices are independent and run in parallel;
/// witnesses are reported in deterministic order.
pub fn hm_test(f: &DensitySpec, k: u32, cfg: &HmConfig) -> Result<HmReport> {
    if k < 1 {
        return Err(Error::InvalidParameter("hm_test requires k >= 1".into()));
    }
    if cfg.w_points < k as usize + 2 || cfg.u_points < 1 {
        return Err(Error::InvalidParameter(
            "hm_test grid too small for the requested order".into(),
        ));
    }
    let prec = cfg.prec;
    let (u_lo, u_hi) = match cfg.u_range {
        Some(r) => r,
        None => default_u_range(f)?,
    };
    let u_grid = if cfg.u_points == 1 {
        vec![u_lo]
    } else {
        geometric_grid(u_lo, u_hi, cfg.u_points)
    };
    // Nudge the offsets so grid nodes cannot land exactly on support edges,
    // where densities with endpoint blowups evaluate to infinity.
    let jitter = 1.0 + 2f64.powi(-38);
    let mut w_grid: Vec<f64> = Vec::with_capacity(cfg.w_points);
    w_grid.push(2.0);
    let offsets = geometric_grid(cfg.w_offset_min * jitter, cfg.w_max - 2.0, cfg.w_points - 1);
    w_grid.extend(offsets.iter().map(|g| 2.0 + g));

    let slices: Result<Vec<(usize, Vec<HmWitness>, f64, bool)>> = u_grid
        .par_iter()
        .enumerate()
        .map(|(ui, &u)| {
            let u_mp = mp::f(prec, u);
            let mut h: Vec<Float> = Vec::with_capacity(w_grid.len());
            for &w in &w_grid {
                h.push(h_slice_mp(f, &u_mp, &mp::f(prec, w), prec)?);
            }
            let h_max = h
                .iter()
                .map(|v| v.to_f64())
                .fold(0.0f64, |a, b| a.max(b.abs()));
            let mut witnesses = Vec::new();
            // j = 0: nonnegativity of h itself.
            for (i, v) in h.iter().enumerate() {
                let vf = v.to_f64();
                if vf < -(cfg.tol_abs + cfg.tol_rel * h_max) {
                    witnesses.push(HmWitness {
                        u,
                        w: w_grid[i],
                        order: 0,
                        margin: vf,
                    });
                }
            }
            // Divided-difference cascade up to order k.
            let mut dd = h.clone();
            for j in 1..=k as usize {
                let next_len = dd.len() - 1;
                let mut next = Vec::with_capacity(next_len);
                for i in 0..next_len {
                    let span = mp::f(prec, w_grid[i + j] - w_grid[i]);
                    next.push((dd[i + 1].clone() - &dd[i]) / span);
                }
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                for (i, v) in next.iter().enumerate() {
                    let span = (w_grid[i + j] - w_grid[i]) / j as f64;
                    let scaled = sign * v.to_f64() * span.powi(j as i32);
                    let local = (0..=j)
                        .map(|m| h[i + m].to_f64().abs())
                        .fold(0.0f64, f64::max);
                    if scaled < -(cfg.tol_abs + cfg.tol_rel * local) {
                        witnesses.push(HmWitness {
                            u,
                            w: w_grid[i],
                            order: j as u32,
                            margin: scaled,
                        });
                    }
                }
                dd = next;
            }
            Ok((ui, witnesses, h_max, h_max == 0.0))
        })
        .collect();

    let mut slices = slices?;
    slices.sort_by_key(|s| s.0);
    let mut witnesses = Vec::new();
    let mut h_scale = 0.0f64;
    let mut vacuous = true;
    for (_, w, mx, vac) in slices {
        witnesses.extend(w);
        h_scale = h_scale.max(mx);
        vacuous &= vac;
    }
    let verdict = if witnesses.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(HmReport {
        order: k,
        verdict,
        witnesses,
        grid: cfg.clone(),
        h_scale,
        vacuous,
    })
}

/// Log-concavity and HM_1-certificate report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogConcavityReport {
    /// Concavity of `ln f(x)` in `x` itself.
    pub logconcave: Verdict,
    /// Concavity of the log-variable density `y -> ln(f(e^y) e^y)`;
    /// equivalent to hyperbolic monotonicity of order 1.
    pub log_variable_concave: Verdict,
    /// Monotone non-decrease of `psi(x) = -x (ln f)'(x)`; the second
    /// equivalent HM_1 certificate.
    pub psi_monotone: Verdict,
    /// Estimated `psi` on the grid.
    pub psi: Vec<(f64, f64)>,
    /// Convexity witnesses `(x, second difference)` for the `ln f` check.
    pub witnesses: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct LogConcavityConfig {
    pub points: usize,
    pub prec: u32,
    pub tol: f64,
    pub quantile_eps: f64,
}

impl Default for LogConcavityConfig {
    fn default() -> Self {
        LogConcavityConfig {
            points: 65,
            prec: 192,
            tol: 1e-9,
            quantile_eps: 1e-3,
        }
    }
}

/// Tests concavity of `ln f` (in `x` and in the log variable) by second
/// differences, and reports `psi(x) = -x (ln f)'(x)` whose monotone
/// non-decrease certifies order-1 hyperbolic monotonicity of `f` itself.
pub fn logconcavity_test(f: &DensitySpec, cfg: &LogConcavityConfig) -> Result<LogConcavityReport> {
    let prec = cfg.prec;
    let lo = f.quantile(cfg.quantile_eps, 1e-10)?;
    let hi = f.quantile(1.0 - cfg.quantile_eps, 1e-10)?;
    if !(hi > lo) {
        return Err(Error::Degenerate("empty quantile range".into()));
    }
    let n = cfg.points;
    let xs: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let mut ln_f = Vec::with_capacity(n);
    for &x in &xs {
        let v = f.eval_mp(&mp::f(prec, x), prec)?;
        if v <= 0.0 {
            let left = xs.iter().any(|&t| t < x && f.eval(t).unwrap_or(0.0) > 0.0);
            let right = xs.iter().any(|&t| t > x && f.eval(t).unwrap_or(0.0) > 0.0);
            if left && right {
                return Err(Error::SplitSupport(format!(
                    "density vanishes at interior point x = {x}"
                )));
            }
            return Err(Error::Domain(format!(
                "density not positive on the quantile range (x = {x})"
            )));
        }
        ln_f.push(v.ln());
    }

    let h = xs[1] - xs[0];
    let mut logconcave = Verdict::Pass;
    let mut witnesses = Vec::new();
    for i in 1..n - 1 {
        let dd2 = (ln_f[i + 1].clone() - 2.0f64 * ln_f[i].clone() + &ln_f[i - 1]).to_f64();
        if dd2 > cfg.tol * (1.0 + ln_f[i].to_f64().abs()) * h * h + cfg.tol {
            logconcave = Verdict::Fail;
            witnesses.push((xs[i], dd2));
        }
    }

    // Log-variable check on a geometric grid (uniform in y = ln x).
    let ys: Vec<f64> = {
        let (llo, lhi) = (lo.ln(), hi.ln());
        (0..n)
            .map(|i| llo + (lhi - llo) * i as f64 / (n - 1) as f64)
            .collect()
    };
    let mut g = Vec::with_capacity(n);
    for &y in &ys {
        let x = y.exp();
        let v = f.eval_mp(&mp::f(prec, x), prec)?;
        if v <= 0.0 {
            return Err(Error::Domain(format!(
                "density not positive at x = {x} inside the quantile range"
            )));
        }
        g.push(v.ln().to_f64() + y);
    }
    let mut log_variable_concave = Verdict::Pass;
    for i in 1..n - 1 {
        let dd2 = g[i + 1] - 2.0 * g[i] + g[i - 1];
        if dd2 > cfg.tol * (1.0 + g[i].abs()) {
            log_variable_concave = Verdict::Fail;
        }
    }

    // psi from central differences on the geometric grid:
    // psi(x) = -x d(ln f)/dx = -d(ln f)/d(ln x). Fourth-order stencil in
    // the interior, second-order at the edges.
    let dy = ys[1] - ys[0];
    let lf = |i: usize| g[i] - ys[i];
    let mut psi = Vec::with_capacity(n - 4);
    for i in 2..n - 2 {
        let d = (lf(i - 2) - 8.0 * lf(i - 1) + 8.0 * lf(i + 1) - lf(i + 2)) / (12.0 * dy);
        psi.push((ys[i].exp(), -d));
    }
    let mut psi_monotone = Verdict::Pass;
    for w in psi.windows(2) {
        if w[1].1 < w[0].1 - cfg.tol * (1.0 + w[0].1.abs()) {
            psi_monotone = Verdict::Fail;
        }
    }

    Ok(LogConcavityReport {
        logconcave,
        log_variable_concave,
        psi_monotone,
        psi,
        witnesses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v_of_w_fixed_points() {
        assert!((v_of_w(2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((v_of_w(2.5).unwrap() - 2.0).abs() < 1e-13);
        assert!((v_of_w(10.0 / 3.0).unwrap() - 3.0).abs() < 1e-13);
        assert!(v_of_w(1.99).is_err());
    }

    #[test]
    fn h_slice_uniform_values() {
        let u01 = DensitySpec::uniform(0.0, 1.0).unwrap();
        assert!((h_slice(&u01, 0.5, 2.0).unwrap() - 1.0).abs() < 1e-14);
        for w in [2.0, 3.0, 10.0] {
            assert_eq!(h_slice(&u01, 2.0, w).unwrap(), 0.0);
        }
    }

    #[test]
    fn h_slice_uniform_product_value() {
        let f = DensitySpec::uniform_product(2).unwrap();
        let u = (-1.0f64).exp();
        assert!((h_slice(&f, u, 2.0).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn h_slice_swap_symmetry() {
        // replacing v by 1/v swaps the two factors and leaves h unchanged
        let f = DensitySpec::gamma(2.0, 1.0).unwrap();
        for (u, w) in [(0.7, 2.3), (1.4, 5.0)] {
            let v = v_of_w(w).unwrap();
            let direct = f.eval(u * v).unwrap() * f.eval(u / v).unwrap();
            let h = h_slice(&f, u, w).unwrap();
            assert!((h - direct).abs() < 1e-12 * (1.0 + h.abs()));
        }
    }

    #[test]
    fn uniform_is_hm1() {
        let f = DensitySpec::uniform(0.0, 1.0).unwrap();
        let r = hm_test(&f, 1, &HmConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "witnesses: {:?}", r.witnesses);
        assert!(!r.vacuous);
    }

    #[test]
    fn triangular_is_hm2() {
        let f = DensitySpec::triangular_down();
        let r = hm_test(&f, 2, &HmConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "witnesses: {:?}", r.witnesses);
    }

    #[test]
    fn shifted_gamma_half_fails_hm1() {
        let f = DensitySpec::shifted_gamma(0.5, 1.0, 1.0).unwrap();
        let r = hm_test(&f, 1, &HmConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(!r.witnesses.is_empty());
        assert!(r.witnesses[0].margin < 0.0);
    }

    #[test]
    fn gamma_half_passes_hm1() {
        let f = DensitySpec::gamma(0.5, 1.0).unwrap();
        let r = hm_test(&f, 1, &HmConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "witnesses: {:?}", r.witnesses);
    }

    #[test]
    fn vacuous_pass_is_flagged() {
        let f = DensitySpec::uniform(0.0, 1.0).unwrap();
        let cfg = HmConfig {
            u_range: Some((5.0, 10.0)),
            ..HmConfig::default()
        };
        let r = hm_test(&f, 1, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.vacuous);
    }

    #[test]
    fn nesting_order_passes_below() {
        // passing at order k implies passing at every lower order on the
        // same grids
        let f = DensitySpec::uniform_product(2).unwrap();
        let cfg = HmConfig::default();
        let r2 = hm_test(&f, 2, &cfg).unwrap();
        assert_eq!(r2.verdict, Verdict::Pass, "witnesses: {:?}", r2.witnesses);
        let r1 = hm_test(&f, 1, &cfg).unwrap();
        assert_eq!(r1.verdict, Verdict::Pass);
    }

    #[test]
    fn report_serializes_with_schema_fields() {
        let f = DensitySpec::uniform(0.0, 1.0).unwrap();
        let r = hm_test(&f, 1, &HmConfig::default()).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["verdict"], "pass");
        assert!(json["order"].is_number());
        assert!(json["witnesses"].is_array());
        assert!(json["grid"].is_object());
    }

    #[test]
    fn logconcavity_gamma2_passes_with_linear_psi() {
        let f = DensitySpec::gamma(2.0, 1.0).unwrap();
        let r = logconcavity_test(&f, &LogConcavityConfig::default()).unwrap();
        assert_eq!(r.logconcave, Verdict::Pass);
        assert_eq!(r.psi_monotone, Verdict::Pass);
        // psi(x) = x - 1 for the unit-rate gamma with shape 2
        for (x, p) in &r.psi {
            assert!((p - (x - 1.0)).abs() < 1e-3, "psi({x}) = {p}");
        }
    }

    #[test]
    fn logconcavity_gamma_half_fails_but_psi_passes() {
        let f = DensitySpec::gamma(0.5, 1.0).unwrap();
        let r = logconcavity_test(&f, &LogConcavityConfig::default()).unwrap();
        assert_eq!(r.logconcave, Verdict::Fail);
        assert_eq!(r.psi_monotone, Verdict::Pass);
        assert_eq!(r.log_variable_concave, Verdict::Pass);
    }

    #[test]
    fn logconcavity_exponential_passes() {
        let f = DensitySpec::gamma(1.0, 1.0).unwrap();
        let r = logconcavity_test(&f, &LogConcavityConfig::default()).unwrap();
        assert_eq!(r.logconcave, Verdict::Pass);
        assert_eq!(r.psi_monotone, Verdict::Pass);
    }

    #[test]
    fn interior_zero_reports_split_support() {
        let f =
            DensitySpec::piecewise_constant(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 0.0, 1.0])
                .unwrap();
        let r = logconcavity_test(&f, &LogConcavityConfig::default());
        assert!(matches!(r, Err(Error::SplitSupport(_))), "{r:?}");
    }
}
