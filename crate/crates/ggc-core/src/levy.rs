//! Excursion-time mixtures from atomic Krein measures, exponential
//! functionals of Lévy processes, and the Beta ladder-height factor.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::density::sample as density_sample;
use crate::density::{DensitySpec, SimBatch};
use crate::error::{Error, Result};
use crate::hyperbolic::{hm_test, HmConfig, HmReport};
use crate::mp;
use crate::quad::{Domain, Quad};
use crate::transform::MpFn;

/// Atomic Krein measure `K = sum_i kappa_i delta_{z_i}` together with the
/// rate `p` of the independent exponential clock.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KreinAtoms {
    /// Atoms `(z_i, kappa_i)`, all entries positive.
    pub atoms: Vec<(f64, f64)>,
    /// Exponential clock rate `p > 0`.
    pub p: f64,
}

impl KreinAtoms {
    pub fn new(atoms: Vec<(f64, f64)>, p: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter(
                "Krein measure needs at least one atom".into(),
            ));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "clock rate must be positive, got {p}"
            )));
        }
        for &(z, k) in &atoms {
            if !(z > 0.0 && z.is_finite() && k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "atom (z={z}, kappa={k}) must have positive finite entries"
                )));
            }
        }
        Ok(KreinAtoms { atoms, p })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: KreinAtoms = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("malformed Krein JSON: {e}")))?;
        KreinAtoms::new(spec.atoms, spec.p)
    }
}

/// Lévy exponent of the inverse local time at the clock rate:
/// `psi(p) = int (1 - e^(-p x)) nu(x) dx` with `nu(x) = int e^(-x z) K(dz)`,
/// which for atoms collapses to `sum_i kappa_i p / (z_i (z_i + p))`.
pub fn psi(krein: &KreinAtoms) -> f64 {
    krein
        .atoms
        .iter()
        .map(|&(z, k)| k * krein.p / (z * (z + krein.p)))
        .sum()
}

/// The mixing density together with its order-2 hyperbolic monotonicity
/// verdict (the hypothesis under which the excursion time is a generalized
/// gamma convolution).
#[derive(Clone, Debug)]
pub struct ExcursionMixture {
    pub density: DensitySpec,
    pub hm2: HmReport,
}

/// Mixing density of the excursion-time factorization: `f` is defined
/// through `f(1/u) = K((u-p) or 0, u]) / psi(p)` and read in the variable
/// `x = 1/u`, where it is an exact step function and integrates to one.
pub fn excursion_mixing_density(krein: &KreinAtoms, cfg: &HmConfig) -> Result<ExcursionMixture> {
    let total = psi(krein);
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "Krein atoms carry no mass on the clock range".into(),
        ));
    }
    // Atom z contributes on u in [z, z + p), i.e. x in (1/(z+p), 1/z].
    let mut cuts: Vec<f64> = Vec::with_capacity(2 * krein.atoms.len());
    for &(z, _) in &krein.atoms {
        cuts.push(1.0 / (z + krein.p));
        cuts.push(1.0 / z);
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() <= f64::EPSILON * a.abs());

    let mut values = Vec::with_capacity(cuts.len() - 1);
    for cell in cuts.windows(2) {
        let mid = 0.5 * (cell[0] + cell[1]);
        let u = 1.0 / mid;
        let mass: f64 = krein
            .atoms
            .iter()
            .filter(|&&(z, _)| z <= u && z > u - krein.p)
            .map(|&(_, k)| k)
            .sum();
        values.push(mass / total);
    }
    if values.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate(
            "mixing density has zero mass everywhere".into(),
        ));
    }
    let density = DensitySpec::piecewise_constant(cuts, values)?;
    let hm2 = hm_test(&density, 2, cfg)?;
    Ok(ExcursionMixture { density, hm2 })
}

/// Density of the full excursion straddling the exponential clock, evaluated
/// at `u`: the double integral collapses to
/// `sum_i kappa_i (e^(-u z_i) - e^(-u (z_i + p))) / psi(p)`.
pub fn excursion_y3_density_mp(krein: &KreinAtoms, u: &Float, prec: u32) -> Result<Float> {
    let uf = u.to_f64();
    if !(uf > 0.0) {
        return Err(Error::Domain(format!("density requires u > 0, got {uf}")));
    }
    let prec = prec.max(u.prec());
    let total = psi(krein);
    let u = Float::with_val(prec, u);
    let mut acc = mp::f(prec, 0.0);
    for &(z, k) in &krein.atoms {
        let near = (-(u.clone() * mp::f(prec, z))).exp();
        let far = (-(u.clone() * mp::f(prec, z + krein.p))).exp();
        acc += mp::f(prec, k) * (near - far);
    }
    Ok(acc / mp::f(prec, total))
}

pub fn excursion_y3_density(krein: &KreinAtoms, u: f64) -> Result<f64> {
    Ok(excursion_y3_density_mp(krein, &mp::f(96, u), 96)?.to_f64())
}

/// Positive or negative jumps for a compound Poisson log-price:
/// `X = ln V` with `V` drawn from a positive density spec.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpSpec {
    LogOf(DensitySpec),
}

impl JumpSpec {
    /// `E[X_1] = int ln(v) f(v) dv`; the drift-to-minus-infinity condition
    /// requires it to be finite and negative.
    pub fn mean(&self) -> Result<f64> {
        let JumpSpec::LogOf(f) = self;
        let prec = 96;
        let quad = Quad::new(prec)
            .with_rel_tol(1e-12)
            .with_noise_rel(f.eval_noise_rel().max(1e-14));
        let d = f.integration_domain(prec);
        let v = quad.integrate(
            |x| {
                let wp = x.prec();
                Ok(x.clone().ln() * f.eval_mp(x, wp)?)
            },
            &d,
        )?;
        let m = v.to_f64();
        if !m.is_finite() {
            return Err(Error::Integrability("jump mean diverges".into()));
        }
        Ok(m)
    }

    fn draw(&self, rng: &mut ChaCha12Rng) -> Result<f64> {
        let JumpSpec::LogOf(f) = self;
        Ok(density_sample::draw(f, rng)?.ln())
    }
}

/// A Lévy process drifting to minus infinity, in one of three shapes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevySpec {
    /// `xi_t = drift * t + sigma W_t` with `drift < 0`.
    Brownian { sigma2: f64, drift: f64 },
    /// `xi_t = sum_{i <= N_t} X_i` with negative-mean jumps.
    CompoundPoisson { rate: f64, jump: JumpSpec },
    /// `xi_t = drift * t - S_t` for a compound Poisson subordinator `S`.
    DriftMinusSubordinator {
        drift: f64,
        rate: f64,
        jump: DensitySpec,
    },
}

impl LevySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LevySpec::Brownian { sigma2, drift } => {
                if !(*sigma2 > 0.0) {
                    return Err(Error::InvalidParameter("sigma2 must be positive".into()));
                }
                if !(*drift < 0.0) {
                    return Err(Error::InvalidParameter(
                        "Brownian drift must be negative for the functional to converge".into(),
                    ));
                }
            }
            LevySpec::CompoundPoisson { rate, jump } => {
                if !(*rate > 0.0) {
                    return Err(Error::InvalidParameter("jump rate must be positive".into()));
                }
                let m = jump.mean()?;
                if !(m < 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "jump mean must be negative, got {m}"
                    )));
                }
            }
            LevySpec::DriftMinusSubordinator { drift, rate, .. } => {
                if !(*drift < 0.0) {
                    return Err(Error::InvalidParameter("drift must be negative".into()));
                }
                if !(*rate >= 0.0) {
                    return Err(Error::InvalidParameter("rate must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// Mean drift rate of `xi`, used for the horizon criterion.
    fn drift_rate(&self) -> Result<f64> {
        Ok(match self {
            LevySpec::Brownian { drift, .. } => *drift,
            LevySpec::CompoundPoisson { rate, jump } => rate * jump.mean()?,
            LevySpec::DriftMinusSubordinator { drift, .. } => *drift,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: LevySpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("malformed Levy JSON: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("levy spec serializes")
    }
}

/// Simulate `n` realizations of the exponential functional
/// `int_0^inf e^(xi_t) dt`, truncated at `horizon`.
///
/// Brownian paths march on the `dt` grid with trapezoidal accumulation;
/// jump kinds place jumps at their exact exponential arrival times and
/// integrate the piecewise-deterministic segments in closed form. Paths are
/// independent with per-path derived generators `(seed, path index)`, so
/// results do not depend on scheduling.
pub fn simulate_exp_functional(
    spec: &LevySpec,
    horizon: f64,
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<SimBatch> {
    spec.validate()?;
    if n < 1 {
        return Err(Error::InvalidParameter("need n >= 1 paths".into()));
    }
    if !(dt > 0.0 && horizon > dt) {
        return Err(Error::InvalidParameter(
            "need 0 < dt < horizon".into(),
        ));
    }
    // Estimated truncated tail is e^(mu * horizon)/|mu| against an
    // accumulated value of order 1/|mu|.
    let mu = spec.drift_rate()?;
    if mu * horizon > -13.8 {
        return Err(Error::Horizon(format!(
            "estimated tail fraction e^({mu:.3} * {horizon}) exceeds 1e-6; suggest horizon >= {:.1}",
            14.0 / mu.abs()
        )));
    }

    let samples: Result<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let v = simulate_path(spec, horizon, dt, &mut rng)?;
            Ok((i, v))
        })
        .collect();
    let mut samples = samples?;
    samples.sort_by_key(|s| s.0);
    Ok(SimBatch {
        samples: samples.into_iter().map(|(_, v)| v).collect(),
        seed,
        meta: spec.to_json(),
    })
}

fn simulate_path(spec: &LevySpec, horizon: f64, dt: f64, rng: &mut ChaCha12Rng) -> Result<f64> {
    match spec {
        LevySpec::Brownian { sigma2, drift } => {
            let sigma_step = (sigma2 * dt).sqrt();
            let steps = (horizon / dt).ceil() as usize;
            let mut xi = 0.0f64;
            let mut acc = 0.0f64;
            let mut e_prev = 1.0f64;
            for _ in 0..steps {
                xi += drift * dt + sigma_step * density_sample::standard_normal(rng);
                let e_next = xi.exp();
                acc += 0.5 * dt * (e_prev + e_next);
                e_prev = e_next;
            }
            Ok(acc)
        }
        LevySpec::CompoundPoisson { rate, jump } => {
            let mut t = 0.0f64;
            let mut xi = 0.0f64;
            let mut acc = 0.0f64;
            loop {
                let gap = density_sample::exponential(rng) / rate;
                let next = (t + gap).min(horizon);
                acc += xi.exp() * (next - t);
                if next >= horizon {
                    return Ok(acc);
                }
                xi += jump.draw(rng)?;
                t = next;
            }
        }
        LevySpec::DriftMinusSubordinator { drift, rate, jump } => {
            let mut t = 0.0f64;
            let mut xi = 0.0f64;
            let mut acc = 0.0f64;
            loop {
                let gap = if *rate > 0.0 {
                    density_sample::exponential(rng) / rate
                } else {
                    horizon
                };
                let next = (t + gap).min(horizon);
                // int_t^next e^(xi + drift (tau - t)) dtau in closed form
                acc += xi.exp() * ((drift * (next - t)).exp() - 1.0) / drift;
                if next >= horizon {
                    return Ok(acc);
                }
                xi += drift * (next - t) - density_sample::draw(jump, rng)?;
                t = next;
            }
        }
    }
}

/// Bound on hyperbolic monotonicity declared by a construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HmOrderBound {
    AtLeast(u32),
    /// Hyperbolically completely monotone (every order).
    Unbounded,
}

/// Descending-ladder-height exponential functional with exponential jump
/// tail `c e^(-b s)` and drift `a_h`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderBetaSpec {
    pub b: f64,
    pub c: f64,
    pub a_h: f64,
}

#[derive(Clone, Debug)]
pub struct LadderFactor {
    pub density: DensitySpec,
    pub order: HmOrderBound,
}

/// The exponential functional of the ladder-height subordinator: a scaled
/// Beta variable `(1/a_h) Z_{b+1, c/a_h}` when the drift is positive, and a
/// Gamma(b+1, c) variable when the drift vanishes.
pub fn ladder_factor(spec: &LadderBetaSpec) -> Result<LadderFactor> {
    if !(spec.b > 0.0 && spec.c > 0.0 && spec.a_h >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need b > 0, c > 0, a_h >= 0; got ({}, {}, {})",
            spec.b, spec.c, spec.a_h
        )));
    }
    if spec.a_h > 0.0 {
        let beta = DensitySpec::beta(spec.b + 1.0, spec.c / spec.a_h)?;
        let density = if spec.a_h == 1.0 {
            beta
        } else {
            DensitySpec::scaled(beta, 1.0 / spec.a_h)?
        };
        let order = ((spec.b + 1.0).floor() as u32).min((spec.c / spec.a_h).floor() as u32);
        Ok(LadderFactor {
            density,
            order: HmOrderBound::AtLeast(order),
        })
    } else {
        Ok(LadderFactor {
            density: DensitySpec::gamma(spec.b + 1.0, spec.c)?,
            order: HmOrderBound::Unbounded,
        })
    }
}

/// Kolmogorov-Smirnov sup-distance between the empirical CDF of a batch and
/// a reference density's quadrature CDF.
pub fn ks_distance(batch: &SimBatch, reference: &DensitySpec) -> Result<f64> {
    if batch.samples.is_empty() {
        return Err(Error::InvalidParameter("empty sample batch".into()));
    }
    let mut xs = batch.samples.clone();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let prec = 64;
    let quad = Quad::new(prec)
        .with_rel_tol(1e-10)
        .with_abs_tol(1e-12)
        .with_noise_rel(reference.eval_noise_rel().max(1e-13));
    let breaks = reference.interior_breaks();
    let (lo, hi) = reference.support();

    let mut d = 0.0f64;
    let mut cdf = reference.cdf(xs[0], 96)?;
    let mut prev = xs[0];
    for (i, &x) in xs.iter().enumerate() {
        if x > prev {
            let inc = if prev >= hi || x <= lo {
                0.0
            } else {
                let a = prev.max(lo);
                let b = x.min(hi);
                let dom = Domain::finite(prec, a, b).with_breaks(breaks.clone());
                quad.integrate(|t| reference.eval_mp(t, t.prec()), &dom)?
                    .to_f64()
            };
            cdf = (cdf + inc).min(1.0);
            prev = x;
        }
        let hi_gap = (i as f64 + 1.0) / n - cdf;
        let lo_gap = cdf - i as f64 / n;
        d = d.max(hi_gap).max(lo_gap);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Empirical Laplace transform of a sample batch, usable as a detector
/// handle; its noise floor is the batch's statistical error, so precision
/// retries are skipped.
pub struct EmpiricalLt {
    samples: Vec<f64>,
    noise: f64,
}

impl EmpiricalLt {
    pub fn new(batch: &SimBatch) -> Result<Self> {
        if batch.samples.is_empty() {
            return Err(Error::InvalidParameter("empty sample batch".into()));
        }
        let n = batch.samples.len() as f64;
        // Conservative: the transform lives in (0, 1], so a 1/sqrt(n) bound
        // on the standard error covers every s.
        Ok(EmpiricalLt {
            samples: batch.samples.clone(),
            noise: 3.0 / n.sqrt(),
        })
    }
}

impl MpFn for EmpiricalLt {
    fn eval(&self, s: &Float, prec: u32) -> Result<Float> {
        let sf = s.to_f64();
        let mean = self
            .samples
            .iter()
            .map(|x| (-sf * x).exp())
            .sum::<f64>()
            / self.samples.len() as f64;
        Ok(mp::f(prec.max(s.prec()), mean))
    }

    fn noise_rel(&self, _prec: u32) -> f64 {
        self.noise
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Verdict;

    fn single_atom() -> KreinAtoms {
        KreinAtoms::new(vec![(1.0, 1.0)], 1.0).unwrap()
    }

    #[test]
    fn psi_closed_form_and_linearity() {
        let k = single_atom();
        assert!((psi(&k) - 0.5).abs() < 1e-15);
        let doubled = KreinAtoms::new(vec![(1.0, 2.0)], 1.0).unwrap();
        assert!((psi(&doubled) - 1.0).abs() < 1e-15);
        let small_clock = KreinAtoms::new(vec![(1.0, 1.0)], 1e-9).unwrap();
        assert!(psi(&small_clock) < 1e-8);
    }

    #[test]
    fn single_atom_mixing_density() {
        let k = single_atom();
        let m = excursion_mixing_density(&k, &HmConfig::default()).unwrap();
        // supported on (1/2, 1] with constant value 2
        assert!((m.density.eval(0.75).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(m.density.eval(0.4).unwrap(), 0.0);
        assert!(m.density.normalization_defect(128).unwrap() < 1e-12);
        // an indicator-type density is order-1 but not order-2
        assert_eq!(m.hm2.verdict, Verdict::Fail);
        let hm1 = hm_test(&m.density, 1, &HmConfig::default()).unwrap();
        assert_eq!(hm1.verdict, Verdict::Pass, "{:?}", hm1.witnesses);
    }

    #[test]
    fn y3_density_closed_form_vs_brute_force() {
        let k = single_atom();
        // oracle: direct double integral
        // (1/psi) int_0^inf u e^(-u x) K((x-p, x]) dx at u = 1, where the
        // indicator restricts x to [1, 2)
        let prec = 128;
        let quad = Quad::new(prec).with_rel_tol(1e-20);
        let u = 1.0f64;
        let oracle = quad
            .integrate(
                |x| {
                    let wp = x.prec();
                    Ok(mp::f(wp, u) * (-(x.clone() * mp::f(wp, u))).exp())
                },
                &Domain::finite(prec, 1.0, 2.0),
            )
            .unwrap()
            .to_f64()
            / psi(&k);
        let v = excursion_y3_density(&k, 1.0).unwrap();
        assert!((v - oracle).abs() < 1e-12, "{v} vs {oracle}");
        // closed form value
        let e = |x: f64| (-x).exp();
        assert!((v - 2.0 * (e(1.0) - e(2.0))).abs() < 1e-12);
    }

    #[test]
    fn y3_density_normalizes() {
        let k = KreinAtoms::new(vec![(0.5, 1.0), (2.0, 0.25)], 0.7).unwrap();
        let prec = 128;
        let quad = Quad::new(prec).with_rel_tol(1e-12);
        let total = quad
            .integrate(
                |u| excursion_y3_density_mp(&k, u, u.prec()),
                &Domain::to_infinity(prec, 0.0).singular(true, false),
            )
            .unwrap()
            .to_f64();
        assert!((total - 1.0).abs() < 1e-10, "total {total}");
    }

    #[test]
    fn y3_matches_gamma2_mixture() {
        // the excursion density is the product density of Gamma(2,1) with
        // the mixing law
        let k = KreinAtoms::new(vec![(1.0, 1.0), (1.5, 0.5)], 1.0).unwrap();
        let m = excursion_mixing_density(&k, &HmConfig::default()).unwrap();
        let g2 = DensitySpec::gamma(2.0, 1.0).unwrap();
        for u in [0.3, 1.0, 2.5, 6.0] {
            let direct = excursion_y3_density(&k, u).unwrap();
            let via_mixture = crate::mixture::product_density(&g2, &m.density, u).unwrap();
            assert!(
                (direct - via_mixture).abs() < 1e-7,
                "u={u}: {direct} vs {via_mixture}"
            );
        }
    }

    #[test]
    fn drift_only_path_integral_is_exact() {
        let spec = LevySpec::DriftMinusSubordinator {
            drift: -1.0,
            rate: 0.0,
            jump: DensitySpec::uniform(0.0, 1.0).unwrap(),
        };
        let batch = simulate_exp_functional(&spec, 21.0, 1e-3, 8, 42).unwrap();
        for s in &batch.samples {
            assert!((s - 1.0).abs() < 1e-6, "sample {s}");
        }
    }

    #[test]
    fn subordinator_samples_bounded_and_reproducible() {
        let spec = LevySpec::DriftMinusSubordinator {
            drift: -2.0,
            rate: 3.0,
            jump: DensitySpec::uniform(0.0, 1.0).unwrap(),
        };
        let b1 = simulate_exp_functional(&spec, 10.0, 1e-3, 500, 7).unwrap();
        let b2 = simulate_exp_functional(&spec, 10.0, 1e-3, 500, 7).unwrap();
        for (x, y) in b1.samples.iter().zip(b2.samples.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let bound = 1.0 / 2.0 + 10.0 * 1e-3;
        for s in &b1.samples {
            assert!(*s > 0.0 && *s <= bound, "sample {s} vs bound {bound}");
        }
    }

    #[test]
    fn compound_poisson_mean_matches() {
        // jumps X = ln U give E[e^X] = 1/2, so E[I] = int e^(-t rate/2).. =
        // 2/rate; with rate 1 the mean is 2
        let spec = LevySpec::CompoundPoisson {
            rate: 1.0,
            jump: JumpSpec::LogOf(DensitySpec::uniform(0.0, 1.0).unwrap()),
        };
        let n = 20_000;
        let batch = simulate_exp_functional(&spec, 40.0, 1e-2, n, 11).unwrap();
        let mean = batch.samples.iter().sum::<f64>() / n as f64;
        let var = batch
            .samples
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / n as f64;
        let sigma = (var / n as f64).sqrt();
        assert!(
            (mean - 2.0).abs() < 4.0 * sigma + 0.01,
            "mean {mean}, sigma {sigma}"
        );
    }

    #[test]
    fn horizon_criterion_rejected() {
        let spec = LevySpec::Brownian {
            sigma2: 1.0,
            drift: -0.1,
        };
        let r = simulate_exp_functional(&spec, 20.0, 1e-2, 4, 0);
        assert!(matches!(r, Err(Error::Horizon(_))), "{r:?}");
    }

    #[test]
    fn positive_jump_mean_rejected() {
        // V ~ U(1, 2) has E[ln V] > 0
        let spec = LevySpec::CompoundPoisson {
            rate: 1.0,
            jump: JumpSpec::LogOf(DensitySpec::uniform(1.0, 2.0).unwrap()),
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn ladder_factor_branches() {
        let f = ladder_factor(&LadderBetaSpec {
            b: 1.0,
            c: 2.0,
            a_h: 1.0,
        })
        .unwrap();
        // Beta(2,2): 6 x (1 - x)
        assert!((f.density.eval(0.5).unwrap() - 1.5).abs() < 1e-10);
        assert_eq!(f.order, HmOrderBound::AtLeast(2));

        let g = ladder_factor(&LadderBetaSpec {
            b: 1.0,
            c: 2.0,
            a_h: 0.0,
        })
        .unwrap();
        assert!(matches!(g.order, HmOrderBound::Unbounded));
        // Gamma(2, 2) density at x: 4 x e^(-2x)
        let x = 0.7;
        assert!((g.density.eval(x).unwrap() - 4.0 * x * (-2.0 * x).exp()).abs() < 1e-10);

        let h = ladder_factor(&LadderBetaSpec {
            b: 1.0,
            c: 2.0,
            a_h: 2.0,
        })
        .unwrap();
        assert_eq!(h.density.support().1, 0.5);
    }

    #[test]
    fn ks_distance_self_consistency_and_limit() {
        let g = DensitySpec::gamma(2.0, 1.0).unwrap();
        let batch = density_sample::sample(&g, 10_000, 3).unwrap();
        let d = ks_distance(&batch, &g).unwrap();
        assert!(d < 0.02, "KS distance {d}");

        let constant = SimBatch {
            samples: vec![1.0; 100],
            seed: 0,
            meta: String::new(),
        };
        let u = DensitySpec::uniform(0.0, 1.0).unwrap();
        let d = ks_distance(&constant, &u).unwrap();
        assert!((d - 1.0).abs() < 1e-9, "KS distance {d}");
    }

    #[test]
    fn dufresne_small_scale() {
        // Brownian with sigma2 = 2, drift -1: the functional is 1/Gamma(1,1)
        let spec = LevySpec::Brownian {
            sigma2: 2.0,
            drift: -1.0,
        };
        let batch = simulate_exp_functional(&spec, 25.0, 1e-2, 20_000, 2024).unwrap();
        let inv_gamma =
            DensitySpec::power_of(DensitySpec::gamma(1.0, 1.0).unwrap(), -1.0).unwrap();
        let d = ks_distance(&batch, &inv_gamma).unwrap();
        assert!(d < 0.03, "KS distance {d}");
    }
}
