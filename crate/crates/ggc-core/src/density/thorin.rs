//! Thorin parameterization of a generalized gamma convolution: left
//! extremity `a`, an atomic part of the U-measure, and an optional U-density.
//!
//! The Laplace transform is
//! `exp(-a s + sum_i u_i ln(t_i/(t_i+s)) + int ln(t/(t+s)) u(t) dt)`.

use std::fmt;
use std::sync::Arc;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mp;
use crate::quad::{Domain, Quad};

/// Optional density part of the U-measure.
#[derive(Clone)]
pub struct UDensity(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for UDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UDensity(<fn>)")
    }
}

/// GGC parameters: `a >= 0` and the U-measure as atoms `(t_i, u_i)` plus an
/// optional density. The JSON schema covers the atomic form only.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThorinSpec {
    pub a: f64,
    pub atoms: Vec<(f64, f64)>,
    #[serde(skip, default)]
    pub u_density: Option<UDensity>,
}

impl ThorinSpec {
    pub fn new(a: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        let spec = ThorinSpec {
            a,
            atoms,
            u_density: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_density(mut self, density: UDensity) -> Result<Self> {
        self.u_density = Some(density);
        self.validate()?;
        Ok(self)
    }

    /// Integrability invariants: atom positions/weights positive and finite,
    /// and for the density part `int_0^1 |ln t| u(t) dt` and
    /// `int_1^inf u(t)/t dt` both finite (probed numerically).
    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "left extremity must be finite and nonnegative, got {}",
                self.a
            )));
        }
        for &(t, u) in &self.atoms {
            if !(t > 0.0 && t.is_finite() && u > 0.0 && u.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "atom (t={t}, u={u}) must have positive finite entries"
                )));
            }
        }
        if let Some(UDensity(f)) = &self.u_density {
            let prec = 96;
            let quad = Quad::new(prec).with_rel_tol(1e-10).with_noise_rel(1e-14);
            let near = quad
                .integrate(
                    |t| {
                        let tf = t.to_f64();
                        Ok(mp::f(prec, f(tf).max(0.0) * tf.ln().abs()))
                    },
                    &Domain::finite(prec, 0.0, 1.0).singular(true, false),
                )
                .map_err(|e| {
                    Error::Integrability(format!("U-density fails the log test near 0: {e}"))
                })?;
            let far = quad
                .integrate(
                    |t| {
                        let tf = t.to_f64();
                        Ok(mp::f(prec, f(tf).max(0.0) / tf))
                    },
                    &Domain::to_infinity(prec, 1.0),
                )
                .map_err(|e| {
                    Error::Integrability(format!("U-density fails the 1/t tail test: {e}"))
                })?;
            if !near.is_finite() || !far.is_finite() {
                return Err(Error::Integrability(
                    "U-density integrability probe returned a non-finite value".into(),
                ));
            }
        }
        Ok(())
    }

    /// Laplace transform value at `s >= 0`; equals 1 at `s = 0` and lies in
    /// `(0, 1]`.
    pub fn laplace_mp(&self, s: &Float, prec: u32) -> Result<Float> {
        let prec = prec.max(s.prec());
        let sf = s.to_f64();
        if !(sf >= 0.0) {
            return Err(Error::Domain(format!(
                "GGC Laplace transform requires s >= 0, got {sf}"
            )));
        }
        let s = Float::with_val(prec, s);
        let mut expo = -mp::f(prec, self.a) * s.clone();
        for &(t, u) in &self.atoms {
            let t = mp::f(prec, t);
            let ratio = t.clone() / (t + s.clone());
            expo += mp::f(prec, u) * ratio.ln();
        }
        if let Some(UDensity(f)) = &self.u_density {
            // The closure yields f64 values; refining past that chases noise.
            let quad = Quad::new(prec)
                .with_rel_tol(mp::eval_rel_err(prec).max(1e-14))
                .with_noise_rel(1e-14);
            let d = Domain::to_infinity(prec, 0.0).singular(true, false);
            let part = quad.integrate(
                |t| {
                    let wp = t.prec();
                    let u = f(t.to_f64()).max(0.0);
                    let s = Float::with_val(wp, &s);
                    let ratio = t.clone() / (t.clone() + s);
                    Ok(mp::f(wp, u) * ratio.ln())
                },
                &d,
            )?;
            expo += part;
        }
        Ok(expo.exp())
    }

    pub fn laplace(&self, s: f64) -> Result<f64> {
        Ok(self.laplace_mp(&mp::f(128, s), 128)?.to_f64())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ThorinSpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("malformed Thorin JSON: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("thorin spec serializes")
    }
}
