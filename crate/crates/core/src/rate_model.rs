//! Operational rate-distortion relationships.
//!
//! A quantizer family maps a source variance and target distortion to a
//! coding rate through `R = 0.5·log2(max{sigma²/D, 2^(-2·r_c)}) + r_c`,
//! which is the high-rate entropy-coded quantizer law with an explicit
//! saturation at zero rate. Entropy-coded scalar quantization and its
//! dithered variant share the offset `r_c = 0.5·log2(pi·e/6)`; the
//! vector-quantizer proxy is the Gaussian rate-distortion bound (`r_c = 0`);
//! fixed-rate uniform quantization takes its rate from its level count in
//! the simulator, not from this law.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::state_evolution::{DistortionSchedule, GgpProblem};
use crate::{Error, Result};

/// Quantizer families with an operational RD description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerFamily {
    /// Entropy-coded uniform scalar quantization (midtread).
    Ecsq,
    /// Subtractively dithered uniform quantization, entropy coded.
    DitheredUniform,
    /// Fixed-rate uniform quantization over a clamped range.
    FixedUniform,
    /// Gaussian-noise proxy for RD-optimal vector quantization.
    VqProxy,
}

/// The offset constant for entropy-coded scalar quantization,
/// `0.5·log2(pi·e/6) ≈ 0.2546` bits.
pub fn ecsq_rate_constant() -> f64 {
    0.5 * (std::f64::consts::PI * std::f64::consts::E / 6.0).log2()
}

/// Default probability for the nonzero-index rule that bounds distortion.
pub const DEFAULT_NONZERO_PROB: f64 = 0.01;

/// An operational RD model: family, rate offset, and the maximum normalized
/// distortion (relative to the source variance at the quantizer input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdModel {
    pub family: QuantizerFamily,
    /// Rate offset `r_c` in bits.
    pub r_c: f64,
    /// Maximum normalized distortion `D_max` (dimensionless).
    pub d_max: f64,
}

impl RdModel {
    /// Validates and builds a model. The vector-quantizer proxy has no
    /// offset by definition, so a nonzero `r_c` is rejected for it.
    pub fn new(family: QuantizerFamily, r_c: f64, d_max: f64) -> Result<Self> {
        if !(r_c >= 0.0) {
            return Err(Error::InvalidParameter(format!("r_c must be nonnegative, got {r_c}")));
        }
        if !(d_max > 0.0) {
            return Err(Error::InvalidParameter(format!("d_max must be positive, got {d_max}")));
        }
        if family == QuantizerFamily::VqProxy && r_c != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "vq_proxy forces r_c = 0 (Gaussian RD bound), got {r_c}"
            )));
        }
        Ok(RdModel { family, r_c, d_max })
    }

    /// Entropy-coded scalar quantization with default constants.
    pub fn ecsq() -> Self {
        RdModel {
            family: QuantizerFamily::Ecsq,
            r_c: ecsq_rate_constant(),
            d_max: d_max_from_nonzero_rule(DEFAULT_NONZERO_PROB).expect("default probability is valid"),
        }
    }

    /// Dithered uniform quantization; shares the ECSQ offset by default.
    pub fn dithered_uniform() -> Self {
        RdModel { family: QuantizerFamily::DitheredUniform, ..Self::ecsq() }
    }

    /// Gaussian-noise proxy for RD-optimal vector quantization.
    pub fn vq_proxy() -> Self {
        RdModel { family: QuantizerFamily::VqProxy, r_c: 0.0, ..Self::ecsq() }
    }

    /// Fixed-rate uniform quantization. Its simulator rate comes from the
    /// level count; the RD law with no offset is used for planning only.
    pub fn fixed_uniform() -> Self {
        RdModel { family: QuantizerFamily::FixedUniform, r_c: 0.0, ..Self::ecsq() }
    }
}

/// The operational rate for variance `sigma2` and distortion `d`, in bits:
/// `0.5·log2(max{sigma2/d, 2^(-2·r_c)}) + r_c`. Exactly zero on the
/// saturation region `sigma2/d ≤ 2^(-2·r_c)`.
pub fn rate_of(model: &RdModel, sigma2: f64, d: f64) -> Result<f64> {
    if !(sigma2 > 0.0) || !(d > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rate_of needs positive inputs, got sigma2={sigma2}, d={d}"
        )));
    }
    let ratio = sigma2 / d;
    let saturation = 2f64.powf(-2.0 * model.r_c);
    if ratio <= saturation {
        Ok(0.0)
    } else {
        Ok(0.5 * ratio.log2() + model.r_c)
    }
}

/// The maximum normalized distortion implied by requiring a zero-centered
/// uniform quantizer on a unit-variance Gaussian to emit a nonzero index
/// with probability at least `p_nonzero`: solve `2·Q(delta/2) = p_nonzero`
/// for the step `delta`, return `D_max = delta²/12`.
pub fn d_max_from_nonzero_rule(p_nonzero: f64) -> Result<f64> {
    if !(p_nonzero > 0.0 && p_nonzero < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p_nonzero must lie in (0, 1), got {p_nonzero}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    // Q(x) = 1 - Phi(x), so Q(delta/2) = p/2 gives delta = 2·Phi^{-1}(1 - p/2).
    let delta = 2.0 * normal.inverse_cdf(1.0 - p_nonzero / 2.0);
    Ok(delta * delta / 12.0)
}

/// Per-node, per-iteration coding rates in bits per symbol, row-major
/// `[t][i]`. Rates are real-valued; only the fixed-rate simulator path
/// rounds to integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub m: usize,
    pub horizon: usize,
    pub r: Vec<f64>,
}

impl RateSchedule {
    pub fn new(m: usize, horizon: usize, r: Vec<f64>) -> Result<Self> {
        if r.len() != m * horizon {
            return Err(Error::Dimension(format!(
                "rate schedule needs {} values, got {}",
                m * horizon,
                r.len()
            )));
        }
        if let Some(bad) = r.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rates must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(RateSchedule { m, horizon, r })
    }

    /// Rate at node `i`, iteration `t`.
    pub fn value(&self, i: usize, t: usize) -> f64 {
        self.r[t * self.m + i]
    }
}

/// Aggregate coding rate: total bits per scalar symbol summed over all
/// nodes and iterations.
pub fn aggregate_rate(r: &RateSchedule) -> f64 {
    r.r.iter().sum()
}

/// Composes the affine variance forms with the RD law: the rate schedule
/// induced by a strictly positive distortion schedule.
pub fn schedule_from_distortions(
    model: &RdModel,
    problem: &GgpProblem,
    d: &DistortionSchedule,
) -> Result<RateSchedule> {
    if d.m != problem.m || d.horizon != problem.horizon {
        return Err(Error::Dimension(format!(
            "schedule is {}x{}, problem is {}x{}",
            d.m, d.horizon, problem.m, problem.horizon
        )));
    }
    let sigma2 = problem.sigma2_at(d);
    let slots = d.slot_values();
    let r: Vec<f64> = sigma2
        .iter()
        .zip(&slots)
        .map(|(&s2, &dv)| rate_of(model, s2, dv))
        .collect::<Result<_>>()?;
    RateSchedule::new(problem.m, problem.horizon, r)
}
