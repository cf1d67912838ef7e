//! Monte-Carlo execution of the quantized consensus iteration with
//! concrete quantizers.
//!
//! Each trial draws `z_i(0) = x + n_i` (a common signal plus private
//! noise, i.i.d. across `L` coordinates), then iterates
//! `z(t+1) = z(t) + (W - I)·Q(z(t))` coordinate by coordinate. Because
//! `1ᵀ(W - I) = 0`, the sample average is preserved at every step no
//! matter what the quantizers do, so the empirical MSE is measured
//! against the initial per-coordinate average.
//!
//! Rates are accounted as pooled plug-in entropy of the emitted indices
//! for entropy-coded kinds, the nominal level count for fixed-rate
//! quantization, and the model rate for the Gaussian-noise proxy.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::WeightMatrix;
use crate::rate_model::{aggregate_rate, rate_of, RateSchedule, RdModel};
use crate::rng::{derived_rng, Role};
use crate::{Error, Result};

/// Default span of a fixed-rate quantizer, in standard deviations
/// (the full range is `range_multiplier·sigma`, i.e. ±6σ at 12).
pub const DEFAULT_RANGE_MULTIPLIER: f64 = 12.0;

fn default_range_multiplier() -> f64 {
    DEFAULT_RANGE_MULTIPLIER
}

/// One slot's quantizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantizerSpec {
    /// Uniform quantizer with `2^rate_bits` levels spanning
    /// `range_multiplier` standard deviations; inputs outside the range
    /// saturate to the edge levels.
    FixedUniform {
        rate_bits: u32,
        #[serde(default = "default_range_multiplier")]
        range_multiplier: f64,
    },
    /// Plain (undithered) uniform quantizer with step `sqrt(12·distortion)`,
    /// entropy-coded.
    EcsqUniform { distortion: f64 },
    /// Subtractively dithered uniform quantizer with step
    /// `sqrt(12·distortion)`, entropy-coded; its error is uniform and
    /// input-independent.
    DitheredUniform { distortion: f64 },
    /// Additive Gaussian noise of variance `distortion` in place of
    /// quantization; `distortion = 0` is an exact lossless pass-through.
    GaussianNoiseProxy { distortion: f64 },
    /// Transmits the model mean of the slot (zero under the noisy-signal
    /// initialization); the realized distortion is the slot's marginal
    /// variance. Produced for slots the optimizer drove to zero rate.
    ZeroRate,
}

impl QuantizerSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            QuantizerSpec::FixedUniform { rate_bits, range_multiplier } => {
                if rate_bits < 1 {
                    return Err(Error::InvalidParameter(
                        "fixed-rate quantizer needs at least 1 bit".into(),
                    ));
                }
                if !(range_multiplier > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "range multiplier must be positive, got {range_multiplier}"
                    )));
                }
            }
            QuantizerSpec::EcsqUniform { distortion }
            | QuantizerSpec::DitheredUniform { distortion } => {
                if !(distortion > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "quantizer distortion must be positive, got {distortion}"
                    )));
                }
            }
            QuantizerSpec::GaussianNoiseProxy { distortion } => {
                if !(distortion >= 0.0) || !distortion.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "proxy distortion must be finite and nonnegative, got {distortion}"
                    )));
                }
            }
            QuantizerSpec::ZeroRate => {}
        }
        Ok(())
    }
}

/// Quantizer family selector used when deriving per-slot specs from an
/// optimized allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerKind {
    FixedUniform,
    EcsqUniform,
    DitheredUniform,
    GaussianNoiseProxy,
}

/// Per-(node, iteration) quantizer assignment, row-major `[t][i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSchedule {
    pub m: usize,
    pub horizon: usize,
    pub specs: Vec<QuantizerSpec>,
}

impl QuantizerSchedule {
    pub fn new(m: usize, horizon: usize, specs: Vec<QuantizerSpec>) -> Result<Self> {
        if specs.len() != m * horizon {
            return Err(Error::Dimension(format!(
                "quantizer schedule needs {} slots, got {}",
                m * horizon,
                specs.len()
            )));
        }
        for s in &specs {
            s.validate()?;
        }
        Ok(QuantizerSchedule { m, horizon, specs })
    }

    /// The same quantizer in every slot.
    pub fn uniform(m: usize, horizon: usize, spec: QuantizerSpec) -> Result<Self> {
        Self::new(m, horizon, vec![spec; m * horizon])
    }

    pub fn spec(&self, i: usize, t: usize) -> &QuantizerSpec {
        &self.specs[t * self.m + i]
    }
}

/// Maps an optimized distortion/rate allocation onto concrete quantizers.
///
/// Slots whose allocated rate is exactly zero become [`QuantizerSpec::ZeroRate`].
/// For the fixed-rate family, each remaining slot rounds its real-valued
/// rate to the nearest integer number of bits (at least 1).
pub fn schedule_from_allocation(
    kind: QuantizerKind,
    d: &crate::state_evolution::DistortionSchedule,
    r: &RateSchedule,
    range_multiplier: f64,
) -> Result<QuantizerSchedule> {
    if r.m != d.m || r.horizon != d.horizon {
        return Err(Error::Dimension(format!(
            "rate schedule is {}x{}, distortion schedule is {}x{}",
            r.m, r.horizon, d.m, d.horizon
        )));
    }
    let mut specs = Vec::with_capacity(r.m * r.horizon);
    for t in 0..r.horizon {
        for i in 0..r.m {
            let rate = r.value(i, t);
            let spec = if rate == 0.0 {
                QuantizerSpec::ZeroRate
            } else {
                match kind {
                    QuantizerKind::FixedUniform => QuantizerSpec::FixedUniform {
                        rate_bits: (rate.round() as u32).max(1),
                        range_multiplier,
                    },
                    QuantizerKind::EcsqUniform => {
                        QuantizerSpec::EcsqUniform { distortion: d.value(i, t) }
                    }
                    QuantizerKind::DitheredUniform => {
                        QuantizerSpec::DitheredUniform { distortion: d.value(i, t) }
                    }
                    QuantizerKind::GaussianNoiseProxy => {
                        QuantizerSpec::GaussianNoiseProxy { distortion: d.value(i, t) }
                    }
                }
            };
            specs.push(spec);
        }
    }
    QuantizerSchedule::new(r.m, r.horizon, specs)
}

/// Initialization of one trial: a common signal of variance `sigma_x2`
/// plus per-node noise of variance `sigma_n2`, over `l` i.i.d. coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub sigma_x2: f64,
    pub sigma_n2: f64,
    pub l: usize,
}

/// Monte-Carlo outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Empirical network MSE at `t = 0, ..., T`, averaged over coordinates,
    /// nodes, and trials.
    pub empirical_mse_per_iter: Vec<f64>,
    /// Per-slot rates in bits/symbol: pooled plug-in entropy for
    /// entropy-coded kinds, the nominal bit count for fixed-rate slots,
    /// the model rate for proxy slots, zero for zero-rate slots.
    pub empirical_rate: RateSchedule,
    /// Sum of all per-slot rates.
    pub aggregate_rate_bits: f64,
    /// Number of Monte-Carlo trials.
    pub trials: usize,
    /// Coordinates per state vector.
    pub l: usize,
    /// Master seed.
    pub seed: u64,
    /// Slots `(node, iteration)` that transmitted the model mean.
    pub zero_rate_slots: Vec<(usize, usize)>,
    /// Largest per-coordinate drift of the sample average across
    /// iterations, relative to `max(1, |initial average|)`.
    pub max_mean_drift: f64,
}

/// Midtread uniform quantization of `values` with step `delta`.
///
/// With a dither stream, each symbol draws a shared offset
/// `u ~ U(-delta/2, delta/2)` and maps `v` to `q = delta·round((v+u)/delta) - u`
/// (subtractive dither: encoder and decoder use the same `u`); without one,
/// `u = 0`. Returns the integer indices and the reconstructions.
pub fn quantize_uniform(
    values: &[f64],
    delta: f64,
    mut dither: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<i64>, Vec<f64>)> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {delta}")));
    }
    let mut indices = Vec::with_capacity(values.len());
    let mut recons = Vec::with_capacity(values.len());
    for &v in values {
        let u = match dither.as_deref_mut() {
            Some(rng) => rng.gen_range(-delta / 2.0..delta / 2.0),
            None => 0.0,
        };
        let idx = ((v + u) / delta).round() as i64;
        indices.push(idx);
        recons.push(delta * idx as f64 - u);
    }
    Ok((indices, recons))
}

/// Plug-in entropy (bits/symbol) of an index stream.
pub fn plugin_entropy_bits(indices: &[i64]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("entropy of an empty index stream".into()));
    }
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for &i in indices {
        *counts.entry(i).or_insert(0) += 1;
    }
    Ok(entropy_from_counts(&counts, indices.len() as u64))
}

fn entropy_from_counts(counts: &BTreeMap<i64, u64>, total: u64) -> f64 {
    let n = total as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// The per-slot rate a simulation reports: pooled plug-in entropy for
/// entropy-coded kinds, the nominal bit count for fixed-rate slots, and
/// the model rate (`rate_of` with the proxy's zero offset) for the
/// Gaussian-noise proxy. A lossless pass-through (`distortion = 0`) and a
/// zero-rate slot both report zero — neither emits coded symbols.
pub fn empirical_rate(indices: &[i64], spec: &QuantizerSpec, model_sigma2: f64) -> Result<f64> {
    match *spec {
        QuantizerSpec::EcsqUniform { .. } | QuantizerSpec::DitheredUniform { .. } => {
            plugin_entropy_bits(indices)
        }
        QuantizerSpec::FixedUniform { rate_bits, .. } => Ok(rate_bits as f64),
        QuantizerSpec::GaussianNoiseProxy { distortion } => {
            if distortion == 0.0 {
                Ok(0.0)
            } else {
                rate_of(&RdModel::vq_proxy(), model_sigma2, distortion)
            }
        }
        QuantizerSpec::ZeroRate => Ok(0.0),
    }
}

/// What a zero-rate slot puts on the wire: the receiver-side model mean
/// (no information flows, so both sides already share it).
pub fn zero_rate_transmission(model_mean: f64) -> f64 {
    model_mean
}

/// One slot after resolving model variances: everything a trial needs.
#[derive(Debug, Clone)]
enum ResolvedSlot {
    PassThrough,
    Proxy { noise_sd: f64 },
    Uniform { delta: f64, dithered: bool },
    Fixed { delta: f64, idx_min: i64, idx_max: i64 },
    Zero,
}

struct SlotPlan {
    resolved: Vec<ResolvedSlot>,
    /// Model marginal variance per slot, from the additive-noise forward pass.
    sigma2: Vec<f64>,
    /// Model distortion per slot fed back into the forward pass.
    d_model: Vec<f64>,
}

/// Resolves data-dependent quantizer parameters with a forward pass of the
/// additive-noise moment recursion: the variance a slot sees is determined
/// by the distortions of strictly earlier iterations, so fixed-rate steps
/// (`delta = range·sigma / 2^R`) are well defined. Zero-rate slots feed
/// their marginal variance back as the realized distortion.
fn resolve_slots(
    w: &WeightMatrix,
    init: &InitSpec,
    schedule: &QuantizerSchedule,
    horizon: usize,
) -> SlotPlan {
    let m = w.m();
    let wm = w.as_matrix();
    let w_minus_i = wm - DMatrix::identity(m, m);
    let mut sigma = DMatrix::from_element(m, m, init.sigma_x2)
        + DMatrix::identity(m, m) * init.sigma_n2;

    let n_slots = m * horizon;
    let mut resolved = Vec::with_capacity(n_slots);
    let mut sigma2 = vec![0.0; n_slots];
    let mut d_model = vec![0.0; n_slots];
    for t in 0..horizon {
        let mut d_iter = vec![0.0; m];
        for i in 0..m {
            let slot = t * m + i;
            let s2 = sigma[(i, i)];
            sigma2[slot] = s2;
            let (res, d) = match *schedule.spec(i, t) {
                QuantizerSpec::GaussianNoiseProxy { distortion } => {
                    if distortion == 0.0 {
                        (ResolvedSlot::PassThrough, 0.0)
                    } else {
                        (ResolvedSlot::Proxy { noise_sd: distortion.sqrt() }, distortion)
                    }
                }
                QuantizerSpec::EcsqUniform { distortion } => (
                    ResolvedSlot::Uniform { delta: (12.0 * distortion).sqrt(), dithered: false },
                    distortion,
                ),
                QuantizerSpec::DitheredUniform { distortion } => (
                    ResolvedSlot::Uniform { delta: (12.0 * distortion).sqrt(), dithered: true },
                    distortion,
                ),
                QuantizerSpec::FixedUniform { rate_bits, range_multiplier } => {
                    let levels = 2i64.pow(rate_bits);
                    let delta = range_multiplier * s2.sqrt() / levels as f64;
                    (
                        ResolvedSlot::Fixed {
                            delta,
                            idx_min: -(levels / 2),
                            idx_max: levels / 2 - 1,
                        },
                        delta * delta / 12.0,
                    )
                }
                QuantizerSpec::ZeroRate => (ResolvedSlot::Zero, s2),
            };
            resolved.push(res);
            d_model[slot] = d;
            d_iter[i] = d;
        }
        let noise = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d_iter));
        sigma = wm * &sigma * wm + &w_minus_i * noise * &w_minus_i;
        sigma = (&sigma + sigma.transpose()) * 0.5;
    }
    SlotPlan { resolved, sigma2, d_model }
}

struct TrialOut {
    /// Sum of squared consensus errors per iteration (over nodes and coords).
    sse: Vec<f64>,
    /// Index histograms for entropy-coded slots (`None` elsewhere).
    hists: Vec<Option<BTreeMap<i64, u64>>>,
    max_drift: f64,
}

fn run_trial(
    w_minus_i: &DMatrix<f64>,
    init: &InitSpec,
    plan: &SlotPlan,
    m: usize,
    horizon: usize,
    trial: u64,
    seed: u64,
) -> TrialOut {
    let l = init.l;
    let sx = init.sigma_x2.sqrt();
    let sn = init.sigma_n2.sqrt();

    // Common signal (node index 0 by convention) and per-node noise.
    let mut x = vec![0.0; l];
    let mut rng_x = derived_rng(seed, trial, 0, 0, Role::SignalX);
    for v in x.iter_mut() {
        let g: f64 = StandardNormal.sample(&mut rng_x);
        *v = sx * g;
    }
    let mut z = DMatrix::<f64>::zeros(m, l);
    for i in 0..m {
        let mut rng_n = derived_rng(seed, trial, i as u64, 0, Role::NoiseN);
        for c in 0..l {
            let n: f64 = StandardNormal.sample(&mut rng_n);
            z[(i, c)] = x[c] + sn * n;
        }
    }

    // Per-coordinate initial averages: the consensus values.
    let mut zbar0 = vec![0.0; l];
    for c in 0..l {
        zbar0[c] = z.column(c).sum() / m as f64;
    }

    let mut sse = Vec::with_capacity(horizon + 1);
    let mut hists: Vec<Option<BTreeMap<i64, u64>>> =
        plan.resolved
            .iter()
            .map(|r| matches!(r, ResolvedSlot::Uniform { .. }).then(BTreeMap::new))
            .collect();
    let sse_of = |z: &DMatrix<f64>| -> f64 {
        let mut acc = 0.0;
        for c in 0..l {
            for i in 0..m {
                let e = z[(i, c)] - zbar0[c];
                acc += e * e;
            }
        }
        acc
    };
    sse.push(sse_of(&z));

    let mut max_drift = 0.0f64;
    let mut q = DMatrix::<f64>::zeros(m, l);
    let mut row = vec![0.0; l];
    for t in 0..horizon {
        for i in 0..m {
            let slot = t * m + i;
            for c in 0..l {
                row[c] = z[(i, c)];
            }
            match plan.resolved[slot] {
                ResolvedSlot::PassThrough => {
                    for c in 0..l {
                        q[(i, c)] = row[c];
                    }
                }
                ResolvedSlot::Proxy { noise_sd } => {
                    let mut rng =
                        derived_rng(seed, trial, i as u64, t as u64, Role::ProxyNoise);
                    for c in 0..l {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        q[(i, c)] = row[c] + noise_sd * g;
                    }
                }
                ResolvedSlot::Uniform { delta, dithered } => {
                    let mut rng = dithered
                        .then(|| derived_rng(seed, trial, i as u64, t as u64, Role::Dither));
                    let (indices, recons) =
                        quantize_uniform(&row, delta, rng.as_mut()).expect("positive step");
                    let hist = hists[slot].as_mut().expect("entropy slot has a histogram");
                    for (c, idx) in indices.into_iter().enumerate() {
                        *hist.entry(idx).or_insert(0) += 1;
                        q[(i, c)] = recons[c];
                    }
                }
                ResolvedSlot::Fixed { delta, idx_min, idx_max } => {
                    for c in 0..l {
                        let idx = ((row[c] / delta).round() as i64).clamp(idx_min, idx_max);
                        q[(i, c)] = delta * idx as f64;
                    }
                }
                ResolvedSlot::Zero => {
                    let sent = zero_rate_transmission(0.0);
                    for c in 0..l {
                        q[(i, c)] = sent;
                    }
                }
            }
        }
        z += w_minus_i * &q;
        sse.push(sse_of(&z));
        for c in 0..l {
            let mean = z.column(c).sum() / m as f64;
            let drift = (mean - zbar0[c]).abs() / zbar0[c].abs().max(1.0);
            if drift > max_drift {
                max_drift = drift;
            }
        }
    }
    TrialOut { sse, hists, max_drift }
}

/// Runs `trials` Monte-Carlo realizations of the quantized consensus
/// iteration and aggregates MSE and rate measurements.
///
/// Trials execute in parallel but are reduced in trial order, and every
/// random stream is keyed by `(seed, trial, node, iteration, role)`, so
/// the result is bit-identical for a given seed regardless of thread
/// count.
pub fn run_consensus(
    w: &WeightMatrix,
    init: &InitSpec,
    schedule: &QuantizerSchedule,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<SimResult> {
    let m = w.m();
    if schedule.m != m {
        return Err(Error::Dimension(format!(
            "quantizer schedule is for m={}, weight matrix for m={m}",
            schedule.m
        )));
    }
    if schedule.horizon < horizon {
        return Err(Error::Dimension(format!(
            "quantizer schedule covers {} iterations, horizon is {horizon}",
            schedule.horizon
        )));
    }
    if horizon < 1 || init.l < 1 || trials < 1 {
        return Err(Error::InvalidParameter(format!(
            "need horizon ≥ 1, L ≥ 1, trials ≥ 1; got T={horizon}, L={}, trials={trials}",
            init.l
        )));
    }
    if !(init.sigma_x2 >= 0.0) || !(init.sigma_n2 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "variances must be nonnegative, got sigma_x2={}, sigma_n2={}",
            init.sigma_x2, init.sigma_n2
        )));
    }

    let plan = resolve_slots(w, init, schedule, horizon);
    let w_minus_i = w.as_matrix() - DMatrix::identity(m, m);

    let mut outs: Vec<TrialOut> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| run_trial(&w_minus_i, init, &plan, m, horizon, trial, seed))
        .collect();

    // Deterministic reduction in trial order.
    let n_slots = m * horizon;
    let mut sse = vec![0.0; horizon + 1];
    let mut hists: Vec<Option<BTreeMap<i64, u64>>> =
        plan.resolved
            .iter()
            .map(|r| matches!(r, ResolvedSlot::Uniform { .. }).then(BTreeMap::new))
            .collect();
    let mut max_drift = 0.0f64;
    for out in outs.iter_mut() {
        for (acc, v) in sse.iter_mut().zip(&out.sse) {
            *acc += v;
        }
        for (merged, part) in hists.iter_mut().zip(out.hists.iter_mut()) {
            if let (Some(merged), Some(part)) = (merged.as_mut(), part.as_mut()) {
                for (&idx, &count) in part.iter() {
                    *merged.entry(idx).or_insert(0) += count;
                }
            }
        }
        if out.max_drift > max_drift {
            max_drift = out.max_drift;
        }
    }

    let samples = (m * init.l * trials) as f64;
    let empirical_mse_per_iter: Vec<f64> = sse.iter().map(|s| s / samples).collect();

    let symbols = (init.l * trials) as u64;
    let mut rates = vec![0.0; n_slots];
    let mut zero_rate_slots = Vec::new();
    for t in 0..horizon {
        for i in 0..m {
            let slot = t * m + i;
            rates[slot] = match &plan.resolved[slot] {
                ResolvedSlot::Uniform { .. } => {
                    entropy_from_counts(hists[slot].as_ref().expect("histogram"), symbols)
                }
                ResolvedSlot::Fixed { .. } => match *schedule.spec(i, t) {
                    QuantizerSpec::FixedUniform { rate_bits, .. } => rate_bits as f64,
                    _ => unreachable!("fixed slot from fixed spec"),
                },
                ResolvedSlot::Proxy { .. } => rate_of(
                    &RdModel::vq_proxy(),
                    plan.sigma2[slot],
                    plan.d_model[slot],
                )?,
                ResolvedSlot::PassThrough => 0.0,
                ResolvedSlot::Zero => {
                    zero_rate_slots.push((i, t));
                    0.0
                }
            };
        }
    }
    let empirical_rate = RateSchedule::new(m, horizon, rates)?;
    let aggregate_rate_bits = aggregate_rate(&empirical_rate);

    Ok(SimResult {
        empirical_mse_per_iter,
        empirical_rate,
        aggregate_rate_bits,
        trials,
        l: init.l,
        seed,
        zero_rate_slots,
        max_mean_drift: max_drift,
    })
}
