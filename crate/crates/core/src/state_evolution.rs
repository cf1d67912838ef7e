//! Exact moment propagation for the quantized consensus update, and the
//! affine (posynomial) structure of its variances and MSEs.
//!
//! With symmetric weights and additive zero-mean quantization noise of
//! per-slot variance `D_i(t)`, the first and second moments of the states
//! `z(t)` and the consensus errors `e(t) = (I - J) z(t)` obey closed
//! recursions:
//!
//! ```text
//! mu_z(t+1)    = W mu_z(t)
//! mu_e(t+1)    = (I - J) W mu_e(t)
//! Sigma_z(t+1) = W Sigma_z(t) W + (W - I) diag(D(t)) (W - I)
//! Sigma_e(t)   = (I - J) Sigma_z(t) (I - J),      J = (1/m) 1 1ᵀ
//! ```
//!
//! Unrolling them shows every marginal variance and every MSE is an affine
//! function of the distortions with nonnegative coefficients (each
//! coefficient is a squared matrix entry). [`extract_ggp`] materializes
//! those affine forms; they are what make the rate-allocation problem a
//! geometric program.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::graph::WeightMatrix;
use crate::rate_model::RdModel;
use crate::{Error, Result};

/// Relative eigenvalue floor for the positive-semidefiniteness check:
/// eigenvalues must stay above `-PSD_TOL * trace(state covariance)`.
pub const PSD_TOL: f64 = 1e-10;

/// First and second moments of states and errors at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    /// Iteration index.
    pub t: usize,
    /// Mean of the node states.
    pub mu_z: DVector<f64>,
    /// Covariance of the node states.
    pub sigma_z: DMatrix<f64>,
    /// Mean of the consensus errors.
    pub mu_e: DVector<f64>,
    /// Covariance of the consensus errors.
    pub sigma_e: DMatrix<f64>,
}

impl MomentState {
    /// Number of nodes.
    pub fn m(&self) -> usize {
        self.mu_z.len()
    }
}

/// Initial moments for the noisy-signal experiment family: every node
/// observes a common signal plus private noise, `z_i(0) = x + n_i` with
/// `x ~ N(0, sigma_x2)` and `n_i ~ N(0, sigma_n2)`, giving
/// `mu_z(0) = 0` and `Sigma_z(0) = sigma_x2·11ᵀ + sigma_n2·I`.
pub fn signal_model_initial(m: usize, sigma_x2: f64, sigma_n2: f64) -> Result<MomentState> {
    if m < 1 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if sigma_x2 < 0.0 || sigma_n2 < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "variances must be nonnegative, got sigma_x2={sigma_x2}, sigma_n2={sigma_n2}"
        )));
    }
    let sigma = DMatrix::from_element(m, m, sigma_x2) + DMatrix::identity(m, m) * sigma_n2;
    initial_from_moments(DVector::zeros(m), sigma)
}

/// Initial moments from arbitrary user-supplied mean and covariance.
pub fn initial_from_moments(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<MomentState> {
    let m = mu.len();
    if sigma.nrows() != m || sigma.ncols() != m {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, mean has length {m}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let max_asym = (&sigma - sigma.transpose()).amax();
    if max_asym > 1e-12 * sigma.amax().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "initial covariance not symmetric (max asymmetry {max_asym})"
        )));
    }
    let state = finish_state(0, mu, sigma, projector(m));
    check_psd(&state)?;
    Ok(state)
}

/// The centering projector `I - J`.
fn projector(m: usize) -> DMatrix<f64> {
    DMatrix::identity(m, m) - DMatrix::from_element(m, m, 1.0 / m as f64)
}

/// Fills in the error moments from the state moments.
fn finish_state(t: usize, mu_z: DVector<f64>, sigma_z: DMatrix<f64>, proj: DMatrix<f64>) -> MomentState {
    let mu_e = &proj * &mu_z;
    let sigma_e = symmetrized(&proj * &sigma_z * &proj);
    MomentState { t, mu_z, sigma_z, mu_e, sigma_e }
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    let mt = m.transpose();
    (m + mt) * 0.5
}

fn check_psd(state: &MomentState) -> Result<()> {
    // The error covariance is a projection of the state covariance, so its
    // rounding noise scales with the state trace — e.g. it is exactly zero
    // in theory once consensus is reached, yet carries O(eps * trace(state))
    // dust in practice.
    let scale = state.sigma_z.trace().abs();
    for sigma in [&state.sigma_z, &state.sigma_e] {
        let floor = -PSD_TOL * scale;
        let min_eig = sigma
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &e| a.min(e));
        if min_eig < floor {
            return Err(Error::NotPsd { t: state.t, min_eig });
        }
    }
    Ok(())
}

/// Whether a distortion schedule ties all nodes at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// One distortion per (node, iteration) slot.
    PerNode,
    /// One distortion per iteration, shared by all nodes.
    Constant,
}

/// The distortion schedule `D_i(t)`, `i < m`, `t < T`.
///
/// Entries must be nonnegative; zero is permitted only for lossless
/// evaluation (the optimizer works in log space and keeps them strictly
/// positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSchedule {
    pub mode: ScheduleMode,
    pub m: usize,
    pub horizon: usize,
    /// Row-major `[t][i]` for per-node mode (length `m·T`), or per-iteration
    /// values (length `T`) for constant mode.
    pub d: Vec<f64>,
}

impl DistortionSchedule {
    /// Per-node schedule from row-major `[t][i]` values.
    pub fn per_node(m: usize, horizon: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != m * horizon {
            return Err(Error::Dimension(format!(
                "per-node schedule needs {} values, got {}",
                m * horizon,
                d.len()
            )));
        }
        Self::validated(ScheduleMode::PerNode, m, horizon, d)
    }

    /// Constant (node-tied) schedule from per-iteration values.
    pub fn constant(m: usize, horizon: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != horizon {
            return Err(Error::Dimension(format!(
                "constant schedule needs {} values, got {}",
                horizon,
                d.len()
            )));
        }
        Self::validated(ScheduleMode::Constant, m, horizon, d)
    }

    /// All-zero (lossless) schedule.
    pub fn zeros(m: usize, horizon: usize) -> Self {
        DistortionSchedule {
            mode: ScheduleMode::PerNode,
            m,
            horizon,
            d: vec![0.0; m * horizon],
        }
    }

    fn validated(mode: ScheduleMode, m: usize, horizon: usize, d: Vec<f64>) -> Result<Self> {
        if let Some(bad) = d.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "distortions must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(DistortionSchedule { mode, m, horizon, d })
    }

    /// The distortion applied at node `i`, iteration `t`.
    pub fn value(&self, i: usize, t: usize) -> f64 {
        match self.mode {
            ScheduleMode::PerNode => self.d[t * self.m + i],
            ScheduleMode::Constant => self.d[t],
        }
    }

    /// Flattened per-slot view, row-major `[t][i]`, regardless of mode.
    pub fn slot_values(&self) -> Vec<f64> {
        match self.mode {
            ScheduleMode::PerNode => self.d.clone(),
            ScheduleMode::Constant => {
                let mut out = Vec::with_capacity(self.m * self.horizon);
                for t in 0..self.horizon {
                    out.extend(std::iter::repeat(self.d[t]).take(self.m));
                }
                out
            }
        }
    }
}

/// Propagates moments from `initial` through `horizon` quantized updates,
/// returning states for `t = 0, ..., horizon`.
pub fn propagate(
    w: &WeightMatrix,
    initial: &MomentState,
    d: &DistortionSchedule,
    horizon: usize,
) -> Result<Vec<MomentState>> {
    let m = w.m();
    if initial.m() != m {
        return Err(Error::Dimension(format!(
            "initial moments are for m={}, weight matrix for m={m}",
            initial.m()
        )));
    }
    if d.m != m && d.mode == ScheduleMode::PerNode {
        return Err(Error::Dimension(format!("schedule is for m={}, expected {m}", d.m)));
    }
    if d.horizon < horizon {
        return Err(Error::Dimension(format!(
            "schedule covers {} iterations, horizon is {horizon}",
            d.horizon
        )));
    }
    let wm = w.as_matrix();
    let proj = projector(m);
    let w_minus_i = wm - DMatrix::identity(m, m);

    let mut out = Vec::with_capacity(horizon + 1);
    let mut state = finish_state(0, initial.mu_z.clone(), initial.sigma_z.clone(), proj.clone());
    check_psd(&state)?;
    for t in 0..horizon {
        let noise = DMatrix::from_diagonal(&DVector::from_fn(m, |i, _| d.value(i, t)));
        let sigma_next = symmetrized(wm * &state.sigma_z * wm + &w_minus_i * noise * &w_minus_i);
        let mu_next = wm * &state.mu_z;
        let next = finish_state(t + 1, mu_next, sigma_next, proj.clone());
        check_psd(&next)?;
        out.push(state);
        state = next;
    }
    out.push(state);
    Ok(out)
}

/// Marginal state variance `[Sigma_z(t)]_ii` at node `i`.
pub fn marginal_variance(state: &MomentState, i: usize) -> Result<f64> {
    if i >= state.m() {
        return Err(Error::Dimension(format!("node {i} out of range for m={}", state.m())));
    }
    Ok(state.sigma_z[(i, i)])
}

/// Per-node mean-squared consensus error `[Sigma_e(t) + mu_e mu_eᵀ]_ii`.
pub fn node_mse(state: &MomentState, i: usize) -> Result<f64> {
    if i >= state.m() {
        return Err(Error::Dimension(format!("node {i} out of range for m={}", state.m())));
    }
    Ok(state.sigma_e[(i, i)] + state.mu_e[i] * state.mu_e[i])
}

/// Network MSE `(1/m)·trace(Sigma_e + mu_e mu_eᵀ)` — the average of the
/// per-node MSEs.
pub fn network_mse(state: &MomentState) -> f64 {
    (state.sigma_e.trace() + state.mu_e.norm_squared()) / state.m() as f64
}

/// Network MSE after `t` lossless (zero-distortion) iterations.
pub fn lossless_mse(w: &WeightMatrix, initial: &MomentState, t: usize) -> Result<f64> {
    let states = propagate(w, initial, &DistortionSchedule::zeros(w.m(), t), t)?;
    Ok(network_mse(&states[t]))
}

/// Excess MSE over the lossless reference, in decibels.
pub fn emse(mse: f64, lossless: f64) -> Result<f64> {
    if lossless == 0.0 {
        return Err(Error::UndefinedEmse);
    }
    if lossless < 0.0 || mse < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "MSE values must be nonnegative, got mse={mse}, lossless={lossless}"
        )));
    }
    Ok(10.0 * (mse / lossless).log10())
}

/// Smallest horizon `T` whose lossless MSE falls strictly below
/// `mse_target`. Scans upward to `cap` (default `10·m`).
pub fn t_min(
    w: &WeightMatrix,
    initial: &MomentState,
    mse_target: f64,
    cap: Option<usize>,
) -> Result<usize> {
    if !(mse_target > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mse_target must be positive, got {mse_target}"
        )));
    }
    let cap = cap.unwrap_or(10 * w.m());
    let m = w.m();
    let wm = w.as_matrix();
    let proj = projector(m);
    let mut state = finish_state(0, initial.mu_z.clone(), initial.sigma_z.clone(), proj.clone());
    for t in 0..=cap {
        if network_mse(&state) < mse_target {
            return Ok(t);
        }
        let sigma_next = symmetrized(wm * &state.sigma_z * wm);
        let mu_next = wm * &state.mu_z;
        state = finish_state(t + 1, mu_next, sigma_next, proj.clone());
    }
    Err(Error::TargetUnreachable { target: mse_target, cap })
}

/// The affine dependence of variances and MSEs on the distortion schedule.
///
/// Rows and variables are indexed row-major: slot `(i, t)` maps to
/// `t·m + i`. For every distortion vector `d`:
///
/// ```text
/// sigma_i^2(d, t) = var_const[t·m+i] + Σ_v var_coef[t·m+i][v]·d[v]
/// MSE(d, T)       = mse_const       + Σ_v mse_coef[v]·d[v]
/// node MSE_i(d,T) = node_mse_const[i] + Σ_v node_mse_coef[i][v]·d[v]
/// ```
///
/// All coefficients are squares of matrix entries, hence nonnegative —
/// the structure that makes rate allocation a geometric program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GgpProblem {
    pub m: usize,
    pub horizon: usize,
    pub mode: ScheduleMode,
    /// Lossless marginal variance per slot, `c0[t·m+i] = [Wᵗ Σ_z(0) Wᵗ]_ii`.
    pub var_const: Vec<f64>,
    /// Sparse rows: `var_coef[row]` lists `(var, coef)` with
    /// `coef = ([W^(t-1-s) (W-I)]_ik)²` for `var = s·m + k`, `s < t`.
    pub var_coef: Vec<Vec<(usize, f64)>>,
    /// Lossless network MSE at the horizon.
    pub mse_const: f64,
    /// Dense MSE coefficients per variable,
    /// `(1/m)·Σ_i ([(I-J) W^(T-1-s) (W-I)]_ik)²`.
    pub mse_coef: Vec<f64>,
    /// Lossless per-node MSE at the horizon.
    pub node_mse_const: Vec<f64>,
    /// Dense per-node MSE coefficients, `node_mse_coef[i][v]`.
    pub node_mse_coef: Vec<Vec<f64>>,
    /// The rate model the objective will be built against.
    pub model: RdModel,
}

impl GgpProblem {
    /// Number of per-slot rows (`m·T`).
    pub fn rows(&self) -> usize {
        self.m * self.horizon
    }

    /// Marginal variances at a schedule, via the affine forms.
    pub fn sigma2_at(&self, d: &DistortionSchedule) -> Vec<f64> {
        let slots = d.slot_values();
        self.var_const
            .iter()
            .zip(&self.var_coef)
            .map(|(c0, row)| c0 + row.iter().map(|&(v, c)| c * slots[v]).sum::<f64>())
            .collect()
    }

    /// Network MSE at a schedule, via the affine form.
    pub fn network_mse_at(&self, d: &DistortionSchedule) -> f64 {
        let slots = d.slot_values();
        self.mse_const + self.mse_coef.iter().zip(&slots).map(|(a, d)| a * d).sum::<f64>()
    }

    /// Per-node MSE at a schedule, via the affine form.
    pub fn node_mse_at(&self, d: &DistortionSchedule, i: usize) -> f64 {
        let slots = d.slot_values();
        self.node_mse_const[i]
            + self.node_mse_coef[i].iter().zip(&slots).map(|(a, d)| a * d).sum::<f64>()
    }
}

/// Extracts the affine forms by unrolling the moment recursions.
///
/// Matrix powers are built by repeated multiplication with symmetrization
/// after each product, which keeps the projector identities testable at
/// tight tolerance.
pub fn extract_ggp(
    w: &WeightMatrix,
    initial: &MomentState,
    horizon: usize,
    model: &RdModel,
    mode: ScheduleMode,
) -> Result<GgpProblem> {
    if horizon < 1 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let m = w.m();
    if initial.m() != m {
        return Err(Error::Dimension(format!(
            "initial moments are for m={}, weight matrix for m={m}",
            initial.m()
        )));
    }
    let wm = w.as_matrix();
    let proj = projector(m);
    let w_minus_i = wm - DMatrix::identity(m, m);

    // Powers W^0 .. W^horizon, symmetrized as they grow.
    let mut powers: Vec<DMatrix<f64>> = Vec::with_capacity(horizon + 1);
    powers.push(DMatrix::identity(m, m));
    for _ in 0..horizon {
        powers.push(symmetrized(powers.last().unwrap() * wm));
    }

    let rows = m * horizon;
    let mut var_const = vec![0.0; rows];
    let mut var_coef = vec![Vec::new(); rows];
    for t in 0..horizon {
        let mt = symmetrized(&powers[t] * &initial.sigma_z * &powers[t]);
        for i in 0..m {
            var_const[t * m + i] = mt[(i, i)];
        }
        for s in 0..t {
            let prop = &powers[t - 1 - s] * &w_minus_i;
            for i in 0..m {
                for k in 0..m {
                    let c = prop[(i, k)] * prop[(i, k)];
                    if c > 0.0 {
                        var_coef[t * m + i].push((s * m + k, c));
                    }
                }
            }
        }
        for row in var_coef[t * m..(t + 1) * m].iter_mut() {
            row.sort_unstable_by_key(|&(v, _)| v);
        }
    }

    // Lossless propagation supplies the constants (it also carries any
    // nonzero-mean contribution, which is distortion-independent).
    let lossless = propagate(w, initial, &DistortionSchedule::zeros(m, horizon), horizon)?;
    let mse_const = network_mse(&lossless[horizon]);
    let node_mse_const: Vec<f64> =
        (0..m).map(|i| node_mse(&lossless[horizon], i)).collect::<Result<_>>()?;

    let mut mse_coef = vec![0.0; rows];
    let mut node_mse_coef = vec![vec![0.0; rows]; m];
    for s in 0..horizon {
        let prop = &proj * &powers[horizon - 1 - s] * &w_minus_i;
        for k in 0..m {
            let mut col_sum = 0.0;
            for i in 0..m {
                let c = prop[(i, k)] * prop[(i, k)];
                node_mse_coef[i][s * m + k] = c;
                col_sum += c;
            }
            mse_coef[s * m + k] = col_sum / m as f64;
        }
    }

    Ok(GgpProblem {
        m,
        horizon,
        mode,
        var_const,
        var_coef,
        mse_const,
        mse_coef,
        node_mse_const,
        node_mse_coef,
        model: model.clone(),
    })
}
