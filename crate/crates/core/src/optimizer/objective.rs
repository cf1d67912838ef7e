//! Log-domain form of the rate-allocation program.
//!
//! With `y = ln d`, each slot's rate (in nats, scaled by 2) becomes
//! `max(ln S_r(y) - y_own(r), kappa)` where
//! `S_r(y) = c0_r + Σ_j c_rj·e^(y_j)` is the slot variance and
//! `kappa = -2·r_c·ln 2` the saturation floor; the MSE budget becomes
//! `ln(Σ_j a_j·e^(y_j)) ≤ ln(target - a0)`. Both sides are log-sum-exp
//! compositions of affine maps, hence convex — the geometric-program
//! convexification.

use crate::state_evolution::{GgpProblem, ScheduleMode};
use crate::{Error, Result};

/// Which MSE budget constrains the allocation.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// One budget on the network-average MSE at the horizon.
    Network(f64),
    /// One shared budget on every node's MSE at the horizon.
    MaxNode(f64),
    /// An individual budget per node.
    PerNode(Vec<f64>),
}

/// One slot row of the objective: `max(ln(c0 + Σ c·e^y) - y_own, kappa)`.
#[derive(Debug, Clone)]
pub struct Row {
    /// Index of the slot's own variable (its distortion).
    pub own: usize,
    /// Distortion-free variance contribution.
    pub c0: f64,
    /// Sparse `(variable, coefficient)` terms of the slot variance.
    pub terms: Vec<(usize, f64)>,
}

/// One posynomial constraint `Σ coef·e^y ≤ bound` (log domain at solve time).
#[derive(Debug, Clone)]
pub struct Constraint {
    /// Dense coefficients over the variables.
    pub coef: Vec<f64>,
    /// Linear-domain bound (already reduced by the lossless constant).
    pub bound: f64,
    /// Human-readable origin for error reporting.
    pub label: String,
}

/// The compiled log-domain program. Variables are per-slot distortions
/// (`n = m·T`) or per-iteration tied distortions (`n = T`).
#[derive(Debug, Clone)]
pub struct CompiledProblem {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub mode: ScheduleMode,
    pub rows: Vec<Row>,
    pub constraints: Vec<Constraint>,
    /// Log-domain upper bound per variable, `ln(d_max · c0_min)`.
    pub upper: Vec<f64>,
    /// Saturation floor `-2·r_c·ln 2`.
    pub kappa: f64,
    /// Rate offset in bits (added once per slot when converting to bits).
    pub r_c_bits: f64,
}

/// Compiles a problem and constraint selection into log-domain form.
pub fn compile(
    problem: &GgpProblem,
    mode: ScheduleMode,
    constraint: &ConstraintKind,
) -> Result<CompiledProblem> {
    let m = problem.m;
    let horizon = problem.horizon;
    let n_rows = m * horizon;
    let n = match mode {
        ScheduleMode::PerNode => n_rows,
        ScheduleMode::Constant => horizon,
    };
    let fold_var = |v: usize| match mode {
        ScheduleMode::PerNode => v,
        ScheduleMode::Constant => v / m,
    };

    let mut rows = Vec::with_capacity(n_rows);
    for r in 0..n_rows {
        let t = r / m;
        let own = match mode {
            ScheduleMode::PerNode => r,
            ScheduleMode::Constant => t,
        };
        // Fold sparse terms onto the (possibly tied) variables.
        let mut dense = vec![0.0; n];
        for &(v, c) in &problem.var_coef[r] {
            dense[fold_var(v)] += c;
        }
        let terms: Vec<(usize, f64)> =
            dense.iter().enumerate().filter(|(_, c)| **c > 0.0).map(|(v, c)| (v, *c)).collect();
        rows.push(Row { own, c0: problem.var_const[r], terms });
    }

    let fold_coef = |full: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (v, c) in full.iter().enumerate() {
            out[fold_var(v)] += c;
        }
        out
    };

    let mut constraints = Vec::new();
    match constraint {
        ConstraintKind::Network(target) => {
            let bound = feasible_bound(*target, problem.mse_const, "network MSE target")?;
            constraints.push(Constraint {
                coef: fold_coef(&problem.mse_coef),
                bound,
                label: "network".into(),
            });
        }
        ConstraintKind::MaxNode(target) => {
            for i in 0..m {
                let bound = feasible_bound(
                    *target,
                    problem.node_mse_const[i],
                    &format!("max-node MSE target at node {i}"),
                )?;
                constraints.push(Constraint {
                    coef: fold_coef(&problem.node_mse_coef[i]),
                    bound,
                    label: format!("node {i}"),
                });
            }
        }
        ConstraintKind::PerNode(targets) => {
            if targets.len() != m {
                return Err(Error::Dimension(format!(
                    "{} per-node targets for m={m}",
                    targets.len()
                )));
            }
            for (i, &target) in targets.iter().enumerate() {
                let bound = feasible_bound(
                    target,
                    problem.node_mse_const[i],
                    &format!("per-node MSE target at node {i}"),
                )?;
                constraints.push(Constraint {
                    coef: fold_coef(&problem.node_mse_coef[i]),
                    bound,
                    label: format!("node {i}"),
                });
            }
        }
    }

    // Conservative box bound: D ≤ d_max·c0 per slot (the lossless variance
    // lower-bounds the true variance, so this never loosens the d_max rule);
    // tied variables take the tightest slot bound of their iteration.
    let d_max = problem.model.d_max;
    let mut upper = vec![f64::INFINITY; n];
    for r in 0..n_rows {
        let v = match mode {
            ScheduleMode::PerNode => r,
            ScheduleMode::Constant => r / m,
        };
        let b = (d_max * problem.var_const[r]).ln();
        if b < upper[v] {
            upper[v] = b;
        }
    }

    let r_c_bits = problem.model.r_c;
    Ok(CompiledProblem {
        n,
        m,
        horizon,
        mode,
        rows,
        constraints,
        upper,
        kappa: -2.0 * r_c_bits * std::f64::consts::LN_2,
        r_c_bits,
    })
}

fn feasible_bound(target: f64, lossless: f64, what: &str) -> Result<f64> {
    if target <= lossless * (1.0 + 1e-12) {
        return Err(Error::InfeasibleTarget { target, lossless });
    }
    if !target.is_finite() {
        return Err(Error::InvalidParameter(format!("{what} must be finite, got {target}")));
    }
    Ok(target - lossless)
}

impl CompiledProblem {
    /// Slot variance `S_r` at exponentiated variables.
    pub fn row_variance(&self, row: &Row, ey: &[f64]) -> f64 {
        row.c0 + row.terms.iter().map(|&(v, c)| c * ey[v]).sum::<f64>()
    }

    /// The exact (kinked) objective in nats: `Σ_r max(ln S_r - y_own, kappa)`.
    pub fn objective_nats(&self, y: &[f64]) -> f64 {
        let ey: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        self.rows
            .iter()
            .map(|row| (self.row_variance(row, &ey).ln() - y[row.own]).max(self.kappa))
            .sum()
    }

    /// Converts the nats objective to aggregate bits: one `r_c` per slot in
    /// the unsaturated branch is already inside `kappa`'s normalization, so
    /// `bits = nats/(2·ln 2) + (m·T)·r_c`.
    pub fn bits_from_nats(&self, nats: f64) -> f64 {
        nats / (2.0 * std::f64::consts::LN_2) + (self.m * self.horizon) as f64 * self.r_c_bits
    }

    /// Exact objective in aggregate bits.
    pub fn objective_bits(&self, y: &[f64]) -> f64 {
        self.bits_from_nats(self.objective_nats(y))
    }

    /// Exact gradient of the objective at `y`, taking the active branch of
    /// each `max` (rows at or below the saturation floor contribute zero;
    /// exact kinks take the variance branch, the documented subgradient
    /// choice).
    pub fn objective_gradient(&self, y: &[f64]) -> Vec<f64> {
        let ey: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let mut g = vec![0.0; self.n];
        for row in &self.rows {
            let s = self.row_variance(row, &ey);
            let f = s.ln() - y[row.own];
            if f >= self.kappa {
                for &(v, c) in &row.terms {
                    g[v] += c * ey[v] / s;
                }
                g[row.own] -= 1.0;
            }
        }
        g
    }

    /// Log-domain value of constraint `k`: `ln(Σ coef·e^y) - ln(bound)`,
    /// nonpositive iff feasible.
    pub fn constraint_value(&self, k: usize, y: &[f64]) -> f64 {
        let c = &self.constraints[k];
        let total: f64 =
            c.coef.iter().zip(y).map(|(&a, &yv)| a * yv.exp()).sum();
        total.ln() - c.bound.ln()
    }

    /// Exact gradient of constraint `k`'s log-domain value.
    pub fn constraint_gradient(&self, k: usize, y: &[f64]) -> Vec<f64> {
        let c = &self.constraints[k];
        let ey: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let total: f64 = c.coef.iter().zip(&ey).map(|(&a, &e)| a * e).sum();
        c.coef.iter().zip(&ey).map(|(&a, &e)| a * e / total).collect()
    }

    /// Expands solved log-variables into a distortion schedule.
    pub fn schedule_from_y(&self, y: &[f64]) -> crate::state_evolution::DistortionSchedule {
        let d: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        match self.mode {
            ScheduleMode::PerNode => crate::state_evolution::DistortionSchedule::per_node(
                self.m,
                self.horizon,
                d,
            )
            .expect("solver variables have valid dimensions"),
            ScheduleMode::Constant => crate::state_evolution::DistortionSchedule::constant(
                self.m,
                self.horizon,
                d,
            )
            .expect("solver variables have valid dimensions"),
        }
    }
}
