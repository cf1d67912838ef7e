//! Rate-allocation solvers.
//!
//! The exact program minimizes the aggregate coding rate over per-slot
//! distortions subject to an MSE budget at the horizon; a tied variant
//! shares one distortion per iteration. Both are geometric programs and
//! are solved in log-domain convex form by an interior-point method
//! ([`solver`]). A brute-force grid oracle ([`grid_search_oracle`])
//! certifies solutions on small instances.

mod objective;
mod solver;

pub use objective::{compile, CompiledProblem, ConstraintKind, Constraint, Row};
pub use solver::SolverReport;

use crate::rate_model::{schedule_from_distortions, RateSchedule};
use crate::state_evolution::{DistortionSchedule, GgpProblem, ScheduleMode};
use crate::{Error, Result};

/// Default relative objective tolerance.
pub const DEFAULT_TOL: f64 = 1e-4;

/// A solved rate allocation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GgpSolution {
    /// Optimal distortion schedule.
    pub d_star: DistortionSchedule,
    /// Induced per-slot rates.
    pub r_star: RateSchedule,
    /// Aggregate rate at the optimum, in bits.
    pub objective_bits: f64,
    /// Network MSE at the horizon under `d_star`.
    pub achieved_mse: f64,
    /// Convergence diagnostics.
    pub solver_report: SolverReport,
}

fn solve_compiled(
    problem: &GgpProblem,
    mode: ScheduleMode,
    constraint: ConstraintKind,
    tol: Option<f64>,
) -> Result<GgpSolution> {
    let compiled = compile(problem, mode, &constraint)?;
    validate_positive_constants(problem)?;
    let (y, solver_report) = solver::solve(&compiled, tol.unwrap_or(DEFAULT_TOL))?;
    let d_star = compiled.schedule_from_y(&y);
    let r_star = schedule_from_distortions(&problem.model, problem, &d_star)?;
    let objective_bits = compiled.objective_bits(&y);
    let achieved_mse = problem.network_mse_at(&d_star);
    Ok(GgpSolution { d_star, r_star, objective_bits, achieved_mse, solver_report })
}

fn validate_positive_constants(problem: &GgpProblem) -> Result<()> {
    if problem.var_const.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::InvalidParameter(
            "every slot needs a positive lossless variance to be optimized".into(),
        ));
    }
    Ok(())
}

/// Solves the exact per-slot program: `m·T` distortion variables under a
/// network-MSE budget at the horizon.
pub fn solve_variable_distortion(
    problem: &GgpProblem,
    mse_target: f64,
    tol: Option<f64>,
) -> Result<GgpSolution> {
    solve_compiled(problem, ScheduleMode::PerNode, ConstraintKind::Network(mse_target), tol)
}

/// Solves the tied program: one distortion per iteration (`T` variables)
/// under the same network-MSE budget.
pub fn solve_constant_distortion(
    problem: &GgpProblem,
    mse_target: f64,
    tol: Option<f64>,
) -> Result<GgpSolution> {
    solve_compiled(problem, ScheduleMode::Constant, ConstraintKind::Network(mse_target), tol)
}

/// Node-level MSE budgets: one shared cap for every node, or one per node.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeTargets {
    /// Every node's MSE at the horizon must stay below this cap.
    Max(f64),
    /// Node `i`'s MSE must stay below `targets[i]`.
    Each(Vec<f64>),
}

/// Solves with per-node MSE constraints in place of the network budget;
/// the schedule mode is taken from the problem.
pub fn solve_with_node_constraints(
    problem: &GgpProblem,
    targets: NodeTargets,
    tol: Option<f64>,
) -> Result<GgpSolution> {
    let constraint = match targets {
        NodeTargets::Max(t) => ConstraintKind::MaxNode(t),
        NodeTargets::Each(ts) => ConstraintKind::PerNode(ts),
    };
    solve_compiled(problem, problem.mode, constraint, tol)
}

/// The oracle's per-coordinate grid: `points` log-spaced values spanning
/// `(1e-6·ub, ub]`, returned in descending order.
pub fn oracle_grid(upper_ln: f64, points: usize) -> Vec<f64> {
    let hi = upper_ln;
    let lo = upper_ln + (1e-6f64).ln();
    (0..points)
        .map(|g| {
            let frac = g as f64 / (points - 1) as f64;
            (hi + (lo - hi) * frac).exp()
        })
        .collect()
}

/// Exhaustive feasibility-filtered grid search over log-spaced distortions.
///
/// Enumerates the full cartesian grid (depth-first, in decreasing-distortion
/// order) with two exact prunings — a partial-sum feasibility bound and an
/// optimistic objective bound — so the reported optimum equals the naive
/// scan's. Practical for `mT ≤ 6` variables at the default 60 points per
/// coordinate.
pub fn grid_search_oracle(
    problem: &GgpProblem,
    mode: ScheduleMode,
    mse_target: f64,
    points_per_coord: usize,
) -> Result<(f64, DistortionSchedule)> {
    if points_per_coord < 2 {
        return Err(Error::InvalidParameter("grid needs at least 2 points per coordinate".into()));
    }
    validate_positive_constants(problem)?;
    let p = compile(problem, mode, &ConstraintKind::Network(mse_target))?;
    let n = p.n;
    let sat_ratio = 2f64.powf(-2.0 * p.r_c_bits);
    let rate_bits = |s: f64, d: f64| -> f64 {
        let ratio = s / d;
        if ratio <= sat_ratio {
            0.0
        } else {
            0.5 * ratio.log2() + p.r_c_bits
        }
    };

    let grids: Vec<Vec<f64>> =
        p.upper.iter().map(|&u| oracle_grid(u, points_per_coord)).collect();
    let cons = &p.constraints[0];

    // Column view: which future rows each variable feeds, with coefficients.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, row) in p.rows.iter().enumerate() {
        for &(v, c) in &row.terms {
            cols[v].push((r, c));
        }
    }
    // Rows become fully determined when their own variable is assigned.
    let mut rows_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, row) in p.rows.iter().enumerate() {
        rows_at[row.own].push(r);
    }
    // Static optimistic bound per row: the largest own distortion against
    // the distortion-free variance.
    let row_lb: Vec<f64> = p
        .rows
        .iter()
        .map(|row| rate_bits(row.c0, p.upper[row.own].exp()))
        .collect();
    let mut lb_after = vec![0.0; n + 1];
    for j in (0..n).rev() {
        lb_after[j] = lb_after[j + 1] + rows_at[j].iter().map(|&r| row_lb[r]).sum::<f64>();
    }
    // Minimum remaining constraint mass per depth.
    let mut cons_min_after = vec![0.0; n + 1];
    for j in (0..n).rev() {
        cons_min_after[j] = cons_min_after[j + 1] + cons.coef[j] * grids[j][points_per_coord - 1];
    }

    // Seed the incumbent with the best feasible "diagonal" point.
    let mut best = f64::INFINITY;
    let mut best_d: Option<Vec<f64>> = None;
    for g in 0..points_per_coord {
        let d: Vec<f64> = (0..n).map(|j| grids[j][g]).collect();
        let mass: f64 = cons.coef.iter().zip(&d).map(|(c, v)| c * v).sum();
        if mass > cons.bound {
            continue;
        }
        let mut s: Vec<f64> = p.rows.iter().map(|r| r.c0).collect();
        for (j, &dv) in d.iter().enumerate() {
            for &(r, c) in &cols[j] {
                s[r] += c * dv;
            }
        }
        let obj: f64 =
            p.rows.iter().enumerate().map(|(r, row)| rate_bits(s[r], d[row.own])).sum();
        if obj < best {
            best = obj;
            best_d = Some(d);
        }
    }

    // Exact depth-first enumeration. Row variances are patched in place
    // and restored from per-depth snapshots, so every partial sum is
    // bit-identical to a fresh evaluation and pruning stays exact.
    struct Dfs<'a> {
        p: &'a CompiledProblem,
        grids: &'a [Vec<f64>],
        cols: &'a [Vec<(usize, f64)>],
        rows_at: &'a [Vec<usize>],
        lb_after: &'a [f64],
        cons_min_after: &'a [f64],
        sat_ratio: f64,
        r_c_bits: f64,
        s: Vec<f64>,
        saved: Vec<Vec<f64>>,
        d: Vec<f64>,
        best: f64,
        best_d: Option<Vec<f64>>,
    }
    impl Dfs<'_> {
        fn rate(&self, s: f64, d: f64) -> f64 {
            let ratio = s / d;
            if ratio <= self.sat_ratio {
                0.0
            } else {
                0.5 * ratio.log2() + self.r_c_bits
            }
        }

        fn run(&mut self, depth: usize, cons_mass: f64, partial: f64) {
            let n = self.p.n;
            let cons = &self.p.constraints[0];
            let last = depth == n - 1;
            for gi in 0..self.grids[depth].len() {
                let dv = self.grids[depth][gi];
                let mass = cons_mass + cons.coef[depth] * dv;
                if mass + self.cons_min_after[depth + 1] > cons.bound {
                    continue; // larger values only get worse; smaller may fit
                }
                // Apply this value to the rows it feeds, keeping originals.
                self.d[depth] = dv;
                for (slot, &(r, c)) in self.cols[depth].iter().enumerate() {
                    self.saved[depth][slot] = self.s[r];
                    self.s[r] += c * dv;
                }
                let mut here = 0.0;
                for &r in &self.rows_at[depth] {
                    here += self.rate(self.s[r], dv);
                }
                let with_here = partial + here;
                let pruned = with_here + self.lb_after[depth + 1] >= self.best;
                if !pruned {
                    if last {
                        if with_here < self.best {
                            self.best = with_here;
                            self.best_d = Some(self.d.clone());
                        }
                    } else {
                        self.run(depth + 1, mass, with_here);
                    }
                }
                for (slot, &(r, _)) in self.cols[depth].iter().enumerate() {
                    self.s[r] = self.saved[depth][slot];
                }
                if pruned {
                    // Shrinking the distortion further only raises the rate.
                    break;
                }
            }
        }
    }

    let saved: Vec<Vec<f64>> = cols.iter().map(|col| vec![0.0; col.len()]).collect();
    let mut dfs = Dfs {
        p: &p,
        grids: &grids,
        cols: &cols,
        rows_at: &rows_at,
        lb_after: &lb_after,
        cons_min_after: &cons_min_after,
        sat_ratio,
        r_c_bits: p.r_c_bits,
        s: p.rows.iter().map(|r| r.c0).collect(),
        saved,
        d: vec![0.0; n],
        best,
        best_d,
    };
    dfs.run(0, 0.0, 0.0);

    let d = dfs
        .best_d
        .ok_or_else(|| Error::SolverFailure("grid oracle found no feasible point".into()))?;
    let schedule = match mode {
        ScheduleMode::PerNode => DistortionSchedule::per_node(p.m, p.horizon, d)?,
        ScheduleMode::Constant => DistortionSchedule::constant(p.m, p.horizon, d)?,
    };
    Ok((dfs.best, schedule))
}
