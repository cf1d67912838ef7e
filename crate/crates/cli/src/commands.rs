//! Command implementations: graph generation, horizon scans, schedule
//! optimization, Monte-Carlo simulation, and the trade-off sweep.
//!
//! Every command reads one config document, writes its results under the
//! output directory, and records a `run_meta.json` (the only file carrying
//! a timestamp). All other outputs are byte-deterministic for a given
//! config: graph draws, solver runs, and simulations are keyed entirely by
//! the configured seeds.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;

use quantcon::graph::{generate_connected_rgg, metropolis_weights, Graph, WeightMatrix};
use quantcon::optimizer::{
    solve_constant_distortion, solve_variable_distortion, solve_with_node_constraints,
    GgpSolution, NodeTargets,
};
use quantcon::rate_model::RdModel;
use quantcon::rng::derived_seed;
use quantcon::simulator::{
    run_consensus, schedule_from_allocation, InitSpec, QuantizerKind, SimResult,
};
use quantcon::state_evolution::{
    extract_ggp, network_mse, propagate, signal_model_initial, t_min, DistortionSchedule,
    GgpProblem, MomentState, ScheduleMode,
};

use crate::config::{ConfigError, ConstraintChoice, ExperimentConfig, ModeChoice};
use crate::output::{g9, g9_opt, write_csv, write_json};

/// Per-invocation overrides of the `optimizer` section.
#[derive(Debug, Default, Clone, Copy)]
pub struct OptimizeOverrides {
    pub mode: Option<ModeChoice>,
    pub constraint: Option<ConstraintChoice>,
    pub mse_target: Option<f64>,
    pub tol: Option<f64>,
}

/// Full-scale protocol switches applied by `--full-scale`.
#[derive(Debug, Clone, Copy)]
pub struct Scale {
    pub full: bool,
}

impl Scale {
    fn graphs(&self, desk: usize) -> usize {
        if self.full {
            32
        } else {
            desk
        }
    }

    fn coordinates(&self, desk: usize) -> usize {
        if self.full {
            10_000
        } else {
            desk
        }
    }

    fn trials(&self, desk: usize) -> usize {
        if self.full {
            1_000
        } else {
            desk
        }
    }
}

fn mode_name(mode: ScheduleMode) -> &'static str {
    match mode {
        ScheduleMode::PerNode => "variable",
        ScheduleMode::Constant => "constant",
    }
}

fn constraint_name(c: ConstraintChoice) -> &'static str {
    match c {
        ConstraintChoice::Network => "network",
        ConstraintChoice::MaxNode => "max_node",
        ConstraintChoice::PerNode => "per_node",
    }
}

fn kind_name(kind: QuantizerKind) -> &'static str {
    match kind {
        QuantizerKind::FixedUniform => "fixed_uniform",
        QuantizerKind::EcsqUniform => "ecsq_uniform",
        QuantizerKind::DitheredUniform => "dithered_uniform",
        QuantizerKind::GaussianNoiseProxy => "gaussian_noise_proxy",
    }
}

/// CSV-safe error text: single line, no commas.
fn status_text(prefix: &str, e: &quantcon::Error) -> String {
    let msg = e.to_string().replace([',', '\n'], ";");
    format!("{prefix}: {msg}")
}

fn classify_solve_error(e: &quantcon::Error) -> String {
    match e {
        quantcon::Error::InfeasibleTarget { .. } => "infeasible".to_string(),
        other => status_text("solver_error", other),
    }
}

/// Builds the configured graph: a seeded connected RGG draw or an explicit
/// edge list (which must itself be connected).
pub fn build_graph(cfg: &ExperimentConfig) -> Result<Graph> {
    let section = cfg.graph()?;
    match (&section.rho_c, &section.edges) {
        (Some(rho), None) => {
            let seed = section.seed.expect("validated at load");
            Ok(generate_connected_rgg(section.m, *rho, seed, section.retries())?)
        }
        (None, Some(edges)) => {
            let g = Graph::from_edges(section.m, edges)?;
            if !g.is_connected() {
                return Err(ConfigError {
                    path: "graph.edges".into(),
                    message: "the explicit edge list must describe a connected graph".into(),
                }
                .into());
            }
            Ok(g)
        }
        _ => unreachable!("validated at load"),
    }
}

/// Graph, weights, and per-coordinate initial moments shared by the
/// planning commands.
struct Bench {
    graph: Graph,
    w: WeightMatrix,
    init: MomentState,
    horizon: usize,
    lossless: f64,
}

fn build_bench(cfg: &ExperimentConfig) -> Result<Bench> {
    let graph = build_graph(cfg)?;
    let w = metropolis_weights(&graph)?;
    let signal = cfg.signal()?;
    let init = signal_model_initial(graph.m, signal.sigma_x2, signal.sigma_n2())?;
    let horizon = cfg.horizon()?;
    let states = propagate(&w, &init, &DistortionSchedule::zeros(graph.m, horizon), horizon)?;
    let lossless = network_mse(&states[horizon]);
    Ok(Bench { graph, w, init, horizon, lossless })
}

/// `gen-graph`: draw, report, and persist the topology.
pub fn cmd_gen_graph(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let graph = build_graph(cfg)?;
    let w = metropolis_weights(&graph)?;
    write_json(&out.join("graph.json"), &graph)?;
    println!(
        "graph: m={} edges={} lambda2={:.6} -> {}",
        graph.m,
        graph.edges.len(),
        w.lambda2(),
        out.join("graph.json").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TminEntry {
    mse_target: f64,
    t_min: Option<usize>,
    /// Lossless network MSE at t = 0..=t_min (when reached).
    lossless_mse_sequence: Vec<f64>,
    status: String,
}

/// `tmin`: smallest horizon whose lossless MSE beats each target.
pub fn cmd_tmin(cfg: &ExperimentConfig, out: &Path, override_target: Option<f64>) -> Result<()> {
    let graph = build_graph(cfg)?;
    let w = metropolis_weights(&graph)?;
    let signal = cfg.signal()?;
    let init = signal_model_initial(graph.m, signal.sigma_x2, signal.sigma_n2())?;

    let targets = match override_target {
        Some(t) => vec![t],
        None => {
            let horizon = cfg.horizon()?;
            let states =
                propagate(&w, &init, &DistortionSchedule::zeros(graph.m, horizon), horizon)?;
            cfg.optimizer()?.targets_for(network_mse(&states[horizon]))
        }
    };

    let mut entries = Vec::with_capacity(targets.len());
    let mut reached = 0usize;
    for &target in &targets {
        match t_min(&w, &init, target, None) {
            Ok(tm) => {
                let states = propagate(&w, &init, &DistortionSchedule::zeros(graph.m, tm), tm)?;
                let seq: Vec<f64> = states.iter().map(network_mse).collect();
                println!("target {}: t_min = {tm}", g9(target));
                entries.push(TminEntry {
                    mse_target: target,
                    t_min: Some(tm),
                    lossless_mse_sequence: seq,
                    status: "ok".into(),
                });
                reached += 1;
            }
            Err(e) => {
                println!("target {}: {e}", g9(target));
                entries.push(TminEntry {
                    mse_target: target,
                    t_min: None,
                    lossless_mse_sequence: Vec::new(),
                    status: status_text("unreachable", &e),
                });
            }
        }
    }
    write_json(&out.join("tmin.json"), &entries)?;
    if reached == 0 && !targets.is_empty() {
        bail!("no requested MSE target is reachable (see {})", out.join("tmin.json").display());
    }
    Ok(())
}

/// The optimization setup for one command invocation.
struct Plan {
    mode: ScheduleMode,
    constraint: ConstraintChoice,
    tol: f64,
    targets: Vec<f64>,
    problem: GgpProblem,
}

fn build_plan(
    cfg: &ExperimentConfig,
    bench: &Bench,
    model: &RdModel,
    ov: &OptimizeOverrides,
) -> Result<Plan> {
    let section = cfg.optimizer()?;
    let mode_choice = ov.mode.unwrap_or(section.mode);
    let mode = mode_choice.resolve(bench.graph.m, bench.horizon, section.auto_threshold);
    let constraint = ov.constraint.unwrap_or(section.constraint);
    let tol = ov.tol.unwrap_or(section.tol);
    let targets = match ov.mse_target {
        Some(t) => vec![t],
        None => section.targets_for(bench.lossless),
    };
    let problem = extract_ggp(&bench.w, &bench.init, bench.horizon, model, mode)?;
    Ok(Plan { mode, constraint, tol, targets, problem })
}

fn solve_one(plan: &Plan, target: f64) -> quantcon::Result<GgpSolution> {
    match plan.constraint {
        ConstraintChoice::Network => match plan.mode {
            ScheduleMode::PerNode => solve_variable_distortion(&plan.problem, target, Some(plan.tol)),
            ScheduleMode::Constant => {
                solve_constant_distortion(&plan.problem, target, Some(plan.tol))
            }
        },
        ConstraintChoice::MaxNode => {
            solve_with_node_constraints(&plan.problem, NodeTargets::Max(target), Some(plan.tol))
        }
        ConstraintChoice::PerNode => solve_with_node_constraints(
            &plan.problem,
            NodeTargets::Each(vec![target; plan.problem.m]),
            Some(plan.tol),
        ),
    }
}

fn write_rates_csv(
    path: &Path,
    problem: &GgpProblem,
    sol: &GgpSolution,
) -> Result<()> {
    let sigma2 = problem.sigma2_at(&sol.d_star);
    let mut rows = Vec::with_capacity(problem.rows());
    for t in 0..problem.horizon {
        for node in 0..problem.m {
            rows.push(format!(
                "{node},{t},{},{},{}",
                g9(sol.r_star.value(node, t)),
                g9(sol.d_star.value(node, t)),
                g9(sigma2[t * problem.m + node]),
            ));
        }
    }
    write_csv(path, "node,t,rate_bits,distortion,sigma2", &rows)
}

#[derive(Serialize)]
struct SolutionDoc<'a> {
    mse_target: f64,
    mode: &'a str,
    constraint: &'a str,
    lossless_mse: f64,
    solution: &'a GgpSolution,
}

#[derive(Serialize)]
struct TargetStatus {
    index: usize,
    mse_target: f64,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective_bits: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    achieved_mse: Option<f64>,
}

/// `optimize`: solve the allocation for each target; write the solution
/// JSON and the per-slot rate table per target, plus a summary.
pub fn cmd_optimize(cfg: &ExperimentConfig, out: &Path, ov: OptimizeOverrides) -> Result<()> {
    let bench = build_bench(cfg)?;
    let model = cfg.model()?.resolve()?;
    let plan = build_plan(cfg, &bench, &model, &ov)?;

    let mut statuses = Vec::with_capacity(plan.targets.len());
    let mut solved = 0usize;
    for (k, &target) in plan.targets.iter().enumerate() {
        match solve_one(&plan, target) {
            Ok(sol) => {
                write_json(
                    &out.join(format!("solution_{k}.json")),
                    &SolutionDoc {
                        mse_target: target,
                        mode: mode_name(plan.mode),
                        constraint: constraint_name(plan.constraint),
                        lossless_mse: bench.lossless,
                        solution: &sol,
                    },
                )?;
                write_rates_csv(&out.join(format!("rates_{k}.csv")), &plan.problem, &sol)?;
                println!(
                    "target {}: R_agg = {:.4} bits, achieved MSE = {} ({} slots at zero rate)",
                    g9(target),
                    sol.objective_bits,
                    g9(sol.achieved_mse),
                    sol.solver_report.saturated_slots,
                );
                statuses.push(TargetStatus {
                    index: k,
                    mse_target: target,
                    status: "ok".into(),
                    objective_bits: Some(sol.objective_bits),
                    achieved_mse: Some(sol.achieved_mse),
                });
                solved += 1;
            }
            Err(e) => {
                let status = classify_solve_error(&e);
                println!("target {}: {status}", g9(target));
                statuses.push(TargetStatus {
                    index: k,
                    mse_target: target,
                    status,
                    objective_bits: None,
                    achieved_mse: None,
                });
            }
        }
    }
    write_json(&out.join("optimize_summary.json"), &statuses)?;
    if solved == 0 && !plan.targets.is_empty() {
        bail!(
            "no target could be solved (see {})",
            out.join("optimize_summary.json").display()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SimDoc<'a> {
    mse_target: f64,
    quantizer_kind: &'a str,
    mode: &'a str,
    /// Moment-propagation prediction of the network MSE at t = 0..=T under
    /// the optimized distortions.
    predicted_mse_per_iter: Vec<f64>,
    predicted_aggregate_rate_bits: f64,
    solution: &'a GgpSolution,
    result: &'a SimResult,
}

#[derive(Serialize)]
struct SimStatus {
    index: usize,
    mse_target: f64,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_aggregate_rate_bits: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical_aggregate_rate_bits: Option<f64>,
}

/// `simulate`: optimize, realize the schedule with the configured
/// quantizer, and Monte-Carlo measure MSE and rates against predictions.
pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    out: &Path,
    ov: OptimizeOverrides,
    scale: Scale,
) -> Result<()> {
    let bench = build_bench(cfg)?;
    let model = cfg.model()?.resolve()?;
    let plan = build_plan(cfg, &bench, &model, &ov)?;
    let signal = cfg.signal()?;
    let sim = cfg.simulation()?;
    let init_spec = InitSpec {
        sigma_x2: signal.sigma_x2,
        sigma_n2: signal.sigma_n2(),
        l: scale.coordinates(signal.l),
    };
    let trials = scale.trials(sim.trials);

    let mut statuses = Vec::with_capacity(plan.targets.len());
    let mut completed = 0usize;
    for (k, &target) in plan.targets.iter().enumerate() {
        let sol = match solve_one(&plan, target) {
            Ok(sol) => sol,
            Err(e) => {
                let status = classify_solve_error(&e);
                println!("target {}: {status}", g9(target));
                statuses.push(SimStatus {
                    index: k,
                    mse_target: target,
                    status,
                    predicted_mse: None,
                    empirical_mse: None,
                    predicted_aggregate_rate_bits: None,
                    empirical_aggregate_rate_bits: None,
                });
                continue;
            }
        };
        let predicted: Vec<f64> = propagate(&bench.w, &bench.init, &sol.d_star, bench.horizon)?
            .iter()
            .map(network_mse)
            .collect();
        let schedule = schedule_from_allocation(
            sim.quantizer_kind,
            &sol.d_star,
            &sol.r_star,
            sim.range_multiplier,
        )?;
        let seed = derived_seed(sim.seed, k as u64);
        let result = match run_consensus(&bench.w, &init_spec, &schedule, bench.horizon, trials, seed)
        {
            Ok(r) => r,
            Err(e) => {
                let status = status_text("sim_error", &e);
                println!("target {}: {status}", g9(target));
                statuses.push(SimStatus {
                    index: k,
                    mse_target: target,
                    status,
                    predicted_mse: Some(sol.achieved_mse),
                    empirical_mse: None,
                    predicted_aggregate_rate_bits: Some(sol.objective_bits),
                    empirical_aggregate_rate_bits: None,
                });
                continue;
            }
        };

        let empirical_final = *result.empirical_mse_per_iter.last().expect("horizon >= 1");
        write_json(
            &out.join(format!("sim_{k}.json")),
            &SimDoc {
                mse_target: target,
                quantizer_kind: kind_name(sim.quantizer_kind),
                mode: mode_name(plan.mode),
                predicted_mse_per_iter: predicted.clone(),
                predicted_aggregate_rate_bits: sol.objective_bits,
                solution: &sol,
                result: &result,
            },
        )?;
        let mse_rows: Vec<String> = predicted
            .iter()
            .zip(&result.empirical_mse_per_iter)
            .enumerate()
            .map(|(t, (p, e))| format!("{t},{},{}", g9(*p), g9(*e)))
            .collect();
        write_csv(
            &out.join(format!("sim_mse_{k}.csv")),
            "t,predicted_mse,empirical_mse",
            &mse_rows,
        )?;
        let mut rate_rows = Vec::with_capacity(plan.problem.rows());
        for t in 0..bench.horizon {
            for node in 0..bench.graph.m {
                rate_rows.push(format!(
                    "{node},{t},{},{}",
                    g9(sol.r_star.value(node, t)),
                    g9(result.empirical_rate.value(node, t)),
                ));
            }
        }
        write_csv(
            &out.join(format!("sim_rates_{k}.csv")),
            "node,t,model_rate_bits,empirical_rate_bits",
            &rate_rows,
        )?;
        println!(
            "target {}: MSE predicted {} measured {}; R_agg predicted {:.4} measured {:.4} bits",
            g9(target),
            g9(sol.achieved_mse),
            g9(empirical_final),
            sol.objective_bits,
            result.aggregate_rate_bits,
        );
        statuses.push(SimStatus {
            index: k,
            mse_target: target,
            status: "ok".into(),
            predicted_mse: Some(sol.achieved_mse),
            empirical_mse: Some(empirical_final),
            predicted_aggregate_rate_bits: Some(sol.objective_bits),
            empirical_aggregate_rate_bits: Some(result.aggregate_rate_bits),
        });
        completed += 1;
    }
    write_json(&out.join("simulate_summary.json"), &statuses)?;
    if completed == 0 && !plan.targets.is_empty() {
        bail!(
            "no target could be simulated (see {})",
            out.join("simulate_summary.json").display()
        );
    }
    Ok(())
}

/// One sweep row in flight.
struct SweepRow {
    graph_seed: u64,
    rho_c: f64,
    horizon: usize,
    mode: &'static str,
    kind: &'static str,
    mse_target: Option<f64>,
    predicted_mse: Option<f64>,
    empirical_mse: Option<f64>,
    emse_db: Option<f64>,
    predicted_ragg: Option<f64>,
    empirical_ragg: Option<f64>,
    tmin: Option<usize>,
    status: String,
}

impl SweepRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.graph_seed,
            g9(self.rho_c),
            self.horizon,
            self.mode,
            self.kind,
            g9_opt(self.mse_target),
            g9_opt(self.predicted_mse),
            g9_opt(self.empirical_mse),
            g9_opt(self.emse_db),
            g9_opt(self.predicted_ragg),
            g9_opt(self.empirical_ragg),
            self.tmin.map(|t| t.to_string()).unwrap_or_default(),
            self.status,
        )
    }
}

/// Mean accumulator that tolerates missing values per field.
#[derive(Default)]
struct MeanAcc {
    sum: f64,
    n: usize,
}

impl MeanAcc {
    fn push(&mut self, v: Option<f64>) {
        if let Some(v) = v {
            self.sum += v;
            self.n += 1;
        }
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Default)]
struct SettingAcc {
    n_ok: usize,
    n_excluded: usize,
    mse_target: MeanAcc,
    predicted_mse: MeanAcc,
    empirical_mse: MeanAcc,
    emse_db: MeanAcc,
    predicted_ragg: MeanAcc,
    empirical_ragg: MeanAcc,
}

pub const SWEEP_HEADER: &str = "graph_seed,rho_c,T,mode,quantizer_kind,mse_target,predicted_mse,\
                                empirical_mse,emse_db,predicted_Ragg,empirical_Ragg,tmin,status";

pub const SWEEP_AVG_HEADER: &str = "rho_c,T,mode,quantizer_kind,target_label,n_ok,n_excluded,\
                                    avg_mse_target,avg_predicted_mse,avg_empirical_mse,\
                                    avg_emse_db,avg_predicted_Ragg,avg_empirical_Ragg";

/// `sweep`: for each (radius, graph realization, target) solve and
/// simulate, recording one row per point and per-setting averages.
/// Failed points are recorded with a status and excluded from averages;
/// the sweep itself keeps going.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, scale: Scale) -> Result<()> {
    let gsec = cfg.graph()?;
    if gsec.edges.is_some() {
        return Err(ConfigError {
            path: "graph.edges".into(),
            message: "sweeps draw random geometric graphs; an explicit edge list cannot be swept"
                .into(),
        }
        .into());
    }
    let master_seed = gsec.seed.expect("validated at load");
    let signal = cfg.signal()?;
    let horizon = cfg.horizon()?;
    let model = cfg.model()?.resolve()?;
    let optimizer = cfg.optimizer()?;
    let sim = cfg.simulation()?;
    let sweep = cfg.sweep();

    let graphs = scale.graphs(sweep.graphs);
    let init_spec = InitSpec {
        sigma_x2: signal.sigma_x2,
        sigma_n2: signal.sigma_n2(),
        l: scale.coordinates(signal.l),
    };
    let trials = scale.trials(sim.trials);
    let mode = optimizer.mode.resolve(gsec.m, horizon, optimizer.auto_threshold);
    let labels = optimizer.target_labels();

    let mut rows: Vec<SweepRow> = Vec::new();
    let mut accs: BTreeMap<(usize, usize), SettingAcc> = BTreeMap::new();
    let mut row_counter = 0u64;

    for (rho_idx, &rho) in sweep.rho_c_values.iter().enumerate() {
        for gidx in 0..graphs {
            let gseed = derived_seed(master_seed, (rho_idx * graphs + gidx) as u64);
            let drawn = generate_connected_rgg(gsec.m, rho, gseed, gsec.retries());
            let (w, init, lossless) = match drawn.as_ref() {
                Ok(g) => {
                    let w = metropolis_weights(g)?;
                    let init = signal_model_initial(g.m, signal.sigma_x2, signal.sigma_n2())?;
                    let states =
                        propagate(&w, &init, &DistortionSchedule::zeros(g.m, horizon), horizon)?;
                    let lossless = network_mse(&states[horizon]);
                    (Some(w), Some(init), lossless)
                }
                Err(_) => (None, None, f64::NAN),
            };
            let targets = optimizer.targets_for(if lossless.is_finite() { lossless } else { 1.0 });

            for (tidx, &target) in targets.iter().enumerate() {
                row_counter += 1;
                let acc = accs.entry((rho_idx, tidx)).or_default();
                let base = SweepRow {
                    graph_seed: gseed,
                    rho_c: rho,
                    horizon,
                    mode: mode_name(mode),
                    kind: kind_name(sim.quantizer_kind),
                    mse_target: Some(target),
                    predicted_mse: None,
                    empirical_mse: None,
                    emse_db: None,
                    predicted_ragg: None,
                    empirical_ragg: None,
                    tmin: None,
                    status: String::new(),
                };

                let (w, init) = match (&w, &init, drawn.as_ref()) {
                    (Some(w), Some(init), _) => (w, init),
                    (_, _, Err(e)) => {
                        acc.n_excluded += 1;
                        rows.push(SweepRow {
                            mse_target: None,
                            status: status_text("graph_error", e),
                            ..base
                        });
                        continue;
                    }
                    _ => unreachable!(),
                };

                let problem = extract_ggp(w, init, horizon, &model, mode)?;
                let sol = match solve_for_mode(&problem, mode, target, optimizer.tol) {
                    Ok(sol) => sol,
                    Err(e) => {
                        acc.n_excluded += 1;
                        rows.push(SweepRow { status: classify_solve_error(&e), ..base });
                        continue;
                    }
                };
                let tmin_val = t_min(w, init, target, Some(horizon.max(10 * gsec.m))).ok();
                let schedule = schedule_from_allocation(
                    sim.quantizer_kind,
                    &sol.d_star,
                    &sol.r_star,
                    sim.range_multiplier,
                )?;
                let sim_seed = derived_seed(sim.seed, row_counter);
                let result =
                    match run_consensus(w, &init_spec, &schedule, horizon, trials, sim_seed) {
                        Ok(r) => r,
                        Err(e) => {
                            acc.n_excluded += 1;
                            rows.push(SweepRow {
                                predicted_mse: Some(sol.achieved_mse),
                                predicted_ragg: Some(sol.objective_bits),
                                tmin: tmin_val,
                                status: status_text("sim_error", &e),
                                ..base
                            });
                            continue;
                        }
                    };
                let empirical_final =
                    *result.empirical_mse_per_iter.last().expect("horizon >= 1");
                let emse_db = (lossless > 0.0 && empirical_final > 0.0)
                    .then(|| 10.0 * (empirical_final / lossless).log10());

                let row = SweepRow {
                    predicted_mse: Some(sol.achieved_mse),
                    empirical_mse: Some(empirical_final),
                    emse_db,
                    predicted_ragg: Some(sol.objective_bits),
                    empirical_ragg: Some(result.aggregate_rate_bits),
                    tmin: tmin_val,
                    status: "ok".into(),
                    ..base
                };
                acc.n_ok += 1;
                acc.mse_target.push(row.mse_target);
                acc.predicted_mse.push(row.predicted_mse);
                acc.empirical_mse.push(row.empirical_mse);
                acc.emse_db.push(row.emse_db);
                acc.predicted_ragg.push(row.predicted_ragg);
                acc.empirical_ragg.push(row.empirical_ragg);
                rows.push(row);
            }
        }
    }

    let csv_rows: Vec<String> = rows.iter().map(SweepRow::to_csv).collect();
    write_csv(&out.join("sweep.csv"), SWEEP_HEADER, &csv_rows)?;

    let avg_rows: Vec<String> = accs
        .iter()
        .map(|(&(rho_idx, tidx), acc)| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                g9(sweep.rho_c_values[rho_idx]),
                horizon,
                mode_name(mode),
                kind_name(sim.quantizer_kind),
                labels.get(tidx).cloned().unwrap_or_default(),
                acc.n_ok,
                acc.n_excluded,
                g9_opt(acc.mse_target.mean()),
                g9_opt(acc.predicted_mse.mean()),
                g9_opt(acc.empirical_mse.mean()),
                g9_opt(acc.emse_db.mean()),
                g9_opt(acc.predicted_ragg.mean()),
                g9_opt(acc.empirical_ragg.mean()),
            )
        })
        .collect();
    write_csv(&out.join("sweep_avg.csv"), SWEEP_AVG_HEADER, &avg_rows)?;

    let n_ok: usize = accs.values().map(|a| a.n_ok).sum();
    let n_excluded: usize = accs.values().map(|a| a.n_excluded).sum();
    println!(
        "sweep: {} rows ({n_ok} ok, {n_excluded} excluded) -> {} and {}",
        rows.len(),
        out.join("sweep.csv").display(),
        out.join("sweep_avg.csv").display(),
    );
    Ok(())
}

fn solve_for_mode(
    problem: &GgpProblem,
    mode: ScheduleMode,
    target: f64,
    tol: f64,
) -> quantcon::Result<GgpSolution> {
    match mode {
        ScheduleMode::PerNode => solve_variable_distortion(problem, target, Some(tol)),
        ScheduleMode::Constant => solve_constant_distortion(problem, target, Some(tol)),
    }
}
