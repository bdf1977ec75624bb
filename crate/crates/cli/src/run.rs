//! Dispatch from a config to the solvers, and the run report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use impact_game_core::{
    aggregate_flow_is_zero, arbitrageur_is_idle, closed_form_equilibrium, cost_report, oscillation_flags,
    payoff_matrix, post_trade_drift, simulate_price, solve_hetero_nash, stability_report, sweep_row,
    HeteroGameSpec, MarketModel, OscillationFlags, PayoffMode, SimulationOptions, StrategyArray, SweepBase, SweepPoint,
    ThresholdMethod,
};
use log::{debug, info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{matrix_rows, ExperimentConfig, ExperimentKind, Game, PayoffModeConfig, SweepPointConfig};
use crate::error::CliError;
use crate::output::{price_table, rounded, strategy_table, Table};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    /// SHA-256 of the compact JSON form of `config`.
    pub config_sha256: String,
    /// The config as run, defaults filled in.
    pub config: ExperimentConfig,
    pub wall_clock_seconds: f64,
    pub results: Value,
    pub warnings: Vec<String>,
    /// CSV files written next to the report, by role.
    pub files: Vec<OutputFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub role: String,
    pub path: String,
}

/// A finished run before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    pub tables: Vec<(String, Table)>,
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

struct Partial {
    results: Value,
    warnings: Vec<String>,
    tables: Vec<(String, Table)>,
}

/// Runs `kind` on `config`. A kind named in the config must agree.
pub fn run_experiment(config: &ExperimentConfig, kind: ExperimentKind) -> Result<Outcome, CliError> {
    if let Some(k) = config.experiment {
        if k != kind {
            return Err(CliError::usage("experiment", format!("config is for `{k}` but `{kind}` was requested")));
        }
    }
    let mut config = config.clone();
    config.experiment = Some(kind);
    let hash = config_hash(&config);
    info!("running {kind} (config {})", &hash[..12]);
    let start = Instant::now();
    let partial = match kind {
        ExperimentKind::Equilibrium => equilibrium(&config, false)?,
        ExperimentKind::Costs => equilibrium(&config, true)?,
        ExperimentKind::PayoffMatrix => payoff(&config)?,
        ExperimentKind::ThetaCritical => theta_critical(&config)?,
        ExperimentKind::Sweep => sweep(&config)?,
        ExperimentKind::Simulate => simulate(&config)?,
    };
    for w in &partial.warnings {
        warn!("{w}");
    }
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: kind,
        config_sha256: hash,
        config,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        results: rounded(partial.results),
        warnings: partial.warnings,
        files: Vec::new(),
    };
    Ok(Outcome { report, tables: partial.tables })
}

/// Writes `<name>.json` and `<name>_<role>.csv` into `dir`.
pub fn write_outcome(outcome: &mut Outcome, dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    let stem = outcome.report.config.output.name.clone().unwrap_or_else(|| outcome.report.experiment.to_string());
    outcome.report.files.clear();
    for (role, table) in &outcome.tables {
        let name = format!("{stem}_{role}.csv");
        table.write(&dir.join(&name))?;
        outcome.report.files.push(OutputFile { role: role.clone(), path: name });
    }
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&outcome.report).map_err(|e| CliError::Output(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(path.display().to_string(), e))?;
    debug!("wrote {}", path.display());
    Ok(path)
}

fn num(context: &str) -> impl Fn(impact_game_core::GameError) -> CliError + '_ {
    move |e| CliError::numeric(context, e)
}

/// `[asset][agent][time]`.
fn nested(xi: &StrategyArray) -> Value {
    json!((0..xi.assets())
        .map(|i| (0..xi.agents()).map(|j| xi.series(i, j).to_vec()).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn totals(xi: &StrategyArray) -> Value {
    json!((0..xi.assets()).map(|i| (0..xi.agents()).map(|j| xi.total(i, j)).collect::<Vec<_>>()).collect::<Vec<_>>())
}

struct Solved {
    strategies: StrategyArray,
    model: MarketModel,
    sigma: DMatrix<f64>,
    risk_aversion: f64,
    details: Value,
}

fn solve(config: &ExperimentConfig) -> Result<Solved, CliError> {
    match config.game()? {
        Game::Homogeneous(spec) => {
            let eq = closed_form_equilibrium(&spec).map_err(num("closed-form equilibrium"))?;
            let tol = config.solver.tol;
            let idle: Vec<usize> = (0..spec.agents()).filter(|&j| arbitrageur_is_idle(&eq, j, tol)).collect();
            let s = &eq.spectral;
            let details = json!({
                "solver": "closed_form",
                "aggregate_flow_zero": aggregate_flow_is_zero(&spec, tol),
                "idle_agents": idle,
                "spectral": {
                    "eigenvalues": s.eigenvalues,
                    "eigenvectors": matrix_rows(&s.eigenvectors),
                    "lambda_max": s.lambda_max,
                    "commutes_with_sigma": s.commutes_with_sigma,
                    "one_factor_bound": s.one_factor_bound,
                },
                "fundamentals": eq.fundamentals.iter().map(|f| json!({
                    "v": f.v.iter().copied().collect::<Vec<_>>(),
                    "w": f.w.iter().copied().collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
                "virtual_scales": eq.virtual_scales,
                "virtual_var_rates": eq.virtual_var_rates,
            });
            Ok(Solved {
                model: MarketModel::homogeneous(&spec),
                sigma: spec.sigma.clone(),
                risk_aversion: spec.risk_aversion,
                strategies: eq.strategies,
                details,
            })
        }
        Game::Heterogeneous(spec) => {
            let eq = solve_hetero_nash(&spec).map_err(num("heterogeneous Nash equilibrium"))?;
            let sigma = ExperimentConfig::covariance(&config.sigma, &spec.cross_impact, "sigma")?;
            let details = json!({
                "solver": "kkt",
                "condition_estimate": eq.condition,
                "multipliers": eq.multipliers.iter().map(|((i, j), m)| json!({"asset": i, "agent": j, "value": m})).collect::<Vec<_>>(),
                "effective_inventories": matrix_rows(&spec.inventories),
                "scales": spec.scale,
                "theta": spec.theta,
            });
            Ok(Solved { model: spec.market_model(), sigma, risk_aversion: 0.0, strategies: eq.strategies, details })
        }
    }
}

fn equilibrium(config: &ExperimentConfig, with_costs: bool) -> Result<Partial, CliError> {
    let solved = solve(config)?;
    let xi = &solved.strategies;
    let times = solved.model.grid.points().to_vec();
    let mut results = json!({
        "assets": xi.assets(),
        "agents": xi.agents(),
        "times": times,
        "strategies": nested(xi),
        "totals": totals(xi),
        "details": solved.details,
    });
    let mut tables = vec![("strategies".to_string(), strategy_table(&times, xi))];
    if with_costs {
        let costs = cost_report(&solved.model, &solved.sigma, solved.risk_aversion, xi).map_err(num("cost report"))?;
        results["costs"] = json!(costs
            .iter()
            .enumerate()
            .map(|(j, c)| json!({"agent": j, "expected": c.expected, "variance": c.variance, "mean_variance": c.mean_variance}))
            .collect::<Vec<_>>());
        results["risk_aversion"] = json!(solved.risk_aversion);
        let rows = costs
            .iter()
            .enumerate()
            .map(|(j, c)| vec![j as f64, c.expected, c.variance, c.mean_variance])
            .collect();
        let header = ["agent", "expected", "variance", "mean_variance"].map(String::from).to_vec();
        tables.push(("costs".into(), Table { header, rows }));
    }
    Ok(Partial { results, warnings: Vec::new(), tables })
}

fn hetero_base(config: &ExperimentConfig) -> Result<HeteroGameSpec, CliError> {
    match config.game()? {
        Game::Heterogeneous(spec) => Ok(spec),
        Game::Homogeneous(spec) => HeteroGameSpec::from_homogeneous(&spec).map_err(num("payoff matrix")),
    }
}

fn payoff(config: &ExperimentConfig) -> Result<Partial, CliError> {
    let pc = config.payoff.as_ref().ok_or_else(|| CliError::usage("payoff", "payoff-matrix needs a `payoff` section"))?;
    if let Some(j) = config.agents.iter().position(|a| a.mask.is_some()) {
        return Err(CliError::usage(format!("agents[{j}].mask"), "masks come from `payoff.options` in this experiment"));
    }
    let base = hetero_base(config)?;
    let mode = match pc.mode {
        PayoffModeConfig::Perceived => PayoffMode::Perceived,
        PayoffModeConfig::Joint => PayoffMode::Joint,
    };
    let table = payoff_matrix(&base, &pc.options, mode, pc.nash_tol).map_err(num("payoff matrix"))?;
    let agents = base.agents();
    let nash: Vec<&Vec<usize>> = table.cells.iter().filter(|c| c.nash).map(|c| &c.choice).collect();
    let mut warnings = Vec::new();
    if nash.is_empty() {
        warnings.push("no pure Nash cell in the payoff table".into());
    }
    let results = json!({
        "mode": pc.mode,
        "options_per_agent": table.options_per_agent,
        "cells": table.cells.iter().map(|c| json!({"choice": c.choice, "costs": c.costs, "nash": c.nash})).collect::<Vec<_>>(),
        "nash_cells": nash,
    });
    let mut header: Vec<String> = (0..agents).map(|j| format!("choice_j{j}")).collect();
    header.extend((0..agents).map(|j| format!("cost_j{j}")));
    header.push("nash".into());
    let rows = table
        .cells
        .iter()
        .map(|c| {
            let mut row: Vec<f64> = c.choice.iter().map(|&k| k as f64).collect();
            row.extend(&c.costs);
            row.push(if c.nash { 1.0 } else { 0.0 });
            row
        })
        .collect();
    Ok(Partial { results, warnings, tables: vec![("payoff".into(), Table { header, rows })] })
}

fn flags_json(f: &OscillationFlags) -> Value {
    json!({"flips": f.flips, "unstable": f.unstable})
}

fn theta_critical(config: &ExperimentConfig) -> Result<Partial, CliError> {
    let spec = match config.game()? {
        Game::Homogeneous(spec) => spec,
        Game::Heterogeneous(_) => {
            return Err(CliError::usage("agents", "theta-critical needs a homogeneous game (shared theta, scales and priority)"))
        }
    };
    let bracket = config.solver.bracket.map(|[a, b]| (a, b));
    let r = stability_report(&spec, bracket, config.solver.tol).map_err(num("critical theta"))?;
    let est = &r.estimated;
    let results = json!({
        "criterion": r.criterion,
        "theta": r.theta,
        "flags": r.flags.iter().map(|(v, w)| json!({"v": flags_json(v), "w": flags_json(w)})).collect::<Vec<_>>(),
        "estimated": {
            "theta_star": est.estimate,
            "bracket": [est.bracket.0, est.bracket.1],
            "method": est.method.as_str(),
            "trace": est.trace.iter().map(|(t, u)| json!({"theta": t, "unstable": u})).collect::<Vec<_>>(),
        },
        "predicted_theorem": r.predicted_theorem,
        "predicted_conjecture": r.predicted_conjecture,
        "lambda_max": r.lambda_max,
        "assets": r.assets,
        "agents": r.agents,
        "steps": r.steps,
        "risk_aversion": r.risk_aversion,
        "beta": r.beta,
    });
    let header = ["theta", "unstable"].map(String::from).to_vec();
    let rows = est.trace.iter().map(|(t, u)| vec![*t, if *u { 1.0 } else { 0.0 }]).collect();
    Ok(Partial { results, warnings: est.warnings.clone(), tables: vec![("trace".into(), Table { header, rows })] })
}

fn sweep_points(config: &ExperimentConfig) -> Result<Vec<SweepPointConfig>, CliError> {
    let s = config.sweep.as_ref().ok_or_else(|| CliError::usage("sweep", "sweep needs a `sweep` section"))?;
    if let Some(points) = &s.points {
        return Ok(points.clone());
    }
    let mut out = Vec::new();
    for &assets in &s.assets {
        for &agents in &s.agents {
            for &steps in &s.steps {
                for &gamma in &s.gamma {
                    for &beta in &s.beta {
                        out.push(SweepPointConfig { assets, agents, steps, gamma, beta });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn sweep(config: &ExperimentConfig) -> Result<Partial, CliError> {
    let points = sweep_points(config)?;
    if points.is_empty() {
        return Err(CliError::usage("sweep", "the sweep has no points"));
    }
    let q = config.sweep.as_ref().map_or(0.5, |s| s.q);
    let base = SweepBase {
        kernel: config.kernel()?,
        horizon: config.grid.horizon,
        q,
        tol: config.solver.tol,
        options: config.solver_options(),
    };
    let core: Vec<SweepPoint> = points
        .iter()
        .map(|p| SweepPoint { assets: p.assets, agents: p.agents, steps: p.steps, risk_aversion: p.gamma, beta: p.beta })
        .collect();
    // Each row runs on the worker pool; order follows the input.
    let rows: Vec<_> = core.par_iter().map(|p| sweep_row(&base, *p)).collect();
    let mut warnings = Vec::new();
    let mut json_rows = Vec::new();
    let mut table_rows = Vec::new();
    let mut discrepancies = Vec::new();
    for (k, (p, row)) in points.iter().zip(&rows).enumerate() {
        let mut entry = json!({"assets": p.assets, "agents": p.agents, "steps": p.steps, "gamma": p.gamma, "beta": p.beta});
        let mut cells = vec![p.assets as f64, p.agents as f64, p.steps as f64, p.gamma, p.beta];
        match row {
            Ok(r) => {
                if r.method == ThresholdMethod::Scan {
                    warnings.push(format!("row {k}: stability was not monotone in theta, used a scan"));
                }
                discrepancies.push(r.relative_discrepancy);
                entry["estimated"] = json!(r.estimated);
                entry["predicted"] = json!(r.predicted);
                entry["relative_discrepancy"] = json!(r.relative_discrepancy);
                entry["method"] = json!(r.method.as_str());
                entry["lambda_max"] = json!(r.lambda_max);
                entry["error"] = Value::Null;
                cells.extend([r.estimated, r.predicted, r.relative_discrepancy, r.lambda_max, 1.0]);
            }
            Err(e) => {
                warnings.push(format!("row {k}: {e}"));
                entry["error"] = json!(e.to_string());
                cells.extend([f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0.0]);
            }
        }
        json_rows.push(entry);
        table_rows.push(cells);
    }
    let n = discrepancies.len();
    let mean = if n == 0 { f64::NAN } else { discrepancies.iter().sum::<f64>() / n as f64 };
    let max = discrepancies.iter().copied().fold(f64::NAN, f64::max);
    let results = json!({
        "criterion": impact_game_core::stability::CRITERION,
        "q": q,
        "rows": json_rows,
        "succeeded": n,
        "failed": rows.len() - n,
        "mean_relative_discrepancy": mean,
        "max_relative_discrepancy": max,
    });
    let header = [
        "assets", "agents", "steps", "gamma", "beta", "estimated", "predicted", "relative_discrepancy", "lambda_max", "ok",
    ]
    .map(String::from)
    .to_vec();
    Ok(Partial { results, warnings, tables: vec![("sweep".into(), Table { header, rows: table_rows })] })
}

fn simulate(config: &ExperimentConfig) -> Result<Partial, CliError> {
    let solved = solve(config)?;
    let sim = config.simulation.clone().unwrap_or_default();
    let m = solved.model.assets();
    let s0 = sim.s0.clone().unwrap_or_else(|| vec![0.0; m]);
    let q = impact_game_core::CrossImpactMatrix::new(solved.model.cross_impact.clone())
        .map_err(num("cross impact"))?;
    let vol = match &sim.volatility {
        Some(v) => ExperimentConfig::covariance(v, &q, "simulation.volatility")?,
        None => solved.sigma.clone(),
    };
    let options = SimulationOptions {
        substeps: sim.substeps,
        horizon: sim.horizon,
        fine_times: sim.fine_times.clone(),
        seed: config.seed,
    };
    let path = simulate_price(&solved.model, &solved.strategies, &s0, &vol, &options).map_err(num("price simulation"))?;
    let post = post_trade_drift(&solved.model, &solved.strategies).map_err(num("post-trade drift"))?;
    let flips: Vec<Value> = (0..m)
        .map(|i| {
            let inc: Vec<f64> = (1..post.nrows()).map(|k| post[(k, i)] - post[(k - 1, i)]).collect();
            flags_json(&oscillation_flags(&inc, impact_game_core::stability::DEFAULT_FLIP_TOL))
        })
        .collect();
    let last = path.times.len() - 1;
    let results = json!({
        "seed": path.seed,
        "generator": path.generator,
        "points": path.times.len(),
        "post_trade_drift": matrix_rows(&post),
        "drift_increment_flags": flips,
        "final_unaffected": path.unaffected.row(last).iter().copied().collect::<Vec<_>>(),
        "final_affected": path.affected.row(last).iter().copied().collect::<Vec<_>>(),
        "strategies": nested(&solved.strategies),
    });
    let times = solved.model.grid.points().to_vec();
    let tables = vec![
        ("prices".to_string(), price_table(&path)),
        ("strategies".to_string(), strategy_table(&times, &solved.strategies)),
    ];
    Ok(Partial { results, warnings: Vec::new(), tables })
}
