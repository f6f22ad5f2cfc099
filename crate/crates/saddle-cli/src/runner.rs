//! Experiment execution: builds instances, runs every configured solver on
//! every instance, writes per-iteration CSV traces and a JSON summary, and
//! (in verification mode) checks the Lyapunov certificates iteration by
//! iteration.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use saddle_core::apdg::{self, ApdgParams};
use saddle_core::baselines::{
    self, default_extragradient_stepsize, default_gda_stepsizes, Baseline,
};
use saddle_core::diagnostics::{
    fit_linear_rate, theoretical_complexity, RunRecord, SolverKind, DEFAULT_BURN_IN,
};
use saddle_core::gdae::{self, GdaeParams};
use saddle_core::problem::IteratePair;
use saddle_core::problems::QuadraticSaddleInstance;
use saddle_core::{RunOptions, RunStatus, SaddleError, StoppingRule, Vector};

use crate::config::{Config, SolverName, SolverSpec};

/// Failure classes mapped onto exit codes: configuration problems exit 1,
/// internal failures and certificate violations exit 2.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Internal(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Internal(_) | CliError::Verification(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
            CliError::Verification(msg) => write!(f, "verification failed: {msg}"),
        }
    }
}

fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    let config: Config = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if config.instances.is_empty() || config.solvers.is_empty() {
        return Err(CliError::Config("no experiments: need at least one instance and one solver".into()));
    }
    let mut names: Vec<&str> = config.instances.iter().map(|i| i.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != config.instances.len() {
        return Err(CliError::Config("instance names must be unique".into()));
    }
    // Reject malformed solver blocks before any output is written.
    for solver in &config.solvers {
        solver.regime_choice().map_err(CliError::Config)?;
    }
    Ok(config)
}

fn start_point(inst: &QuadraticSaddleInstance) -> IteratePair {
    IteratePair::new(
        Vector::from_element(inst.dim_x(), 1.0),
        Vector::from_element(inst.dim_y(), -1.0),
    )
}

/// One executed (instance, solver) pair.
struct Outcome {
    record: Option<RunRecord>,
    regime: Option<String>,
    scheduled_theta: Option<f64>,
    eta_x: Option<f64>,
    eta_y: Option<f64>,
    theoretical_t: Option<f64>,
    theoretical_best: Option<String>,
    inapplicable: Option<String>,
}

#[derive(Serialize)]
struct RunSummary {
    instance: String,
    solver: String,
    status: String,
    iterations: u64,
    final_residual: Option<f64>,
    scheduled_theta: Option<f64>,
    regime: Option<String>,
    fitted_rate: Option<f64>,
    fit_r_squared: Option<f64>,
    grad_f_calls: u64,
    grad_g_calls: u64,
    matvec_calls: u64,
    theoretical_t: Option<f64>,
    theoretical_best_regime: Option<String>,
    trace: Option<String>,
    note: Option<String>,
}

fn apply_apdg_perturbations(
    params: ApdgParams,
    solver: &SolverSpec,
) -> Result<ApdgParams, CliError> {
    if solver.eta_x_scale.is_none()
        && solver.eta_y_scale.is_none()
        && solver.theta_scale.is_none()
    {
        return Ok(params);
    }
    ApdgParams::new(
        params.eta_x * solver.eta_x_scale.unwrap_or(1.0),
        params.eta_y * solver.eta_y_scale.unwrap_or(1.0),
        params.alpha_x,
        params.alpha_y,
        params.beta_x,
        params.beta_y,
        params.tau_x,
        params.tau_y,
        params.sigma_x,
        params.sigma_y,
        params.theta * solver.theta_scale.unwrap_or(1.0),
        params.delta,
        params.regime,
    )
    .map_err(|e| CliError::Config(format!("perturbed parameters are invalid: {e}")))
}

fn apply_gdae_perturbations(
    params: GdaeParams,
    solver: &SolverSpec,
) -> Result<GdaeParams, CliError> {
    if solver.eta_x_scale.is_none()
        && solver.eta_y_scale.is_none()
        && solver.theta_scale.is_none()
    {
        return Ok(params);
    }
    GdaeParams::new(
        params.eta_x * solver.eta_x_scale.unwrap_or(1.0),
        params.eta_y * solver.eta_y_scale.unwrap_or(1.0),
        params.theta * solver.theta_scale.unwrap_or(1.0),
        params.delta,
        params.regime,
    )
    .map_err(|e| CliError::Config(format!("perturbed parameters are invalid: {e}")))
}

fn execute(
    inst: &QuadraticSaddleInstance,
    solver: &SolverSpec,
    stop: StoppingRule,
    track_lyapunov: bool,
) -> Result<Outcome, CliError> {
    let choice = solver.regime_choice().map_err(CliError::Config)?;
    let start = start_point(inst);
    let mut outcome = Outcome {
        record: None,
        regime: None,
        scheduled_theta: None,
        eta_x: None,
        eta_y: None,
        theoretical_t: None,
        theoretical_best: None,
        inapplicable: None,
    };
    match solver.name {
        SolverName::Apdg => {
            let problem = inst.problem();
            let params = match apdg::schedule_params(problem.spec(), choice) {
                Ok(p) => apply_apdg_perturbations(p, solver)?,
                Err(SaddleError::NoApplicableRegime(msg)) => {
                    outcome.inapplicable = Some(msg);
                    return Ok(outcome);
                }
                Err(e) => return Err(CliError::Internal(e.to_string())),
            };
            let mut opts = RunOptions::new(stop).with_reference(inst.reference().clone());
            opts.track_lyapunov = track_lyapunov && problem.has_values();
            let record = apdg::run_apdg(&problem, &params, &start, &opts)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            let report = theoretical_complexity(problem.spec(), SolverKind::Apdg)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            outcome.theoretical_t = finite(report.value(params.regime));
            outcome.theoretical_best = Some(report.best_regime.to_string());
            outcome.regime = Some(params.regime.to_string());
            outcome.scheduled_theta = Some(params.theta);
            outcome.eta_x = Some(params.eta_x);
            outcome.eta_y = Some(params.eta_y);
            outcome.record = Some(record);
        }
        SolverName::Gdae => {
            let problem = inst.general_problem();
            let params = match gdae::schedule_gdae_params(problem.spec(), choice) {
                Ok(p) => apply_gdae_perturbations(p, solver)?,
                Err(SaddleError::NoApplicableRegime(msg)) => {
                    outcome.inapplicable = Some(msg);
                    return Ok(outcome);
                }
                Err(e) => return Err(CliError::Internal(e.to_string())),
            };
            let mut opts = RunOptions::new(stop).with_reference(inst.reference().clone());
            opts.track_lyapunov = track_lyapunov;
            let record = gdae::run_gdae(&problem, &params, &start, &opts)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            let report = theoretical_complexity(problem.spec(), SolverKind::Gdae)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            outcome.theoretical_t = finite(report.value(params.regime));
            outcome.theoretical_best = Some(report.best_regime.to_string());
            outcome.regime = Some(params.regime.to_string());
            outcome.scheduled_theta = Some(params.theta);
            outcome.eta_x = Some(params.eta_x);
            outcome.eta_y = Some(params.eta_y);
            outcome.record = Some(record);
        }
        SolverName::SimGda | SolverName::AltGda => {
            let problem = inst.general_problem();
            let (dx, dy) = default_gda_stepsizes(inst.spec());
            let eta_x = solver.eta_x.or(solver.eta).unwrap_or(dx);
            let eta_y = solver.eta_y.or(solver.eta).unwrap_or(dy);
            let method = if solver.name == SolverName::SimGda {
                Baseline::SimGda { eta_x, eta_y }
            } else {
                Baseline::AltGda { eta_x, eta_y }
            };
            let opts = RunOptions::new(stop).with_reference(inst.reference().clone());
            let record = baselines::run_baseline(&problem, method, &start, &opts)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            outcome.record = Some(record);
        }
        SolverName::Extragradient => {
            let problem = inst.general_problem();
            let eta = solver
                .eta
                .unwrap_or_else(|| default_extragradient_stepsize(inst.spec()));
            let opts = RunOptions::new(stop).with_reference(inst.reference().clone());
            let record = baselines::run_baseline(
                &problem,
                Baseline::Extragradient { eta },
                &start,
                &opts,
            )
            .map_err(|e| CliError::Internal(e.to_string()))?;
            outcome.record = Some(record);
        }
        SolverName::ForwardBackward => {
            let problem = inst.problem();
            let fallback = default_extragradient_stepsize(inst.spec());
            let eta_x = solver.eta_x.or(solver.eta).unwrap_or(fallback);
            let eta_y = solver.eta_y.or(solver.eta).unwrap_or(fallback);
            let opts = RunOptions::new(stop).with_reference(inst.reference().clone());
            let record =
                baselines::run_forward_backward(&problem, eta_x, eta_y, &start, &opts)
                    .map_err(|e| CliError::Internal(e.to_string()))?;
            outcome.record = Some(record);
        }
    }
    Ok(outcome)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn trace_csv(record: &RunRecord) -> String {
    let mut out = String::new();
    out.push_str("k,residual,dist_x_sq,dist_y_sq,lyapunov,grad_f_calls,grad_g_calls,matvec_calls\n");
    for k in 0..record.residuals.len() {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{},{},{}",
            k,
            record.residuals[k],
            record.dist_x_sq[k],
            record.dist_y_sq[k],
            record.lyapunov[k],
            record.grad_f_calls[k],
            record.grad_g_calls[k],
            record.matvec_calls[k],
        );
    }
    out
}

/// Runs every configured (instance, solver) pair: one CSV trace per run, one
/// serialized instance per problem, and a `summary.json` with one document
/// per run. Divergence and regime inapplicability are recorded outcomes, not
/// failures.
pub fn run_experiment(config_path: &Path) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    fs::create_dir_all(&config.output_dir)
        .map_err(|e| CliError::Internal(format!("cannot create output dir: {e}")))?;

    let stop = StoppingRule {
        max_iterations: config.run.max_iterations,
        residual_tolerance: Some(config.run.tolerance),
        epsilon_accuracy: None,
    };

    let mut summaries = Vec::new();
    for spec in &config.instances {
        let inst = spec
            .build()
            .map_err(|e| CliError::Config(format!("instance '{}': {e}", spec.name)))?;
        let instance_file = config.output_dir.join(format!("{}.instance.toml", spec.name));
        let data = toml::to_string_pretty(&inst.to_data())
            .map_err(|e| CliError::Internal(e.to_string()))?;
        fs::write(&instance_file, data)
            .map_err(|e| CliError::Internal(format!("write {}: {e}", instance_file.display())))?;

        for solver in &config.solvers {
            let outcome = execute(&inst, solver, stop.clone(), true)?;
            let label = solver.label();
            let summary = match outcome.record {
                Some(record) => {
                    let trace_name = format!("{}__{}.csv", spec.name, label);
                    let path = config.output_dir.join(&trace_name);
                    fs::write(&path, trace_csv(&record))
                        .map_err(|e| CliError::Internal(format!("write trace: {e}")))?;
                    let fit = fit_linear_rate(&record, DEFAULT_BURN_IN).ok();
                    println!(
                        "run {} x {}: {} after {} iterations (residual {:.3e})",
                        spec.name,
                        label,
                        record.status,
                        record.iterations(),
                        record.final_residual()
                    );
                    RunSummary {
                        instance: spec.name.clone(),
                        solver: label,
                        status: record.status.to_string(),
                        iterations: record.iterations() as u64,
                        final_residual: finite(record.final_residual()),
                        scheduled_theta: outcome.scheduled_theta,
                        regime: outcome.regime,
                        fitted_rate: fit.map(|f| f.rate),
                        fit_r_squared: fit.map(|f| f.r_squared),
                        grad_f_calls: *record.grad_f_calls.last().unwrap_or(&0),
                        grad_g_calls: *record.grad_g_calls.last().unwrap_or(&0),
                        matvec_calls: *record.matvec_calls.last().unwrap_or(&0),
                        theoretical_t: outcome.theoretical_t,
                        theoretical_best_regime: outcome.theoretical_best,
                        trace: Some(trace_name),
                        note: None,
                    }
                }
                None => {
                    println!("run {} x {}: inapplicable", spec.name, label);
                    RunSummary {
                        instance: spec.name.clone(),
                        solver: label,
                        status: "inapplicable".into(),
                        iterations: 0,
                        final_residual: None,
                        scheduled_theta: None,
                        regime: None,
                        fitted_rate: None,
                        fit_r_squared: None,
                        grad_f_calls: 0,
                        grad_g_calls: 0,
                        matvec_calls: 0,
                        theoretical_t: None,
                        theoretical_best_regime: None,
                        trace: None,
                        note: outcome.inapplicable,
                    }
                }
            };
            summaries.push(summary);
        }
    }

    let summary_path = config.output_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summaries)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(&summary_path, json + "\n")
        .map_err(|e| CliError::Internal(format!("write summary: {e}")))?;
    println!(
        "{} runs summarized in {}",
        summaries.len(),
        summary_path.display()
    );
    Ok(())
}

/// Re-runs every configured scheduled solver with Lyapunov tracking and
/// checks, at every iteration, the contraction `Psi_{k+1} <= theta Psi_k`
/// and the distance sandwich
/// `Psi_k >= 3/(4 eta_x) |x - x*|^2 + 1/eta_y |y - y*|^2`, each with
/// `1e-9 Psi_0` slack. Exit is zero only when every run certifies.
pub fn verify_certificates(config_path: &Path) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    for solver in &config.solvers {
        if !solver.name.is_scheduled() {
            return Err(CliError::Config(format!(
                "certificate verification only applies to scheduled solvers, got '{}'",
                solver.name.as_str()
            )));
        }
    }

    let stop = StoppingRule::max_iterations(config.run.certificate_iterations);
    let mut violations = 0usize;
    for spec in &config.instances {
        let inst = spec
            .build()
            .map_err(|e| CliError::Config(format!("instance '{}': {e}", spec.name)))?;
        for solver in &config.solvers {
            let outcome = execute(&inst, solver, stop.clone(), true)?;
            let label = solver.label();
            let Some(record) = outcome.record else {
                return Err(CliError::Config(format!(
                    "{} x {label}: regime not applicable; certificate suites must pair instances with applicable regimes",
                    spec.name
                )));
            };
            let theta = outcome.scheduled_theta.expect("scheduled solver has theta");
            let (eta_x, eta_y) = (outcome.eta_x.unwrap(), outcome.eta_y.unwrap());
            let psi = &record.lyapunov;
            let slack = 1e-9 * psi[0];
            let mut run_violations = 0usize;
            for k in 0..record.residuals.len() {
                if k + 1 < psi.len() {
                    let margin = psi[k + 1] - theta * psi[k] - slack;
                    if margin > 0.0 {
                        println!(
                            "VIOLATION {} x {label}: contraction at iteration {k}, margin {margin:.3e}",
                            spec.name
                        );
                        run_violations += 1;
                    }
                }
                let lower =
                    0.75 / eta_x * record.dist_x_sq[k] + record.dist_y_sq[k] / eta_y;
                let margin = lower - psi[k] - slack;
                if margin > 0.0 {
                    println!(
                        "VIOLATION {} x {label}: sandwich at iteration {k}, margin {margin:.3e}",
                        spec.name
                    );
                    run_violations += 1;
                }
            }
            if record.status == RunStatus::Diverged {
                println!("VIOLATION {} x {label}: run diverged", spec.name);
                run_violations += 1;
            }
            if run_violations == 0 {
                println!(
                    "certified {} x {label}: theta = {theta:.6}, {} iterations",
                    spec.name,
                    record.iterations()
                );
            }
            violations += run_violations;
        }
    }
    if violations > 0 {
        return Err(CliError::Verification(format!(
            "{violations} certificate violations"
        )));
    }
    println!("all certificates hold");
    Ok(())
}
