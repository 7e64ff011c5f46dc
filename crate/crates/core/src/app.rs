//! Run drivers behind the `railopt` binary.
//!
//! Each `run_*` reads a validated [`RunConfig`], runs inside a rayon pool
//! capped by `RAILOPT_THREADS`, writes its artifacts plus `config.json` and
//! `summary.json`, and returns the summary. Wall time is reported but kept
//! out of `summary.json` so that repeated runs produce identical files.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::{adjoint_solve, gradient, KKTResidual};
use crate::config::{RunConfig, Setup};
use crate::error::{Error, Result};
use crate::forward::{evaluate_cost, forward_solve};
use crate::optimize::{optimize, project_control};
use crate::oracle::{derivative_floor, fd_gradient, gradcheck, relative_error_floored, smooth_direction, sweep_shape, DirectionCheck, GradCheckReport, GRADCHECK_TOL};
use crate::output::{self, ArtifactWriter};

/// Environment variable capping concurrent oracle evaluations.
pub const THREADS_ENV: &str = "RAILOPT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Optimize,
    Gradcheck,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Optimize => "optimize",
            Command::Gradcheck => "gradcheck",
            Command::Sweep => "sweep",
        }
    }
}

/// Per-invocation switches that are not part of the config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output_dir`.
    pub out_dir: Option<PathBuf>,
    /// Also write `physical.csv`.
    pub physical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckSummary {
    pub epsilon: f64,
    pub worst_relative_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub argmin: Option<Vec<f64>>,
    pub min_cost: Option<f64>,
    pub failed_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: &'static str,
    pub status: String,
    #[serde(rename = "J_initial")]
    pub j_initial: f64,
    #[serde(rename = "J_final")]
    pub j_final: f64,
    pub iterations: usize,
    pub kkt: Option<KKTResidual>,
    pub r_initial: Vec<f64>,
    pub r_final: Vec<f64>,
    pub control_l2_norm: f64,
    pub gradcheck: Option<GradCheckSummary>,
    pub sweep: Option<SweepSummary>,
    pub config: serde_json::Value,
    pub files: Vec<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RunSummary {
    /// 0, or 4 for a failed gradient check. Errors map through
    /// [`exit_code_for`].
    pub fn exit_code(&self) -> i32 {
        match &self.gradcheck {
            Some(g) if !g.pass => 4,
            _ => 0,
        }
    }
}

/// 2 for config problems, 3 for solver failures, 1 otherwise.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::Parse(_) | Error::InvalidShape(_) | Error::LengthMismatch { .. } => 2,
        Error::NewtonDivergence { .. } | Error::SingularStep { .. } => 3,
        Error::Io { .. } => 1,
    }
}

/// Thread count from `RAILOPT_THREADS`, else the machine's parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got `{s}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `command` on `config` and writes its artifacts.
pub fn run(command: Command, config: &RunConfig, opts: &RunOptions) -> Result<RunSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let mut summary = pool.install(|| match command {
        Command::Simulate => run_simulate(config, opts),
        Command::Optimize => run_optimize(config, opts),
        Command::Gradcheck => run_gradcheck(config, opts),
        Command::Sweep => run_sweep(config, opts),
    })?;
    summary.wall_time = start.elapsed();
    Ok(summary)
}

fn writer(config: &RunConfig, opts: &RunOptions) -> Result<ArtifactWriter> {
    let dir = match &opts.out_dir {
        Some(d) => d.clone(),
        None => config.resolve(&config.output_dir),
    };
    ArtifactWriter::new(&dir)
}

fn base_summary(command: Command, config: &RunConfig, setup: &Setup) -> RunSummary {
    RunSummary {
        command: command.name(),
        status: "ok".into(),
        j_initial: f64::NAN,
        j_final: f64::NAN,
        iterations: 0,
        kkt: None,
        r_initial: setup.r_init.values().to_vec(),
        r_final: setup.r_init.values().to_vec(),
        control_l2_norm: setup.u_init.l2_norm(&setup.grid),
        gradcheck: None,
        sweep: None,
        config: serde_json::from_str(&config.echo()).expect("echo is valid JSON"),
        files: Vec::new(),
        wall_time: Duration::ZERO,
    }
}

fn finish(mut summary: RunSummary, mut w: ArtifactWriter, config: &RunConfig) -> Result<RunSummary> {
    w.write("config.json", &config.echo())?;
    summary.files = w.files().to_vec();
    summary.files.push("summary.json".into());
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    w.write("summary.json", &text)?;
    Ok(summary)
}

/// Forward solve at the configured control and shape.
pub fn run_simulate(config: &RunConfig, opts: &RunOptions) -> Result<RunSummary> {
    let setup = config.setup()?;
    let mut w = writer(config, opts)?;
    let traj = forward_solve(&setup.model, &setup.u_init, &setup.r_init, &setup.x0)?;
    let cost = evaluate_cost(&setup.model, &traj);
    w.write("trajectory.csv", &output::trajectory_csv(&traj))?;
    if opts.physical {
        w.write("physical.csv", &output::physical_csv(&setup.model, &traj))?;
    }
    w.write("shape.csv", &output::shape_csv(&setup.model, &setup.r_init))?;
    w.write("control.csv", &output::control_csv(&setup.grid, &setup.u_init.samples))?;
    let mut summary = base_summary(Command::Simulate, config, &setup);
    summary.j_initial = cost;
    summary.j_final = cost;
    finish(summary, w, config)
}

/// Minimizes `J` over control and shape from the configured start.
pub fn run_optimize(config: &RunConfig, opts: &RunOptions) -> Result<RunSummary> {
    let setup = config.setup()?;
    let mut w = writer(config, opts)?;
    let res = optimize(&setup.model, &setup.sets, &config.optimizer, &setup.x0, &setup.u_init, &setup.r_init)?;
    w.write("trajectory.csv", &output::trajectory_csv(&res.trajectory))?;
    if opts.physical {
        w.write("physical.csv", &output::physical_csv(&setup.model, &res.trajectory))?;
    }
    w.write("history.csv", &output::history_csv(&res.log))?;
    w.write("shape.csv", &output::shape_csv(&setup.model, &res.r_opt))?;
    w.write("control.csv", &output::control_csv(&setup.grid, &res.u_opt.samples))?;
    let mut summary = base_summary(Command::Optimize, config, &setup);
    summary.status = serde_json::to_value(res.status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    summary.j_initial = res.initial_cost;
    summary.j_final = res.cost;
    summary.iterations = res.iterations();
    summary.kkt = Some(res.kkt.clone());
    summary.r_final = res.r_opt.values().to_vec();
    summary.control_l2_norm = res.u_opt.l2_norm(&setup.grid);
    finish(summary, w, config)
}

/// Adjoint gradient against central differences at the configured point.
pub fn run_gradcheck(config: &RunConfig, opts: &RunOptions) -> Result<RunSummary> {
    let mut setup = config.setup()?;
    let spec = &config.gradcheck;
    if spec.control_perturbation != 0.0 {
        // seed + 1 keeps the perturbation independent of the probe directions
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
        let bump = smooth_direction(&setup.grid, &mut rng);
        let moved: Vec<f64> = setup
            .u_init
            .samples
            .iter()
            .zip(&bump)
            .map(|(u, b)| u + spec.control_perturbation * b)
            .collect();
        let projected = project_control(&moved, &setup.grid, setup.sets.control_ball_radius);
        setup.u_init = setup.u_init.with_samples(projected);
    }
    let mut w = writer(config, opts)?;
    let mut report = gradcheck(
        &setup.model,
        &setup.u_init,
        &setup.r_init,
        &setup.x0,
        spec.epsilon,
        spec.directions,
        spec.seed,
    )?;
    let traj = forward_solve(&setup.model, &setup.u_init, &setup.r_init, &setup.x0)?;
    let cost = evaluate_cost(&setup.model, &traj);
    if spec.full {
        let adj = adjoint_solve(&setup.model, &traj)?;
        let grad = gradient(&setup.model, &traj, &adj);
        let (fd_u, _) = fd_gradient(&setup.model, &setup.u_init, &setup.r_init, &setup.x0, spec.epsilon)?;
        let peak = grad.grad_u.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let diff = grad.grad_u.iter().zip(&fd_u).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let rel = relative_error_floored(diff, 0.0, peak.max(derivative_floor(cost)));
        report.directions.push(DirectionCheck {
            label: "u/all-nodes".into(),
            adjoint: peak,
            finite_difference: fd_u.iter().fold(0.0_f64, |m, g| m.max(g.abs())),
            relative_error: rel,
        });
        report = GradCheckReport {
            worst: report.worst.max(rel),
            pass: report.worst.max(rel) <= GRADCHECK_TOL,
            ..report
        };
    }
    w.write("gradcheck.csv", &output::gradcheck_csv(&report))?;
    let mut summary = base_summary(Command::Gradcheck, config, &setup);
    summary.status = if report.pass { "pass" } else { "fail" }.into();
    summary.j_initial = cost;
    summary.j_final = cost;
    summary.gradcheck = Some(GradCheckSummary {
        epsilon: report.epsilon,
        worst_relative_error: report.worst,
        pass: report.pass,
    });
    finish(summary, w, config)
}

/// Brute-force shape sweep with the control relaxed at every grid point.
pub fn run_sweep(config: &RunConfig, opts: &RunOptions) -> Result<RunSummary> {
    let setup = config.setup()?;
    let mut w = writer(config, opts)?;
    let sweep = sweep_shape(
        &setup.model,
        &setup.sets,
        &config.optimizer,
        &setup.x0,
        &setup.u_init,
        &setup.r_init,
        &config.sweep.params,
        &config.sweep.grid_sizes,
    )?;
    w.write("sweep.csv", &output::sweep_csv(&sweep))?;
    let start_cost = {
        let traj = forward_solve(&setup.model, &setup.u_init, &setup.r_init, &setup.x0)?;
        evaluate_cost(&setup.model, &traj)
    };
    let mut summary = base_summary(Command::Sweep, config, &setup);
    summary.j_initial = start_cost;
    summary.j_final = sweep.min_cost().unwrap_or(f64::NAN);
    if let Some(i) = sweep.argmin {
        summary.r_final = sweep.points[i].clone();
    }
    summary.sweep = Some(SweepSummary {
        argmin: sweep.argmin.map(|i| sweep.points[i].clone()),
        min_cost: sweep.min_cost(),
        failed_points: sweep.costs.iter().filter(|c| c.is_none()).count(),
    });
    finish(summary, w, config)
}
