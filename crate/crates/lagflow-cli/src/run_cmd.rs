//! `lagflow run`: integrate one flow from a set of initial points.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use lagflow::flows::{FlowSpec, GainSet};
use lagflow::integrate::{
    integrate, trajectory_csv, trajectory_sidecar_json, IntegrateConfig, Outcome, Trajectory,
};
use lagflow::problem::Problem;
use lagflow::sampling::BoxSampler;

use crate::config::{flow_from, parse_grid, resolve_problem, Expectation, RunFileConfig};
use crate::CmdOutcome;

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Builtin problem name (optionally with inline parameters) or path to a
    /// JSON problem document.
    #[arg(long)]
    problem: Option<String>,
    /// Flow kind: pdgd, pi, alm, fl.
    #[arg(long)]
    flow: Option<String>,
    /// Proportional gain (pi; also accepted as the alm penalty).
    #[arg(long)]
    kp: Option<f64>,
    /// Integral gain (pi; defaults to 1).
    #[arg(long)]
    ki: Option<f64>,
    /// Penalty weight (alm).
    #[arg(long)]
    w: Option<f64>,
    /// Output-decay gain (fl).
    #[arg(long)]
    k: Option<f64>,
    /// Number of seeded initial points.
    #[arg(long)]
    inits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// KKT-residual convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Integration horizon.
    #[arg(long)]
    tmax: Option<f64>,
    /// Integrator: rk4_fixed, rk45_adaptive, semi_implicit.
    #[arg(long)]
    method: Option<String>,
    /// Fixed step size (rk4_fixed, semi_implicit).
    #[arg(long)]
    dt: Option<f64>,
    /// Relative tolerance (rk45_adaptive).
    #[arg(long)]
    rtol: Option<f64>,
    /// Absolute tolerance (rk45_adaptive).
    #[arg(long)]
    atol: Option<f64>,
    /// Record every n-th accepted step.
    #[arg(long)]
    stride: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Expected outcome: converge (default), diverge, none.
    #[arg(long)]
    expect: Option<Expectation>,
    /// JSON config file; flags win on conflict.
    #[arg(long)]
    config: Option<String>,
    /// Grid spec accepted for interface symmetry with `constants`; unused
    /// here.
    #[arg(long, hide = true)]
    grid: Option<String>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    problem: &'a str,
    flow: String,
    seed: u64,
    expect: Expectation,
    integrator: &'a IntegrateConfig,
    trajectories: Vec<TrajectorySummary>,
}

#[derive(Serialize)]
struct TrajectorySummary {
    file: String,
    initial: Vec<f64>,
    outcome: Outcome,
    final_time: f64,
    final_stationarity: f64,
    final_feasibility: f64,
}

pub fn run(args: RunArgs) -> Result<CmdOutcome> {
    if let Some(grid) = &args.grid {
        parse_grid(grid)?; // validated for message quality, then ignored
    }
    let file = match &args.config {
        Some(path) => RunFileConfig::load(path)?,
        None => RunFileConfig::default(),
    };

    let problem_ref = args
        .problem
        .clone()
        .or_else(|| file.problem.clone())
        .context("no problem selected: pass --problem or set `problem` in the config file")?;
    let problem = resolve_problem(&problem_ref)?;

    let gains = GainSet {
        k_p: args.kp,
        k_i: args.ki,
        w: args.w,
        k: args.k,
    };
    let spec = flow_from(file.flow.as_ref(), args.flow.as_deref(), &gains)?;

    let seed = args.seed.or(file.seed).unwrap_or(7);
    let initial_points = initial_points(&problem, &file, args.inits, seed)?;

    let mut cfg = file.integrator(IntegrateConfig::default());
    if let Some(tol) = args.tol {
        cfg.converge_tol = tol;
    }
    if let Some(tmax) = args.tmax {
        cfg.t_max = tmax;
    }
    if let Some(method) = &args.method {
        cfg.method = method.parse().map_err(anyhow::Error::msg)?;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(rtol) = args.rtol {
        cfg.rel_tol = rtol;
    }
    if let Some(atol) = args.atol {
        cfg.abs_tol = atol;
    }
    if let Some(stride) = args.stride {
        cfg.record_stride = stride;
    }
    let expect = args.expect.or(file.expect).unwrap_or_default();
    let out_dir = PathBuf::from(args.out.or(file.out).unwrap_or_else(|| ".".into()));
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let trajectories = run_sweep(&problem, &spec, &initial_points, &cfg)?;

    let mut summaries = Vec::new();
    let mut mismatches = Vec::new();
    for (idx, traj) in trajectories.iter().enumerate() {
        let stem = format!("traj_{}_{idx:02}", file_label(&spec));
        let csv_path = out_dir.join(format!("{stem}.csv"));
        fs::write(&csv_path, trajectory_csv(traj))
            .with_context(|| format!("writing {}", csv_path.display()))?;
        let sidecar_path = out_dir.join(format!("{stem}.json"));
        fs::write(&sidecar_path, trajectory_sidecar_json(traj))
            .with_context(|| format!("writing {}", sidecar_path.display()))?;
        summaries.push(TrajectorySummary {
            file: format!("{stem}.csv"),
            initial: initial_points[idx].iter().copied().collect(),
            outcome: traj.outcome,
            final_time: traj.final_time(),
            final_stationarity: *traj.stationarity.last().expect("non-empty"),
            final_feasibility: *traj.feasibility.last().expect("non-empty"),
        });
        if !expect.matches(traj.outcome) {
            mismatches.push(format!(
                "trajectory {idx} from {:?} ended {:?}",
                summaries[idx].initial, traj.outcome
            ));
        }
    }

    let summary = RunSummary {
        problem: problem.name(),
        flow: spec.dynamics()?.label(),
        seed,
        expect,
        integrator: &cfg,
        trajectories: summaries,
    };
    let summary_path = out_dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", summary_path.display()))?;

    println!(
        "{}: {} trajectories written to {}",
        summary.flow,
        initial_points.len(),
        out_dir.display()
    );
    if mismatches.is_empty() {
        Ok(CmdOutcome::Success)
    } else {
        Ok(CmdOutcome::UnexpectedOutcome(mismatches.join("; ")))
    }
}

fn initial_points(
    problem: &Problem,
    file: &RunFileConfig,
    inits_flag: Option<usize>,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    if let Some(points) = &file.initial_points {
        if points.is_empty() {
            bail!("initial_points must not be empty");
        }
        return points
            .iter()
            .map(|p| {
                if p.len() != problem.primal_dim() {
                    bail!(
                        "initial point {:?} has dimension {}, problem needs {}",
                        p,
                        p.len(),
                        problem.primal_dim()
                    );
                }
                Ok(DVector::from_vec(p.clone()))
            })
            .collect();
    }
    let count = inits_flag.or(file.inits).unwrap_or(8);
    if count == 0 {
        bail!("need at least one initial point");
    }
    Ok(BoxSampler::new(seed).points(problem.region(), count))
}

/// Trajectories for independent initial points integrate in parallel;
/// results keep the input order so output files are deterministic.
pub fn run_sweep(
    problem: &Problem,
    spec: &FlowSpec,
    initial_points: &[DVector<f64>],
    cfg: &IntegrateConfig,
) -> Result<Vec<Trajectory>> {
    initial_points
        .par_iter()
        .map(|x0| {
            let flow = spec.dynamics()?;
            integrate(problem, flow.as_ref(), x0, None, cfg).map_err(Into::into)
        })
        .collect()
}

pub fn file_label(spec: &FlowSpec) -> String {
    match spec {
        FlowSpec::Pdgd => "pdgd".into(),
        FlowSpec::Pi { k_p, k_i } => format!("pi_kp{k_p}_ki{k_i}"),
        FlowSpec::Alm { w } => format!("alm_w{w}"),
        FlowSpec::Fl { k } => format!("fl_k{k}"),
    }
}
