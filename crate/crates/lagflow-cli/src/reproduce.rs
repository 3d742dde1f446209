//! `lagflow reproduce fig2`: the committed two-dimensional benchmark sweep.
//!
//! Five flow families are integrated from the same eight seeded initial
//! points on `illustrative_2d`: feedback linearization at two output gains,
//! PI at a moderate hand gain, PI at the computed threshold gain `k_p★`
//! (which is explicit-method-stiff and runs under the linearly-implicit
//! integrator), and the pure-integral flow, which is expected to diverge.
//! Emitted artifacts: one CSV + JSON sidecar per trajectory, the
//! classification table, objective level-set samples for external plotting,
//! and a summary JSON. Everything is deterministic for a fixed seed.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use lagflow::analysis::{classify_sweep, sweep_csv, SweepItem};
use lagflow::constants::SamplingPlan;
use lagflow::flows::FlowSpec;
use lagflow::integrate::{
    trajectory_csv, trajectory_sidecar_json, IntegrateConfig, Method, Outcome,
};
use lagflow::problem::{builtin, reference_solution};
use lagflow::sampling::{linspace, BoxSampler};

use crate::config::Expectation;
use crate::run_cmd::{file_label, run_sweep};
use crate::CmdOutcome;

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    /// Which committed configuration to run. Only `fig2` is registered.
    figure: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Serialize)]
struct FamilySummary {
    label: String,
    method: Method,
    expected: Expectation,
    outcomes: Vec<Outcome>,
    as_expected: bool,
}

#[derive(Serialize)]
struct Fig2Summary {
    problem: String,
    seed: u64,
    initial_points: Vec<Vec<f64>>,
    k_p_star: f64,
    families: Vec<FamilySummary>,
    all_as_expected: bool,
}

pub fn run(args: ReproduceArgs) -> Result<CmdOutcome> {
    if args.figure != "fig2" {
        anyhow::bail!("unknown reproduction `{}` (expected fig2)", args.figure);
    }
    let out_dir = PathBuf::from(args.out.unwrap_or_else(|| "fig2_out".into()));
    fs::create_dir_all(&out_dir)?;

    let problem = builtin("illustrative_2d")?;
    let initial_points = BoxSampler::new(args.seed).points(problem.region(), 8);

    // Threshold gain from the default estimation pipeline at k = 1.
    let plan = SamplingPlan::default();
    let report = crate::constants_cmd::pipeline(&problem, &plan, 1.0)?;
    let k_p_star = report
        .threshold
        .as_ref()
        .expect("pipeline sets threshold")
        .k_p_star;

    let adaptive = IntegrateConfig {
        t_max: 2000.0,
        ..Default::default()
    };
    let families: Vec<(FlowSpec, IntegrateConfig, Expectation)> = vec![
        (
            FlowSpec::Fl { k: 1.0 },
            adaptive.clone(),
            Expectation::Converge,
        ),
        (
            FlowSpec::Fl { k: 10.0 },
            adaptive.clone(),
            Expectation::Converge,
        ),
        (
            FlowSpec::Pi {
                k_p: 100.0,
                k_i: 1.0,
            },
            IntegrateConfig {
                record_stride: 50,
                ..adaptive.clone()
            },
            Expectation::Converge,
        ),
        (
            FlowSpec::Pi {
                k_p: k_p_star,
                k_i: 1.0,
            },
            IntegrateConfig {
                method: Method::SemiImplicit,
                dt: 2e-3,
                t_max: 40.0,
                record_stride: 100,
                ..Default::default()
            },
            Expectation::Converge,
        ),
        (
            FlowSpec::Pdgd,
            IntegrateConfig {
                t_max: 200.0,
                ..Default::default()
            },
            Expectation::Diverge,
        ),
    ];

    let kkt = reference_solution(&problem)?;
    let mut items = Vec::new();
    let mut summaries = Vec::new();
    for (spec, cfg, expected) in &families {
        let trajectories = run_sweep(&problem, spec, &initial_points, cfg)?;
        let label = spec.dynamics()?.label();
        let mut outcomes = Vec::new();
        for (idx, traj) in trajectories.into_iter().enumerate() {
            let stem = format!("traj_{}_{idx:02}", file_label(spec));
            fs::write(out_dir.join(format!("{stem}.csv")), trajectory_csv(&traj))
                .with_context(|| format!("writing {stem}.csv"))?;
            fs::write(
                out_dir.join(format!("{stem}.json")),
                trajectory_sidecar_json(&traj),
            )?;
            outcomes.push(traj.outcome);
            items.push(SweepItem {
                flow: label.clone(),
                initial: initial_points[idx].clone(),
                traj,
            });
        }
        let as_expected = outcomes.iter().all(|&o| expected.matches(o));
        summaries.push(FamilySummary {
            label,
            method: cfg.method,
            expected: *expected,
            outcomes,
            as_expected,
        });
    }

    let rows = classify_sweep(&items, Some(&kkt.x_star));
    fs::write(out_dir.join("fig2_classification.csv"), sweep_csv(&rows))?;
    fs::write(out_dir.join("fig2_levelsets.csv"), levelset_csv(&problem))?;

    let all_as_expected = summaries.iter().all(|f| f.as_expected);
    let summary = Fig2Summary {
        problem: problem.name().to_string(),
        seed: args.seed,
        initial_points: initial_points
            .iter()
            .map(|p| p.iter().copied().collect())
            .collect(),
        k_p_star,
        families: summaries,
        all_as_expected,
    };
    fs::write(
        out_dir.join("fig2_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    for family in &summary.families {
        println!(
            "{:<24} {:?}: {}",
            family.label,
            family.expected,
            if family.as_expected {
                "as expected"
            } else {
                "UNEXPECTED"
            }
        );
    }
    println!(
        "k_p_star = {k_p_star:.6e}; artifacts in {}",
        out_dir.display()
    );

    if all_as_expected {
        Ok(CmdOutcome::Success)
    } else {
        Ok(CmdOutcome::UnexpectedOutcome(
            "one or more flow families did not behave as the benchmark expects".into(),
        ))
    }
}

/// Objective samples on a regular grid over the evaluation box, for
/// external level-set plotting.
fn levelset_csv(problem: &lagflow::problem::Problem) -> String {
    let bounds = problem.region().bounds();
    let xs = linspace(bounds[0].0, bounds[0].1, 121);
    let ys = linspace(bounds[1].0, bounds[1].1, 101);
    let mut out = String::from("x1,x2,f\n");
    for &a in &xs {
        for &b in &ys {
            let v = problem.f(&nalgebra::dvector![a, b]);
            let _ = writeln!(out, "{a},{b},{v}");
        }
    }
    out
}
