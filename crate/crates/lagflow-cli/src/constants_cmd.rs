//! `lagflow constants`: the estimation pipeline end to end.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use lagflow::constants::{
    certificate_checks, estimate_bounds, estimate_rho_eta, formula_constants, threshold,
    ConstantsError, ConstantsReport, SamplingPlan,
};

use crate::config::{parse_grid, resolve_problem};
use crate::CmdOutcome;

#[derive(Args, Debug)]
pub struct ConstantsArgs {
    /// Builtin problem name or path to a JSON problem document.
    #[arg(long)]
    problem: String,
    /// Estimation grid, e.g. 200x200.
    #[arg(long)]
    grid: Option<String>,
    /// Output-decay gain `k = k_i/k_p` the threshold is evaluated at.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Sample count for the pointwise matrix certificates.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    /// Proportional gain for the certificates; defaults to the computed
    /// threshold.
    #[arg(long)]
    cert_kp: Option<f64>,
    /// Output directory for constants.json / certificates.json.
    #[arg(long)]
    out: Option<String>,
}

pub fn run(args: ConstantsArgs) -> Result<CmdOutcome> {
    let problem = resolve_problem(&args.problem)?;
    let mut plan = SamplingPlan {
        seed: args.seed,
        ..Default::default()
    };
    if let Some(grid) = &args.grid {
        plan.grid_counts = parse_grid(grid)?;
    }

    let report = match pipeline(&problem, &plan, args.k) {
        Ok(report) => report,
        Err(e) if e.is_assumption_violation() => {
            return Ok(CmdOutcome::AssumptionViolation(e.to_string()));
        }
        Err(e) => return Err(e.into()),
    };

    let th = report.threshold.as_ref().expect("pipeline sets threshold");
    let cert_kp = args
        .cert_kp
        .unwrap_or_else(|| th.k_p_star.max(2.0 * args.k / report.m_lower));
    let certificates =
        certificate_checks(&problem, &report, cert_kp, args.k, args.samples, args.seed)?;

    let out_dir = PathBuf::from(args.out.unwrap_or_else(|| ".".into()));
    fs::create_dir_all(&out_dir)?;
    let report_path = out_dir.join("constants.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    let cert_path = out_dir.join("certificates.json");
    fs::write(&cert_path, serde_json::to_string_pretty(&certificates)?)
        .with_context(|| format!("writing {}", cert_path.display()))?;

    print_table(&report);
    println!();
    println!(
        "certificates at k_p = {:.6e}, k = {} over {} samples: {}",
        cert_kp,
        args.k,
        certificates.samples,
        if certificates.passed { "PASS" } else { "FAIL" }
    );
    for check in &certificates.checks {
        println!(
            "  {:<28} {}  worst margin {:+.3e}",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.worst_margin
        );
        if let Some(witness) = &check.witness {
            println!("    witness x = {witness:?}");
        }
    }

    if certificates.passed {
        Ok(CmdOutcome::Success)
    } else {
        Ok(CmdOutcome::UnexpectedOutcome(format!(
            "certificate checks failed at k_p = {cert_kp:.6e}"
        )))
    }
}

pub fn pipeline(
    problem: &lagflow::problem::Problem,
    plan: &SamplingPlan,
    k: f64,
) -> Result<ConstantsReport, ConstantsError> {
    let mut report = estimate_bounds(problem, plan)?;
    let rho = estimate_rho_eta(problem, plan)?;
    report.set_rho_eta(rho);
    formula_constants(&mut report)?;
    report.threshold = Some(threshold(&report, k)?);
    Ok(report)
}

fn print_table(report: &ConstantsReport) {
    println!("constants for `{}`", report.problem);
    println!(
        "  grid {:?} ({} points, seed {}, near spacing {:.3e})",
        report.grid.counts, report.grid.points, report.grid.seed, report.grid.near_spacing
    );
    let row = |name: &str, value: Option<f64>, note: &str| {
        if let Some(v) = value {
            println!("  {name:<14} {v:>14.6e}   {note}");
        }
    };
    row(
        "m_lower",
        Some(report.m_lower),
        &format!("sampled, x{}", report.grid.safety_m),
    );
    row("m_upper", Some(report.m_upper), "sampled");
    row("B_f", Some(report.b_f), "sampled");
    row("B_h", Some(report.b_h), "sampled");
    row("L_f", Some(report.l_f), "sampled");
    row("L_h", Some(report.l_h), "sampled");
    row("L_2", report.l_2_sampled, "sampled");
    row("L_2", report.l_2_formula, "formula");
    row("L_q", report.l_q, "sampled");
    row("L_1", report.l_1_sampled, "sampled");
    row("L_1", report.l_1_formula, "formula");
    row("L_Phi", report.l_phi, "formula");
    row("L_Psi", report.l_psi, "formula");
    row("L_r", report.l_r, "from tighter L_2");
    row(
        "rho_eta",
        report.rho_eta,
        &format!("{:?}", report.rho_eta_provenance),
    );
    if let Some(th) = &report.threshold {
        println!("  threshold at k = {}", th.k);
        println!("    kappa     {:>14.6e}", th.kappa);
        println!("    k_p_star  {:>14.6e}", th.k_p_star);
        println!("    k_i_cap   {:>14.6e}", th.k_i_cap);
    }
    for warning in &report.warnings {
        println!("  warning: {warning}");
    }
}
