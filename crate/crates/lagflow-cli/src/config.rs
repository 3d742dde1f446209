//! Shared configuration plumbing: problem resolution, run configuration
//! files, and flag merging (flags win on conflict).

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use lagflow::flows::{FlowSpec, GainSet};
use lagflow::integrate::{IntegrateConfig, Method, Outcome};
use lagflow::problem::{builtin, from_json, Problem};

/// A problem reference is either a registered name (optionally with compact
/// inline parameters) or a path to a JSON problem document.
pub fn resolve_problem(reference: &str) -> Result<Problem> {
    if Path::new(reference).is_file() {
        let text = std::fs::read_to_string(reference)
            .with_context(|| format!("reading problem file {reference}"))?;
        return from_json(&text).with_context(|| format!("parsing problem file {reference}"));
    }
    builtin(reference).with_context(|| format!("resolving problem `{reference}`"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    #[default]
    Converge,
    Diverge,
    None,
}

impl FromStr for Expectation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "converge" => Ok(Expectation::Converge),
            "diverge" => Ok(Expectation::Diverge),
            "none" => Ok(Expectation::None),
            other => Err(format!(
                "unknown expectation `{other}` (expected converge, diverge, none)"
            )),
        }
    }
}

impl Expectation {
    pub fn matches(self, outcome: Outcome) -> bool {
        match self {
            Expectation::Converge => outcome == Outcome::Converged,
            Expectation::Diverge => outcome == Outcome::Diverged,
            Expectation::None => true,
        }
    }
}

/// Run configuration as accepted in a `--config` JSON file. Every field is
/// optional; command-line flags override file values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFileConfig {
    pub problem: Option<String>,
    pub flow: Option<FlowSpec>,
    pub inits: Option<usize>,
    pub seed: Option<u64>,
    /// Explicit initial points; takes precedence over `inits`.
    pub initial_points: Option<Vec<Vec<f64>>>,
    pub method: Option<Method>,
    pub dt: Option<f64>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub t_max: Option<f64>,
    pub converge_tol: Option<f64>,
    pub diverge_radius: Option<f64>,
    pub max_dt: Option<f64>,
    pub record_stride: Option<usize>,
    pub out: Option<String>,
    pub expect: Option<Expectation>,
}

impl RunFileConfig {
    pub fn load(path: &str) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading config {path}"))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {path}"))
    }

    pub fn integrator(&self, base: IntegrateConfig) -> IntegrateConfig {
        IntegrateConfig {
            method: self.method.unwrap_or(base.method),
            dt: self.dt.unwrap_or(base.dt),
            abs_tol: self.abs_tol.unwrap_or(base.abs_tol),
            rel_tol: self.rel_tol.unwrap_or(base.rel_tol),
            t_max: self.t_max.unwrap_or(base.t_max),
            converge_tol: self.converge_tol.unwrap_or(base.converge_tol),
            diverge_radius: self.diverge_radius.or(base.diverge_radius),
            max_dt: self.max_dt.or(base.max_dt),
            record_stride: self.record_stride.unwrap_or(base.record_stride),
            max_steps: base.max_steps,
        }
    }
}

/// Assemble the flow selection from a config file value plus flags; flags
/// win, and a bare `--flow` name with partial gains falls back to the file's
/// gains for the rest.
pub fn flow_from(
    file_flow: Option<&FlowSpec>,
    flag_kind: Option<&str>,
    gains: &GainSet,
) -> Result<FlowSpec> {
    match (flag_kind, file_flow) {
        (Some(kind), _) => {
            // Merge file gains in when the flags leave gaps and the kinds
            // agree.
            let mut merged = gains.clone();
            if let Some(spec) = file_flow {
                if spec.kind() == kind {
                    if let Some((k_p, k_i)) = spec.canonical_pi_gains() {
                        merged.k_p = merged.k_p.or(Some(k_p));
                        merged.k_i = merged.k_i.or(Some(k_i));
                        if let FlowSpec::Alm { w } = spec {
                            merged.w = merged.w.or(Some(*w));
                        }
                    }
                    if let FlowSpec::Fl { k } = spec {
                        merged.k = merged.k.or(Some(*k));
                    }
                }
            }
            lagflow::flows::build(kind, &merged).map_err(Into::into)
        }
        (None, Some(spec)) => {
            // Gain flags still override the file's gains.
            let merged = match *spec {
                FlowSpec::Pdgd => FlowSpec::Pdgd,
                FlowSpec::Pi { k_p, k_i } => FlowSpec::Pi {
                    k_p: gains.k_p.unwrap_or(k_p),
                    k_i: gains.k_i.unwrap_or(k_i),
                },
                FlowSpec::Alm { w } => FlowSpec::Alm {
                    w: gains.w.or(gains.k_p).unwrap_or(w),
                },
                FlowSpec::Fl { k } => FlowSpec::Fl {
                    k: gains.k.unwrap_or(k),
                },
            };
            Ok(merged)
        }
        (None, None) => bail!("no flow selected: pass --flow or set `flow` in the config file"),
    }
}

/// Parse `AxB` or `A` grid syntax into per-axis counts.
pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let counts: Result<Vec<usize>, _> =
        text.split('x').map(|t| t.trim().parse::<usize>()).collect();
    let counts =
        counts.with_context(|| format!("cannot parse grid `{text}` (use e.g. 200x200)"))?;
    if counts.is_empty() || counts.iter().any(|&c| c < 2) {
        bail!("grid counts must each be at least 2");
    }
    Ok(counts)
}
