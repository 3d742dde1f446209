//! Trajectory file formats: a CSV per trajectory plus a JSON sidecar with
//! the outcome and step statistics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{IntegrationStats, Outcome, Trajectory};

/// CSV with header `t,x_1..x_n,z_1..z_m,stationarity,feasibility` and one
/// row per recorded step. Floats use the shortest representation that
/// round-trips, so identical trajectories serialize to identical bytes.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map_or(0, |s| s.x.len());
    let m = traj.states.first().map_or(0, |s| s.z.len());
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        let _ = write!(out, ",x_{i}");
    }
    for i in 1..=m {
        let _ = write!(out, ",z_{i}");
    }
    out.push_str(",stationarity,feasibility\n");
    for (idx, state) in traj.states.iter().enumerate() {
        let _ = write!(out, "{}", traj.times[idx]);
        for v in state.x.iter() {
            let _ = write!(out, ",{v}");
        }
        for v in state.z.iter() {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{},{}", traj.stationarity[idx], traj.feasibility[idx]);
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub flow: String,
    pub outcome: Outcome,
    pub final_time: f64,
    pub final_stationarity: f64,
    pub final_feasibility: f64,
    pub recorded_points: usize,
    pub stats: IntegrationStats,
}

impl TrajectorySidecar {
    pub fn of(traj: &Trajectory) -> Self {
        Self {
            flow: traj.flow_label.clone(),
            outcome: traj.outcome,
            final_time: traj.final_time(),
            final_stationarity: *traj.stationarity.last().expect("non-empty"),
            final_feasibility: *traj.feasibility.last().expect("non-empty"),
            recorded_points: traj.times.len(),
            stats: traj.stats.clone(),
        }
    }
}

pub fn trajectory_sidecar_json(traj: &Trajectory) -> String {
    serde_json::to_string_pretty(&TrajectorySidecar::of(traj)).expect("sidecar serializes")
}
