use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use swarmsim::sim::{TrajectoryLog, Verdict};

pub const REPORT_FILE: &str = "report.toml";

/// What a `run` produced: which input, how it ended, and where the files are.
#[derive(Debug, Serialize)]
pub struct RunReport {
    /// SHA-256 of the scenario file bytes.
    pub scenario_sha256: String,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
    pub t_final: f64,
    pub max_gamma_initial: f64,
    pub max_gamma_final: f64,
    pub min_beta: f64,
    pub min_dist_agents: f64,
    pub min_dist_obstacles: f64,
    pub max_extent: f64,
    pub max_abs_theta: f64,
    pub max_edge_distance: f64,
    pub lyapunov_initial: f64,
    pub lyapunov_final: f64,
    pub lyapunov_max_step_increase: f64,
    pub files: Vec<String>,
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl RunReport {
    pub fn new(scenario_bytes: &[u8], log: &TrajectoryLog, files: Vec<PathBuf>) -> Self {
        let s = &log.summary;
        let violation = match &log.verdict {
            Verdict::SafetyViolation { kind, t, agents, detail } => {
                Some(format!("{} at t = {t} s, agents {agents:?}: {detail}", kind.label()))
            }
            _ => None,
        };
        Self {
            scenario_sha256: hex::encode(Sha256::digest(scenario_bytes)),
            verdict: log.verdict.label().into(),
            violation,
            t_final: s.t_final,
            max_gamma_initial: max_of(&s.initial_gamma),
            max_gamma_final: max_of(&s.final_gamma),
            min_beta: s.min_beta.iter().copied().fold(f64::INFINITY, f64::min),
            min_dist_agents: s.min_dist_agents,
            min_dist_obstacles: s.min_dist_obstacles,
            max_extent: s.max_extent,
            max_abs_theta: s.max_abs_theta,
            max_edge_distance: max_of(&s.max_edge_distance),
            lyapunov_initial: s.lyapunov_initial,
            lyapunov_final: s.lyapunov_final,
            lyapunov_max_step_increase: s.lyapunov_max_step_increase,
            files: files.iter().map(|p| p.display().to_string()).collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are plain values")
    }
}
