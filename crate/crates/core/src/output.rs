//! Trajectory CSV, plot data and run summary.
//!
//! Numbers are written as `{:.16e}` (17 significant digits) so that every
//! logged `f64` reads back bit-for-bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{TrajectoryLog, Verdict};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const GAMMA_FILE: &str = "gamma.csv";
pub const BETA_FILE: &str = "beta.csv";
pub const LYAPUNOV_FILE: &str = "lyapunov.csv";
pub const INPUTS_FILE: &str = "inputs.csv";
pub const PATHS_FILE: &str = "paths.csv";

const AGENT_COLUMNS: [&str; 20] = [
    "p_x", "p_y", "p_z", "phi", "theta", "psi", "v_x", "v_y", "v_z", "w_x", "w_y", "w_z", "u_1",
    "u_2", "u_3", "u_4", "u_5", "u_6", "gamma", "beta",
];

fn num(out: &mut String, x: f64) {
    write!(out, ",{x:.16e}").expect("writing to a String cannot fail");
}

fn header(first: &str, ids: &[usize], columns: &[&str]) -> String {
    let mut h = String::from(first);
    for id in ids {
        for c in columns {
            write!(h, ",{c}_{id}").expect("infallible");
        }
    }
    h
}

pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let mut out = header("t", &log.agent_ids, &AGENT_COLUMNS);
    out.push_str(",L,min_dist_agents,min_dist_obstacles\n");
    for r in &log.records {
        write!(out, "{:.16e}", r.t).expect("infallible");
        for i in 0..log.agent_ids.len() {
            let x = r.poses[i].to_vector();
            let v = r.twists[i].to_vector();
            for c in x.iter().chain(v.iter()).chain(r.inputs[i].iter()) {
                num(&mut out, *c);
            }
            num(&mut out, r.gammas[i]);
            num(&mut out, r.betas[i]);
        }
        num(&mut out, r.lyapunov);
        num(&mut out, r.monitors.min_dist_agents);
        num(&mut out, r.monitors.min_dist_obstacles);
        out.push('\n');
    }
    out
}

fn per_agent_series(log: &TrajectoryLog, name: &str, value: impl Fn(usize, usize) -> f64) -> String {
    let mut out = header("t", &log.agent_ids, &[name]);
    out.push('\n');
    for (k, r) in log.records.iter().enumerate() {
        write!(out, "{:.16e}", r.t).expect("infallible");
        for i in 0..log.agent_ids.len() {
            num(&mut out, value(k, i));
        }
        out.push('\n');
    }
    out
}

pub fn gamma_csv(log: &TrajectoryLog) -> String {
    per_agent_series(log, "gamma", |k, i| log.records[k].gammas[i])
}

pub fn beta_csv(log: &TrajectoryLog) -> String {
    per_agent_series(log, "beta", |k, i| log.records[k].betas[i])
}

pub fn lyapunov_csv(log: &TrajectoryLog) -> String {
    let mut out = String::from("t,L\n");
    for r in &log.records {
        writeln!(out, "{:.16e},{:.16e}", r.t, r.lyapunov).expect("infallible");
    }
    out
}

pub fn inputs_csv(log: &TrajectoryLog) -> String {
    let cols = ["u_1", "u_2", "u_3", "u_4", "u_5", "u_6"];
    let mut out = header("t", &log.agent_ids, &cols);
    out.push('\n');
    for r in &log.records {
        write!(out, "{:.16e}", r.t).expect("infallible");
        for u in &r.inputs {
            for c in u.iter() {
                num(&mut out, *c);
            }
        }
        out.push('\n');
    }
    out
}

/// One polyline per agent: columns `x_<id>,y_<id>,z_<id>`.
pub fn paths_csv(log: &TrajectoryLog) -> String {
    let mut out = header("t", &log.agent_ids, &["x", "y", "z"]);
    out.push('\n');
    for r in &log.records {
        write!(out, "{:.16e}", r.t).expect("infallible");
        for p in &r.poses {
            for c in p.position.iter() {
                num(&mut out, *c);
            }
        }
        out.push('\n');
    }
    out
}

/// Header and numeric rows of one of the CSV files above.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("CSV row {}: {e}", n + 1)))?;
        if row.len() != header.len() {
            return Err(Error::Parse(format!("CSV row {} has {} columns", n + 1, row.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[derive(Debug, Serialize)]
pub struct SummaryFile {
    pub scenario: String,
    pub verdict: VerdictSection,
    pub monitors: MonitorSection,
    pub lyapunov: LyapunovSection,
    pub agents: Vec<AgentSection>,
}

#[derive(Debug, Serialize)]
pub struct VerdictSection {
    pub status: String,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct MonitorSection {
    pub steps: usize,
    pub min_dist_agents: f64,
    pub min_dist_obstacles: f64,
    pub max_extent: f64,
    pub max_abs_theta: f64,
    pub max_edge_distance: Vec<f64>,
    pub max_input_norm: f64,
    pub final_speed: f64,
    pub gradient_cancellations: usize,
    pub max_input_jump_on_graph_change: f64,
}

#[derive(Debug, Serialize)]
pub struct LyapunovSection {
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    pub max_step_increase: f64,
    pub cumulative_increase: f64,
    pub slack_exceedances: usize,
}

#[derive(Debug, Serialize)]
pub struct AgentSection {
    pub id: usize,
    pub initial_gamma: f64,
    pub final_gamma: f64,
    pub min_beta: f64,
}

pub fn summary(log: &TrajectoryLog, scenario_name: &str) -> SummaryFile {
    let s = &log.summary;
    let verdict = match &log.verdict {
        Verdict::SafetyViolation {
            kind,
            t,
            agents,
            detail,
        } => VerdictSection {
            status: log.verdict.label().into(),
            t: *t,
            kind: Some(kind.label().into()),
            agents: agents.clone(),
            detail: Some(detail.clone()),
        },
        other => VerdictSection {
            status: other.label().into(),
            t: s.t_final,
            kind: None,
            agents: vec![],
            detail: None,
        },
    };
    SummaryFile {
        scenario: scenario_name.into(),
        verdict,
        monitors: MonitorSection {
            steps: s.steps,
            min_dist_agents: s.min_dist_agents,
            min_dist_obstacles: s.min_dist_obstacles,
            max_extent: s.max_extent,
            max_abs_theta: s.max_abs_theta,
            max_edge_distance: s.max_edge_distance.clone(),
            max_input_norm: s.max_input_norm,
            final_speed: s.final_speed,
            gradient_cancellations: s.gradient_cancellations,
            max_input_jump_on_graph_change: s.max_input_jump_on_graph_change,
        },
        lyapunov: LyapunovSection {
            initial: s.lyapunov_initial,
            last: s.lyapunov_final,
            max_step_increase: s.lyapunov_max_step_increase,
            cumulative_increase: s.lyapunov_cumulative_increase,
            slack_exceedances: s.lyapunov_slack_exceedances,
        },
        agents: log
            .agent_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| AgentSection {
                id,
                initial_gamma: s.initial_gamma.get(i).copied().unwrap_or(f64::NAN),
                final_gamma: s.final_gamma.get(i).copied().unwrap_or(f64::NAN),
                min_beta: s.min_beta[i],
            })
            .collect(),
    }
}

pub fn summary_toml(log: &TrajectoryLog, scenario_name: &str) -> String {
    toml::to_string(&summary(log, scenario_name)).expect("summary is always serializable")
}

/// Writes the trajectory, summary and every plot-data file into `dir`.
pub fn write_all(log: &TrajectoryLog, scenario_name: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let files = [
        (TRAJECTORY_FILE, trajectory_csv(log)),
        (SUMMARY_FILE, summary_toml(log, scenario_name)),
        (GAMMA_FILE, gamma_csv(log)),
        (BETA_FILE, beta_csv(log)),
        (LYAPUNOV_FILE, lyapunov_csv(log)),
        (INPUTS_FILE, inputs_csv(log)),
        (PATHS_FILE, paths_csv(log)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
