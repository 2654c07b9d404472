//! TOML scenario files.
//!
//! ```toml
//! name = "example"
//! theta_bar = 1.4          # optional, radians
//! epsilon_r = 0.01         # optional, meters
//!
//! [workspace]
//! radius = 10.0
//! gravity = 9.81           # optional, m/s^2 along -z
//!
//! [[obstacles]]
//! center = [-3.0, 3.0, 5.0]
//! radius = 0.75
//!
//! [[agents]]
//! id = 1
//! radius = 0.25
//! sensing = 5.0
//! mass = 1.0               # optional
//! inertia = [0.025, 0.025, 0.025]  # optional, solid sphere by default
//! gain = 18.0              # optional
//!
//! [[formation.edges]]
//! i = 1                    # agent ids
//! j = 2
//! position = [-1.0, -1.0, -2.0]   # desired p_i - p_j
//! orientation = [0.0, 0.0, 0.0]   # desired q_i - q_j, optional
//!
//! [[initial]]
//! agent = 1
//! position = [-3.0, 0.0, 5.0]
//! orientation = [0.0, 0.0, 0.0]   # optional
//! linear_velocity = [0.0, 0.0, 0.0]   # optional
//! angular_velocity = [0.0, 0.0, 0.0]  # optional
//!
//! [numerics]               # every key optional
//! dt = 0.001
//! t_end = 30.0
//! integrator = "rk4"       # or "semi-implicit-euler"
//! control = "continuous"   # or "zoh"
//! log_every = 10
//! kappa = 64.0
//! potential = "ratio"     # or "navigation"
//! singular_eps = 1e-6
//! beta_floor = 1e-12
//! lyapunov_slack = 1.0
//! convergence_gamma_ratio = 0.01
//! convergence_speed = 0.001
//! ```

use std::path::Path;

use nalgebra::Vector3;
use serde::Deserialize;

use crate::dynamics::STANDARD_GRAVITY;
use crate::error::{Error, Result};
use crate::model::{
    AgentSpec, FormationEdge, FormationSpec, Obstacle, Pose, Scenario, Twist, Workspace,
    DEFAULT_EPSILON_R, DEFAULT_THETA_BAR,
};
use crate::sim::{ControlMode, Integrator, NumericsConfig};
use crate::potential::CompositionKind;

pub const DEFAULT_MASS: f64 = 1.0;
pub const DEFAULT_GAIN: f64 = 18.0;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileScenario {
    #[serde(default)]
    name: String,
    theta_bar: Option<f64>,
    epsilon_r: Option<f64>,
    workspace: FileWorkspace,
    #[serde(default)]
    obstacles: Vec<FileObstacle>,
    agents: Vec<FileAgent>,
    #[serde(default)]
    formation: FileFormation,
    initial: Vec<FileInitial>,
    #[serde(default)]
    numerics: FileNumerics,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileWorkspace {
    radius: f64,
    gravity: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileObstacle {
    center: [f64; 3],
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAgent {
    id: usize,
    radius: f64,
    sensing: f64,
    mass: Option<f64>,
    inertia: Option<[f64; 3]>,
    gain: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileFormation {
    #[serde(default)]
    edges: Vec<FileEdge>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEdge {
    i: usize,
    j: usize,
    position: [f64; 3],
    orientation: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileInitial {
    agent: usize,
    position: [f64; 3],
    orientation: Option<[f64; 3]>,
    linear_velocity: Option<[f64; 3]>,
    angular_velocity: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileNumerics {
    dt: Option<f64>,
    t_end: Option<f64>,
    integrator: Option<String>,
    control: Option<String>,
    log_every: Option<usize>,
    kappa: Option<f64>,
    potential: Option<String>,
    singular_eps: Option<f64>,
    beta_floor: Option<f64>,
    lyapunov_slack: Option<f64>,
    convergence_gamma_ratio: Option<f64>,
    convergence_speed: Option<f64>,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::from(a)
}

fn v3_or_zero(a: Option<[f64; 3]>) -> Vector3<f64> {
    a.map(v3).unwrap_or_else(Vector3::zeros)
}

pub fn parse_integrator(s: &str) -> Result<Integrator> {
    match s {
        "rk4" => Ok(Integrator::Rk4),
        "semi-implicit-euler" => Ok(Integrator::SemiImplicitEuler),
        other => Err(Error::Parse(format!("unknown integrator '{other}'"))),
    }
}

pub fn parse_control_mode(s: &str) -> Result<ControlMode> {
    match s {
        "continuous" => Ok(ControlMode::Continuous),
        "zoh" => Ok(ControlMode::ZeroOrderHold),
        other => Err(Error::Parse(format!("unknown control mode '{other}'"))),
    }
}

pub fn parse_composition(s: &str) -> Result<CompositionKind> {
    match s {
        "ratio" => Ok(CompositionKind::Ratio),
        "navigation" => Ok(CompositionKind::Navigation),
        other => Err(Error::Parse(format!("unknown potential '{other}'"))),
    }
}

pub fn parse_str(text: &str) -> Result<Scenario> {
    let file: FileScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    build(file)
}

pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_str(&text)
}

fn build(file: FileScenario) -> Result<Scenario> {
    let agents: Vec<AgentSpec> = file
        .agents
        .iter()
        .map(|a| {
            let mass = a.mass.unwrap_or(DEFAULT_MASS);
            let gain = a.gain.unwrap_or(DEFAULT_GAIN);
            let mut spec = AgentSpec::solid_sphere(a.id, a.radius, a.sensing, mass, gain);
            if let Some(inertia) = a.inertia {
                spec.body_inertia = v3(inertia);
            }
            spec
        })
        .collect();

    let index = |id: usize, what: &str| -> Result<usize> {
        agents
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| Error::Parse(format!("{what} refers to unknown agent id {id}")))
    };

    let mut edges = Vec::with_capacity(file.formation.edges.len());
    for e in &file.formation.edges {
        edges.push(FormationEdge {
            i: index(e.i, "formation edge")?,
            j: index(e.j, "formation edge")?,
            position_offset: v3(e.position),
            orientation_offset: v3_or_zero(e.orientation),
        });
    }

    let mut initial: Vec<Option<(Pose, Twist)>> = vec![None; agents.len()];
    for init in &file.initial {
        let i = index(init.agent, "initial state")?;
        if initial[i].is_some() {
            return Err(Error::Parse(format!(
                "agent {} has more than one initial state",
                init.agent
            )));
        }
        initial[i] = Some((
            Pose::new(v3(init.position), v3_or_zero(init.orientation)),
            Twist::new(v3_or_zero(init.linear_velocity), v3_or_zero(init.angular_velocity)),
        ));
    }
    let mut initial_poses = Vec::with_capacity(agents.len());
    let mut initial_twists = Vec::with_capacity(agents.len());
    for (a, init) in agents.iter().zip(initial) {
        let (pose, twist) =
            init.ok_or_else(|| Error::Parse(format!("agent {} has no initial state", a.id)))?;
        initial_poses.push(pose);
        initial_twists.push(twist);
    }

    let mut numerics = NumericsConfig::default();
    let n = &file.numerics;
    if let Some(v) = n.dt {
        numerics.dt = v;
    }
    if let Some(v) = n.t_end {
        numerics.t_end = v;
    }
    if let Some(v) = &n.integrator {
        numerics.integrator = parse_integrator(v)?;
    }
    if let Some(v) = &n.control {
        numerics.control_mode = parse_control_mode(v)?;
    }
    if let Some(v) = n.log_every {
        numerics.log_every = v;
    }
    if let Some(v) = n.kappa {
        numerics.kappa = v;
    }
    if let Some(v) = &n.potential {
        numerics.composition = parse_composition(v)?;
    }
    if let Some(v) = n.singular_eps {
        numerics.tolerances.singular_eps = v;
    }
    if let Some(v) = n.beta_floor {
        numerics.tolerances.beta_floor = v;
    }
    if let Some(v) = n.lyapunov_slack {
        numerics.tolerances.lyapunov_slack = v;
    }
    if let Some(v) = n.convergence_gamma_ratio {
        numerics.convergence.gamma_ratio = v;
    }
    if let Some(v) = n.convergence_speed {
        numerics.convergence.speed = v;
    }
    numerics.check().map_err(Error::Parse)?;

    Ok(Scenario {
        name: file.name,
        agents,
        obstacles: file
            .obstacles
            .iter()
            .map(|o| Obstacle {
                center: v3(o.center),
                radius: o.radius,
            })
            .collect(),
        workspace: Workspace {
            radius: file.workspace.radius,
            gravity: file.workspace.gravity.unwrap_or(STANDARD_GRAVITY),
        },
        formation: FormationSpec { edges },
        initial_poses,
        initial_twists,
        theta_bar: file.theta_bar.unwrap_or(DEFAULT_THETA_BAR),
        epsilon_r: file.epsilon_r.unwrap_or(DEFAULT_EPSILON_R),
        numerics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn bundled_values() {
        let s = parse_str(crate::BUNDLED_FORMATION_SCENARIO).unwrap();
        assert_eq!(s.agent_count(), 4);
        assert_eq!(s.obstacles.len(), 2);
        assert_eq!(s.workspace.radius, 10.0);
        assert_eq!(s.initial_poses[3].position, Vector3::new(-4.0, 3.0, 6.0));
        assert_eq!(s.formation.edges.len(), 4);
        let q12 = s.formation.offset(0, 1).unwrap();
        assert_eq!(q12[3], -PI / 4.0);
        assert_eq!(q12[5], -PI / 4.0);
        let q34 = s.formation.offset(2, 3).unwrap();
        assert_eq!(q34[3], 5.0 * PI / 24.0);
        assert_eq!(s.theta_bar, DEFAULT_THETA_BAR);
        assert_eq!(s.epsilon_r, DEFAULT_EPSILON_R);
        assert!((s.agents[0].body_inertia[0] - 0.025).abs() < 1e-17);
    }

    #[test]
    fn defaults_fill_in() {
        let text = r#"
            [workspace]
            radius = 5.0
            [[agents]]
            id = 7
            radius = 0.2
            sensing = 2.0
            [[initial]]
            agent = 7
            position = [0.0, 0.0, 0.0]
        "#;
        let s = parse_str(text).unwrap();
        assert_eq!(s.agents[0].mass, DEFAULT_MASS);
        assert_eq!(s.agents[0].gain, DEFAULT_GAIN);
        assert_eq!(s.workspace.gravity, STANDARD_GRAVITY);
        assert_eq!(s.numerics, NumericsConfig::default());
        assert_eq!(s.initial_twists[0], Twist::zero());
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_str("this is not toml ["), Err(Error::Parse(_))));
        let missing_initial = r#"
            [workspace]
            radius = 5.0
            [[agents]]
            id = 1
            radius = 0.2
            sensing = 2.0
            initial = []
        "#;
        assert!(matches!(parse_str(missing_initial), Err(Error::Parse(_))));
        let unknown_key = crate::BUNDLED_FORMATION_SCENARIO.replace("[workspace]", "[workspace]\ncolour = 1");
        assert!(matches!(parse_str(&unknown_key), Err(Error::Parse(_))));
        let bad_ref = crate::BUNDLED_FORMATION_SCENARIO.replacen("i = 1", "i = 9", 1);
        assert!(matches!(parse_str(&bad_ref), Err(Error::Parse(_))));
        let bad_dt = crate::BUNDLED_FORMATION_SCENARIO.replace("[numerics]", "[numerics]\ndt = -1.0");
        assert!(matches!(parse_str(&bad_dt), Err(Error::Parse(_))));
    }
}
