//! Agents, obstacles, workspace, formation specification and scenario
//! validation.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::{Vector3, Vector6};

use crate::sim::NumericsConfig;

/// Default clearance margin between obstacles and between obstacles and the
/// workspace boundary, in meters.
pub const DEFAULT_EPSILON_R: f64 = 0.01;
/// Default bound on |theta| that the initial poses must respect, in radians.
pub const DEFAULT_THETA_BAR: f64 = 1.4;

/// Position of the center of mass and X-Y-Z Euler angles `(phi, theta, psi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: Vector3<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: Vector3<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn at(position: Vector3<f64>) -> Self {
        Self::new(position, Vector3::zeros())
    }

    pub fn theta(&self) -> f64 {
        self.orientation[1]
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x.fixed_rows_mut::<3>(3).copy_from(&self.orientation);
        x
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self::new(x.fixed_rows::<3>(0).into(), x.fixed_rows::<3>(3).into())
    }

    /// True when the Euler-rate Jacobian is invertible with margin `eps`.
    pub fn is_regular(&self, eps: f64) -> bool {
        self.theta().cos().abs() > eps
    }

    /// `phi, psi` in `[-pi, pi]` and `theta` in `[-pi/2, pi/2]`.
    pub fn in_angle_range(&self) -> bool {
        let q = &self.orientation;
        q[0].abs() <= PI && q[1].abs() <= FRAC_PI_2 && q[2].abs() <= PI
    }
}

/// Linear velocity of the center of mass and angular velocity, both in the
/// inertial frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.linear);
        v.fixed_rows_mut::<3>(3).copy_from(&self.angular);
        v
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|c| c.is_finite())
    }
}

/// Physical and control parameters of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    /// Label used in files and reports.
    pub id: usize,
    pub radius: f64,
    /// Sensing range `d_i`.
    pub sensing: f64,
    pub mass: f64,
    /// Diagonal of the body-frame inertia tensor.
    pub body_inertia: Vector3<f64>,
    /// Damping gain of the control law.
    pub gain: f64,
}

impl AgentSpec {
    /// Uniform solid sphere: inertia `2/5 m r^2` about every axis.
    pub fn solid_sphere(id: usize, radius: f64, sensing: f64, mass: f64, gain: f64) -> Self {
        let j = 0.4 * mass * radius * radius;
        Self {
            id,
            radius,
            sensing,
            mass,
            body_inertia: Vector3::new(j, j, j),
            gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub center: Vector3<f64>,
    pub radius: f64,
}

/// Sphere of radius `radius` centered at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Workspace {
    pub radius: f64,
    /// Gravitational acceleration along -z, m/s^2. Zero disables gravity.
    pub gravity: f64,
}

/// Desired displacement `x_i - x_j` between two agents (by index).
#[derive(Debug, Clone, PartialEq)]
pub struct FormationEdge {
    pub i: usize,
    pub j: usize,
    pub position_offset: Vector3<f64>,
    pub orientation_offset: Vector3<f64>,
}

impl FormationEdge {
    pub fn offset(&self) -> Vector6<f64> {
        Pose::new(self.position_offset, self.orientation_offset).to_vector()
    }

    /// The same edge seen from `j`: endpoints swapped, offsets negated.
    pub fn reversed(&self) -> Self {
        Self {
            i: self.j,
            j: self.i,
            position_offset: -self.position_offset,
            orientation_offset: -self.orientation_offset,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FormationSpec {
    pub edges: Vec<FormationEdge>,
}

impl FormationSpec {
    /// Desired `x_i - x_j`, taking the first edge joining the pair.
    pub fn offset(&self, i: usize, j: usize) -> Option<Vector6<f64>> {
        self.edges.iter().find_map(|e| {
            if e.i == i && e.j == j {
                Some(e.offset())
            } else if e.i == j && e.j == i {
                Some(-e.offset())
            } else {
                None
            }
        })
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.offset(i, j).is_some()
    }

    /// Sorted formation neighbors of `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.i == i {
                    Some(e.j)
                } else if e.j == i {
                    Some(e.i)
                } else {
                    None
                }
            })
            .collect();
        set.into_iter().collect()
    }

    /// For every agent, its formation neighbors paired with `x_des_ij`.
    pub fn adjacency(&self, n: usize) -> Vec<Vec<(usize, Vector6<f64>)>> {
        (0..n)
            .map(|i| {
                self.neighbors(i)
                    .into_iter()
                    .filter_map(|j| self.offset(i, j).map(|o| (j, o)))
                    .collect()
            })
            .collect()
    }
}

/// Undirected sensing graph. `j` neighbors `i` when their centers are within
/// both sensing radii (closed balls).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    adjacency: Vec<BTreeSet<usize>>,
}

impl NeighborGraph {
    pub fn from_positions(agents: &[AgentSpec], positions: &[Vector3<f64>]) -> Self {
        let n = agents.len();
        let mut adjacency = vec![BTreeSet::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                let dist = (positions[i] - positions[j]).norm();
                if dist <= agents[i].sensing && dist <= agents[j].sensing {
                    adjacency[i].insert(j);
                    adjacency[j].insert(i);
                }
            }
        }
        Self { adjacency }
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.adjacency[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.adjacency.get(i).is_some_and(|s| s.contains(&j))
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn agent_count(&self) -> usize {
        self.adjacency.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub agents: Vec<AgentSpec>,
    pub obstacles: Vec<Obstacle>,
    pub workspace: Workspace,
    pub formation: FormationSpec,
    pub initial_poses: Vec<Pose>,
    pub initial_twists: Vec<Twist>,
    pub theta_bar: f64,
    pub epsilon_r: f64,
    pub numerics: NumericsConfig,
}

impl Scenario {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn max_agent_radius(&self) -> f64 {
        self.agents.iter().map(|a| a.radius).fold(0.0, f64::max)
    }

    /// Index of the agent labelled `id`.
    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }
}

pub fn initial_neighbor_graph(scenario: &Scenario) -> NeighborGraph {
    let positions: Vec<_> = scenario.initial_poses.iter().map(|p| p.position).collect();
    NeighborGraph::from_positions(&scenario.agents, &positions)
}

/// `x_i - x_j - x_des_ij` for the edge oriented from `edge.i` to `edge.j`.
/// Euler-angle differences are not wrapped.
pub fn formation_residual(edge: &FormationEdge, pose_i: &Pose, pose_j: &Pose) -> Vector6<f64> {
    pose_i.to_vector() - pose_j.to_vector() - edge.offset()
}

/// Which requirement a violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    /// Agent lists, initial states and ids are mutually consistent.
    Structure,
    /// Every agent starts at rest.
    InitialVelocity,
    /// Initial pitch within the configured bound, and angles in range.
    SingularityMargin,
    /// Initial inter-agent clearance.
    AgentOverlap,
    /// Initial agent-obstacle clearance.
    ObstacleOverlap,
    /// Initial agent inside the workspace.
    WorkspaceContainment,
    /// Room to pass between obstacles and between obstacles and the boundary.
    ObstacleSpacing,
    /// Sensing range exceeds every pairwise contact distance.
    SensingRange,
    /// Positive radii, mass, inertia and gain.
    AgentParameters,
    /// Desired offsets antisymmetric, pitch offset bounded, desired distance
    /// between contact and sensing range.
    FormationFeasibility,
    /// Formation edges are sensed at t = 0 and every agent has one.
    FormationConnectivity,
}

impl Check {
    pub fn label(self) -> &'static str {
        match self {
            Check::Structure => "structure",
            Check::InitialVelocity => "initial-velocity",
            Check::SingularityMargin => "singularity-margin",
            Check::AgentOverlap => "agent-overlap",
            Check::ObstacleOverlap => "obstacle-overlap",
            Check::WorkspaceContainment => "workspace-containment",
            Check::ObstacleSpacing => "obstacle-spacing",
            Check::SensingRange => "sensing-range",
            Check::AgentParameters => "agent-parameters",
            Check::FormationFeasibility => "formation-feasibility",
            Check::FormationConnectivity => "formation-connectivity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: Check,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.check.label(), self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Conditions worth flagging that do not block a run.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, check: Check) -> bool {
        self.violations.iter().any(|v| v.check == check)
    }

    fn push(&mut self, check: Check, message: impl Into<String>) {
        self.violations.push(Violation {
            check,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Runs every admissibility check on the scenario and reports each failure
/// independently.
pub fn validate_scenario(scenario: &Scenario) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = scenario.agent_count();

    if n == 0 {
        report.push(Check::Structure, "scenario has no agents");
        return report;
    }
    if scenario.initial_poses.len() != n || scenario.initial_twists.len() != n {
        report.push(
            Check::Structure,
            format!(
                "{} agents but {} initial poses and {} initial twists",
                n,
                scenario.initial_poses.len(),
                scenario.initial_twists.len()
            ),
        );
        return report;
    }
    let ids: BTreeSet<usize> = scenario.agents.iter().map(|a| a.id).collect();
    if ids.len() != n {
        report.push(Check::Structure, "agent ids are not unique");
    }
    for e in &scenario.formation.edges {
        if e.i >= n || e.j >= n || e.i == e.j {
            report.push(
                Check::Structure,
                format!("formation edge ({}, {}) is not a pair of distinct agents", e.i, e.j),
            );
            return report;
        }
    }

    let agents = &scenario.agents;
    let label = |i: usize| agents[i].id;
    let poses = &scenario.initial_poses;

    // (a) start at rest
    for (i, t) in scenario.initial_twists.iter().enumerate() {
        if t.to_vector().iter().any(|&c| c != 0.0) {
            report.push(
                Check::InitialVelocity,
                format!("agent {} has nonzero initial velocity", label(i)),
            );
        }
    }

    // (b) singularity margin
    let theta_bar = scenario.theta_bar;
    if !(theta_bar > 0.0 && theta_bar < FRAC_PI_2) {
        report.push(
            Check::SingularityMargin,
            format!("theta_bar = {theta_bar} is outside (0, pi/2)"),
        );
    }
    for (i, p) in poses.iter().enumerate() {
        if p.theta().abs() > theta_bar || p.theta().abs() >= FRAC_PI_2 {
            report.push(
                Check::SingularityMargin,
                format!(
                    "agent {}: |theta(0)| = {} exceeds theta_bar = {}",
                    label(i),
                    p.theta().abs(),
                    theta_bar
                ),
            );
        } else if !p.in_angle_range() {
            report.push(
                Check::SingularityMargin,
                format!("agent {}: Euler angles out of range", label(i)),
            );
        }
    }

    // (c) inter-agent clearance
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = (poses[i].position - poses[j].position).norm();
            let contact = agents[i].radius + agents[j].radius;
            if !(dist > contact) {
                report.push(
                    Check::AgentOverlap,
                    format!(
                        "agents {} and {} are {} m apart (contact at {} m)",
                        label(i),
                        label(j),
                        dist,
                        contact
                    ),
                );
            }
        }
    }

    // (d) obstacle clearance
    for (i, p) in poses.iter().enumerate() {
        for (z, o) in scenario.obstacles.iter().enumerate() {
            let dist = (p.position - o.center).norm();
            let contact = agents[i].radius + o.radius;
            if !(dist > contact) {
                report.push(
                    Check::ObstacleOverlap,
                    format!(
                        "agent {} is {} m from obstacle {} (contact at {} m)",
                        label(i),
                        dist,
                        z,
                        contact
                    ),
                );
            }
        }
    }

    // (e) inside the workspace
    let r_w = scenario.workspace.radius;
    for (i, p) in poses.iter().enumerate() {
        let extent = p.position.norm() + agents[i].radius;
        if !(extent < r_w) {
            report.push(
                Check::WorkspaceContainment,
                format!(
                    "agent {} reaches {} m from the origin (workspace radius {} m)",
                    label(i),
                    extent,
                    r_w
                ),
            );
        }
    }

    // (f) obstacle spacing
    let r_max = scenario.max_agent_radius();
    let eps_r = scenario.epsilon_r;
    if !(eps_r > 0.0) {
        report.push(Check::ObstacleSpacing, format!("epsilon_r = {eps_r} must be positive"));
    }
    let obstacles = &scenario.obstacles;
    for (z, o) in obstacles.iter().enumerate() {
        if !(o.radius > 0.0) {
            report.push(Check::ObstacleSpacing, format!("obstacle {z} has non-positive radius"));
        }
        for (w, o2) in obstacles.iter().enumerate().skip(z + 1) {
            let gap = (o.center - o2.center).norm();
            let needed = 2.0 * r_max + o.radius + o2.radius + eps_r;
            if !(gap >= needed) {
                report.push(
                    Check::ObstacleSpacing,
                    format!("obstacles {z} and {w} are {gap} m apart, need {needed} m"),
                );
            }
        }
        let margin = r_w - (o.center.norm() + o.radius);
        let needed = 2.0 * r_max + eps_r;
        if !(margin >= needed) {
            report.push(
                Check::ObstacleSpacing,
                format!("obstacle {z} leaves {margin} m to the boundary, need {needed} m"),
            );
        }
    }

    // (g) sensing range
    let max_contact = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| agents[i].radius + agents[j].radius)
        .fold(f64::NEG_INFINITY, f64::max);
    for (i, a) in agents.iter().enumerate() {
        if n > 1 && !(a.sensing > max_contact) {
            report.push(
                Check::SensingRange,
                format!(
                    "agent {}: sensing range {} m does not exceed the largest contact distance {} m",
                    label(i),
                    a.sensing,
                    max_contact
                ),
            );
        }
        let inertia_ok = a.body_inertia.iter().all(|&c| c > 0.0);
        if !(a.radius > 0.0 && a.mass > 0.0 && a.gain > 0.0 && inertia_ok) {
            report.push(
                Check::AgentParameters,
                format!(
                    "agent {}: radius, mass, body inertia and gain must all be positive",
                    label(i)
                ),
            );
        }
        if !(r_w > a.radius) {
            report.push(
                Check::AgentParameters,
                format!("agent {}: radius not smaller than the workspace", label(i)),
            );
        }
    }

    // (h) formation feasibility
    check_formation(scenario, &mut report);

    // (i) formation edges are initial sensing edges
    let graph = initial_neighbor_graph(scenario);
    for e in &scenario.formation.edges {
        if !graph.contains(e.i, e.j) {
            report.push(
                Check::FormationConnectivity,
                format!(
                    "formation edge ({}, {}) is not sensed at t = 0",
                    label(e.i),
                    label(e.j)
                ),
            );
        }
    }
    if n > 1 {
        for i in 0..n {
            if scenario.formation.neighbors(i).is_empty() {
                report.push(
                    Check::FormationConnectivity,
                    format!("agent {} has no formation neighbor", label(i)),
                );
            }
        }
    }

    report
}

fn check_formation(scenario: &Scenario, report: &mut ValidationReport) {
    let agents = &scenario.agents;
    let formation = &scenario.formation;
    let label = |i: usize| agents[i].id;

    for (k, e) in formation.edges.iter().enumerate() {
        // duplicates (in either orientation) must agree with antisymmetry
        for other in &formation.edges[..k] {
            let same = other.i == e.i && other.j == e.j;
            let flipped = other.i == e.j && other.j == e.i;
            let expected = if same {
                Some(other.offset())
            } else if flipped {
                Some(-other.offset())
            } else {
                None
            };
            if let Some(expected) = expected {
                if (expected - e.offset()).amax() > 1e-12 {
                    report.push(
                        Check::FormationFeasibility,
                        format!(
                            "edges ({0}, {1}) and ({1}, {0}) are not antisymmetric",
                            label(e.i),
                            label(e.j)
                        ),
                    );
                }
            }
        }

        let pitch = e.orientation_offset[1].abs();
        if !(pitch < PI) {
            report.push(
                Check::FormationFeasibility,
                format!(
                    "edge ({}, {}): |theta_des| = {} is not below pi",
                    label(e.i),
                    label(e.j),
                    pitch
                ),
            );
        } else if pitch >= FRAC_PI_2 {
            report.warnings.push(format!(
                "edge ({}, {}): |theta_des| = {} cannot be met with both pitches inside (-pi/2, pi/2)",
                label(e.i),
                label(e.j),
                pitch
            ));
        }

        let desired = e.position_offset.norm();
        let contact = agents[e.i].radius + agents[e.j].radius;
        let range = agents[e.i].sensing.min(agents[e.j].sensing);
        if !(desired > contact && desired < range) {
            report.push(
                Check::FormationFeasibility,
                format!(
                    "edge ({}, {}): desired distance {} m is outside ({}, {}) m",
                    label(e.i),
                    label(e.j),
                    desired,
                    contact,
                    range
                ),
            );
        }
    }

    if let Some(gap) = formation_cycle_gap(formation, agents.len()) {
        if gap > 1e-9 {
            report.warnings.push(format!(
                "desired offsets are inconsistent around a formation cycle (mismatch {gap:.6}); \
                 the goal functions cannot all reach zero"
            ));
        }
    }
}

/// Largest mismatch between a desired offset and the offsets implied by a
/// spanning forest of the formation graph. Zero when every cycle closes.
pub fn formation_cycle_gap(formation: &FormationSpec, n: usize) -> Option<f64> {
    if formation.edges.is_empty() {
        return None;
    }
    let adjacency = formation.adjacency(n);
    let mut placed: Vec<Option<Vector6<f64>>> = vec![None; n];
    for root in 0..n {
        if placed[root].is_some() {
            continue;
        }
        placed[root] = Some(Vector6::zeros());
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            let xi = placed[i].expect("queued agents are placed");
            for &(j, des) in &adjacency[i] {
                if placed[j].is_none() {
                    placed[j] = Some(xi - des);
                    queue.push_back(j);
                }
            }
        }
    }
    let gap = formation
        .edges
        .iter()
        .map(|e| {
            let xi = placed[e.i].expect("all placed");
            let xj = placed[e.j].expect("all placed");
            (xi - xj - e.offset()).norm()
        })
        .fold(0.0, f64::max);
    Some(gap)
}
