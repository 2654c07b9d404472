//! Fixed-step closed-loop simulation with safety monitors.
//!
//! Every control evaluation runs in two phases over one snapshot of the
//! world: each agent first evaluates its potential and publishes the
//! gradients it has with respect to other agents, then each agent assembles
//! its input from its own gradient and the messages addressed to it.

use std::collections::BTreeSet;
use std::fmt;

use log::{debug, info};
use nalgebra::Vector6;

use crate::control::{control_input, ControlEval, NeighborMessage};
use crate::dynamics::{forward_dynamics, kinetic_energy};
use crate::error::{Error, Result};
use crate::kinematics::{body_rates_to_state_rates_with_eps, SINGULARITY_EPS};
use crate::model::{validate_scenario, Pose, Scenario, Twist};
use crate::potential::{self, CompositionKind, PotentialEval, PotentialField, BETA_FLOOR, DEFAULT_KAPPA};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    SemiImplicitEuler,
}

/// How the input behaves inside one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    /// Re-evaluated at every integrator stage.
    Continuous,
    /// Evaluated once at the start of the step and held.
    ZeroOrderHold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub singular_eps: f64,
    /// Floor on each barrier factor of `beta`.
    pub beta_floor: f64,
    /// Allowed per-step growth of the Lyapunov function is `lyapunov_slack * dt^4`.
    pub lyapunov_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            singular_eps: SINGULARITY_EPS,
            beta_floor: BETA_FLOOR,
            lyapunov_slack: 1.0,
        }
    }
}

/// Declared convergence: every goal function below `gamma_ratio` times the
/// largest initial one and every twist below `speed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub gamma_ratio: f64,
    pub speed: f64,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            gamma_ratio: 1e-2,
            speed: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericsConfig {
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub control_mode: ControlMode,
    pub log_every: usize,
    pub kappa: f64,
    pub composition: CompositionKind,
    pub tolerances: Tolerances,
    pub convergence: Convergence,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 30.0,
            integrator: Integrator::Rk4,
            control_mode: ControlMode::Continuous,
            log_every: 10,
            kappa: DEFAULT_KAPPA,
            composition: CompositionKind::default(),
            tolerances: Tolerances::default(),
            convergence: Convergence::default(),
        }
    }
}

impl NumericsConfig {
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= self.dt) {
            return Err(format!("t_end = {} must be at least dt = {}", self.t_end, self.dt));
        }
        if self.log_every == 0 {
            return Err("log_every must be at least 1".into());
        }
        if !(self.kappa >= 1.0) {
            return Err(format!("kappa = {} must be at least 1", self.kappa));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub poses: Vec<Pose>,
    pub twists: Vec<Twist>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    InterAgentCollision,
    ObstacleCollision,
    WorkspaceBoundary,
    ConnectivityLoss,
    /// `|theta|` above the configured bound.
    SingularityMargin,
    SingularPose,
    PotentialBlowUp,
    NonFinite,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::InterAgentCollision => "inter-agent-collision",
            ViolationKind::ObstacleCollision => "obstacle-collision",
            ViolationKind::WorkspaceBoundary => "workspace-boundary",
            ViolationKind::ConnectivityLoss => "connectivity-loss",
            ViolationKind::SingularityMargin => "singularity-margin",
            ViolationKind::SingularPose => "singular-pose",
            ViolationKind::PotentialBlowUp => "potential-blow-up",
            ViolationKind::NonFinite => "non-finite-state",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub kind: ViolationKind,
    /// Indices of the agents involved.
    pub agents: Vec<usize>,
    pub detail: String,
}

impl StepFailure {
    fn new(kind: ViolationKind, agents: Vec<usize>, detail: impl Into<String>) -> Self {
        Self {
            kind,
            agents,
            detail: detail.into(),
        }
    }

    fn from_error(agent: usize, err: Error) -> Self {
        let kind = match err {
            Error::SingularPose { .. } => ViolationKind::SingularPose,
            Error::PotentialBlowUp { .. } => ViolationKind::PotentialBlowUp,
            _ => ViolationKind::NonFinite,
        };
        Self::new(kind, vec![agent], err.to_string())
    }
}

impl fmt::Display for StepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (agents {:?}): {}", self.kind.label(), self.agents, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Converged,
    /// Reached `t_end` safely without meeting the convergence thresholds.
    Running,
    SafetyViolation {
        kind: ViolationKind,
        t: f64,
        /// Agent ids (not indices).
        agents: Vec<usize>,
        detail: String,
    },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::Running => "running",
            Verdict::SafetyViolation { .. } => "safety-violation",
        }
    }
}

/// Potentials and inputs of all agents at one world snapshot.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub potentials: Vec<PotentialEval>,
    pub controls: Vec<ControlEval>,
    /// Senders of the gradient messages each agent used.
    pub senders: Vec<Vec<usize>>,
}

impl Snapshot {
    pub fn lyapunov(&self, field: &PotentialField, state: &WorldState) -> f64 {
        self.potentials
            .iter()
            .enumerate()
            .map(|(i, p)| p.value + kinetic_energy(&field.agents()[i], &state.poses[i], &state.twists[i]))
            .sum()
    }
}

/// Monitor values at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitors {
    pub min_dist_agents: f64,
    pub min_dist_obstacles: f64,
    /// `max_i |p_i| + r_i`.
    pub max_extent: f64,
    pub max_abs_theta: f64,
    /// Distance across each formation edge, in edge order.
    pub edge_distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub poses: Vec<Pose>,
    pub twists: Vec<Twist>,
    pub inputs: Vec<Vector6<f64>>,
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    pub lyapunov: f64,
    pub monitors: Monitors,
}

/// Extremes over every integrated step, not only the logged ones.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSummary {
    pub steps: usize,
    pub t_final: f64,
    pub min_beta: Vec<f64>,
    pub min_dist_agents: f64,
    pub min_dist_obstacles: f64,
    pub max_extent: f64,
    pub max_edge_distance: Vec<f64>,
    pub max_abs_theta: f64,
    pub max_input_norm: f64,
    pub initial_gamma: Vec<f64>,
    pub final_gamma: Vec<f64>,
    pub final_speed: f64,
    pub lyapunov_initial: f64,
    pub lyapunov_final: f64,
    pub lyapunov_max_step_increase: f64,
    pub lyapunov_cumulative_increase: f64,
    /// Steps whose Lyapunov growth exceeded `lyapunov_slack * dt^4`.
    pub lyapunov_slack_exceedances: usize,
    /// States where an agent's combined gradient vanished while its own term did not.
    pub gradient_cancellations: usize,
    /// Largest input change over a step in which some agent's message senders changed.
    pub max_input_jump_on_graph_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub agent_ids: Vec<usize>,
    /// Formation edges as index pairs, in the order of `edge_distances`.
    pub edges: Vec<(usize, usize)>,
    pub dt: f64,
    pub records: Vec<LogRecord>,
    /// Lyapunov value at every integrated state, starting at t = 0.
    pub lyapunov: Vec<f64>,
    pub verdict: Verdict,
    pub summary: MonitorSummary,
}

struct Rates {
    x_dot: Vec<Vector6<f64>>,
    v_dot: Vec<Vector6<f64>>,
}

pub struct Simulator {
    scenario: Scenario,
    field: PotentialField,
}

impl Simulator {
    /// Validates the scenario; refuses to build a simulator on any violation.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let report = validate_scenario(scenario);
        if !report.is_ok() {
            return Err(Error::Invalid(report));
        }
        scenario.numerics.check().map_err(Error::Parse)?;
        Ok(Self::new_unchecked(scenario))
    }

    /// Skips validation. For probing states the validator would refuse.
    pub fn new_unchecked(scenario: &Scenario) -> Self {
        Self {
            scenario: scenario.clone(),
            field: PotentialField::from_scenario(scenario),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn field(&self) -> &PotentialField {
        &self.field
    }

    pub fn initial_state(&self) -> WorldState {
        WorldState {
            poses: self.scenario.initial_poses.clone(),
            twists: self.scenario.initial_twists.clone(),
        }
    }

    fn g0(&self) -> f64 {
        self.scenario.workspace.gravity
    }

    /// Both control phases at one state.
    pub fn evaluate(&self, state: &WorldState) -> std::result::Result<Snapshot, StepFailure> {
        let n = self.field.agent_count();
        let mut potentials = Vec::with_capacity(n);
        for i in 0..n {
            let eval = self
                .field
                .phi_agent(i, &state.poses)
                .map_err(|e| StepFailure::from_error(i, e))?;
            potentials.push(eval);
        }

        let eps = self.scenario.numerics.tolerances.singular_eps;
        let mut controls = Vec::with_capacity(n);
        let mut senders = Vec::with_capacity(n);
        for i in 0..n {
            let messages: Vec<NeighborMessage> = potentials
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .filter_map(|(j, p)| {
                    p.grad_wrt.get(&i).map(|g| NeighborMessage {
                        from: j,
                        pose: state.poses[j],
                        gradient: *g,
                    })
                })
                .collect();
            let eval = control_input(
                &self.scenario.agents[i],
                &state.poses[i],
                &state.twists[i],
                &potentials[i].grad_own,
                &messages,
                self.g0(),
                eps,
            )
            .map_err(|e| StepFailure::from_error(i, e))?;
            senders.push(messages.iter().map(|m| m.from).collect());
            controls.push(eval);
        }
        Ok(Snapshot {
            potentials,
            controls,
            senders,
        })
    }

    fn rates(
        &self,
        state: &WorldState,
        inputs: &[Vector6<f64>],
    ) -> std::result::Result<Rates, StepFailure> {
        let eps = self.scenario.numerics.tolerances.singular_eps;
        let n = state.poses.len();
        let mut x_dot = Vec::with_capacity(n);
        let mut v_dot = Vec::with_capacity(n);
        for i in 0..n {
            let pose = &state.poses[i];
            let twist = &state.twists[i];
            x_dot.push(
                body_rates_to_state_rates_with_eps(&pose.orientation, twist, eps)
                    .map_err(|e| StepFailure::from_error(i, e))?,
            );
            v_dot.push(
                forward_dynamics(&self.scenario.agents[i], pose, twist, &inputs[i], self.g0())
                    .map_err(|e| StepFailure::from_error(i, e))?,
            );
        }
        Ok(Rates { x_dot, v_dot })
    }

    fn stage_inputs(
        &self,
        state: &WorldState,
        held: &[Vector6<f64>],
    ) -> std::result::Result<Vec<Vector6<f64>>, StepFailure> {
        match self.scenario.numerics.control_mode {
            ControlMode::ZeroOrderHold => Ok(held.to_vec()),
            ControlMode::Continuous => Ok(self.evaluate(state)?.controls.into_iter().map(|c| c.u).collect()),
        }
    }

    /// One integrator step of length `dt`.
    pub fn step(&self, state: &WorldState, dt: f64) -> std::result::Result<WorldState, StepFailure> {
        let snapshot = self.evaluate(state)?;
        self.step_from(state, &snapshot, dt)
    }

    /// One step reusing an already evaluated snapshot of `state`.
    pub fn step_from(
        &self,
        state: &WorldState,
        snapshot: &Snapshot,
        dt: f64,
    ) -> std::result::Result<WorldState, StepFailure> {
        let u0: Vec<Vector6<f64>> = snapshot.controls.iter().map(|c| c.u).collect();
        let next = match self.scenario.numerics.integrator {
            Integrator::Rk4 => {
                let k1 = self.rates(state, &u0)?;
                let s2 = advance(state, &k1, dt / 2.0);
                let k2 = self.rates(&s2, &self.stage_inputs(&s2, &u0)?)?;
                let s3 = advance(state, &k2, dt / 2.0);
                let k3 = self.rates(&s3, &self.stage_inputs(&s3, &u0)?)?;
                let s4 = advance(state, &k3, dt);
                let k4 = self.rates(&s4, &self.stage_inputs(&s4, &u0)?)?;
                let n = state.poses.len();
                let mut poses = Vec::with_capacity(n);
                let mut twists = Vec::with_capacity(n);
                for i in 0..n {
                    let dx = (k1.x_dot[i] + (k2.x_dot[i] + k3.x_dot[i]) * 2.0 + k4.x_dot[i]) * (dt / 6.0);
                    let dv = (k1.v_dot[i] + (k2.v_dot[i] + k3.v_dot[i]) * 2.0 + k4.v_dot[i]) * (dt / 6.0);
                    poses.push(Pose::from_vector(&(state.poses[i].to_vector() + dx)));
                    twists.push(Twist::from_vector(&(state.twists[i].to_vector() + dv)));
                }
                WorldState { poses, twists }
            }
            Integrator::SemiImplicitEuler => {
                let eps = self.scenario.numerics.tolerances.singular_eps;
                let k = self.rates(state, &u0)?;
                let n = state.poses.len();
                let mut poses = Vec::with_capacity(n);
                let mut twists = Vec::with_capacity(n);
                for i in 0..n {
                    let twist = Twist::from_vector(&(state.twists[i].to_vector() + k.v_dot[i] * dt));
                    let x_dot = body_rates_to_state_rates_with_eps(&state.poses[i].orientation, &twist, eps)
                        .map_err(|e| StepFailure::from_error(i, e))?;
                    poses.push(Pose::from_vector(&(state.poses[i].to_vector() + x_dot * dt)));
                    twists.push(twist);
                }
                WorldState { poses, twists }
            }
        };
        let finite = next
            .poses
            .iter()
            .all(|p| p.to_vector().iter().all(|c| c.is_finite()))
            && next.twists.iter().all(Twist::is_finite);
        if !finite {
            return Err(StepFailure::new(ViolationKind::NonFinite, vec![], "state became non-finite"));
        }
        Ok(next)
    }

    pub fn monitors(&self, state: &WorldState) -> Monitors {
        let s = &self.scenario;
        let n = s.agent_count();
        let mut min_dist_agents = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                min_dist_agents =
                    min_dist_agents.min((state.poses[i].position - state.poses[j].position).norm());
            }
        }
        let min_dist_obstacles = state
            .poses
            .iter()
            .flat_map(|p| s.obstacles.iter().map(move |o| (p.position - o.center).norm()))
            .fold(f64::INFINITY, f64::min);
        let max_extent = state
            .poses
            .iter()
            .zip(&s.agents)
            .map(|(p, a)| p.position.norm() + a.radius)
            .fold(f64::NEG_INFINITY, f64::max);
        let max_abs_theta = state
            .poses
            .iter()
            .map(|p| p.theta().abs())
            .fold(0.0, f64::max);
        let edge_distances = s
            .formation
            .edges
            .iter()
            .map(|e| (state.poses[e.i].position - state.poses[e.j].position).norm())
            .collect();
        Monitors {
            min_dist_agents,
            min_dist_obstacles,
            max_extent,
            max_abs_theta,
            edge_distances,
        }
    }

    /// Checks every safety requirement at `state`, strictly.
    pub fn check_safety(&self, state: &WorldState, snapshot: &Snapshot) -> std::result::Result<(), StepFailure> {
        let s = &self.scenario;
        let n = s.agent_count();
        let poses = &state.poses;
        for i in 0..n {
            for j in (i + 1)..n {
                let dist = (poses[i].position - poses[j].position).norm();
                let contact = s.agents[i].radius + s.agents[j].radius;
                if !(dist > contact) {
                    return Err(StepFailure::new(
                        ViolationKind::InterAgentCollision,
                        vec![i, j],
                        format!("distance {dist} m, contact {contact} m"),
                    ));
                }
            }
            for (z, o) in s.obstacles.iter().enumerate() {
                let dist = (poses[i].position - o.center).norm();
                let contact = s.agents[i].radius + o.radius;
                if !(dist > contact) {
                    return Err(StepFailure::new(
                        ViolationKind::ObstacleCollision,
                        vec![i],
                        format!("obstacle {z}: distance {dist} m, contact {contact} m"),
                    ));
                }
            }
            let extent = poses[i].position.norm() + s.agents[i].radius;
            if !(extent < s.workspace.radius) {
                return Err(StepFailure::new(
                    ViolationKind::WorkspaceBoundary,
                    vec![i],
                    format!("reaches {extent} m"),
                ));
            }
            if !(poses[i].theta().abs() <= s.theta_bar) {
                return Err(StepFailure::new(
                    ViolationKind::SingularityMargin,
                    vec![i],
                    format!("|theta| = {}", poses[i].theta().abs()),
                ));
            }
            let eval = &snapshot.potentials[i];
            let weakest = potential::weakest(&eval.factors);
            if !(eval.beta > 0.0) || !(weakest > s.numerics.tolerances.beta_floor) {
                return Err(StepFailure::new(
                    ViolationKind::PotentialBlowUp,
                    vec![i],
                    format!("beta = {:e}, weakest factor {weakest:e}", eval.beta),
                ));
            }
        }
        for e in &s.formation.edges {
            let dist = (poses[e.i].position - poses[e.j].position).norm();
            let range = s.agents[e.i].sensing.min(s.agents[e.j].sensing);
            if !(dist < range) {
                return Err(StepFailure::new(
                    ViolationKind::ConnectivityLoss,
                    vec![e.i, e.j],
                    format!("edge distance {dist} m, range {range} m"),
                ));
            }
        }
        Ok(())
    }

    fn record(&self, t: f64, state: &WorldState, snapshot: &Snapshot, lyapunov: f64) -> LogRecord {
        LogRecord {
            t,
            poses: state.poses.clone(),
            twists: state.twists.clone(),
            inputs: snapshot.controls.iter().map(|c| c.u).collect(),
            gammas: snapshot.potentials.iter().map(|p| p.gamma).collect(),
            betas: snapshot.potentials.iter().map(|p| p.beta).collect(),
            lyapunov,
            monitors: self.monitors(state),
        }
    }

    /// Integrates from the initial state to `t_end` or the first violation.
    pub fn run(&self) -> TrajectoryLog {
        self.run_from(self.initial_state())
    }

    pub fn run_from(&self, initial: WorldState) -> TrajectoryLog {
        let s = &self.scenario;
        let cfg = &s.numerics;
        let n = s.agent_count();
        let steps = cfg.steps();
        let dt = cfg.dt;
        let slack = cfg.tolerances.lyapunov_slack * dt.powi(4);
        info!(
            "running '{}': {} agents, {} steps of {} s ({:?}, {:?})",
            s.name, n, steps, dt, cfg.integrator, cfg.control_mode
        );

        let mut summary = MonitorSummary {
            steps: 0,
            t_final: 0.0,
            min_beta: vec![f64::INFINITY; n],
            min_dist_agents: f64::INFINITY,
            min_dist_obstacles: f64::INFINITY,
            max_extent: f64::NEG_INFINITY,
            max_edge_distance: vec![0.0; s.formation.edges.len()],
            max_abs_theta: 0.0,
            max_input_norm: 0.0,
            initial_gamma: vec![],
            final_gamma: vec![],
            final_speed: 0.0,
            lyapunov_initial: f64::NAN,
            lyapunov_final: f64::NAN,
            lyapunov_max_step_increase: f64::NEG_INFINITY,
            lyapunov_cumulative_increase: 0.0,
            lyapunov_slack_exceedances: 0,
            gradient_cancellations: 0,
            max_input_jump_on_graph_change: 0.0,
        };
        let mut records = Vec::new();
        let mut lyap_series = Vec::with_capacity(steps + 1);
        let mut state = initial;
        let mut previous: Option<(Vec<Vec<usize>>, Vec<Vector6<f64>>)> = None;
        let mut violation = None;

        for k in 0..=steps {
            let t = k as f64 * dt;
            let outcome = self
                .evaluate(&state)
                .and_then(|snap| self.check_safety(&state, &snap).map(|_| snap));
            let snapshot = match outcome {
                Ok(snap) => snap,
                Err(f) => {
                    violation = Some((t, f));
                    break;
                }
            };

            let lyap = snapshot.lyapunov(&self.field, &state);
            if let Some(&last) = lyap_series.last() {
                let rise: f64 = lyap - last;
                summary.lyapunov_max_step_increase = summary.lyapunov_max_step_increase.max(rise);
                if rise > 0.0 {
                    summary.lyapunov_cumulative_increase += rise;
                }
                if rise > slack {
                    summary.lyapunov_slack_exceedances += 1;
                    debug!("t = {t}: Lyapunov function rose by {rise:e}");
                }
            } else {
                summary.lyapunov_initial = lyap;
                summary.initial_gamma = snapshot.potentials.iter().map(|p| p.gamma).collect();
            }
            lyap_series.push(lyap);
            self.accumulate(&mut summary, &state, &snapshot, &mut previous);
            summary.steps = k;
            summary.t_final = t;

            if k % cfg.log_every == 0 || k == steps {
                records.push(self.record(t, &state, &snapshot, lyap));
            }
            if k == steps {
                break;
            }
            match self.step_from(&state, &snapshot, dt) {
                Ok(next) => state = next,
                Err(f) => {
                    violation = Some((t + dt, f));
                    break;
                }
            }
        }

        summary.lyapunov_final = lyap_series.last().copied().unwrap_or(f64::NAN);
        let verdict = match violation {
            Some((t, f)) => {
                info!("safety violation at t = {t}: {f}");
                Verdict::SafetyViolation {
                    kind: f.kind,
                    t,
                    agents: f.agents.iter().map(|&i| s.agents[i].id).collect(),
                    detail: f.detail,
                }
            }
            None => {
                let g0 = summary.initial_gamma.iter().copied().fold(0.0, f64::max);
                let g1 = summary.final_gamma.iter().copied().fold(0.0, f64::max);
                if g1 < cfg.convergence.gamma_ratio * g0 && summary.final_speed < cfg.convergence.speed {
                    Verdict::Converged
                } else {
                    Verdict::Running
                }
            }
        };
        info!("verdict: {}", verdict.label());

        TrajectoryLog {
            agent_ids: s.agents.iter().map(|a| a.id).collect(),
            edges: s.formation.edges.iter().map(|e| (e.i, e.j)).collect(),
            dt,
            records,
            lyapunov: lyap_series,
            verdict,
            summary,
        }
    }

    fn accumulate(
        &self,
        summary: &mut MonitorSummary,
        state: &WorldState,
        snapshot: &Snapshot,
        previous: &mut Option<(Vec<Vec<usize>>, Vec<Vector6<f64>>)>,
    ) {
        let m = self.monitors(state);
        summary.min_dist_agents = summary.min_dist_agents.min(m.min_dist_agents);
        summary.min_dist_obstacles = summary.min_dist_obstacles.min(m.min_dist_obstacles);
        summary.max_extent = summary.max_extent.max(m.max_extent);
        summary.max_abs_theta = summary.max_abs_theta.max(m.max_abs_theta);
        for (acc, d) in summary.max_edge_distance.iter_mut().zip(&m.edge_distances) {
            *acc = acc.max(*d);
        }
        for (acc, p) in summary.min_beta.iter_mut().zip(&snapshot.potentials) {
            *acc = acc.min(p.beta);
        }
        for (p, c) in snapshot.potentials.iter().zip(&snapshot.controls) {
            summary.max_input_norm = summary.max_input_norm.max(c.u.norm());
            let own = p.grad_own.norm();
            if own > 1e-6 && c.total_gradient.norm() <= 1e-9 * own.max(1.0) {
                summary.gradient_cancellations += 1;
            }
        }
        summary.final_gamma = snapshot.potentials.iter().map(|p| p.gamma).collect();
        summary.final_speed = state
            .twists
            .iter()
            .map(|t| t.to_vector().norm())
            .fold(0.0, f64::max);

        let inputs: Vec<Vector6<f64>> = snapshot.controls.iter().map(|c| c.u).collect();
        if let Some((senders, last_inputs)) = previous.as_ref() {
            let changed: BTreeSet<usize> = (0..senders.len())
                .filter(|&i| senders[i] != snapshot.senders[i])
                .collect();
            for i in changed {
                let jump = (inputs[i] - last_inputs[i]).norm();
                summary.max_input_jump_on_graph_change = summary.max_input_jump_on_graph_change.max(jump);
            }
        }
        *previous = Some((snapshot.senders.clone(), inputs));
    }
}

fn advance(state: &WorldState, rates: &Rates, h: f64) -> WorldState {
    WorldState {
        poses: state
            .poses
            .iter()
            .zip(&rates.x_dot)
            .map(|(p, d)| Pose::from_vector(&(p.to_vector() + d * h)))
            .collect(),
        twists: state
            .twists
            .iter()
            .zip(&rates.v_dot)
            .map(|(t, d)| Twist::from_vector(&(t.to_vector() + d * h)))
            .collect(),
    }
}

/// Validates and runs a scenario.
pub fn run(scenario: &Scenario) -> Result<TrajectoryLog> {
    Ok(Simulator::new(scenario)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_file::parse_str;
    use nalgebra::Vector3;

    fn bundled() -> Scenario {
        parse_str(crate::BUNDLED_FORMATION_SCENARIO).unwrap()
    }

    fn lone_agent(extra: &str) -> Scenario {
        parse_str(&format!(
            r#"
            name = "lone"
            [workspace]
            radius = 10.0
            {extra}
            [[agents]]
            id = 1
            radius = 0.25
            sensing = 5.0
            [[initial]]
            agent = 1
            position = [1.0, -2.0, 0.5]
            orientation = [0.1, -0.2, 0.3]
            "#
        ))
        .unwrap()
    }

    /// Two agents mirrored across the plane x = 0, with a goal that keeps the mirror.
    fn mirror_pair() -> Scenario {
        parse_str(
            r#"
            name = "mirror"
            [workspace]
            radius = 10.0
            [[agents]]
            id = 1
            radius = 0.25
            sensing = 5.0
            gain = 3.0
            [[agents]]
            id = 2
            radius = 0.25
            sensing = 5.0
            gain = 3.0
            [[formation.edges]]
            i = 1
            j = 2
            position = [-2.0, 0.0, 0.0]
            orientation = [0.0, 0.0, 0.0]
            [[initial]]
            agent = 1
            position = [-0.6, 1.0, 2.0]
            [[initial]]
            agent = 2
            position = [0.6, 1.0, 2.0]
            [numerics]
            kappa = 4.0
            t_end = 10.0
            "#,
        )
        .unwrap()
    }

    #[test]
    fn lone_agent_at_rest_stays_put() {
        let s = lone_agent("");
        let sim = Simulator::new(&s).unwrap();
        let start = sim.initial_state();
        let mut state = start.clone();
        for _ in 0..100 {
            state = sim.step(&state, 1e-3).unwrap();
        }
        for (a, b) in state.poses.iter().zip(&start.poses) {
            assert!((a.to_vector() - b.to_vector()).amax() < 1e-12);
        }
        assert!(state.twists[0].to_vector().amax() < 1e-12);
    }

    #[test]
    fn free_motion_without_gravity_or_damping() {
        let mut s = lone_agent("gravity = 0.0");
        s.agents[0].gain = 0.0;
        let v = Vector3::new(0.3, -0.1, 0.2);
        s.initial_twists[0] = Twist::new(v, Vector3::zeros());
        let sim = Simulator::new_unchecked(&s);
        let mut state = sim.initial_state();
        let dt = 1e-3;
        for _ in 0..500 {
            state = sim.step(&state, dt).unwrap();
        }
        let expected = s.initial_poses[0].position + v * 0.5;
        assert!((state.poses[0].position - expected).amax() < 1e-12);
        assert!((state.twists[0].linear - v).amax() < 1e-15);
    }

    #[test]
    fn initial_overlap_is_refused() {
        let mut s = bundled();
        s.initial_poses[1].position = s.initial_poses[0].position + Vector3::new(0.3, 0.0, 0.0);
        assert!(matches!(Simulator::new(&s), Err(Error::Invalid(_))));
    }

    #[test]
    fn mirrored_pair_stays_mirrored() {
        let s = mirror_pair();
        let log = Simulator::new(&s).unwrap().run();
        assert_eq!(log.verdict.label(), "converged", "{:?}", log.verdict);
        for r in &log.records {
            let (a, b) = (r.poses[0].position, r.poses[1].position);
            assert!((a.x + b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9 && (a.z - b.z).abs() < 1e-9);
            assert!(r.poses.iter().all(|p| p.orientation.amax() < 1e-9));
        }
        let last = log.records.last().unwrap();
        assert!((last.poses[0].position.x - last.poses[1].position.x + 2.0).abs() < 1e-3);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut s = bundled();
        s.numerics.t_end = 0.2;
        let a = Simulator::new(&s).unwrap().run();
        let b = Simulator::new(&s).unwrap().run();
        assert_eq!(a, b);
    }

    #[test]
    fn far_agent_does_not_change_inputs() {
        let s = bundled();
        let base = Simulator::new(&s).unwrap().evaluate(&Simulator::new(&s).unwrap().initial_state()).unwrap();
        let mut wider = s.clone();
        let mut far = wider.agents[0].clone();
        far.id = 9;
        wider.agents.push(far);
        wider.initial_poses.push(Pose::at(Vector3::new(5.0, -6.0, -3.0)));
        wider.initial_twists.push(Twist::zero());
        let sim = Simulator::new_unchecked(&wider);
        let snap = sim.evaluate(&sim.initial_state()).unwrap();
        for i in 0..4 {
            assert_eq!(snap.controls[i].u, base.controls[i].u);
            assert_eq!(snap.senders[i], base.senders[i]);
        }
    }

    #[test]
    fn rk4_error_shrinks_sixteenfold() {
        let mut s = mirror_pair();
        s.initial_twists[0] = Twist::new(Vector3::new(0.2, 0.1, 0.0), Vector3::new(0.0, 0.3, 0.5));
        let sim = Simulator::new_unchecked(&s);
        let at_one = |dt: f64| {
            let mut state = sim.initial_state();
            for _ in 0..(1.0 / dt).round() as usize {
                state = sim.step(&state, dt).unwrap();
            }
            let mut x = Vec::new();
            for (p, t) in state.poses.iter().zip(&state.twists) {
                x.extend(p.to_vector().iter().chain(t.to_vector().iter()).copied());
            }
            x
        };
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let (a, b, c) = (at_one(0.004), at_one(0.002), at_one(0.001));
        let ratio = dist(&a, &b) / dist(&b, &c);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn semi_implicit_euler_is_first_order() {
        let mut s = mirror_pair();
        s.numerics.integrator = Integrator::SemiImplicitEuler;
        let sim = Simulator::new(&s).unwrap();
        let at_one = |dt: f64| {
            let mut state = sim.initial_state();
            for _ in 0..(1.0 / dt).round() as usize {
                state = sim.step(&state, dt).unwrap();
            }
            state.poses[0].position
        };
        let (a, b, c) = (at_one(0.004), at_one(0.002), at_one(0.001));
        let ratio = (a - b).norm() / (b - c).norm();
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_order_hold_differs_but_stays_close() {
        let mut s = bundled();
        s.numerics.t_end = 0.1;
        let cont = Simulator::new(&s).unwrap().run();
        s.numerics.control_mode = ControlMode::ZeroOrderHold;
        let zoh = Simulator::new(&s).unwrap().run();
        let (a, b) = (cont.records.last().unwrap(), zoh.records.last().unwrap());
        let gap = (a.poses[1].position - b.poses[1].position).norm();
        assert!(gap > 0.0 && gap < 1e-2, "gap {gap}");
    }

    #[test]
    fn boundary_crossing_is_reported() {
        let mut s = lone_agent("gravity = 0.0");
        s.agents[0].gain = 0.0;
        s.initial_twists[0] = Twist::new(Vector3::new(2000.0, 0.0, 0.0), Vector3::zeros());
        let log = Simulator::new_unchecked(&s).run();
        match &log.verdict {
            Verdict::SafetyViolation { agents, t, .. } => {
                assert_eq!(agents, &vec![1]);
                assert!(*t < 0.01);
            }
            other => panic!("expected a violation, got {other:?}"),
        }
        assert!(!log.records.is_empty());
    }

    #[test]
    fn lyapunov_series_covers_every_step() {
        let mut s = bundled();
        s.numerics.t_end = 0.05;
        let log = Simulator::new(&s).unwrap().run();
        assert_eq!(log.lyapunov.len(), s.numerics.steps() + 1);
        assert_eq!(log.records.len(), s.numerics.steps() / s.numerics.log_every + 1);
        assert!(log.lyapunov.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(log.records[0].lyapunov, log.lyapunov[0]);
    }
}
