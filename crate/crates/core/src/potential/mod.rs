//! Per-agent potential: goal function, obstacle function and their
//! navigation-style composition, with analytic gradients.
//!
//! For agent `i`:
//!
//! * `gamma_i = sum_{j in N_i(0)} |x_i - x_j - x_des_ij|^2`
//! * `beta_i` is the product of the workspace factor, `cos^2(theta_i)`, one
//!   collision bump per sensed agent and per sensed obstacle, and one
//!   connectivity bump per initial formation neighbor.
//! * `phi_i = gamma_i * beta_i^(-1/kappa)` by default, or the navigation
//!   form `phi_i = 1 / (1 - nu_i) - 1` with
//!   `nu_i = gamma_i / (gamma_i^kappa + beta_i)^(1/kappa)`.
//!
//! `phi_i` is zero exactly at the goal and grows without bound as `beta_i`
//! goes to zero away from it.

pub mod bump;

use std::collections::BTreeMap;

use nalgebra::{Vector3, Vector6};

pub use bump::{Bump, BumpKind, BumpValue};

use crate::error::{Error, Result};
use crate::model::{AgentSpec, Obstacle, Pose, Scenario};

pub const DEFAULT_KAPPA: f64 = 64.0;
/// A barrier factor at or below this is treated as a safety violation.
pub const BETA_FLOOR: f64 = 1e-12;

const THETA: usize = 4;

/// How `gamma` and `beta` are combined into `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompositionKind {
    /// `phi = gamma * beta^(-1/kappa)`.
    #[default]
    Ratio,
    /// `phi = nu / (1 - nu)` with `nu = gamma / (gamma^kappa + beta)^(1/kappa)`.
    Navigation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    pub kappa: f64,
    pub beta_floor: f64,
    pub composition: CompositionKind,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            beta_floor: BETA_FLOOR,
            composition: CompositionKind::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Agent,
    Obstacle,
    Connectivity,
}

/// `d^2 - bound^2` for collisions, `bound^2 - d^2` for connectivity (where
/// `bound` is the sensing range).
pub fn eta(kind: DistanceKind, distance: f64, bound: f64) -> f64 {
    match kind {
        DistanceKind::Agent | DistanceKind::Obstacle => distance * distance - bound * bound,
        DistanceKind::Connectivity => bound * bound - distance * distance,
    }
}

/// `[1 - p_sq / (r_w - r_i)^2]^2` and its derivative in `p_sq`.
pub fn b_workspace(p_sq: f64, r_w: f64, r_i: f64) -> (f64, f64) {
    let reach = (r_w - r_i) * (r_w - r_i);
    let s = 1.0 - p_sq / reach;
    (s * s, -2.0 * s / reach)
}

/// `cos^2(theta)` and its derivative.
pub fn b_singularity(theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (c * c, -2.0 * s * c)
}

pub fn gamma_edge(x_i: &Vector6<f64>, x_j: &Vector6<f64>, x_des: &Vector6<f64>) -> f64 {
    (x_i - x_j - x_des).norm_squared()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Workspace,
    Singularity,
    /// Collision with the agent at this index.
    Agent(usize),
    Obstacle(usize),
    /// Connectivity with the formation neighbor at this index.
    Connectivity(usize),
}

/// One term of the obstacle-function product with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub value: f64,
    /// Gradient with respect to the owning agent's state.
    pub grad_own: Vector6<f64>,
    /// Gradient with respect to the other agent involved, if any.
    pub grad_other: Option<(usize, Vector6<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaEval {
    pub value: f64,
    pub factors: Vec<Factor>,
}

/// Smallest barrier factor, or 1 when there are none.
pub fn weakest(factors: &[Factor]) -> f64 {
    factors.iter().map(|f| f.value).fold(1.0, f64::min)
}

/// Scalar composition of `gamma` and `beta` with partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Composition {
    pub value: f64,
    pub nu: f64,
    pub d_gamma: f64,
    pub d_beta: f64,
    /// `1 - nu`, computed without cancellation.
    pub slack: f64,
}

/// `phi = gamma * beta^(-1/kappa)`.
///
/// `nu` and `slack` are reported as `phi / (1 + phi)` and `1 / (1 + phi)`.
pub fn compose_ratio(gamma: f64, beta: f64, kappa: f64) -> Composition {
    let scale = beta.powf(-1.0 / kappa);
    let value = gamma * scale;
    Composition {
        value,
        nu: value / (1.0 + value),
        d_gamma: scale,
        d_beta: -value / (kappa * beta),
        slack: 1.0 / (1.0 + value),
    }
}

pub fn compose_with(kind: CompositionKind, gamma: f64, beta: f64, kappa: f64) -> Composition {
    match kind {
        CompositionKind::Ratio => compose_ratio(gamma, beta, kappa),
        CompositionKind::Navigation => compose(gamma, beta, kappa),
    }
}

/// `phi = nu / (1 - nu)` with `nu = gamma / (gamma^kappa + beta)^(1/kappa)`.
///
/// Written through `a = ln(1 + beta / gamma^kappa) / kappa`, so that
/// `nu = exp(-a)` and `phi = 1 / expm1(a)`; this stays accurate when
/// `gamma^kappa` dwarfs `beta` and `nu` sits next to one.
pub fn compose(gamma: f64, beta: f64, kappa: f64) -> Composition {
    let gk = gamma.powf(kappa);
    let ratio = beta / gk;
    if gamma == 0.0 || !ratio.is_finite() {
        // gamma^kappa negligible next to beta
        let scale = beta.powf(-1.0 / kappa);
        let nu = gamma * scale;
        return Composition {
            value: nu / (1.0 - nu),
            nu,
            d_gamma: scale / ((1.0 - nu) * (1.0 - nu)),
            d_beta: -nu / (kappa * beta) / ((1.0 - nu) * (1.0 - nu)),
            slack: 1.0 - nu,
        };
    }
    let a = ratio.ln_1p() / kappa;
    let grow = a.exp_m1();
    let slack = -(-a).exp_m1();
    let nu = (-a).exp();
    // d phi / d a = -e^a / expm1(a)^2
    let e = 1.0 / (grow * slack);
    let w = beta / (gk + beta);
    Composition {
        value: 1.0 / grow,
        nu,
        d_gamma: e * w / gamma,
        d_beta: -e * w / (kappa * beta),
        slack,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialEval {
    pub value: f64,
    /// Gradient with respect to the agent's own state `x_i`.
    pub grad_own: Vector6<f64>,
    /// Gradients with respect to every other agent the potential depends on.
    pub grad_wrt: BTreeMap<usize, Vector6<f64>>,
    pub gamma: f64,
    pub beta: f64,
    pub nu: f64,
    pub factors: Vec<Factor>,
}

impl PotentialEval {
    pub fn gradient(&self, owner: usize, k: usize) -> Vector6<f64> {
        if k == owner {
            self.grad_own
        } else {
            self.grad_wrt.get(&k).copied().unwrap_or_else(Vector6::zeros)
        }
    }
}

/// Everything needed to evaluate the potentials of a fixed set of agents.
#[derive(Debug, Clone)]
pub struct PotentialField {
    agents: Vec<AgentSpec>,
    obstacles: Vec<Obstacle>,
    workspace_radius: f64,
    formation: Vec<Vec<(usize, Vector6<f64>)>>,
    params: PotentialParams,
}

impl PotentialField {
    pub fn new(scenario: &Scenario, params: PotentialParams) -> Self {
        Self {
            agents: scenario.agents.clone(),
            obstacles: scenario.obstacles.clone(),
            workspace_radius: scenario.workspace.radius,
            formation: scenario.formation.adjacency(scenario.agent_count()),
            params,
        }
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self::new(
            scenario,
            PotentialParams {
                kappa: scenario.numerics.kappa,
                beta_floor: scenario.numerics.tolerances.beta_floor,
                composition: scenario.numerics.composition,
            },
        )
    }

    pub fn params(&self) -> PotentialParams {
        self.params
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// Initial formation neighbors of `i` with their desired offsets.
    pub fn formation_neighbors(&self, i: usize) -> &[(usize, Vector6<f64>)] {
        &self.formation[i]
    }

    /// True when `phi_j` varies with `x_i`: `i` is a formation neighbor of `j`
    /// or lies strictly inside `j`'s sensing range.
    pub fn depends_on(&self, j: usize, i: usize, poses: &[Pose]) -> bool {
        if i == j {
            return true;
        }
        let d = self.agents[j].sensing;
        self.formation[j].iter().any(|&(k, _)| k == i)
            || (poses[i].position - poses[j].position).norm_squared() < d * d
    }

    pub fn gamma_agent(&self, i: usize, poses: &[Pose]) -> f64 {
        let x_i = poses[i].to_vector();
        self.formation[i]
            .iter()
            .map(|(j, des)| gamma_edge(&x_i, &poses[*j].to_vector(), des))
            .sum()
    }

    pub fn beta_agent(&self, i: usize, poses: &[Pose]) -> BetaEval {
        let me = &self.agents[i];
        let p_i = poses[i].position;
        let d_sq = me.sensing * me.sensing;
        let mut factors = Vec::new();

        let (value, slope) = b_workspace(p_i.norm_squared(), self.workspace_radius, me.radius);
        factors.push(Factor {
            kind: FactorKind::Workspace,
            value,
            grad_own: position_gradient(p_i * (2.0 * slope)),
            grad_other: None,
        });

        let (value, slope) = b_singularity(poses[i].theta());
        let mut grad_own = Vector6::zeros();
        grad_own[THETA] = slope;
        factors.push(Factor {
            kind: FactorKind::Singularity,
            value,
            grad_own,
            grad_other: None,
        });

        for (j, other) in self.agents.iter().enumerate() {
            if j == i {
                continue;
            }
            let diff = p_i - poses[j].position;
            let dist_sq = diff.norm_squared();
            // beyond the sensing range the bump is identically one
            if dist_sq >= d_sq {
                continue;
            }
            let contact = me.radius + other.radius;
            let bump = Bump::new(BumpKind::Agent, d_sq - contact * contact);
            let b = bump.eval(dist_sq - contact * contact);
            let g = diff * (2.0 * b.slope);
            factors.push(Factor {
                kind: FactorKind::Agent(j),
                value: b.value,
                grad_own: position_gradient(g),
                grad_other: Some((j, position_gradient(-g))),
            });
        }

        for (z, o) in self.obstacles.iter().enumerate() {
            let diff = p_i - o.center;
            let dist_sq = diff.norm_squared();
            if dist_sq >= d_sq {
                continue;
            }
            let contact = me.radius + o.radius;
            let bump = Bump::new(BumpKind::Obstacle, d_sq - contact * contact);
            let b = bump.eval(dist_sq - contact * contact);
            factors.push(Factor {
                kind: FactorKind::Obstacle(z),
                value: b.value,
                grad_own: position_gradient(diff * (2.0 * b.slope)),
                grad_other: None,
            });
        }

        for &(j, _) in &self.formation[i] {
            let diff = p_i - poses[j].position;
            let contact = me.radius + self.agents[j].radius;
            let bump = Bump::new(BumpKind::Connectivity, d_sq - contact * contact);
            let b = bump.eval(d_sq - diff.norm_squared());
            let g = diff * (-2.0 * b.slope);
            factors.push(Factor {
                kind: FactorKind::Connectivity(j),
                value: b.value,
                grad_own: position_gradient(g),
                grad_other: Some((j, position_gradient(-g))),
            });
        }

        let value = factors.iter().map(|f| f.value).product();
        BetaEval { value, factors }
    }

    pub fn phi_agent(&self, i: usize, poses: &[Pose]) -> Result<PotentialEval> {
        let beta = self.beta_agent(i, poses);
        let x_i = poses[i].to_vector();

        let mut gamma = 0.0;
        let mut gamma_own = Vector6::zeros();
        let mut gamma_wrt: BTreeMap<usize, Vector6<f64>> = BTreeMap::new();
        for (j, des) in &self.formation[i] {
            let e = x_i - poses[*j].to_vector() - des;
            gamma += e.norm_squared();
            gamma_own += e * 2.0;
            *gamma_wrt.entry(*j).or_insert_with(Vector6::zeros) -= e * 2.0;
        }

        let floor = self.params.beta_floor;
        if !(beta.value > 0.0) || !(weakest(&beta.factors) > floor) {
            return Err(Error::PotentialBlowUp {
                agent: i,
                beta: beta.value,
                nu: 1.0,
            });
        }
        let c = compose_with(self.params.composition, gamma, beta.value, self.params.kappa);
        if !(c.slack > floor) || !c.value.is_finite() {
            return Err(Error::PotentialBlowUp {
                agent: i,
                beta: beta.value,
                nu: c.nu,
            });
        }

        // d beta = sum_f (beta / b_f) d b_f; every b_f >= beta > 0 here
        let mut grad_own = gamma_own * c.d_gamma;
        let mut grad_wrt: BTreeMap<usize, Vector6<f64>> = gamma_wrt
            .into_iter()
            .map(|(j, g)| (j, g * c.d_gamma))
            .collect();
        for f in &beta.factors {
            let weight = c.d_beta * (beta.value / f.value);
            grad_own += f.grad_own * weight;
            if let Some((j, g)) = &f.grad_other {
                *grad_wrt.entry(*j).or_insert_with(Vector6::zeros) += g * weight;
            }
        }

        Ok(PotentialEval {
            value: c.value,
            grad_own,
            grad_wrt,
            gamma,
            beta: beta.value,
            nu: c.nu,
            factors: beta.factors,
        })
    }

    /// Gradient of `phi_i` with respect to `x_k`.
    pub fn grad_phi(&self, i: usize, poses: &[Pose], k: usize) -> Result<Vector6<f64>> {
        Ok(self.phi_agent(i, poses)?.gradient(i, k))
    }
}

fn position_gradient(g: Vector3<f64>) -> Vector6<f64> {
    let mut out = Vector6::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&g);
    out
}
