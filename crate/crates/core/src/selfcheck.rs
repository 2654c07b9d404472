//! Randomized property checks of the analytic pieces: potential gradients
//! against central differences, bump joins, skew-symmetry of `dM/dt - 2C`
//! and the closed-form Jacobian inverse.
//!
//! Every check is driven by a seeded ChaCha8 stream, so a given seed always
//! produces the same samples and the same report.

use std::fmt;

use nalgebra::{Matrix3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{coriolis_matrix, inertia_matrix};
use crate::kinematics::{euler_rate_matrix, euler_rate_matrix_inverse, SINGULARITY_EPS};
use crate::model::{
    AgentSpec, FormationEdge, FormationSpec, Obstacle, Pose, Scenario, Twist, Workspace, DEFAULT_EPSILON_R,
    DEFAULT_THETA_BAR,
};
use crate::potential::{Bump, BumpKind, CompositionKind, PotentialField, PotentialParams, BETA_FLOOR};
use crate::sim::NumericsConfig;

pub const DEFAULT_SEED: u64 = 0x5eed;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
pub const GRADIENT_TOLERANCE: f64 = 1e-5;
pub const SKEW_TOLERANCE: f64 = 1e-6;
pub const JOIN_TOLERANCE: f64 = 1e-6;
pub const INVERSE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub samples: usize,
    /// Worst observed error, in the units of `limit`.
    pub worst: f64,
    pub limit: f64,
    pub detail: String,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.worst < self.limit
    }
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<16} {} worst {:.3e} (limit {:.0e}, {} samples)",
            self.name,
            if self.passed() { "pass" } else { "FAIL" },
            self.worst,
            self.limit,
            self.samples
        )?;
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckReport {
    pub seed: u64,
    pub results: Vec<PropertyResult>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(PropertyResult::passed)
    }

    pub fn first_failure(&self) -> Option<&PropertyResult> {
        self.results.iter().find(|r| !r.passed())
    }
}

impl fmt::Display for SelfCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        for r in &self.results {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Runs every property suite from one seed.
pub fn run_all(seed: u64) -> SelfCheckReport {
    let gradients = check_gradients(seed, 6, 20);
    SelfCheckReport {
        seed,
        results: vec![
            gradients.as_property(),
            check_bump_joins(seed.wrapping_add(1), 64),
            check_skew_symmetry(seed.wrapping_add(2), 1000),
            check_jacobian_inverse(seed.wrapping_add(3), 1000),
        ],
    }
}

/// Outcome of comparing analytic potential gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub scenarios: usize,
    pub states: usize,
    /// Number of (state, owner) gradients compared.
    pub comparisons: usize,
    /// `|analytic - fd| / max(|fd|, 1)` in the infinity norm over the
    /// gradient of `phi_i` with respect to every agent's state.
    pub max_rel_error: f64,
    /// Scenario number, owner index and the agent whose block differs most.
    pub worst_at: Option<(usize, usize, usize)>,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADIENT_TOLERANCE
    }

    pub fn as_property(&self) -> PropertyResult {
        PropertyResult {
            name: "gradient-fd",
            samples: self.comparisons,
            worst: self.max_rel_error,
            limit: GRADIENT_TOLERANCE,
            detail: match self.worst_at {
                Some((s, i, k)) => format!(
                    "[{} scenarios, {} states; worst: scenario {s}, phi_{i} wrt x_{k}]",
                    self.scenarios, self.states
                ),
                None => format!("[{} scenarios, {} states]", self.scenarios, self.states),
            },
        }
    }
}

impl fmt::Display for GradientReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_property())
    }
}

fn uniform3(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi))
}

fn in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    loop {
        let p = uniform3(rng, -radius, radius);
        if p.norm() < radius {
            return p;
        }
    }
}

/// A random scenario: 2 to 5 agents, up to two obstacles and a random
/// spanning tree of formation edges. The composition and `kappa` vary too.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.gen_range(2..=5);
    let agents: Vec<AgentSpec> = (0..n)
        .map(|i| {
            let mut a = AgentSpec::solid_sphere(
                i + 1,
                rng.gen_range(0.15..0.35),
                rng.gen_range(4.0..6.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(1.0..10.0),
            );
            a.body_inertia = uniform3(rng, 0.01, 0.2);
            a
        })
        .collect();
    let obstacles = (0..rng.gen_range(0..=2))
        .map(|_| Obstacle {
            center: in_ball(rng, 4.0),
            radius: rng.gen_range(0.3..0.8),
        })
        .collect();
    let edges = (1..n)
        .map(|j| FormationEdge {
            i: rng.gen_range(0..j),
            j,
            position_offset: uniform3(rng, -2.0, 2.0),
            orientation_offset: uniform3(rng, -0.5, 0.5),
        })
        .collect();
    let (composition, kappa) = match rng.gen_range(0..5) {
        0 => (CompositionKind::Navigation, 1.0),
        1 => (CompositionKind::Navigation, 2.0),
        2 => (CompositionKind::Ratio, 1.0),
        3 => (CompositionKind::Ratio, 4.0),
        _ => (CompositionKind::Ratio, 64.0),
    };
    let numerics = NumericsConfig {
        kappa,
        composition,
        ..NumericsConfig::default()
    };
    Scenario {
        name: "random".into(),
        initial_poses: vec![Pose::at(Vector3::zeros()); n],
        initial_twists: vec![Twist::zero(); n],
        agents,
        obstacles,
        workspace: Workspace {
            radius: 10.0,
            gravity: 9.81,
        },
        formation: FormationSpec { edges },
        theta_bar: DEFAULT_THETA_BAR,
        epsilon_r: DEFAULT_EPSILON_R,
        numerics,
    }
}

/// Poses with every agent's potential finite and `beta` clear of zero.
pub fn random_state(field: &PotentialField, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let n = field.agent_count();
    loop {
        let poses: Vec<Pose> = (0..n)
            .map(|_| {
                let q = Vector3::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-1.3..1.3),
                    rng.gen_range(-3.0..3.0),
                );
                Pose::new(in_ball(rng, 3.0), q)
            })
            .collect();
        let usable = (0..n).all(|i| matches!(field.phi_agent(i, &poses), Ok(p) if p.beta > 1e-9));
        if usable {
            return poses;
        }
    }
}

fn phi_value(field: &PotentialField, i: usize, poses: &[Pose]) -> f64 {
    field.phi_agent(i, poses).map(|p| p.value).unwrap_or(f64::NAN)
}

fn central_difference(field: &PotentialField, i: usize, poses: &[Pose], k: usize) -> Vector6<f64> {
    let mut g = Vector6::zeros();
    let x = poses[k].to_vector();
    let mut shifted = poses.to_vec();
    for c in 0..6 {
        let mut plus = x;
        plus[c] += FD_STEP;
        shifted[k] = Pose::from_vector(&plus);
        let up = phi_value(field, i, &shifted);
        let mut minus = x;
        minus[c] -= FD_STEP;
        shifted[k] = Pose::from_vector(&minus);
        let down = phi_value(field, i, &shifted);
        g[c] = (up - down) / (2.0 * FD_STEP);
    }
    g
}

/// Compares the gradient of every `phi_i` with respect to every agent's state
/// (dependent or not) with central differences, on random states of random
/// scenarios.
pub fn check_gradients(seed: u64, scenarios: usize, states_per_scenario: usize) -> GradientReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradientReport {
        scenarios,
        states: 0,
        comparisons: 0,
        max_rel_error: 0.0,
        worst_at: None,
    };
    for s in 0..scenarios {
        let scenario = random_scenario(&mut rng);
        let field = PotentialField::new(
            &scenario,
            PotentialParams {
                kappa: scenario.numerics.kappa,
                beta_floor: BETA_FLOOR,
                composition: scenario.numerics.composition,
            },
        );
        for _ in 0..states_per_scenario {
            let poses = random_state(&field, &mut rng);
            report.states += 1;
            for i in 0..field.agent_count() {
                let eval = field.phi_agent(i, &poses).expect("state was sampled with finite potentials");
                let mut diff = 0.0_f64;
                let mut size = 1.0_f64;
                let mut block = 0;
                for k in 0..field.agent_count() {
                    let fd = central_difference(&field, i, &poses, k);
                    let d = (eval.gradient(i, k) - fd).amax();
                    if !(d <= diff) {
                        diff = if d.is_nan() { f64::INFINITY } else { d };
                        block = k;
                    }
                    size = size.max(fd.amax());
                }
                let err = diff / size;
                report.comparisons += 1;
                if err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst_at = Some((s, i, block));
                }
            }
        }
    }
    report
}

/// One-sided curvatures at both joins, monotonicity and range on a `10^4`
/// grid, and slope/curvature against differences of the value. Errors are
/// scaled by `knot` and `knot^2` so every knot is judged alike.
pub fn check_bump_joins(seed: u64, knots: usize) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [BumpKind::Agent, BumpKind::Obstacle, BumpKind::Connectivity];
    let mut worst = 0.0_f64;
    let mut detail = String::new();
    let mut samples = 0;
    let mut note = |err: f64, what: &dyn Fn() -> String| {
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if err > worst {
            worst = err;
            detail = what();
        }
    };
    for n in 0..knots {
        let kind = kinds[n % kinds.len()];
        let knot = 10f64.powf(rng.gen_range(-2.0..2.0));
        let b = Bump::new(kind, knot);
        let tiny = knot * 1e-9;
        for x in [0.0, knot] {
            let jump = (b.eval(x + tiny).curvature - b.eval(x - tiny).curvature).abs() * knot * knot;
            note(jump, &|| format!("[{kind:?} knot {knot:.3e}: curvature jump at {x:.3e}]"));
        }
        samples += 2;

        let grid = 10_000;
        let mut prev = f64::NEG_INFINITY;
        for g in 0..=grid {
            let x = knot * (-0.1 + 1.2 * g as f64 / grid as f64);
            let v = b.value(x);
            if !(0.0..=1.0).contains(&v) || v < prev {
                note(f64::INFINITY, &|| format!("[{kind:?} knot {knot:.3e}: not monotone in [0,1] at {x:.3e}]"));
            }
            prev = v;
        }
        samples += grid + 1;

        for _ in 0..8 {
            let x = knot * rng.gen_range(0.05..0.95);
            let h = knot * 1e-5;
            let e = b.eval(x);
            let slope = (b.value(x + h) - b.value(x - h)) / (2.0 * h);
            let curvature = (b.eval(x + h).slope - b.eval(x - h).slope) / (2.0 * h);
            let err = ((e.slope - slope).abs() * knot).max((e.curvature - curvature).abs() * knot * knot);
            note(err, &|| format!("[{kind:?} knot {knot:.3e}: derivative mismatch at {x:.3e}]"));
        }
        samples += 8;
    }
    let passed = worst < JOIN_TOLERANCE;
    PropertyResult {
        name: "bump-joins",
        samples,
        worst,
        limit: JOIN_TOLERANCE,
        detail: if passed { String::new() } else { detail },
    }
}

/// `|v^T (dM/dt - 2C) v| / (|v|^2 |M|)` with `dM/dt` by central differences
/// along `q(t)` driven by the sampled twist.
pub fn check_skew_symmetry(seed: u64, samples: usize) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let mut agent = AgentSpec::solid_sphere(1, 0.25, 5.0, rng.gen_range(0.5..3.0), 1.0);
        agent.body_inertia = uniform3(&mut rng, 0.01, 1.0);
        let q = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-1.3..1.3), rng.gen_range(-3.0..3.0));
        let pose = Pose::new(uniform3(&mut rng, -5.0, 5.0), q);
        let twist = Twist::new(uniform3(&mut rng, -2.0, 2.0), uniform3(&mut rng, -2.0, 2.0));
        let q_dot = euler_rate_matrix_inverse(&q, SINGULARITY_EPS).expect("pitch sampled away from the singularity")
            * twist.angular;
        let h = 1e-6;
        let m_plus = inertia_matrix(&agent, &Pose::new(pose.position, q + q_dot * h));
        let m_minus = inertia_matrix(&agent, &Pose::new(pose.position, q - q_dot * h));
        let m_dot = (m_plus - m_minus) / (2.0 * h);
        let m = inertia_matrix(&agent, &pose);
        let c = coriolis_matrix(&agent, &pose, &twist);
        let v = twist.to_vector();
        let err = (v.transpose() * (m_dot - c * 2.0) * v)[0].abs() / (v.norm_squared() * m.norm());
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    PropertyResult {
        name: "skew-symmetry",
        samples,
        worst,
        limit: SKEW_TOLERANCE,
        detail: String::new(),
    }
}

/// `|Jq Jq^-1 - I|` relative to `|Jq^-1|`, plus refusal at the singularity.
pub fn check_jacobian_inverse(seed: u64, samples: usize) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let q = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-1.45..1.45), rng.gen_range(-3.0..3.0));
        let err = match euler_rate_matrix_inverse(&q, SINGULARITY_EPS) {
            Some(inv) => {
                let residual: Matrix3<f64> = euler_rate_matrix(&q) * inv - Matrix3::identity();
                residual.amax() / inv.amax().max(1.0)
            }
            None => f64::INFINITY,
        };
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    for theta in [std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2] {
        if euler_rate_matrix_inverse(&Vector3::new(0.3, theta, -0.2), SINGULARITY_EPS).is_some() {
            worst = f64::INFINITY;
        }
    }
    PropertyResult {
        name: "jacobian-inverse",
        samples: samples + 2,
        worst,
        limit: INVERSE_TOLERANCE,
        detail: String::new(),
    }
}
