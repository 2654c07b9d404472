//! Decentralized control law and the Lyapunov-like monitoring function.
//!
//! The controller of agent `i` sees its own pose, twist and potential gradient
//! plus one [`NeighborMessage`] per agent whose potential depends on `x_i`. It
//! never sees the inertia or Coriolis terms of the plant.

use nalgebra::Vector6;

use crate::dynamics::{gravity_vector, kinetic_energy};
use crate::error::{Error, Result};
use crate::kinematics::euler_rate_matrix_inverse;
use crate::model::{AgentSpec, Pose, Twist};
use crate::potential::PotentialField;

/// What agent `from` tells agent `i`: its pose and `grad_{x_i} phi_from`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMessage {
    pub from: usize,
    pub pose: Pose,
    pub gradient: Vector6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlEval {
    pub u: Vector6<f64>,
    pub damping: Vector6<f64>,
    pub gravity: Vector6<f64>,
    /// `-J^{-T} grad_{x_i}(phi_i + sum_j phi_j)`.
    pub gradient: Vector6<f64>,
    /// `grad_{x_i}(phi_i + sum_j phi_j)` before mapping through `J^{-T}`.
    pub total_gradient: Vector6<f64>,
}

/// `u_i = -k v_i + g_i - J^{-T}(q_i) grad_{x_i}(phi_i + sum_j phi_j)`.
///
/// Message order does not matter: contributions are summed in sender order.
pub fn control_input(
    agent: &AgentSpec,
    pose: &Pose,
    twist: &Twist,
    own_gradient: &Vector6<f64>,
    messages: &[NeighborMessage],
    g0: f64,
    singular_eps: f64,
) -> Result<ControlEval> {
    let inv = euler_rate_matrix_inverse(&pose.orientation, singular_eps).ok_or(
        Error::SingularPose {
            cos_theta: pose.theta().cos(),
        },
    )?;

    let mut sorted: Vec<&NeighborMessage> = messages.iter().collect();
    sorted.sort_by_key(|m| m.from);
    let mut total = *own_gradient;
    for m in sorted {
        total += m.gradient;
    }

    // J^{-T} is blockdiag(I, Jq^{-T})
    let mut mapped = total;
    let rot = inv.transpose() * total.fixed_rows::<3>(3);
    mapped.fixed_rows_mut::<3>(3).copy_from(&rot);

    let damping = -twist.to_vector() * agent.gain;
    let gravity = gravity_vector(agent, g0);
    let gradient = -mapped;
    Ok(ControlEval {
        u: damping + gravity + gradient,
        damping,
        gravity,
        gradient,
        total_gradient: total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEval {
    pub total: f64,
    pub potential: Vec<f64>,
    pub kinetic: Vec<f64>,
}

/// `L = sum_i phi_i(x) + 1/2 v_i^T M_i v_i`.
pub fn lyapunov(field: &PotentialField, poses: &[Pose], twists: &[Twist]) -> Result<LyapunovEval> {
    let n = field.agent_count();
    let mut potential = Vec::with_capacity(n);
    let mut kinetic = Vec::with_capacity(n);
    for i in 0..n {
        potential.push(field.phi_agent(i, poses)?.value);
        kinetic.push(kinetic_energy(&field.agents()[i], &poses[i], &twists[i]));
    }
    let total = potential.iter().zip(&kinetic).map(|(p, k)| p + k).sum();
    Ok(LyapunovEval {
        total,
        potential,
        kinetic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::STANDARD_GRAVITY;
    use crate::kinematics::{jacobian, SINGULARITY_EPS};
    use crate::model::{FormationSpec, Scenario};
    use crate::potential::PotentialParams;
    use crate::scenario_file;
    use nalgebra::Vector3;

    fn bundled() -> Scenario {
        scenario_file::parse_str(crate::BUNDLED_FORMATION_SCENARIO).unwrap()
    }

    fn messages_for(field: &PotentialField, i: usize, poses: &[Pose]) -> Vec<NeighborMessage> {
        (0..field.agent_count())
            .filter(|&j| j != i && field.depends_on(j, i, poses))
            .map(|j| NeighborMessage {
                from: j,
                pose: poses[j],
                gradient: field.grad_phi(j, poses, i).unwrap(),
            })
            .collect()
    }

    #[test]
    fn equilibrium_input_is_gravity() {
        let s = bundled();
        let a = &s.agents[0];
        let pose = Pose::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.2, -0.4, 1.0));
        let eval = control_input(a, &pose, &Twist::zero(), &Vector6::zeros(), &[], STANDARD_GRAVITY, SINGULARITY_EPS)
            .unwrap();
        assert_eq!(eval.u, gravity_vector(a, STANDARD_GRAVITY));
    }

    #[test]
    fn pure_damping() {
        let mut s = bundled();
        s.agents[0].gain = 2.0;
        let tw = Twist::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros());
        let eval = control_input(
            &s.agents[0],
            &Pose::at(Vector3::zeros()),
            &tw,
            &Vector6::zeros(),
            &[],
            STANDARD_GRAVITY,
            SINGULARITY_EPS,
        )
        .unwrap();
        let expected = gravity_vector(&s.agents[0], STANDARD_GRAVITY) + Vector6::new(-2.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(eval.u, expected);
    }

    #[test]
    fn singular_pose_is_rejected() {
        let s = bundled();
        let pose = Pose::new(Vector3::zeros(), Vector3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0));
        let r = control_input(&s.agents[0], &pose, &Twist::zero(), &Vector6::zeros(), &[], 9.81, SINGULARITY_EPS);
        assert!(matches!(r, Err(Error::SingularPose { .. })));
    }

    #[test]
    fn first_agent_input_at_start() {
        let s = bundled();
        let field = PotentialField::new(&s, PotentialParams::default());
        let poses = &s.initial_poses;
        let own = field.grad_phi(0, poses, 0).unwrap();
        let msgs = messages_for(&field, 0, poses);
        // agent 2 (formation neighbor) and agent 4 (in range); agent 3 sits on the boundary
        assert_eq!(msgs.iter().map(|m| m.from).collect::<Vec<_>>(), vec![1, 3]);
        let eval = control_input(&s.agents[0], &poses[0], &Twist::zero(), &own, &msgs, STANDARD_GRAVITY, SINGULARITY_EPS)
            .unwrap();
        let total = own + msgs[0].gradient + msgs[1].gradient;
        let j_inv = jacobian(&poses[0].orientation).inverse.unwrap();
        let expected = gravity_vector(&s.agents[0], STANDARD_GRAVITY) - j_inv.transpose() * total;
        assert!((eval.u - expected).amax() < 1e-12 * expected.amax());
        assert_eq!(eval.u, eval.damping + eval.gravity + eval.gradient);
    }

    #[test]
    fn message_order_is_irrelevant() {
        let s = bundled();
        let field = PotentialField::new(&s, PotentialParams::default());
        let poses = &s.initial_poses;
        let own = field.grad_phi(1, poses, 1).unwrap();
        let msgs = messages_for(&field, 1, poses);
        assert!(msgs.len() >= 3);
        let mut reversed = msgs.clone();
        reversed.reverse();
        let tw = Twist::new(Vector3::new(0.1, 0.2, 0.3), Vector3::new(-0.1, 0.0, 0.4));
        let a = control_input(&s.agents[1], &poses[1], &tw, &own, &msgs, 9.81, SINGULARITY_EPS).unwrap();
        let b = control_input(&s.agents[1], &poses[1], &tw, &own, &reversed, 9.81, SINGULARITY_EPS).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lyapunov_examples() {
        let s = bundled();
        let field = PotentialField::new(&s, PotentialParams::default());
        let l0 = lyapunov(&field, &s.initial_poses, &s.initial_twists).unwrap();
        assert!(l0.total.is_finite() && l0.total > 0.0);
        assert_eq!(l0.total, l0.potential.iter().sum::<f64>());
        assert!(l0.kinetic.iter().all(|&k| k == 0.0));

        let mut s = s;
        s.formation = FormationSpec::default();
        let field = PotentialField::new(&s, PotentialParams::default());
        let l = lyapunov(&field, &s.initial_poses, &s.initial_twists).unwrap();
        assert_eq!(l.total, 0.0);
    }
}
