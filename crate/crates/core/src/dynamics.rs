//! Rigid-body plant `M(x) v_dot + C(x, v) v + g = u` used by the simulator.
//!
//! Linear part is a point mass. Rotational part is Euler's equation written
//! in the inertial frame: `I_w = R diag(I_body) R^T` and `C v = [0; w x I_w w]`,
//! which makes `M_dot - 2C` skew-symmetric.

use nalgebra::{Matrix3, Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::kinematics::{rotation_matrix, skew};
use crate::model::{AgentSpec, Pose, Twist};

/// Standard gravity, m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.81;

pub fn world_inertia(agent: &AgentSpec, pose: &Pose) -> Matrix3<f64> {
    let r = rotation_matrix(&pose.orientation);
    let world = r * Matrix3::from_diagonal(&agent.body_inertia) * r.transpose();
    // exact symmetry; the product above is only symmetric to rounding
    (world + world.transpose()) * 0.5
}

pub fn inertia_matrix(agent: &AgentSpec, pose: &Pose) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * agent.mass));
    m.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&world_inertia(agent, pose));
    m
}

pub fn coriolis_matrix(agent: &AgentSpec, pose: &Pose, twist: &Twist) -> Matrix6<f64> {
    let mut c = Matrix6::zeros();
    c.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(skew(&twist.angular) * world_inertia(agent, pose)));
    c
}

/// `(0, 0, m g0, 0, 0, 0)`; pass `g0 = 0` to switch gravity off.
pub fn gravity_vector(agent: &AgentSpec, g0: f64) -> Vector6<f64> {
    Vector6::new(0.0, 0.0, agent.mass * g0, 0.0, 0.0, 0.0)
}

/// `v_dot = M^{-1}(u - C v - g)` via Cholesky.
pub fn forward_dynamics(
    agent: &AgentSpec,
    pose: &Pose,
    twist: &Twist,
    u: &Vector6<f64>,
    g0: f64,
) -> Result<Vector6<f64>> {
    let m = inertia_matrix(agent, pose);
    let c = coriolis_matrix(agent, pose, twist);
    let rhs = u - c * twist.to_vector() - gravity_vector(agent, g0);
    let chol = m
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { agent: agent.id })?;
    Ok(chol.solve(&rhs))
}

pub fn kinetic_energy(agent: &AgentSpec, pose: &Pose, twist: &Twist) -> f64 {
    let v = twist.to_vector();
    0.5 * v.dot(&(inertia_matrix(agent, pose) * v))
}
