//! Euler-angle rate Jacobian.
//!
//! `J(q) = blockdiag(I3, Jq(q))` maps `[p_dot; q_dot]` to the twist `[v; w]`.
//! With `R = Rx(phi) Ry(theta) Rz(psi)` the columns of `Jq` are the world-frame
//! rotation axes of the three elementary rotations, so `w = Jq q_dot` is the
//! inertial angular velocity of `R(q)`.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::model::Twist;

/// `|cos theta|` at or below this counts as singular.
pub const SINGULARITY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianEval {
    pub matrix: Matrix6<f64>,
    /// `None` when the pose is singular.
    pub inverse: Option<Matrix6<f64>>,
    /// `det J = cos(theta)`.
    pub det: f64,
}

impl JacobianEval {
    pub fn is_regular(&self) -> bool {
        self.inverse.is_some()
    }
}

pub fn euler_rate_matrix(q: &Vector3<f64>) -> Matrix3<f64> {
    let (sf, cf) = q[0].sin_cos();
    let (st, ct) = q[1].sin_cos();
    Matrix3::new(
        1.0, 0.0, st, //
        0.0, cf, -ct * sf, //
        0.0, sf, cf * ct,
    )
}

/// Closed-form inverse of [`euler_rate_matrix`], `None` if `|cos theta| <= eps`.
pub fn euler_rate_matrix_inverse(q: &Vector3<f64>, eps: f64) -> Option<Matrix3<f64>> {
    let (sf, cf) = q[0].sin_cos();
    let (st, ct) = q[1].sin_cos();
    if ct.abs() <= eps {
        return None;
    }
    let tt = st / ct;
    Some(Matrix3::new(
        1.0,
        sf * tt,
        -cf * tt,
        0.0,
        cf,
        sf,
        0.0,
        -sf / ct,
        cf / ct,
    ))
}

fn block_diag(upper: Matrix3<f64>, lower: Matrix3<f64>) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&upper);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&lower);
    m
}

pub fn jacobian(q: &Vector3<f64>) -> JacobianEval {
    jacobian_with_eps(q, SINGULARITY_EPS)
}

pub fn jacobian_with_eps(q: &Vector3<f64>, eps: f64) -> JacobianEval {
    let jq = euler_rate_matrix(q);
    JacobianEval {
        matrix: block_diag(Matrix3::identity(), jq),
        inverse: euler_rate_matrix_inverse(q, eps).map(|inv| block_diag(Matrix3::identity(), inv)),
        det: q[1].cos(),
    }
}

/// `x_dot = J^{-1}(q) v`. The position rows copy `v.linear` unchanged.
pub fn body_rates_to_state_rates(q: &Vector3<f64>, twist: &Twist) -> Result<Vector6<f64>> {
    body_rates_to_state_rates_with_eps(q, twist, SINGULARITY_EPS)
}

pub fn body_rates_to_state_rates_with_eps(
    q: &Vector3<f64>,
    twist: &Twist,
    eps: f64,
) -> Result<Vector6<f64>> {
    let inv = euler_rate_matrix_inverse(q, eps).ok_or(Error::SingularPose {
        cos_theta: q[1].cos(),
    })?;
    let mut x_dot = Vector6::zeros();
    x_dot.fixed_rows_mut::<3>(0).copy_from(&twist.linear);
    x_dot.fixed_rows_mut::<3>(3).copy_from(&(inv * twist.angular));
    Ok(x_dot)
}

/// Rotation matrix `Rx(phi) Ry(theta) Rz(psi)` consistent with [`euler_rate_matrix`].
pub fn rotation_matrix(q: &Vector3<f64>) -> Matrix3<f64> {
    let (sf, cf) = q[0].sin_cos();
    let (st, ct) = q[1].sin_cos();
    let (sp, cp) = q[2].sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cf, -sf, 0.0, sf, cf);
    let ry = Matrix3::new(ct, 0.0, st, 0.0, 1.0, 0.0, -st, 0.0, ct);
    let rz = Matrix3::new(cp, -sp, 0.0, sp, cp, 0.0, 0.0, 0.0, 1.0);
    rx * ry * rz
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn random_regular(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        Vector3::new(
            rng.gen_range(-PI..PI),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-PI..PI),
        )
    }

    #[test]
    fn identity_at_zero() {
        let j = jacobian(&Vector3::zeros());
        assert_eq!(j.matrix, Matrix6::identity());
        assert_eq!(j.inverse, Some(Matrix6::identity()));
        assert_eq!(j.det, 1.0);
    }

    #[test]
    fn singular_at_quarter_turn_pitch() {
        let j = jacobian(&Vector3::new(0.3, FRAC_PI_2, -0.2));
        assert!(j.det.abs() < 1e-15);
        assert!(!j.is_regular());
        let err = body_rates_to_state_rates(&Vector3::new(0.0, -FRAC_PI_2, 0.0), &Twist::zero());
        assert!(matches!(err, Err(Error::SingularPose { .. })));
    }

    #[test]
    fn det_at_sixty_degrees() {
        let j = jacobian(&Vector3::new(1.1, FRAC_PI_3, -2.0));
        assert!((j.det - 0.5).abs() < 1e-15);
        assert!((j.matrix.determinant() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn state_rates_examples() {
        let tw = Twist::new(Vector3::new(1.0, 2.0, 3.0), Vector3::zeros());
        let x_dot = body_rates_to_state_rates(&Vector3::zeros(), &tw).unwrap();
        assert_eq!(x_dot, Vector6::new(1.0, 2.0, 3.0, 0.0, 0.0, 0.0));
        let q = Vector3::new(0.4, -1.2, 2.5);
        assert_eq!(
            body_rates_to_state_rates(&q, &Twist::zero()).unwrap(),
            Vector6::zeros()
        );
    }

    #[test]
    fn random_jacobian_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = random_regular(&mut rng);
            let j = jacobian(&q);
            assert!((j.matrix.determinant() - q[1].cos()).abs() < 1e-15);
            assert_eq!(j.matrix.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::identity());
            let inv = j.inverse.unwrap();
            assert!((j.matrix * inv - Matrix6::identity()).amax() < 1e-10);

            let v: Vector6<f64> = Vector6::from_fn(|_, _| rng.gen_range(-3.0..3.0));
            let tw = Twist::from_vector(&v);
            let x_dot = body_rates_to_state_rates(&q, &tw).unwrap();
            assert_eq!(x_dot.fixed_rows::<3>(0).into_owned(), tw.linear);
            assert!((j.matrix * x_dot - v).amax() < 1e-12 * (1.0 + inv.amax()));
        }
    }

    #[test]
    fn rate_matrix_is_world_angular_velocity() {
        // w from (R(q + h q_dot) - R(q - h q_dot)) R^T / 2h
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let q = random_regular(&mut rng);
            let q_dot = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let h = 1e-6;
            let r_dot = (rotation_matrix(&(q + q_dot * h)) - rotation_matrix(&(q - q_dot * h))) / (2.0 * h);
            let w_hat = r_dot * rotation_matrix(&q).transpose();
            let w = Vector3::new(w_hat[(2, 1)], w_hat[(0, 2)], w_hat[(1, 0)]);
            assert!((w - euler_rate_matrix(&q) * q_dot).amax() < 1e-8);
        }
    }
}
