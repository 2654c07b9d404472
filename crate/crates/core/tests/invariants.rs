use nalgebra::{Vector3, Vector6};
use proptest::prelude::*;

use swarmsim::control::lyapunov;
use swarmsim::dynamics::{coriolis_matrix, forward_dynamics, inertia_matrix, kinetic_energy};
use swarmsim::kinematics::{euler_rate_matrix, euler_rate_matrix_inverse, rotation_matrix};
use swarmsim::model::{AgentSpec, Pose, Twist};
use swarmsim::potential::{compose, compose_ratio, PotentialField, PotentialParams};
use swarmsim::{scenario_file, BUNDLED_FORMATION_SCENARIO};

fn angles() -> impl Strategy<Value = Vector3<f64>> {
    (-3.0..3.0f64, -1.4..1.4f64, -3.0..3.0f64).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn agent() -> AgentSpec {
    let mut a = AgentSpec::solid_sphere(1, 0.3, 5.0, 1.5, 4.0);
    a.body_inertia = Vector3::new(0.02, 0.05, 0.09);
    a
}

proptest! {
    #[test]
    fn rotation_is_orthonormal(q in angles()) {
        let r = rotation_matrix(&q);
        prop_assert!((r * r.transpose() - nalgebra::Matrix3::identity()).amax() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_matrix_inverse_is_an_inverse(q in angles()) {
        let inv = euler_rate_matrix_inverse(&q, 1e-6).expect("pitch away from a quarter turn");
        prop_assert!((euler_rate_matrix(&q) * inv - nalgebra::Matrix3::identity()).amax() < 1e-9);
    }

    #[test]
    fn inertia_is_symmetric_positive_definite(q in angles()) {
        let m = inertia_matrix(&agent(), &Pose::new(Vector3::zeros(), q));
        prop_assert_eq!(m, m.transpose());
        prop_assert!(m.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn coriolis_does_no_work(q in angles(), v in vec3(5.0), w in vec3(5.0)) {
        let twist = Twist::new(v, w);
        let c = coriolis_matrix(&agent(), &Pose::new(Vector3::zeros(), q), &twist);
        let x = twist.to_vector();
        prop_assert!(x.dot(&(c * x)).abs() < 1e-9 * (1.0 + x.norm_squared()));
    }

    #[test]
    fn dynamics_satisfy_the_equation_of_motion(q in angles(), w in vec3(3.0), u in vec3(10.0)) {
        let a = agent();
        let pose = Pose::new(Vector3::zeros(), q);
        let twist = Twist::new(Vector3::zeros(), w);
        let input = Vector6::new(u.x, u.y, u.z, u.z, u.x, u.y);
        let acc = forward_dynamics(&a, &pose, &twist, &input, 9.81).unwrap();
        let lhs = inertia_matrix(&a, &pose) * acc + coriolis_matrix(&a, &pose, &twist) * twist.to_vector()
            + Vector6::new(0.0, 0.0, a.mass * 9.81, 0.0, 0.0, 0.0);
        prop_assert!((lhs - input).amax() < 1e-9);
    }

    #[test]
    fn kinetic_energy_is_nonnegative(q in angles(), v in vec3(5.0), w in vec3(5.0)) {
        prop_assert!(kinetic_energy(&agent(), &Pose::new(Vector3::zeros(), q), &Twist::new(v, w)) >= 0.0);
    }

    #[test]
    fn compositions_grow_with_gamma(g in 0.0..50.0f64, dg in 1e-3..5.0f64, b in 1e-6..1.0f64) {
        prop_assert!(compose_ratio(g + dg, b, 4.0).value > compose_ratio(g, b, 4.0).value);
        let lo = compose(g, b, 2.0);
        let hi = compose(g + dg, b, 2.0);
        prop_assert!(lo.value >= 0.0 && hi.value >= lo.value);
        prop_assert!((0.0..1.0).contains(&lo.nu));
    }

    #[test]
    fn compositions_fall_as_beta_grows(g in 1e-3..50.0f64, b in 1e-6..0.5f64) {
        prop_assert!(compose_ratio(g, b * 2.0, 4.0).value < compose_ratio(g, b, 4.0).value);
        prop_assert!(compose(g, b * 2.0, 2.0).value < compose(g, b, 2.0).value);
    }

    #[test]
    fn lyapunov_is_potential_plus_kinetic(shift in vec3(0.2), v in vec3(1.0)) {
        let s = scenario_file::parse_str(BUNDLED_FORMATION_SCENARIO).unwrap();
        let field = PotentialField::new(&s, PotentialParams::default());
        let mut poses = s.initial_poses.clone();
        poses[0].position += shift;
        let mut twists = vec![Twist::zero(); 4];
        twists[2] = Twist::new(v, v * 0.5);
        let l = lyapunov(&field, &poses, &twists).unwrap();
        let still = lyapunov(&field, &poses, &[Twist::zero(); 4]).unwrap();
        let ke = kinetic_energy(&s.agents[2], &poses[2], &twists[2]);
        prop_assert!((l.total - still.total - ke).abs() < 1e-9 * (1.0 + l.total.abs()));
        prop_assert!(still.total >= 0.0);
    }
}
