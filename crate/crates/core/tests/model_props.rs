mod common;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use softcbf::pcc_model::{
    augmented_tip, control_affine, control_affine_terms, dynamics_matrices, fk_tip,
    tip_jacobian, tip_jacobian_dot, total_energy, RobotParams, RobotState,
};
use softcbf::sim_engine::{step, Integrator};

use common::{central_jacobian, rel_err};

fn tip_vec(p: &RobotParams, q: &DVector<f64>) -> DVector<f64> {
    let r = fk_tip(p, q);
    DVector::from_vec(vec![r.x, r.y])
}

fn passive(n: usize, damping: f64) -> RobotParams {
    RobotParams::new(
        vec![0.122; n],
        vec![0.13; n],
        vec![0.2; n],
        vec![damping; n],
        vec![1.09e-3; n],
    )
    .unwrap()
}

fn angles(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![-1.2..1.2f64, -1e-3..1e-3f64], n)
}

#[test]
fn reference_robot_bends_about_25_degrees_at_80_hpa() {
    // Static balance K q = Lambda u for the shipped parameters.
    let p = RobotParams::reference(2);
    let q = p.input_gain()[0] * 80.0 / p.stiffness()[0];
    assert_abs_diff_eq!(q.to_degrees(), 25.0, epsilon = 0.1);
}

#[test]
fn straight_robot_lies_along_x() {
    let p = RobotParams::reference(3);
    let r = fk_tip(&p, &DVector::zeros(3));
    assert_abs_diff_eq!(r.x, 3.0 * 0.122, epsilon = 1e-15);
    assert_abs_diff_eq!(r.y, 0.0, epsilon = 1e-15);
}

#[test]
fn single_arc_matches_circle_geometry() {
    // An arc of length L and angle q starting along +x has its centre at
    // (0, L/q) and ends at distance |L/q| from it.
    let p = RobotParams::reference(1);
    for q in [0.3, -0.8, 1.5] {
        let r = fk_tip(&p, &DVector::from_vec(vec![q]));
        let rad = 0.122 / q;
        let centre = nalgebra::Vector2::new(0.0, rad);
        assert_abs_diff_eq!((r - centre).norm(), rad.abs(), epsilon = 1e-14);
    }
}

#[test]
fn unforced_damped_motion_loses_energy() {
    let p = passive(2, 0.003);
    let mut s = RobotState::from_slices(&[0.4, -0.3], &[0.5, 0.2]);
    let u = DVector::zeros(2);
    let mut e = total_energy(&p, &s).unwrap();
    for _ in 0..2000 {
        s = step(&p, &s, &u, 1e-4, Integrator::Rk4).unwrap();
        let e2 = total_energy(&p, &s).unwrap();
        assert!(e2 <= e + 1e-12, "{e2} > {e}");
        e = e2;
    }
}

#[test]
fn euler_converges_at_first_order_and_agrees_with_rk4() {
    let p = passive(2, 0.003);
    let s0 = RobotState::from_slices(&[0.3, 0.1], &[0.0, 0.0]);
    let u = DVector::from_vec(vec![40.0, -20.0]);
    let horizon = 0.02;
    let roll = |dt: f64, integ| {
        let mut s = s0.clone();
        for _ in 0..(horizon / dt).round() as usize {
            s = step(&p, &s, &u, dt, integ).unwrap();
        }
        s.to_vector()
    };
    let reference = roll(1e-6, Integrator::Rk4);
    let e1 = (roll(2e-5, Integrator::Euler) - &reference).amax();
    let e2 = (roll(1e-5, Integrator::Euler) - &reference).amax();
    let ratio = e1 / e2;
    assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
    assert!(e2 < 1e-2 * reference.amax(), "Euler error {e2}");
}

#[test]
fn stepping_is_deterministic() {
    let p = passive(3, 0.003);
    let run = || {
        let mut s = RobotState::from_slices(&[0.2, -0.1, 0.4], &[0.1, 0.0, -0.3]);
        let u = DVector::from_vec(vec![10.0, 20.0, -30.0]);
        for _ in 0..500 {
            s = step(&p, &s, &u, 1e-4, Integrator::Rk4).unwrap();
        }
        s
    };
    let (a, b) = (run(), run());
    assert!(a.q.iter().zip(b.q.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(a.qd.iter().zip(b.qd.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn jacobian_matches_central_difference(q in (1usize..=4).prop_flat_map(angles)) {
        let n = q.len();
        let p = passive(n, 0.003);
        let q = DVector::from_vec(q);
        let fd = central_jacobian(|x| tip_vec(&p, x), &q, 1e-6);
        let jac = DMatrix::from_iterator(2, n, tip_jacobian(&p, &q).iter().copied());
        prop_assert!(rel_err(&jac, &fd) < 1e-8, "{}", rel_err(&jac, &fd));
    }

    #[test]
    fn jacobian_rate_matches_directional_difference(
        (q, qd) in (1usize..=3).prop_flat_map(|n| (angles(n), prop::collection::vec(-2.0..2.0f64, n))),
    ) {
        let n = q.len();
        let p = passive(n, 0.003);
        let (q, qd) = (DVector::from_vec(q), DVector::from_vec(qd));
        let h = 1e-6;
        let jp = tip_jacobian(&p, &(&q + &qd * h));
        let jm = tip_jacobian(&p, &(&q - &qd * h));
        let fd = DMatrix::from_iterator(2, n, ((jp - jm) / (2.0 * h)).iter().copied());
        let jd = DMatrix::from_iterator(2, n, tip_jacobian_dot(&p, &q, &qd).iter().copied());
        prop_assert!((&jd - &fd).amax() <= 1e-6 * (1.0 + fd.amax()));
    }

    #[test]
    fn augmented_chain_reproduces_tip(q in (1usize..=4).prop_flat_map(angles)) {
        let p = passive(q.len(), 0.003);
        let q = DVector::from_vec(q);
        let d = (augmented_tip(&p, &q) - fk_tip(&p, &q)).amax();
        prop_assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(q in (1usize..=4).prop_flat_map(angles)) {
        let n = q.len();
        let p = passive(n, 0.003);
        let s = RobotState::new(DVector::from_vec(q), DVector::zeros(n));
        let (m, _) = dynamics_matrices(&p, &s).unwrap();
        prop_assert!((&m - m.transpose()).amax() <= 1e-14 * m.amax());
        prop_assert!(m.clone().cholesky().is_some());
        prop_assert!(m.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn coriolis_does_no_work(
        (q, qd) in (1usize..=3).prop_flat_map(|n| (angles(n), prop::collection::vec(-2.0..2.0f64, n))),
    ) {
        // qd^T (M_dot - 2 C) qd = 0, with M_dot from a difference along qd.
        let n = q.len();
        let p = passive(n, 0.003);
        let (q, qd) = (DVector::from_vec(q), DVector::from_vec(qd));
        let h = 1e-6;
        let mass_at = |x: &DVector<f64>| {
            dynamics_matrices(&p, &RobotState::new(x.clone(), DVector::zeros(n))).unwrap().0
        };
        let m_dot = (mass_at(&(&q + &qd * h)) - mass_at(&(&q - &qd * h))) / (2.0 * h);
        let (_, c) = dynamics_matrices(&p, &RobotState::new(q, qd.clone())).unwrap();
        let power = qd.dot(&((m_dot - c * 2.0) * &qd));
        prop_assert!(power.abs() <= 1e-6 * (1.0 + qd.norm_squared()), "{power}");
    }

    #[test]
    fn control_affine_split_is_consistent(
        (q, qd, u) in (1usize..=3).prop_flat_map(|n| (
            angles(n),
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-150.0..150.0f64, n),
        )),
    ) {
        let n = q.len();
        let p = passive(n, 0.003);
        let s = RobotState::new(DVector::from_vec(q), DVector::from_vec(qd));
        let u = DVector::from_vec(u);
        let terms = control_affine_terms(&p, &s).unwrap();
        let xdot = control_affine(&p, &s, &u).unwrap();
        let split = terms.drift(&s) + terms.input_map() * &u;
        prop_assert!((&xdot - &split).amax() <= 1e-10 * (1.0 + xdot.amax()));
        // M qdd + C qd + D qd + K q = Lambda u.
        let qdd = xdot.rows(n, n).into_owned();
        let lhs = &terms.mass * &qdd + &terms.coriolis * &s.qd
            + p.damping().component_mul(&s.qd)
            + p.stiffness().component_mul(&s.q);
        let rhs = p.input_gain().component_mul(&u);
        prop_assert!((&lhs - &rhs).amax() <= 1e-10 * (1.0 + rhs.amax()));
    }
}
