use nalgebra::DMatrix;
use proptest::prelude::*;

use observerkit_core::numerics::{
    fd_jacobian, filter_f_step, filter_w_step, gradient_step, rk4_step, FilterState,
    GradientEstimatorState, FD_STEP,
};
use observerkit_core::observers::{
    acad3_triple, cuk_kkl_pebo_triple, cuk_kklo_triple, cuk_pebo_triple, DesignTriple,
};
use observerkit_core::plants::{
    acad3_model, cuk_control, cuk_model, ControlSchedule, CukParams, PlantModel,
};
use observerkit_core::RealVec;

fn triples() -> Vec<(PlantModel, DesignTriple)> {
    let p = CukParams::reference();
    vec![
        (cuk_model(p).unwrap(), cuk_kklo_triple(p)),
        (cuk_model(p).unwrap(), cuk_pebo_triple(p)),
        (cuk_model(p).unwrap(), cuk_kkl_pebo_triple(p)),
        (acad3_model(), acad3_triple()),
    ]
}

fn unit_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0..1.0f64, n)
}

fn rk4_error(lambda: f64, dt: f64) -> f64 {
    let x = rk4_step(
        |_, x| Ok(x * lambda),
        &RealVec::from_element(1, 1.0),
        0.0,
        dt,
    )
    .unwrap();
    (x[0] - (lambda * dt).exp()).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fd_jacobian_matches_analytic(s in unit_point(4)) {
        for (plant, d) in triples() {
            let x = RealVec::from_fn(plant.n, |i, _| {
                let (lo, hi) = plant.state_box[i];
                lo + (hi - lo) * s[i]
            });
            let analytic = (d.phi_jacobian.as_ref().expect("analytic Jacobian"))(&x);
            let phi = d.phi.clone();
            let fd = fd_jacobian(|z| Ok(phi(z)), &x, FD_STEP).unwrap();
            let err = (&analytic - &fd).amax();
            prop_assert!(err <= 1e-5, "{}: {err:e} at {x:?}", d.name);
        }
    }

    #[test]
    fn rk4_local_error_is_fifth_order(lambda in -4.0..-0.5f64, dt in 0.05..0.1f64) {
        let ratio = rk4_error(lambda, dt) / rk4_error(lambda, dt / 2.0);
        prop_assert!((12.0..=40.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn w_output_shares_the_f_state(
        alpha in 0.1..50.0f64,
        z0 in -5.0..5.0f64,
        inputs in proptest::collection::vec(-10.0..10.0f64, 1..50),
        dt in 1e-4..1e-2f64,
    ) {
        let mut fs = FilterState::new(alpha, z0).unwrap();
        for u in inputs {
            let (next_f, f) = filter_f_step(fs, u, dt).unwrap();
            let (next_w, w) = filter_w_step(fs, u, dt).unwrap();
            prop_assert_eq!(next_f, next_w);
            prop_assert_eq!(w, alpha * (u - f));
            fs = next_f;
        }
    }

    #[test]
    fn scalar_gradient_error_decays_exponentially(
        gamma in 0.1..5.0f64,
        psi in prop_oneof![-2.0..-0.2f64, 0.2..2.0f64],
        theta in -3.0..3.0f64,
        theta_hat0 in -3.0..3.0f64,
    ) {
        prop_assume!((theta - theta_hat0).abs() > 1e-3);
        let dt = 1e-3;
        let m = DMatrix::from_element(1, 1, psi);
        let y = RealVec::from_element(1, psi * theta);
        let mut ge = GradientEstimatorState::scalar(theta_hat0, gamma).unwrap();
        let e0 = (theta_hat0 - theta).abs();
        for k in 1..=1000 {
            ge = gradient_step(&ge, &m, &y, dt).unwrap();
            let t = k as f64 * dt;
            let expected = e0 * (-gamma * psi * psi * t).exp();
            let actual = (ge.theta_hat[0] - theta).abs();
            prop_assert!((actual - expected).abs() <= 1e-5 * expected, "t = {t}: {actual} vs {expected}");
        }
    }

    #[test]
    fn control_correction_is_bounded(
        s in unit_point(4),
        lambda_c in 0.0..2.0f64,
        vd in -40.0..-2.0f64,
    ) {
        let p = CukParams::reference();
        let plant = cuk_model(p).unwrap();
        let x = RealVec::from_fn(4, |i, _| {
            let (lo, hi) = plant.state_box[i];
            lo + (hi - lo) * s[i]
        });
        let sched = ControlSchedule {
            segments: vec![(0.0, vd)],
            lambda_c,
            u_clamp: (0.01, 0.99),
        };
        let nominal = vd.abs() / (vd.abs() + p.e);
        let u = cuk_control(&x, 0.0, &sched, &p);
        prop_assert!((u - nominal).abs() <= lambda_c / 2.0 + 1e-15);
    }
}
