use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::*;
use crate::plants::InputLaw;
use crate::plants::{
    cascade_build, cuk_model, demo_input, ConstantInput, ControlSchedule, CukFeedback, CukParams,
    TimeInput,
};
use crate::sim::{simulate, SimSettings, SimTrace};
use crate::verify::equivalence_check;

fn v(xs: &[f64]) -> RealVec {
    RealVec::from_column_slice(xs)
}

fn identity_triple(lambda: f64) -> DesignTriple {
    DesignTriple {
        name: "id".into(),
        n_x: 2,
        n_xi: 2,
        q: 2,
        phi: Arc::new(|x| x.clone()),
        phi_jacobian: None,
        lambda_l: Arc::new(move |_| RealVec::from_element(2, lambda)),
        b_map: Arc::new(|_, _| RealVec::zeros(2)),
        phi_left: Arc::new(|xi, _| xi.clone()),
        rotation: None,
        measured: vec![0],
    }
}

fn feedback() -> CukFeedback {
    CukFeedback {
        params: CukParams::reference(),
        schedule: ControlSchedule::default(),
    }
}

fn cuk_run(obs: &dyn Observer, chi0: Option<RealVec>, horizon: f64) -> SimTrace {
    let p = CukParams::reference();
    let plant = cuk_model(p).unwrap();
    let x0 = v(&p.default_start());
    simulate(
        &plant,
        &feedback(),
        obs,
        &x0,
        chi0,
        &SimSettings::new(1e-5, horizon),
    )
    .unwrap()
    .into_result()
    .unwrap()
}

fn on_manifold(obs: &dyn Observer) -> RealVec {
    let p = CukParams::reference();
    let x0 = v(&p.default_start());
    let u0 = feedback().input(0.0, 0.0, &x0).unwrap();
    obs.on_manifold_state(&x0, &u0).unwrap()
}

#[test]
fn kklo_with_zero_forcing_decays_exponentially() {
    let obs: Arc<dyn Observer> = Arc::new(Kklo::new(identity_triple(-1.0)).unwrap());
    let mut inst = ObserverInstance::with_state(obs, v(&[1.0, -2.0])).unwrap();
    let (y, u) = (v(&[0.0]), v(&[0.0]));
    for k in 0..1000 {
        inst.step(&y, &u, k as f64 * 1e-3, 1e-3).unwrap();
    }
    let decay = (-1.0f64).exp();
    assert!((inst.chi[0] - decay).abs() < 1e-6);
    assert!((inst.chi[1] + 2.0 * decay).abs() < 1e-6);
}

#[test]
fn structural_checks() {
    let mut t = identity_triple(-1.0);
    t.rotation = Some(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]));
    assert!(t.validate().is_err());
    let mut t = identity_triple(-1.0);
    t.q = 1;
    assert!(Kklo::new(t.clone()).is_err());
    assert!(KklPebo::new(t, None).is_err());
    let states = [v(&[0.3, -0.4])];
    let inputs = [v(&[0.0])];
    assert!(identity_triple(-1.0)
        .check_structure(&states, &inputs)
        .is_ok());
    assert!(identity_triple(0.5)
        .check_structure(&states, &inputs)
        .is_err());
}

#[test]
fn combined_observer_degenerates_bitwise_to_kklo() {
    let p = CukParams::reference();
    let a = Kklo::new(cuk_kklo_triple(p)).unwrap();
    let b = KklPebo::new(cuk_kklo_triple(p), None).unwrap();
    let ta = cuk_run(&a, None, 0.02);
    let tb = cuk_run(&b, None, 0.02);
    for (ra, rb) in ta.rows.iter().zip(tb.rows.iter()) {
        assert_eq!(ra.chi, rb.chi);
        assert_eq!(ra.x_hat, rb.x_hat);
    }
}

#[test]
fn combined_observer_degenerates_bitwise_to_pebo() {
    let p = CukParams::reference();
    let reg: Arc<dyn Regression> = Arc::new(CukPeboRegression {
        params: p,
        alpha: 0.5,
        gain: [0.001, 100.0],
        prime: true,
    });
    let a = Pebo::new(cuk_pebo_triple(p), reg.clone()).unwrap();
    let b = KklPebo::new(cuk_pebo_triple(p), Some(reg)).unwrap();
    let ta = cuk_run(&a, None, 0.02);
    let tb = cuk_run(&b, None, 0.02);
    assert_eq!(ta.rows.len(), tb.rows.len());
    for (ra, rb) in ta.rows.iter().zip(tb.rows.iter()) {
        assert_eq!(ra.chi, rb.chi);
        assert_eq!(ra.x_hat, rb.x_hat);
        assert_eq!(ra.theta_hat, rb.theta_hat);
    }
}

#[test]
fn estimation_observers_are_exact_on_the_manifold() {
    let p = CukParams::reference();
    let g = CukGains::default();
    for id in [CukObserverId::Pebo, CukObserverId::KklPebo] {
        let obs = cuk_observer(id, p, &g).unwrap();
        let trace = cuk_run(obs.as_ref(), Some(on_manifold(obs.as_ref())), 0.1);
        let err = trace
            .rows
            .iter()
            .map(|r| r.x_err.amax())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{id}: {err:e}");
    }
}

#[test]
fn regression_residual_vanishes_with_the_true_parameter() {
    let p = CukParams::reference();
    let obs = cuk_observer(CukObserverId::Pebo, p, &CukGains::default()).unwrap();
    let trace = cuk_run(obs.as_ref(), Some(on_manifold(obs.as_ref())), 0.05);
    let last = trace.rows.last().unwrap();
    let theta = last.theta_hat.clone().unwrap();
    let drift = last.theta_err.clone().unwrap().amax();
    assert!(
        drift < 1e-6,
        "theta drift {drift:e} at {:?}",
        theta.as_slice()
    );
}

#[test]
fn hgo_tv_is_stationary_at_an_equilibrium() {
    let p = CukParams::reference();
    let obs = cuk_observer(CukObserverId::HgoTv, p, &CukGains::default()).unwrap();
    let x = v(&p.equilibrium(0.5));
    let u = v(&[0.5]);
    let chi = obs.on_manifold_state(&x, &u).unwrap();
    let rate = obs.derivative(&chi, &v(&[x[2], x[3]]), &u).unwrap();
    assert!(rate.amax() < 1e-8, "{:?}", rate.as_slice());
}

#[test]
fn hgo_lin_inverts_the_output_rates() {
    let p = CukParams::reference();
    let obs = cuk_observer(CukObserverId::HgoLin, p, &CukGains::default()).unwrap();
    for (x, u) in [
        ([0.4, -11.0, 23.0, -0.5], 0.3),
        ([-1.0, 5.0, 30.0, 0.2], 0.8),
    ] {
        let (x, u) = (v(&x), v(&[u]));
        let chi = obs.on_manifold_state(&x, &u).unwrap();
        let est = obs.estimate(&chi, &v(&[x[2], x[3]]), &u).unwrap();
        assert!((&est - &x).amax() < 1e-10 * x.amax());
    }
    let err = obs
        .estimate(&RealVec::zeros(4), &v(&[1.0, 1.0]), &v(&[1.0 - 1e-4]))
        .unwrap_err();
    assert!(matches!(err, Error::DivisionGuard(_)));
}

#[test]
fn iio_with_identity_beta_reproduces_kklo() {
    let p = CukParams::reference();
    let g = CukGains::default();
    let plant = cuk_model(p).unwrap();
    let kklo = cuk_observer(CukObserverId::Kklo, p, &g).unwrap();
    let iio = cuk_iio_generic(CukObserverId::Kklo, p, &g).unwrap();
    let x0 = v(&p.default_start());
    let r = equivalence_check(
        &plant,
        &feedback(),
        &x0,
        kklo.as_ref(),
        &iio,
        None,
        0.02,
        1e-5,
    )
    .unwrap();
    assert!(r.max_chi_deviation <= 1e-8, "{:e}", r.max_chi_deviation);
}

#[test]
fn iio_rejects_a_rank_deficient_manifold() {
    let p = CukParams::reference();
    let mut iio = cuk_iio_generic(CukObserverId::Kklo, p, &CukGains::default()).unwrap();
    iio.maps.beta = Arc::new(|_, chi| v(&[chi[0], chi[0]]));
    iio.maps.beta_chi_jacobian = None;
    let err = iio
        .derivative(&v(&[1.0, 2.0]), &v(&[24.0, -0.5]), &v(&[0.5]))
        .unwrap_err();
    assert!(matches!(
        err,
        Error::SingularManifold {
            rank: 1,
            required: 2,
            ..
        }
    ));
}

#[test]
fn iio_ids_without_instantiation_are_rejected() {
    let p = CukParams::reference();
    assert!(cuk_iio_generic(CukObserverId::HgoTv, p, &CukGains::default()).is_err());
}

#[test]
fn observer_ids_round_trip() {
    for id in CukObserverId::ALL {
        assert_eq!(CukObserverId::parse(id.as_str()), Some(id));
    }
    assert_eq!(CukObserverId::parse("kalman"), None);
    assert!(CukObserverId::valid_ids().contains("hgo-lin"));
}

#[test]
fn acad3_left_inverse_and_gains() {
    let t = acad3_triple();
    let states: Vec<RealVec> = (0..5)
        .map(|i| v(&[0.1 * i as f64, -0.3, 1.0 + i as f64]))
        .collect();
    let inputs = [v(&[-1.0]), v(&[2.0])];
    t.check_structure(&states, &inputs).unwrap();
    let bad = Acad3Gains {
        psi0: 0.0,
        ..Acad3Gains::default()
    };
    assert!(acad3_observer(bad).is_err());
}

fn cascade_trace(chi0: Option<RealVec>, horizon: f64) -> (SimTrace, Arc<dyn Observer>) {
    let sys = cascade_build(crate::plants::CascadeSpec::demo()).unwrap();
    let obs = cascade_observer(&sys, &CascadeGains::default()).unwrap();
    let x0 = v(&[0.5, 1.0, -1.0, 2.0]);
    let input = TimeInput::new(1, demo_input);
    let trace = simulate(
        &sys.model,
        &input,
        obs.as_ref(),
        &x0,
        chi0,
        &SimSettings::new(1e-3, horizon),
    )
    .unwrap()
    .into_result()
    .unwrap();
    (trace, obs)
}

#[test]
fn cascade_x2_error_stays_in_its_envelope_and_theta_converges() {
    let (trace, _) = cascade_trace(None, 20.0);
    let e0 = trace.rows[0].x_err[1].abs();
    for r in &trace.rows {
        assert!(r.x_err[1].abs() <= e0 * (-r.t).exp() * (1.0 + 1e-6) + 1e-12);
    }
    let th0 = trace.rows[0].theta_err.as_ref().unwrap()[0].abs();
    let th1 = trace.rows.last().unwrap().theta_err.as_ref().unwrap()[0].abs();
    assert!(th1 < 0.01 * th0, "{th1:e} vs {th0:e}");
}

#[test]
fn cascade_tracks_exactly_from_the_truth() {
    let x0 = v(&[0.5, 1.0, -1.0, 2.0]);
    let sys = cascade_build(crate::plants::CascadeSpec::demo()).unwrap();
    let obs = cascade_observer(&sys, &CascadeGains::default()).unwrap();
    let chi0 = obs.on_manifold_state(&x0, &v(&[0.0])).unwrap();
    let (trace, _) = cascade_trace(Some(chi0), 5.0);
    let err = trace
        .rows
        .iter()
        .map(|r| r.x_err.amax())
        .fold(0.0, f64::max);
    assert!(err < 1e-9, "{err:e}");
}

#[test]
fn instance_rejects_wrong_extension_size() {
    let obs: Arc<dyn Observer> = Arc::new(Kklo::new(identity_triple(-1.0)).unwrap());
    assert!(ObserverInstance::with_state(obs.clone(), v(&[1.0])).is_err());
    let inst = ObserverInstance::new(obs, &v(&[0.0]), &v(&[0.0]));
    assert_eq!(inst.chi, RealVec::zeros(2));
    let _ = ConstantInput(v(&[0.0]));
}
