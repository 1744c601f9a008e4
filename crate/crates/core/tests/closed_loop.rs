use observerkit_core::observers::{
    cuk_iio_generic, cuk_kkl_pebo_triple, cuk_observer, CukGains, CukKklPeboRegression,
    CukObserverId, KklPebo, Observer,
};
use observerkit_core::plants::{
    acad3_equilibrium, acad3_model, cuk_model, ConstantInput, ControlSchedule, CukFeedback,
    CukParams, InputLaw,
};
use observerkit_core::sim::{simulate, simulate_plant, SimSettings};
use observerkit_core::verify::{equivalence_check, identity_b2};
use observerkit_core::RealVec;

fn feedback(p: CukParams) -> CukFeedback {
    CukFeedback {
        params: p,
        schedule: ControlSchedule::default(),
    }
}

#[test]
fn converter_states_stay_within_ten_times_equilibrium() {
    let p = CukParams::reference();
    let plant = cuk_model(p).unwrap();
    let input = feedback(p);
    let x0 = RealVec::from_column_slice(&p.default_start());
    let traj = simulate_plant(&plant, &input, &x0, 1e-5, 120_000).unwrap();
    // largest equilibrium magnitude per state over the schedule's references
    let mut bound = [0.0f64; 4];
    for &(_, vd) in &input.schedule.segments {
        let eq = p.equilibrium(p.nominal_duty(vd));
        for i in 0..4 {
            bound[i] = bound[i].max(eq[i].abs());
        }
    }
    for (t, x, u) in &traj {
        assert!(u[0] > 0.0 && u[0] < 1.0);
        for i in 0..4 {
            assert!(
                x[i].abs() <= 10.0 * bound[i],
                "state {i} = {} at t = {t}",
                x[i]
            );
        }
    }
}

#[test]
fn academic_system_returns_to_its_equilibrium() {
    let plant = acad3_model();
    let eq = acad3_equilibrium(-1.0).unwrap();
    let input = ConstantInput(RealVec::from_element(1, -1.0));
    for offset in [[0.3, 0.0, 0.0], [-0.2, 0.2, -0.2], [0.1, -0.3, 0.3]] {
        let x0 = RealVec::from_fn(3, |i, _| eq[i] + offset[i]);
        let traj = simulate_plant(&plant, &input, &x0, 1e-3, 30_000).unwrap();
        let (_, x_end, _) = traj.last().unwrap();
        for i in 0..3 {
            assert!(
                (x_end[i] - eq[i]).abs() < 1e-4,
                "{offset:?}: {x_end:?} vs {eq:?}"
            );
        }
    }
}

#[test]
fn estimator_is_stationary_on_the_manifold() {
    let p = CukParams::reference();
    let g = CukGains::default();
    let observer = KklPebo::new(
        cuk_kkl_pebo_triple(p),
        Some(std::sync::Arc::new(CukKklPeboRegression {
            params: p,
            alpha: g.alpha,
            gamma: g.gamma,
            prime: g.prime_filters,
            variant: g.kkl_pebo_y,
        })),
    )
    .unwrap();
    let plant = cuk_model(p).unwrap();
    let input = feedback(p);
    let x0 = RealVec::from_column_slice(&p.default_start());
    let u0 = input.input(0.0, 0.0, &x0).unwrap();
    let chi0 = observer.on_manifold_state(&x0, &u0).unwrap();
    let trace = simulate(
        &plant,
        &input,
        &observer,
        &x0,
        Some(chi0),
        &SimSettings::new(1e-5, 0.3),
    )
    .unwrap()
    .into_result()
    .unwrap();
    let worst = identity_b2(&observer, &trace, 100).unwrap();
    assert!(worst <= 1e-6, "{worst:e}");
}

#[test]
fn equivalence_deviation_does_not_grow_when_dt_halves() {
    let p = CukParams::reference();
    let g = CukGains::default();
    let plant = cuk_model(p).unwrap();
    let input = feedback(p);
    let x0 = RealVec::from_column_slice(&p.default_start());
    let direct = cuk_observer(CukObserverId::Kklo, p, &g).unwrap();
    let iio = cuk_iio_generic(CukObserverId::Kklo, p, &g).unwrap();
    let dev = |dt: f64| {
        equivalence_check(&plant, &input, &x0, direct.as_ref(), &iio, None, 0.05, dt)
            .unwrap()
            .max_chi_deviation
    };
    let (coarse, fine) = (dev(2e-5), dev(1e-5));
    assert!(fine <= coarse + 1e-12, "{fine:e} > {coarse:e}");
}
