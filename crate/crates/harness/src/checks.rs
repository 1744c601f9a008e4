//! Drivers for the verification subcommands.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use observerkit_core::observers::{
    acad3_triple, cuk_iio_generic, cuk_kkl_pebo_triple, cuk_kklo_triple, cuk_observer,
    cuk_pebo_triple, CukGains, CukObserverId, DesignTriple,
};
use observerkit_core::plants::{
    acad3_model, cascade_build, cuk_model, demo_input, CascadeSpec, ControlSchedule, CukFeedback,
    CukParams, InputLaw, PlantModel,
};
use observerkit_core::sim::simulate_plant;
use observerkit_core::verify::{
    equivalence_check, pde_residual, pe_check, EquivalenceReport, JacobianSource, PdeCheckReport,
    PdeMode, PeReport,
};
use observerkit_core::RealVec;

use crate::HarnessError;

/// Bound on the analytic-Jacobian residual.
pub const PDE_TOL: f64 = 1e-9;
/// Bound on the finite-difference residual relative to `1 + |dphi/dx f|`.
pub const PDE_FD_REL_TOL: f64 = 1e-6;
/// Bound on the extension deviation between coinciding observers.
pub const EQUIV_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeCase {
    CukKklo,
    CukPebo,
    CukKklPebo,
    Acad3,
}

impl PdeCase {
    pub const ALL: [PdeCase; 4] = [
        PdeCase::CukKklo,
        PdeCase::CukPebo,
        PdeCase::CukKklPebo,
        PdeCase::Acad3,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PdeCase::CukKklo => "cuk-kklo",
            PdeCase::CukPebo => "cuk-pebo",
            PdeCase::CukKklPebo => "cuk-kklpebo",
            PdeCase::Acad3 => "acad3",
        }
    }

    fn setup(&self) -> Result<(PlantModel, DesignTriple), HarnessError> {
        let p = CukParams::reference();
        Ok(match self {
            PdeCase::CukKklo => (cuk_model(p)?, cuk_kklo_triple(p)),
            PdeCase::CukPebo => (cuk_model(p)?, cuk_pebo_triple(p)),
            PdeCase::CukKklPebo => (cuk_model(p)?, cuk_kkl_pebo_triple(p)),
            PdeCase::Acad3 => (acad3_model(), acad3_triple()),
        })
    }
}

impl fmt::Display for PdeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PdeCase {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PdeCase::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let ids: Vec<_> = PdeCase::ALL.iter().map(|c| c.as_str()).collect();
                HarnessError::Validation(format!(
                    "unknown case '{s}'; valid cases: {}, all",
                    ids.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone)]
pub struct PdeOutcome {
    pub case: PdeCase,
    pub jacobian: JacobianSource,
    pub report: PdeCheckReport,
    pub elapsed: Duration,
    pub passed: bool,
}

/// Design-equation residual of a shipped triple over the plant's verification box.
pub fn run_pde_case(
    case: PdeCase,
    samples: usize,
    mode: PdeMode,
    jacobian: JacobianSource,
) -> Result<PdeOutcome, HarnessError> {
    let (plant, triple) = case.setup()?;
    let start = Instant::now();
    let report = pde_residual(
        &plant,
        &triple,
        samples,
        &plant.state_box,
        &plant.input_range,
        mode,
        jacobian,
    )?;
    let elapsed = start.elapsed();
    let passed = !report.non_finite
        && match jacobian {
            JacobianSource::Analytic => report.max_residual <= PDE_TOL,
            JacobianSource::FiniteDifference => report.max_relative_residual <= PDE_FD_REL_TOL,
        };
    Ok(PdeOutcome {
        case,
        jacobian,
        report,
        elapsed,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivCase {
    /// Combined observer against its I&I instantiation.
    KklPebo,
    /// Pure Luenberger-type observer against `beta = chi`.
    Kklo,
}

impl EquivCase {
    pub const ALL: [EquivCase; 2] = [EquivCase::KklPebo, EquivCase::Kklo];

    pub fn as_str(&self) -> &'static str {
        match self {
            EquivCase::KklPebo => "kkl-pebo",
            EquivCase::Kklo => "kklo",
        }
    }

    fn id(&self) -> CukObserverId {
        match self {
            EquivCase::KklPebo => CukObserverId::KklPebo,
            EquivCase::Kklo => CukObserverId::Kklo,
        }
    }
}

impl fmt::Display for EquivCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EquivCase {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EquivCase::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                HarnessError::Validation(format!(
                    "unknown case '{s}'; valid cases: kkl-pebo, kklo, all"
                ))
            })
    }
}

#[derive(Debug, Clone)]
pub struct EquivOutcome {
    pub case: EquivCase,
    /// Both observers from the default extension.
    pub report: EquivalenceReport,
    /// Both observers started on the invariant set `theta_hat = theta`.
    pub invariant_set: EquivalenceReport,
    pub elapsed: Duration,
    pub passed: bool,
}

/// Converter observer and its I&I instantiation (`Q = 0`) run side by side on
/// one noiseless closed-loop trajectory from the default plant start.
pub fn run_equivalence(
    case: EquivCase,
    horizon: f64,
    dt: f64,
) -> Result<EquivOutcome, HarnessError> {
    let p = CukParams::reference();
    let g = CukGains::default();
    let plant = cuk_model(p)?;
    let input = CukFeedback {
        params: p,
        schedule: ControlSchedule::default(),
    };
    let x0 = RealVec::from_column_slice(&p.default_start());
    let direct = cuk_observer(case.id(), p, &g)?;
    let iio = cuk_iio_generic(case.id(), p, &g)?;
    let start = Instant::now();
    let report = equivalence_check(
        &plant,
        &input,
        &x0,
        direct.as_ref(),
        &iio,
        None,
        horizon,
        dt,
    )?;
    let u0 = input.input(0.0, 0.0, &x0)?;
    let on_set = direct
        .on_manifold_state(&x0, &u0)
        .ok_or_else(|| HarnessError::Validation(format!("{case}: no invariant-set start")))?;
    let invariant_set = equivalence_check(
        &plant,
        &input,
        &x0,
        direct.as_ref(),
        &iio,
        Some(on_set),
        horizon,
        dt,
    )?;
    Ok(EquivOutcome {
        case,
        passed: report.max_chi_deviation <= EQUIV_TOL,
        report,
        invariant_set,
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone)]
pub struct PeOutcome {
    pub report: PeReport,
    pub window: f64,
    pub delta: f64,
    pub samples: usize,
    pub elapsed: Duration,
}

/// Windowed excitation of the cascade demo regressor `b` along an open-loop
/// trajectory under `u = sin t`.
pub fn run_pe_check(
    start_state: &[f64],
    window: f64,
    delta: f64,
    horizon: f64,
    dt: f64,
) -> Result<PeOutcome, HarnessError> {
    if !(dt > 0.0) || !(horizon > window) {
        return Err(HarnessError::Validation(format!(
            "pe-check needs dt > 0 and a horizon longer than the window (got dt = {dt}, horizon = {horizon}, window = {window})"
        )));
    }
    let system = cascade_build(CascadeSpec::demo())?;
    let spec = &system.spec;
    let input = observerkit_core::plants::TimeInput::new(1, demo_input);
    let x0 = RealVec::from_column_slice(start_state);
    if x0.len() != spec.n() {
        return Err(HarnessError::Validation(format!(
            "cascade start must have {} entries",
            spec.n()
        )));
    }
    let start = Instant::now();
    let steps = (horizon / dt).floor() as usize;
    let traj = simulate_plant(&system.model, &input, &x0, dt, steps)?;
    let b: Vec<RealVec> = traj
        .iter()
        .map(|(_, x, u)| {
            let [x1, x2, x3, _] = spec.blocks(x.as_slice());
            (spec.b)(x1, x2, x3, u.as_slice())
        })
        .collect();
    let report = pe_check(&b, dt, window, delta)?;
    Ok(PeOutcome {
        report,
        window,
        delta,
        samples: b.len(),
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_names_parse() {
        for c in PdeCase::ALL {
            assert_eq!(c.as_str().parse::<PdeCase>().unwrap(), c);
        }
        assert!("cuk-hgo".parse::<PdeCase>().is_err());
        assert_eq!("kklo".parse::<EquivCase>().unwrap(), EquivCase::Kklo);
    }

    #[test]
    fn pe_check_of_the_demo_regressor() {
        let out = run_pe_check(&[0.0; 4], 2.0 * std::f64::consts::PI, 1e-3, 15.0, 1e-2).unwrap();
        assert!(out.report.excited);
        // b >= 1 so every window of length 2 pi integrates to at least 2 pi
        assert!(out.report.min_eigenvalue >= 2.0 * std::f64::consts::PI - 1e-6);
    }
}
