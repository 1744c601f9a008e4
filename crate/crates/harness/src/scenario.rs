//! Building and running scenarios.

use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

use observerkit_core::numerics::NoiseSpec;
use observerkit_core::observers::{
    acad3_observer, cascade_observer, cuk_observer, Acad3Gains, CascadeGains, CukObserverId,
    Observer,
};
use observerkit_core::plants::{
    acad3_equilibrium, acad3_model, cascade_build, demo_input, CascadeSpec, ConstantInput,
    ControlSchedule, CukFeedback, CukParams, InputLaw, PlantModel, TimeInput,
};
use observerkit_core::sim::{simulate, SimSettings, SimTrace};
use observerkit_core::RealVec;

use crate::config::{Diagnostics, PlantId, ScenarioConfig};
use crate::metrics::{observer_metrics, MetricsReport, ObserverMetrics};
use crate::HarnessError;

/// Magnitude against which the 5% convergence band is measured.
#[derive(Debug, Clone)]
pub enum ReferenceMagnitude {
    /// Steady state of the active reference segment.
    Schedule {
        schedule: ControlSchedule,
        params: CukParams,
    },
    /// Fixed per-state magnitudes.
    Constant(Vec<f64>),
    /// Peak `|x_i|` over the trace.
    TracePeak,
}

impl ReferenceMagnitude {
    pub fn at(&self, t: f64, trace: &SimTrace) -> Vec<f64> {
        match self {
            ReferenceMagnitude::Schedule { schedule, params } => schedule
                .reference_state(t, params)
                .iter()
                .map(|v| v.abs())
                .collect(),
            ReferenceMagnitude::Constant(v) => v.clone(),
            ReferenceMagnitude::TracePeak => {
                let n = trace.state_labels.len();
                (0..n)
                    .map(|i| trace.rows.iter().map(|r| r.x[i].abs()).fold(0.0, f64::max))
                    .collect()
            }
        }
    }
}

/// A validated scenario ready to run.
#[derive(Clone)]
pub struct Scenario {
    pub plant_id: PlantId,
    pub plant: PlantModel,
    pub input: Arc<dyn InputLaw>,
    pub x0: RealVec,
    pub observers: Vec<(String, Arc<dyn Observer>)>,
    pub settings: SimSettings,
    pub reference: ReferenceMagnitude,
    pub diagnostics: Diagnostics,
    pub output: PathBuf,
}

type Parts = (
    PlantModel,
    Arc<dyn InputLaw>,
    RealVec,
    Vec<(String, Arc<dyn Observer>)>,
    ReferenceMagnitude,
);

pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario, HarnessError> {
    cfg.validate()?;
    let ids = cfg.observer_ids()?;
    let noise = match cfg.noise_amplitude()? {
        Some(a) => Some(NoiseSpec::new(
            RealVec::from_vec(a),
            cfg.noise.sample_period,
            cfg.seed,
        )?),
        None => None,
    };
    let settings = SimSettings::new(cfg.dt(), cfg.horizon())
        .with_decimation(cfg.decimation())
        .with_noise(noise);

    let (plant, input, x0, observers, reference): Parts = match cfg.plant {
        PlantId::Cuk => {
            let p = cfg.cuk.params();
            let schedule = cfg.control.schedule();
            schedule.validate()?;
            let gains = cfg.gains.gains();
            let mut obs = Vec::with_capacity(ids.len());
            for id in &ids {
                let parsed = CukObserverId::parse(id).expect("ids validated against the registry");
                obs.push((id.clone(), cuk_observer(parsed, p, &gains)?));
            }
            (
                observerkit_core::plants::cuk_model(p)?,
                Arc::new(CukFeedback {
                    params: p,
                    schedule: schedule.clone(),
                }),
                RealVec::from_column_slice(&cfg.cuk.start()),
                obs,
                ReferenceMagnitude::Schedule {
                    schedule,
                    params: p,
                },
            )
        }
        PlantId::Acad3 => {
            let a = &cfg.acad3;
            let obs = acad3_observer(Acad3Gains {
                alpha: a.alpha,
                gamma: a.gamma,
                psi0: a.psi0,
                prime_filters: a.prime_filters,
            })?;
            let eq = acad3_equilibrium(a.u)?;
            (
                acad3_model(),
                Arc::new(ConstantInput(RealVec::from_element(1, a.u))),
                RealVec::from_column_slice(&a.start()?),
                vec![(ids[0].clone(), obs)],
                ReferenceMagnitude::Constant(eq.iter().map(|v| v.abs()).collect()),
            )
        }
        PlantId::Cascade => {
            let c = &cfg.cascade;
            let system = cascade_build(CascadeSpec::demo())?;
            let obs = cascade_observer(
                &system,
                &CascadeGains {
                    alpha: c.alpha,
                    gamma: RealVec::from_element(1, c.gamma),
                    prime_filters: c.prime_filters,
                },
            )?;
            (
                system.model.clone(),
                Arc::new(TimeInput::new(1, demo_input)),
                RealVec::from_column_slice(&c.start),
                vec![(ids[0].clone(), obs)],
                ReferenceMagnitude::TracePeak,
            )
        }
    };
    settings.validate(plant.p())?;
    Ok(Scenario {
        plant_id: cfg.plant,
        plant,
        input,
        x0,
        observers,
        settings,
        reference,
        diagnostics: cfg.diagnostics,
        output: cfg.output_dir(),
    })
}

/// Trace and metrics of one observer. A numerical failure ends the trace early.
#[derive(Debug, Clone)]
pub struct ObserverRun {
    pub id: String,
    pub trace: SimTrace,
    pub failure: Option<observerkit_core::Error>,
    pub metrics: ObserverMetrics,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub plant: PlantId,
    pub runs: Vec<ObserverRun>,
    pub report: MetricsReport,
}

impl ScenarioResult {
    pub fn run(&self, id: &str) -> Option<&ObserverRun> {
        self.runs.iter().find(|r| r.id == id)
    }

    /// The first numerical failure, naming the observer and the last recorded time.
    pub fn failure(&self) -> Option<HarnessError> {
        self.runs.iter().find_map(|r| {
            r.failure.as_ref().map(|e| {
                let t = r.trace.rows.last().map_or(0.0, |row| row.t);
                HarnessError::Numerical(format!("observer {} failed after t = {t}: {e}", r.id))
            })
        })
    }
}

/// Runs every observer of the scenario on its own thread. The plant block of
/// each joint integration is independent of the observer, so all observers see
/// the same plant trajectory and the same noise.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioResult, HarnessError> {
    let horizon = s.settings.horizon;
    let outcomes: Vec<Result<ObserverRun, HarnessError>> = thread::scope(|scope| {
        let handles: Vec<_> = s
            .observers
            .iter()
            .map(|(id, obs)| {
                scope.spawn(move || {
                    let out = simulate(
                        &s.plant,
                        s.input.as_ref(),
                        obs.as_ref(),
                        &s.x0,
                        None,
                        &s.settings,
                    )?;
                    let metrics = observer_metrics(id, &out.trace, &s.reference, horizon);
                    Ok(ObserverRun {
                        id: id.clone(),
                        trace: out.trace,
                        failure: out.failure,
                        metrics,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("observer thread panicked"))
            .collect()
    });
    let runs = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let report = MetricsReport {
        observers: runs.iter().map(|r| r.metrics.clone()).collect(),
    };
    Ok(ScenarioResult {
        plant: s.plant_id,
        runs,
        report,
    })
}
