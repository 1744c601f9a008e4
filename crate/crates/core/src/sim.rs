//! Joint plant and observer simulation.
//!
//! The plant state and the observer extension are stacked into one vector and
//! advanced by a single RK4 step, so the observer sees the exact plant output
//! at every stage. The plant block never depends on the observer, which makes
//! the plant trajectory bit-identical for every observer attached to it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::numerics::{noise_sample, rk4_step, NoiseSpec, RealVec};
use crate::observers::Observer;
use crate::plants::{InputLaw, PlantModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub horizon: f64,
    /// Record every `decimation`-th step.
    pub decimation: usize,
    pub noise: Option<NoiseSpec>,
}

impl SimSettings {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            decimation: 1,
            noise: None,
        }
    }

    pub fn with_decimation(mut self, decimation: usize) -> Self {
        self.decimation = decimation;
        self
    }

    pub fn with_noise(mut self, noise: Option<NoiseSpec>) -> Self {
        self.noise = noise;
        self
    }

    /// Number of integration steps, `floor(horizon / dt)`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt + 1e-9).floor() as usize
    }

    /// Number of recorded rows, `floor(steps / decimation) + 1`.
    pub fn rows(&self) -> usize {
        self.steps() / self.decimation + 1
    }

    pub fn validate(&self, outputs: usize) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::config(format!(
                "horizon must be non-negative, got {}",
                self.horizon
            )));
        }
        if self.decimation == 0 {
            return Err(Error::config("decimation must be at least 1"));
        }
        if let Some(ns) = &self.noise {
            if ns.amplitude.len() != outputs {
                return Err(Error::config(format!(
                    "noise has {} channels for {outputs} outputs",
                    ns.amplitude.len()
                )));
            }
            if self.dt > ns.sample_period * (1.0 + 1e-9) {
                return Err(Error::config(format!(
                    "dt = {} exceeds the noise sample period {}",
                    self.dt, ns.sample_period
                )));
            }
        }
        Ok(())
    }
}

/// One recorded instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: RealVec,
    pub y_clean: RealVec,
    pub y_noisy: RealVec,
    pub u: RealVec,
    pub chi: RealVec,
    pub x_hat: RealVec,
    /// `x_hat - x`.
    pub x_err: RealVec,
    pub theta_hat: Option<RealVec>,
    /// `theta_hat - theta`.
    pub theta_err: Option<RealVec>,
    pub d_m: Option<RealVec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub observer: String,
    pub plant: String,
    pub state_labels: Vec<String>,
    pub measured: Vec<usize>,
    pub hidden: Vec<usize>,
    pub dt: f64,
    pub decimation: usize,
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    /// Largest `|x_err|` over hidden states and rows with `t >= from`.
    pub fn max_hidden_error(&self, from: f64) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.t >= from)
            .flat_map(|r| self.hidden.iter().map(move |&i| r.x_err[i].abs()))
            .fold(0.0, f64::max)
    }
}

/// A trace together with the failure that cut it short, if any.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trace: SimTrace,
    pub failure: Option<Error>,
}

impl SimOutcome {
    pub fn into_result(self) -> Result<SimTrace> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self.trace),
        }
    }
}

fn measure(plant: &PlantModel, x: &RealVec, noise: &Option<RealVec>) -> (RealVec, RealVec) {
    let clean = plant.output(x);
    let noisy = match noise {
        Some(n) => &clean + n,
        None => clean.clone(),
    };
    (clean, noisy)
}

fn record(
    plant: &PlantModel,
    input: &dyn InputLaw,
    obs: &dyn Observer,
    t: f64,
    state: &RealVec,
    noise: &Option<RealVec>,
) -> Result<TraceRow> {
    let n = plant.n;
    let x = state.rows(0, n).into_owned();
    let chi = state.rows(n, state.len() - n).into_owned();
    let u = input.input(t, t, &x)?;
    let (y_clean, y_noisy) = measure(plant, &x, noise);
    let x_hat = obs.estimate(&chi, &y_noisy, &u)?;
    let x_err = &x_hat - &x;
    let theta_hat = obs.theta_hat(&chi);
    let theta_err = match (&theta_hat, obs.true_theta(&chi, &x)) {
        (Some(th), Some(truth)) => Some(th - truth),
        _ => None,
    };
    let d_m = obs.off_manifold(&chi, &y_clean, &x);
    Ok(TraceRow {
        t,
        x,
        y_clean,
        y_noisy,
        u,
        chi,
        x_hat,
        x_err,
        theta_hat,
        theta_err,
        d_m,
    })
}

/// Runs `observer` against `plant` from `x0`. The extension starts at `chi0`
/// or at the observer's default. Setup problems are returned as errors;
/// numerical failures during the run end the trace early and are reported in
/// [`SimOutcome::failure`].
pub fn simulate(
    plant: &PlantModel,
    input: &dyn InputLaw,
    observer: &dyn Observer,
    x0: &RealVec,
    chi0: Option<RealVec>,
    settings: &SimSettings,
) -> Result<SimOutcome> {
    settings.validate(plant.p())?;
    let n = plant.n;
    if x0.len() != n || input.dim() != plant.m || observer.n_x() != n {
        return Err(Error::config(format!(
            "{} / {}: plant has n = {}, m = {}; got x0 of size {}, input of size {}, observer for n = {}",
            plant.name,
            observer.name(),
            n,
            plant.m,
            x0.len(),
            input.dim(),
            observer.n_x()
        )));
    }
    let noise_at = |t: f64| settings.noise.as_ref().map(|ns| noise_sample(ns, t));
    let chi0 = match chi0 {
        Some(c) => c,
        None => {
            let u0 = input.input(0.0, 0.0, x0)?;
            let (_, y0) = measure(plant, x0, &noise_at(0.0));
            observer.initial_state(&y0, &u0)
        }
    };
    if chi0.len() != observer.dim() {
        return Err(Error::config(format!(
            "{}: initial extension has {} entries, expected {}",
            observer.name(),
            chi0.len(),
            observer.dim()
        )));
    }
    let mut state = RealVec::zeros(n + chi0.len());
    state.rows_mut(0, n).copy_from(x0);
    state.rows_mut(n, chi0.len()).copy_from(&chi0);

    let mut trace = SimTrace {
        observer: observer.name().to_string(),
        plant: plant.name.clone(),
        state_labels: plant.state_labels.clone(),
        measured: plant.measured.clone(),
        hidden: plant.hidden(),
        dt: settings.dt,
        decimation: settings.decimation,
        rows: Vec::with_capacity(settings.rows()),
    };
    let mut failure = None;
    match record(plant, input, observer, 0.0, &state, &noise_at(0.0)) {
        Ok(row) => trace.rows.push(row),
        Err(e) => failure = Some(e),
    }
    let dt = settings.dt;
    for k in 0..settings.steps() {
        if failure.is_some() {
            break;
        }
        let t = k as f64 * dt;
        let noise = noise_at(t);
        let field = |tau: f64, s: &RealVec| -> Result<RealVec> {
            let x = s.rows(0, n).into_owned();
            let chi = s.rows(n, s.len() - n).into_owned();
            let u = input.input(tau, t, &x)?;
            let (_, y) = measure(plant, &x, &noise);
            let dx = plant.field(&x, &u)?;
            let dchi = observer.derivative(&chi, &y, &u)?;
            let mut out = RealVec::zeros(s.len());
            out.rows_mut(0, n).copy_from(&dx);
            out.rows_mut(n, dchi.len()).copy_from(&dchi);
            Ok(out)
        };
        match rk4_step(field, &state, t, dt) {
            Ok(next) => state = next,
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        if (k + 1) % settings.decimation == 0 {
            let t1 = (k + 1) as f64 * dt;
            match record(plant, input, observer, t1, &state, &noise_at(t1)) {
                Ok(row) => trace.rows.push(row),
                Err(e) => failure = Some(e),
            }
        }
    }
    Ok(SimOutcome { trace, failure })
}

/// Plant-only run; returns `(t, x, u)` at every step.
pub fn simulate_plant(
    plant: &PlantModel,
    input: &dyn InputLaw,
    x0: &RealVec,
    dt: f64,
    steps: usize,
) -> Result<Vec<(f64, RealVec, RealVec)>> {
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        out.push((t, x.clone(), input.input(t, t, &x)?));
        if k < steps {
            x = rk4_step(
                |tau, z| {
                    let u = input.input(tau, t, z)?;
                    plant.field(z, &u)
                },
                &x,
                t,
                dt,
            )?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observers::{cuk_observer, CukGains, CukObserverId};
    use crate::plants::{cuk_model, ControlSchedule, CukFeedback, CukParams};

    fn setup(
        id: CukObserverId,
    ) -> (
        PlantModel,
        CukFeedback,
        alloc::sync::Arc<dyn Observer>,
        RealVec,
    ) {
        let p = CukParams::reference();
        let input = CukFeedback {
            params: p,
            schedule: ControlSchedule::default(),
        };
        let obs = cuk_observer(id, p, &CukGains::default()).unwrap();
        (
            cuk_model(p).unwrap(),
            input,
            obs,
            RealVec::from_column_slice(&p.default_start()),
        )
    }

    #[test]
    fn row_count_follows_horizon_and_decimation() {
        let s = SimSettings::new(1e-5, 1e-3).with_decimation(10);
        assert_eq!((s.steps(), s.rows()), (100, 11));
        let (plant, input, obs, x0) = setup(CukObserverId::Kklo);
        let one = SimSettings::new(1e-5, 1e-5);
        let trace = simulate(&plant, &input, obs.as_ref(), &x0, None, &one)
            .unwrap()
            .into_result()
            .unwrap();
        assert_eq!(trace.rows.len(), 2);
        let trace = simulate(&plant, &input, obs.as_ref(), &x0, None, &s)
            .unwrap()
            .into_result()
            .unwrap();
        assert_eq!(trace.rows.len(), 11);
        assert!(trace.rows.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn decimation_only_selects_rows() {
        let (plant, input, obs, x0) = setup(CukObserverId::Pebo);
        let full = SimSettings::new(1e-5, 2e-3);
        let dec = full.clone().with_decimation(7);
        let a = simulate(&plant, &input, obs.as_ref(), &x0, None, &full)
            .unwrap()
            .trace;
        let b = simulate(&plant, &input, obs.as_ref(), &x0, None, &dec)
            .unwrap()
            .trace;
        for (i, row) in b.rows.iter().enumerate() {
            assert_eq!(row, &a.rows[7 * i]);
        }
    }

    #[test]
    fn plant_block_does_not_depend_on_the_observer() {
        let (plant, input, kklo, x0) = setup(CukObserverId::Kklo);
        let (_, _, hgo, _) = setup(CukObserverId::HgoLin);
        let s = SimSettings::new(1e-5, 1e-3);
        let a = simulate(&plant, &input, kklo.as_ref(), &x0, None, &s)
            .unwrap()
            .trace;
        let b = simulate(&plant, &input, hgo.as_ref(), &x0, None, &s)
            .unwrap()
            .trace;
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!((&ra.x, &ra.u), (&rb.x, &rb.u));
        }
    }

    #[test]
    fn noise_reaches_the_observer_only() {
        let (plant, input, obs, x0) = setup(CukObserverId::Kklo);
        let ns = NoiseSpec::new(RealVec::from_column_slice(&[0.02, 2e-4]), 1e-4, 7).unwrap();
        let s = SimSettings::new(1e-5, 1e-3).with_noise(Some(ns));
        let noisy = simulate(&plant, &input, obs.as_ref(), &x0, None, &s)
            .unwrap()
            .trace;
        let clean = simulate(
            &plant,
            &input,
            obs.as_ref(),
            &x0,
            None,
            &SimSettings::new(1e-5, 1e-3),
        )
        .unwrap()
        .trace;
        let last = noisy.rows.len() - 1;
        assert_eq!(noisy.rows[last].x, clean.rows[last].x);
        assert_ne!(noisy.rows[last].chi, clean.rows[last].chi);
        let again = simulate(&plant, &input, obs.as_ref(), &x0, None, &s)
            .unwrap()
            .trace;
        assert_eq!(again.rows, noisy.rows);
    }

    #[test]
    fn settings_are_validated() {
        let ns = NoiseSpec::new(RealVec::from_column_slice(&[0.02, 2e-4]), 1e-4, 7).unwrap();
        assert!(SimSettings::new(2e-4, 1.0)
            .with_noise(Some(ns.clone()))
            .validate(2)
            .is_err());
        assert!(SimSettings::new(1e-5, 1.0)
            .with_noise(Some(ns))
            .validate(1)
            .is_err());
        assert!(SimSettings::new(0.0, 1.0).validate(2).is_err());
        assert!(SimSettings::new(1e-3, 1.0)
            .with_decimation(0)
            .validate(2)
            .is_err());
        let (plant, input, obs, x0) = setup(CukObserverId::Kklo);
        let bad = simulate(
            &plant,
            &input,
            obs.as_ref(),
            &x0,
            Some(RealVec::zeros(3)),
            &SimSettings::new(1e-5, 1e-3),
        );
        assert!(matches!(bad, Err(Error::Config(_))));
    }
}
