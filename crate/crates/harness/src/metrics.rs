//! Per-observer error metrics.

use observerkit_core::sim::SimTrace;

use crate::scenario::ReferenceMagnitude;

/// Width of the convergence band relative to the reference magnitude.
pub const BAND: f64 = 0.05;
/// Fraction of the horizon, counted from the end, used for steady-state RMS.
pub const STEADY_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct StateMetrics {
    pub label: String,
    /// RMS of `x_hat - x` over the last 20% of the horizon.
    pub steady_rms: f64,
    /// Earliest time after which the error stays inside the 5% band;
    /// `None` when it leaves the band again before the end.
    pub convergence_time: Option<f64>,
    pub peak_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverMetrics {
    pub observer: String,
    pub states: Vec<StateMetrics>,
    /// `|theta_hat - theta|` at the last row when the truth is known.
    pub final_theta_error: Option<f64>,
    /// The trace reached the horizon.
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub observers: Vec<ObserverMetrics>,
}

impl MetricsReport {
    pub fn get(&self, observer: &str) -> Option<&ObserverMetrics> {
        self.observers.iter().find(|m| m.observer == observer)
    }
}

pub fn observer_metrics(
    id: &str,
    trace: &SimTrace,
    reference: &ReferenceMagnitude,
    horizon: f64,
) -> ObserverMetrics {
    let last_t = trace.rows.last().map_or(0.0, |r| r.t);
    let completed = last_t >= horizon - trace.dt * trace.decimation as f64 * 0.5;
    let steady_from = horizon * (1.0 - STEADY_FRACTION);
    let peak_ref =
        matches!(reference, ReferenceMagnitude::TracePeak).then(|| reference.at(0.0, trace));
    let states = trace
        .hidden
        .iter()
        .map(|&i| {
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut peak: f64 = 0.0;
            let mut entered = None;
            for r in &trace.rows {
                let e = r.x_err[i].abs();
                peak = peak.max(e);
                if r.t >= steady_from - 1e-12 {
                    sum += e * e;
                    count += 1;
                }
                let band = match &peak_ref {
                    Some(p) => p[i],
                    None => reference.at(r.t, trace)[i],
                } * BAND;
                if e <= band {
                    entered.get_or_insert(r.t);
                } else {
                    entered = None;
                }
            }
            StateMetrics {
                label: trace.state_labels[i].clone(),
                steady_rms: if count > 0 {
                    (sum / count as f64).sqrt()
                } else {
                    f64::NAN
                },
                convergence_time: if completed { entered } else { None },
                peak_error: peak,
            }
        })
        .collect();
    let final_theta_error = trace
        .rows
        .last()
        .and_then(|r| r.theta_err.as_ref())
        .map(|e| e.norm());
    ObserverMetrics {
        observer: id.to_string(),
        states,
        final_theta_error,
        completed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use observerkit_core::sim::TraceRow;
    use observerkit_core::RealVec;

    fn trace(errors: &[f64]) -> SimTrace {
        let rows = errors
            .iter()
            .enumerate()
            .map(|(k, e)| TraceRow {
                t: k as f64,
                x: RealVec::from_column_slice(&[1.0, 10.0]),
                y_clean: RealVec::from_element(1, 10.0),
                y_noisy: RealVec::from_element(1, 10.0),
                u: RealVec::zeros(1),
                chi: RealVec::zeros(1),
                x_hat: RealVec::from_column_slice(&[1.0 + e, 10.0]),
                x_err: RealVec::from_column_slice(&[*e, 0.0]),
                theta_hat: None,
                theta_err: None,
                d_m: None,
            })
            .collect();
        SimTrace {
            observer: "t".into(),
            plant: "p".into(),
            state_labels: vec!["x1".into(), "y1".into()],
            measured: vec![1],
            hidden: vec![0],
            dt: 1.0,
            decimation: 1,
            rows,
        }
    }

    #[test]
    fn convergence_time_is_the_last_band_entry() {
        let tr = trace(&[1.0, 0.01, 0.2, 0.01, 0.0]);
        let m = observer_metrics(
            "t",
            &tr,
            &ReferenceMagnitude::Constant(vec![1.0, 10.0]),
            4.0,
        );
        assert_eq!(m.states[0].convergence_time, Some(3.0));
        assert_eq!(m.states[0].peak_error, 1.0);
        // the last 20% of a horizon of 4 covers t >= 3.2, only the final row
        assert_eq!(m.states[0].steady_rms, 0.0);
        assert!(m.completed);
    }

    #[test]
    fn leaving_the_band_at_the_end_is_not_converged() {
        let tr = trace(&[0.0, 0.0, 0.5]);
        let m = observer_metrics(
            "t",
            &tr,
            &ReferenceMagnitude::Constant(vec![1.0, 10.0]),
            2.0,
        );
        assert_eq!(m.states[0].convergence_time, None);
        let short = observer_metrics(
            "t",
            &trace(&[0.0, 0.0]),
            &ReferenceMagnitude::Constant(vec![1.0, 1.0]),
            5.0,
        );
        assert!(!short.completed);
        assert_eq!(short.states[0].convergence_time, None);
    }
}
