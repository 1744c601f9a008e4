use alloc::format;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{named, InputLaw, PlantModel};
use crate::error::{Error, Result};
use crate::numerics::RealVec;

/// Component values of the averaged Ćuk converter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CukParams {
    pub l1: f64,
    pub c2: f64,
    pub l3: f64,
    pub c4: f64,
    pub e: f64,
    pub g: f64,
}

impl Default for CukParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl CukParams {
    /// L1 = 10 mH, C2 = 22.0 uF, C4 = 22.9 uF, G = 0.0447 S, E = 12 V.
    /// L3 is set equal to L1.
    pub fn reference() -> Self {
        Self {
            l1: 0.01,
            c2: 22.0e-6,
            l3: 0.01,
            c4: 22.9e-6,
            e: 12.0,
            g: 0.0447,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("L1", self.l1),
            ("C2", self.c2),
            ("L3", self.l3),
            ("C4", self.c4),
            ("E", self.e),
            ("G", self.g),
        ];
        for (name, v) in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!(
                    "Cuk parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Steady state `(i1, v4, v2, i3)` for a constant duty cycle.
    pub fn equilibrium(&self, u: f64) -> [f64; 4] {
        let v2 = self.e / (1.0 - u);
        let v4 = -u * v2;
        let i3 = self.g * v4;
        let i1 = -u * i3 / (1.0 - u);
        [i1, v4, v2, i3]
    }

    /// Default plant start: the steady state for `Vd = -12 V` (`u = 1/2`).
    pub fn default_start(&self) -> [f64; 4] {
        self.equilibrium(0.5)
    }

    /// Nominal duty cycle that places the output voltage at `vd`.
    pub fn nominal_duty(&self, vd: f64) -> f64 {
        vd.abs() / (vd.abs() + self.e)
    }
}

/// Averaged model. `x = (i1, v4)` are the unmeasured states, `y = (v2, i3)`
/// the measured ones; returns `(x', y')`.
pub fn cuk_field(x: [f64; 2], y: [f64; 2], u: f64, p: &CukParams) -> Result<([f64; 2], [f64; 2])> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!(
            "duty cycle must lie in (0, 1), got {u}"
        )));
    }
    Ok(cuk_field_unchecked(x, y, u, p))
}

#[inline]
pub(crate) fn cuk_field_unchecked(
    x: [f64; 2],
    y: [f64; 2],
    u: f64,
    p: &CukParams,
) -> ([f64; 2], [f64; 2]) {
    let dx1 = -(1.0 - u) * y[0] / p.l1 + p.e / p.l1;
    let dx2 = y[1] / p.c4 - p.g * x[1] / p.c4;
    let dy1 = (1.0 - u) * x[0] / p.c2 + u * y[1] / p.c2;
    let dy2 = -u * y[0] / p.l3 - x[1] / p.l3;
    ([dx1, dx2], [dy1, dy2])
}

/// Four-state plant with state `(i1, v4, v2, i3)` and output `(v2, i3)`.
pub fn cuk_model(p: CukParams) -> Result<PlantModel> {
    p.validate()?;
    let eq = p.equilibrium(p.nominal_duty(-25.0));
    let field = move |x: &RealVec, u: &RealVec| {
        let (dx, dy) = cuk_field_unchecked([x[0], x[1]], [x[2], x[3]], u[0], &p);
        RealVec::from_column_slice(&[dx[0], dx[1], dy[0], dy[1]])
    };
    let model = PlantModel {
        name: "cuk".to_string(),
        n: 4,
        m: 1,
        field: Arc::new(field),
        measured: vec![2, 3],
        params: named(&[
            ("L1", p.l1),
            ("C2", p.c2),
            ("L3", p.l3),
            ("C4", p.c4),
            ("E", p.e),
            ("G", p.g),
        ]),
        state_box: eq.iter().map(|v| (-2.0 * v.abs(), 2.0 * v.abs())).collect(),
        input_range: vec![(0.05, 0.95)],
        state_labels: ["x1", "x2", "y1", "y2"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        input_affine: true,
    };
    model.validate()?;
    Ok(model)
}

/// Piecewise-constant voltage reference plus the gain and saturation of the
/// stabilising feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    /// `(start time, Vd)` pairs, the first starting at 0.
    pub segments: Vec<(f64, f64)>,
    pub lambda_c: f64,
    pub u_clamp: (f64, f64),
}

impl Default for ControlSchedule {
    /// Vd alternates between -15 V and -25 V every 0.2 s.
    fn default() -> Self {
        Self {
            segments: (0..6)
                .map(|k| (0.2 * k as f64, if k % 2 == 0 { -15.0 } else { -25.0 }))
                .collect(),
            lambda_c: 0.1,
            u_clamp: (0.05, 0.95),
        }
    }
}

impl ControlSchedule {
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.segments.first() else {
            return Err(Error::config("control schedule has no segments"));
        };
        if first.0 != 0.0 {
            return Err(Error::config("first control segment must start at t = 0"));
        }
        if self.segments.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::config(
                "control segments must be strictly ordered in time",
            ));
        }
        if self.segments.iter().any(|(_, vd)| !vd.is_finite()) {
            return Err(Error::config("reference voltages must be finite"));
        }
        if !(self.lambda_c >= 0.0) {
            return Err(Error::config("lambda_c must be non-negative"));
        }
        let (lo, hi) = self.u_clamp;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::config(format!(
                "duty clamp must satisfy 0 < lo < hi < 1, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }

    /// Reference voltage active at `t`.
    pub fn vd_at(&self, t: f64) -> f64 {
        let t = t + 1e-9;
        self.segments
            .iter()
            .take_while(|(start, _)| *start <= t)
            .last()
            .map(|(_, vd)| *vd)
            .unwrap_or(self.segments[0].1)
    }

    /// Nominal equilibrium of the active segment, used as the magnitude reference.
    pub fn reference_state(&self, t: f64, p: &CukParams) -> [f64; 4] {
        p.equilibrium(p.nominal_duty(self.vd_at(t)))
    }
}

/// Stabilising duty-cycle law evaluated on the true state `(i1, v4, v2, i3)`.
pub fn cuk_control(x: &RealVec, t: f64, sched: &ControlSchedule, p: &CukParams) -> f64 {
    let vd = sched.vd_at(t).abs();
    let s = p.g * vd * x[2] + p.e * (x[1] - x[0]);
    let u = vd / (vd + p.e) + sched.lambda_c * s / (1.0 + s * s);
    u.clamp(sched.u_clamp.0, sched.u_clamp.1)
}

/// Ideal full-state feedback around the converter. The reference segment is
/// chosen from the start of the integration step.
#[derive(Debug, Clone)]
pub struct CukFeedback {
    pub params: CukParams,
    pub schedule: ControlSchedule,
}

impl InputLaw for CukFeedback {
    fn dim(&self) -> usize {
        1
    }
    fn input(&self, _t: f64, t_step: f64, x: &RealVec) -> Result<RealVec> {
        Ok(RealVec::from_element(
            1,
            cuk_control(x, t_step, &self.schedule, &self.params),
        ))
    }
}
