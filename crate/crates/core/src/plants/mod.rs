//! Benchmark plants: the averaged Ćuk converter under state feedback, a
//! three-state academic system and a configurable four-block cascade.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{all_finite, RealVec};

mod acad3;
mod cascade;
mod cuk;

pub use acad3::{acad3_equilibrium, acad3_field, acad3_model};
pub use cascade::{cascade_build, demo_input, CascadeSpec, CascadeSystem, PeProbe};
pub use cuk::{cuk_control, cuk_field, cuk_model, ControlSchedule, CukFeedback, CukParams};

/// `x' = f(x, u)`.
pub type VectorField = Arc<dyn Fn(&RealVec, &RealVec) -> RealVec + Send + Sync>;

/// A plant `x' = f(x, u)`, `y = h(x)` whose outputs are a subset of the states.
#[derive(Clone)]
pub struct PlantModel {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub field: VectorField,
    /// Indices of the measured states, in output order.
    pub measured: Vec<usize>,
    pub params: Vec<(String, f64)>,
    /// Per-axis sampling interval for verification.
    pub state_box: Vec<(f64, f64)>,
    pub input_range: Vec<(f64, f64)>,
    pub state_labels: Vec<String>,
    /// `f(x, u) = F(x) + g(x) u`.
    pub input_affine: bool,
}

impl core::fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PlantModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("measured", &self.measured)
            .field("params", &self.params)
            .finish()
    }
}

impl PlantModel {
    /// Output dimension.
    pub fn p(&self) -> usize {
        self.measured.len()
    }

    pub fn field(&self, x: &RealVec, u: &RealVec) -> Result<RealVec> {
        if x.len() != self.n || u.len() != self.m {
            return Err(Error::config(format!(
                "{}: expected state/input of size {}/{}, got {}/{}",
                self.name,
                self.n,
                self.m,
                x.len(),
                u.len()
            )));
        }
        Ok((self.field)(x, u))
    }

    pub fn output(&self, x: &RealVec) -> RealVec {
        RealVec::from_iterator(self.measured.len(), self.measured.iter().map(|&i| x[i]))
    }

    /// `dh/dx`, a row selection for partial-state outputs.
    pub fn output_jacobian(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.p(), self.n);
        for (row, &i) in self.measured.iter().enumerate() {
            j[(row, i)] = 1.0;
        }
        j
    }

    /// States that are not measured and must be reconstructed.
    pub fn hidden(&self) -> Vec<usize> {
        (0..self.n).filter(|i| !self.measured.contains(i)).collect()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// Checks that the field is finite on a point of the state box.
    pub fn validate(&self) -> Result<()> {
        if self.state_box.len() != self.n || self.state_labels.len() != self.n {
            return Err(Error::config(format!(
                "{}: state box/labels do not match n",
                self.name
            )));
        }
        if self.measured.iter().any(|&i| i >= self.n) {
            return Err(Error::config(format!(
                "{}: measured index out of range",
                self.name
            )));
        }
        let mid = RealVec::from_iterator(self.n, self.state_box.iter().map(|(a, b)| 0.5 * (a + b)));
        let u = RealVec::from_iterator(self.m, self.input_range.iter().map(|(a, b)| 0.5 * (a + b)));
        let f = self.field(&mid, &u)?;
        if !all_finite(&f) {
            return Err(Error::NonFinite {
                what: format!("{} field", self.name),
                at: mid.iter().copied().collect(),
            });
        }
        Ok(())
    }
}

/// Supplies the plant input. `t` is the evaluation instant inside a step and
/// `t_step` the start of that step (piecewise-constant references switch on it).
pub trait InputLaw: Send + Sync {
    fn dim(&self) -> usize;
    fn input(&self, t: f64, t_step: f64, x: &RealVec) -> Result<RealVec>;
}

#[derive(Debug, Clone)]
pub struct ConstantInput(pub RealVec);

impl InputLaw for ConstantInput {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn input(&self, _t: f64, _t_step: f64, _x: &RealVec) -> Result<RealVec> {
        Ok(self.0.clone())
    }
}

/// Open-loop input given as a function of time.
#[derive(Clone)]
pub struct TimeInput {
    pub dim: usize,
    pub signal: Arc<dyn Fn(f64) -> RealVec + Send + Sync>,
}

impl TimeInput {
    pub fn new(dim: usize, signal: impl Fn(f64) -> RealVec + Send + Sync + 'static) -> Self {
        Self {
            dim,
            signal: Arc::new(signal),
        }
    }
}

impl InputLaw for TimeInput {
    fn dim(&self) -> usize {
        self.dim
    }
    fn input(&self, t: f64, _t_step: f64, _x: &RealVec) -> Result<RealVec> {
        Ok((self.signal)(t))
    }
}

pub(crate) fn labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub(crate) fn named(params: &[(&str, f64)]) -> Vec<(String, f64)> {
    params.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}
