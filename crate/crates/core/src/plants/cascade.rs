use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use super::{labels, PlantModel};
use crate::error::{Error, Result};
use crate::numerics::{rk4_step, RealVec};
use crate::verify::pe_check;

/// `(x1, x2, x3, u) -> R^k`.
pub type FullMap = Arc<dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> RealVec + Send + Sync>;
/// `(x1, u) -> R^k`.
pub type OutputMap = Arc<dyn Fn(&[f64], &[f64]) -> RealVec + Send + Sync>;
/// `(x1, x2, u) -> R^k`.
pub type PairMap = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> RealVec + Send + Sync>;

/// Open-loop excitation probe run at build time.
#[derive(Clone)]
pub struct PeProbe {
    pub input: Arc<dyn Fn(f64) -> RealVec + Send + Sync>,
    pub x0: RealVec,
    pub window: f64,
    pub horizon: f64,
    pub dt: f64,
    pub delta: f64,
}

/// Four-block cascade
///
/// ```text
/// x1' = f1(x1, x2, x3, u) + S(x, u),   S_k = b(x1, x2, x3, u)^T x4, other entries 0
/// x2' = A2 x2 + f2(x1, u)
/// x3' = A3 x3 + f3(x1, x2, u)
/// x4' = f4(x1, x2, x3, u)
/// y   = x1
/// ```
#[derive(Clone)]
pub struct CascadeSpec {
    /// Block sizes `(n1, n2, n3, n4)`.
    pub dims: [usize; 4],
    pub a2: DMatrix<f64>,
    pub a3: DMatrix<f64>,
    pub f1: FullMap,
    pub f2: OutputMap,
    pub f3: PairMap,
    pub f4: FullMap,
    pub b: FullMap,
    /// 1-based row of `x1` carrying the factorised term.
    pub k: usize,
    pub input_dim: usize,
    /// Skip the eigenvalue test for matrices the caller has certified.
    pub hurwitz_certified: bool,
    pub pe_probe: Option<PeProbe>,
}

impl CascadeSpec {
    /// Scalar blocks, `A2 = -1`, `A3 = -2`, `f1 = -x1`, `f2 = x1`, `f3 = x1 + x2`,
    /// `f4 = sin u`, `b = 1 + sin^2 u`, `k = 1`, probed under `u = sin t`.
    pub fn demo() -> Self {
        Self {
            dims: [1, 1, 1, 1],
            a2: DMatrix::from_element(1, 1, -1.0),
            a3: DMatrix::from_element(1, 1, -2.0),
            f1: Arc::new(|x1, _, _, _| RealVec::from_element(1, -x1[0])),
            f2: Arc::new(|x1, _| RealVec::from_element(1, x1[0])),
            f3: Arc::new(|x1, x2, _| RealVec::from_element(1, x1[0] + x2[0])),
            f4: Arc::new(|_, _, _, u| RealVec::from_element(1, u[0].sin())),
            b: Arc::new(|_, _, _, u| RealVec::from_element(1, 1.0 + u[0].sin().powi(2))),
            k: 1,
            input_dim: 1,
            hurwitz_certified: false,
            pe_probe: Some(PeProbe {
                input: Arc::new(demo_input),
                x0: RealVec::zeros(4),
                window: 2.0 * core::f64::consts::PI,
                horizon: 4.0 * core::f64::consts::PI,
                dt: 1e-2,
                delta: 1e-3,
            }),
        }
    }

    pub fn n(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Splits a full state into its four blocks.
    pub fn blocks<'a>(&self, x: &'a [f64]) -> [&'a [f64]; 4] {
        let [n1, n2, n3, _] = self.dims;
        let (x1, rest) = x.split_at(n1);
        let (x2, rest) = rest.split_at(n2);
        let (x3, x4) = rest.split_at(n3);
        [x1, x2, x3, x4]
    }

    pub fn field(&self, x: &RealVec, u: &RealVec) -> RealVec {
        let [x1, x2, x3, x4] = self.blocks(x.as_slice());
        let u = u.as_slice();
        let mut dx1 = (self.f1)(x1, x2, x3, u);
        let b = (self.b)(x1, x2, x3, u);
        dx1[self.k - 1] += b.dot(&DVector::from_column_slice(x4));
        let dx2 = &self.a2 * DVector::from_column_slice(x2) + (self.f2)(x1, u);
        let dx3 = &self.a3 * DVector::from_column_slice(x3) + (self.f3)(x1, x2, u);
        let dx4 = (self.f4)(x1, x2, x3, u);
        let mut out = RealVec::zeros(self.n());
        let mut at = 0;
        for block in [dx1, dx2, dx3, dx4] {
            out.rows_mut(at, block.len()).copy_from(&block);
            at += block.len();
        }
        out
    }
}

/// `u(t) = sin t`.
pub fn demo_input(t: f64) -> RealVec {
    RealVec::from_element(1, t.sin())
}

/// A validated cascade with its plant model and any build warnings.
#[derive(Clone)]
pub struct CascadeSystem {
    pub spec: Arc<CascadeSpec>,
    pub model: PlantModel,
    pub warnings: Vec<String>,
}

fn check_hurwitz(name: &str, a: &DMatrix<f64>, size: usize) -> Result<()> {
    if a.nrows() != size || a.ncols() != size {
        return Err(Error::config(format!(
            "{name} must be {size}x{size}, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if size == 0 {
        return Ok(());
    }
    for l in a.clone().complex_eigenvalues().iter() {
        if !(l.re < 0.0) {
            return Err(Error::config(format!(
                "{name} is not Hurwitz: eigenvalue {} {:+}i",
                l.re, l.im
            )));
        }
    }
    Ok(())
}

pub fn cascade_build(spec: CascadeSpec) -> Result<CascadeSystem> {
    let [n1, n2, n3, n4] = spec.dims;
    if n1 == 0 || n4 == 0 {
        return Err(Error::config(
            "cascade needs a non-empty output block and parameter block",
        ));
    }
    if !(1..=n1).contains(&spec.k) {
        return Err(Error::config(format!(
            "k must satisfy 1 <= k <= {n1}, got {}",
            spec.k
        )));
    }
    if !spec.hurwitz_certified {
        check_hurwitz("A2", &spec.a2, n2)?;
        check_hurwitz("A3", &spec.a3, n3)?;
    }
    let n = spec.n();
    let spec = Arc::new(spec);
    let field_spec = spec.clone();
    let model = PlantModel {
        name: "cascade".to_string(),
        n,
        m: spec.input_dim,
        field: Arc::new(move |x: &RealVec, u: &RealVec| field_spec.field(x, u)),
        measured: (0..n1).collect(),
        params: vec![],
        state_box: vec![(-2.0, 2.0); n],
        input_range: vec![(-1.0, 1.0); spec.input_dim],
        state_labels: labels("x", n),
        input_affine: false,
    };
    model.validate()?;

    let mut warnings = Vec::new();
    if let Some(probe) = &spec.pe_probe {
        let steps = (probe.horizon / probe.dt).round() as usize;
        let mut x = probe.x0.clone();
        let mut regressors = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let t = i as f64 * probe.dt;
            let u = (probe.input)(t);
            let [x1, x2, x3, _] = spec.blocks(x.as_slice());
            regressors.push((spec.b)(x1, x2, x3, u.as_slice()));
            if i < steps {
                x = rk4_step(|s, z| Ok(spec.field(z, &(probe.input)(s))), &x, t, probe.dt)?;
            }
        }
        let report = pe_check(&regressors, probe.dt, probe.window, probe.delta)?;
        if !report.excited {
            warnings.push(format!(
                "regressor b is not persistently exciting: smallest windowed Gramian eigenvalue {:.3e} < {:.3e}",
                report.min_eigenvalue, probe.delta
            ));
        }
    }
    Ok(CascadeSystem {
        spec,
        model,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_builds_without_warnings() {
        let sys = cascade_build(CascadeSpec::demo()).unwrap();
        assert!(sys.warnings.is_empty(), "{:?}", sys.warnings);
        assert_eq!(sys.model.n, 4);
        assert_eq!(sys.model.measured, vec![0]);
    }

    #[test]
    fn zero_regressor_triggers_warning() {
        let mut spec = CascadeSpec::demo();
        spec.b = Arc::new(|_, _, _, _| RealVec::zeros(1));
        let sys = cascade_build(spec).unwrap();
        assert_eq!(sys.warnings.len(), 1);
    }

    #[test]
    fn unstable_block_is_rejected() {
        let mut spec = CascadeSpec::demo();
        spec.a2 = DMatrix::from_element(1, 1, 1.0);
        let err = cascade_build(spec).err().unwrap();
        assert!(
            matches!(&err, Error::Config(msg) if msg.contains("A2") && msg.contains('1')),
            "{err}"
        );
    }

    #[test]
    fn k_out_of_range_is_rejected() {
        let mut spec = CascadeSpec::demo();
        spec.k = 2;
        assert!(cascade_build(spec).is_err());
    }

    #[test]
    fn factorised_term_lands_in_row_k() {
        let spec = CascadeSpec::demo();
        let x = RealVec::from_column_slice(&[0.5, 0.1, -0.2, 2.0]);
        let u = RealVec::from_element(1, 0.3);
        let f = spec.field(&x, &u);
        let b = 1.0 + 0.3f64.sin().powi(2);
        assert_eq!(f[0], -0.5 + b * 2.0);
        assert_eq!(f[1], -0.1 + 0.5);
        assert!((f[2] - 1.0).abs() < 1e-15);
        assert_eq!(f[3], 0.3f64.sin());
    }

    #[test]
    fn demo_trajectory_stays_bounded() {
        let spec = CascadeSpec::demo();
        let mut x = RealVec::from_column_slice(&[1.0, -1.0, 0.5, 0.3]);
        let dt = 1e-2;
        for i in 0..5000 {
            let t = i as f64 * dt;
            x = rk4_step(|s, z| Ok(spec.field(z, &demo_input(s))), &x, t, dt).unwrap();
            assert!(x.amax() < 10.0);
        }
    }
}
