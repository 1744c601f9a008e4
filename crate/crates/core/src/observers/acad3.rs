use alloc::format;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use super::{DesignTriple, KklPebo, Observer, Regression};
use crate::error::{Error, Result};
use crate::numerics::RealVec;

/// `phi = (x2, x3)`, `Lambda = diag(-1, 0)`,
/// `B = (y^2 + sin y, u y + 1 / (y^2 + 1))`, `phi_left(xi, y) = (y, xi1, xi2)`.
pub fn acad3_triple() -> DesignTriple {
    DesignTriple {
        name: "acad3".to_string(),
        n_x: 3,
        n_xi: 2,
        q: 1,
        phi: Arc::new(|x| RealVec::from_column_slice(&[x[1], x[2]])),
        phi_jacobian: Some(Arc::new(|_| {
            DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
        })),
        lambda_l: Arc::new(|_| RealVec::from_element(1, -1.0)),
        b_map: Arc::new(|y, u| {
            let y = y[0];
            RealVec::from_column_slice(&[y * y + y.sin(), u[0] * y + 1.0 / (y * y + 1.0)])
        }),
        phi_left: Arc::new(|xi, y| RealVec::from_column_slice(&[y[0], xi[0], xi[1]])),
        rotation: None,
        measured: vec![0],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acad3Gains {
    pub alpha: f64,
    pub gamma: f64,
    /// Initial value of the regressor filter, must be positive.
    pub psi0: f64,
    pub prime_filters: bool,
}

impl Default for Acad3Gains {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gamma: 2.0,
            psi0: 0.1,
            prime_filters: true,
        }
    }
}

/// `Y = W[y] + F[y^3]`, `psi = F[e^xi2]`, estimating `Theta = e^theta`.
/// The estimator starts at `Theta = 1`, i.e. `theta = 0`.
#[derive(Debug, Clone)]
pub struct Acad3Regression {
    pub gains: Acad3Gains,
}

impl Regression for Acad3Regression {
    fn n_theta(&self) -> usize {
        1
    }
    fn n_filters(&self) -> usize {
        3
    }
    fn alpha(&self) -> f64 {
        self.gains.alpha
    }
    fn gain(&self) -> RealVec {
        RealVec::from_element(1, self.gains.gamma)
    }
    fn initial_filters(&self, y0: &RealVec, _u0: &RealVec) -> RealVec {
        let z0 = if self.gains.prime_filters { y0[0] } else { 0.0 };
        RealVec::from_column_slice(&[z0, 0.0, self.gains.psi0])
    }
    fn initial_estimate(&self) -> RealVec {
        RealVec::from_element(1, 1.0)
    }
    fn filter_inputs(&self, xi: &RealVec, y: &RealVec, _u: &RealVec) -> RealVec {
        let y = y[0];
        RealVec::from_column_slice(&[y, y * y * y, xi[1].exp()])
    }
    fn assemble(
        &self,
        z: &RealVec,
        _xi: &RealVec,
        y: &RealVec,
        _u: &RealVec,
    ) -> (RealVec, DMatrix<f64>) {
        let big_y = RealVec::from_element(1, self.gains.alpha * (y[0] - z[0]) + z[1]);
        (big_y, DMatrix::from_element(1, 1, z[2]))
    }
    fn theta(&self, estimate: &RealVec) -> RealVec {
        estimate.map(|t| t.max(f64::MIN_POSITIVE).ln())
    }
    fn estimate_of(&self, theta: &RealVec) -> RealVec {
        theta.map(|t| t.exp())
    }
}

pub fn acad3_observer(gains: Acad3Gains) -> Result<Arc<dyn Observer>> {
    for (name, v) in [
        ("alpha", gains.alpha),
        ("gamma", gains.gamma),
        ("psi0", gains.psi0),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::config(format!(
                "acad3 gain {name} must be positive, got {v}"
            )));
        }
    }
    Ok(Arc::new(KklPebo::new(
        acad3_triple(),
        Some(Arc::new(Acad3Regression { gains })),
    )?))
}
