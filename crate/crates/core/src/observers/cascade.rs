use alloc::format;
use alloc::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::Observer;
use crate::error::{Error, Result};
use crate::numerics::{gradient_rate, FilterState, RealVec};
use crate::plants::{CascadeSpec, CascadeSystem};

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeGains {
    pub alpha: f64,
    /// Diagonal of `Gamma`; a single entry is broadcast.
    pub gamma: RealVec,
    pub prime_filters: bool,
}

impl Default for CascadeGains {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: RealVec::from_element(1, 5.0),
            prime_filters: true,
        }
    }
}

/// Observer for the four-block cascade:
///
/// ```text
/// x2_hat' = A2 x2_hat + f2(y, u)
/// x3_hat' = A3 x3_hat + f3(y, x2_hat, u)
/// xi'     = f4(y, x2_hat, x3_hat, u)
/// x4_hat  = xi + theta_hat
/// theta_hat' = Gamma psi (Y - psi^T theta_hat)
/// Y   = W[y_k] - F[f1_k(y, x2_hat, x3_hat, u)] - F[b^T xi]
/// psi = F[b(y, x2_hat, x3_hat, u)]
/// ```
///
/// Extension layout: `(x2_hat, x3_hat, xi, theta_hat, z_y, z_f1, z_bxi, z_b)`.
#[derive(Clone)]
pub struct CascadeObserver {
    pub spec: Arc<CascadeSpec>,
    pub alpha: f64,
    pub gamma: RealVec,
    pub prime_filters: bool,
}

struct Parts<'a> {
    x2: &'a [f64],
    x3: &'a [f64],
    xi: &'a [f64],
    theta: &'a [f64],
    z_y: f64,
    z_f1: f64,
    z_bxi: f64,
    z_b: &'a [f64],
}

impl CascadeObserver {
    fn parts<'a>(&self, chi: &'a RealVec) -> Parts<'a> {
        let [_, n2, n3, n4] = self.spec.dims;
        let c = chi.as_slice();
        let (x2, rest) = c.split_at(n2);
        let (x3, rest) = rest.split_at(n3);
        let (xi, rest) = rest.split_at(n4);
        let (theta, rest) = rest.split_at(n4);
        Parts {
            x2,
            x3,
            xi,
            theta,
            z_y: rest[0],
            z_f1: rest[1],
            z_bxi: rest[2],
            z_b: &rest[3..],
        }
    }
}

impl Observer for CascadeObserver {
    fn name(&self) -> &str {
        "cascade"
    }
    fn dim(&self) -> usize {
        let [_, n2, n3, n4] = self.spec.dims;
        n2 + n3 + 3 * n4 + 3
    }
    fn n_x(&self) -> usize {
        self.spec.n()
    }
    fn initial_state(&self, y0: &RealVec, _u0: &RealVec) -> RealVec {
        let mut chi = RealVec::zeros(self.dim());
        if self.prime_filters {
            let [_, n2, n3, n4] = self.spec.dims;
            chi[n2 + n3 + 2 * n4] = y0[self.spec.k - 1];
        }
        chi
    }
    fn derivative(&self, chi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec> {
        if chi.len() != self.dim() {
            return Err(Error::config(format!(
                "cascade: extension has {} entries, expected {}",
                chi.len(),
                self.dim()
            )));
        }
        let s = &self.spec;
        let k = s.k - 1;
        let p = self.parts(chi);
        let (yv, uv) = (y.as_slice(), u.as_slice());
        let dx2 = &s.a2 * DVector::from_column_slice(p.x2) + (s.f2)(yv, uv);
        let dx3 = &s.a3 * DVector::from_column_slice(p.x3) + (s.f3)(yv, p.x2, uv);
        let dxi = (s.f4)(yv, p.x2, p.x3, uv);
        let b = (s.b)(yv, p.x2, p.x3, uv);
        let xi = DVector::from_column_slice(p.xi);
        let f1k = (s.f1)(yv, p.x2, p.x3, uv)[k];

        let psi = DVector::from_column_slice(p.z_b);
        let big_y = RealVec::from_element(1, self.alpha * (y[k] - p.z_y) - p.z_f1 - p.z_bxi);
        let m = DMatrix::from_row_slice(1, psi.len(), psi.as_slice());
        let gain = if self.gamma.len() == 1 {
            RealVec::from_element(psi.len(), self.gamma[0])
        } else {
            self.gamma.clone()
        };
        let dtheta = gradient_rate(&gain, &m, &big_y, &DVector::from_column_slice(p.theta))?;

        let a = self.alpha;
        let mut out = RealVec::zeros(self.dim());
        let mut at = 0;
        for block in [dx2, dx3, dxi, dtheta] {
            out.rows_mut(at, block.len()).copy_from(&block);
            at += block.len();
        }
        out[at] = FilterState::rate(a, p.z_y, y[k]);
        out[at + 1] = FilterState::rate(a, p.z_f1, f1k);
        out[at + 2] = FilterState::rate(a, p.z_bxi, b.dot(&xi));
        for i in 0..b.len() {
            out[at + 3 + i] = FilterState::rate(a, p.z_b[i], b[i]);
        }
        Ok(out)
    }
    fn estimate(&self, chi: &RealVec, y: &RealVec, _u: &RealVec) -> Result<RealVec> {
        let p = self.parts(chi);
        let x4 = DVector::from_column_slice(p.xi) + DVector::from_column_slice(p.theta);
        let mut out = RealVec::zeros(self.spec.n());
        let mut at = 0;
        for block in [y.as_slice(), p.x2, p.x3, x4.as_slice()] {
            out.rows_mut(at, block.len()).copy_from_slice(block);
            at += block.len();
        }
        Ok(out)
    }
    fn theta_hat(&self, chi: &RealVec) -> Option<RealVec> {
        Some(DVector::from_column_slice(self.parts(chi).theta))
    }
    fn true_theta(&self, chi: &RealVec, x: &RealVec) -> Option<RealVec> {
        let [_, _, _, x4] = self.spec.blocks(x.as_slice());
        Some(DVector::from_column_slice(x4) - DVector::from_column_slice(self.parts(chi).xi))
    }
    fn on_manifold_state(&self, x: &RealVec, _u: &RealVec) -> Option<RealVec> {
        let [x1, x2, x3, x4] = self.spec.blocks(x.as_slice());
        let [_, n2, n3, n4] = self.spec.dims;
        let mut chi = RealVec::zeros(self.dim());
        chi.rows_mut(0, n2).copy_from_slice(x2);
        chi.rows_mut(n2, n3).copy_from_slice(x3);
        chi.rows_mut(n2 + n3 + n4, n4).copy_from_slice(x4);
        if self.prime_filters {
            chi[n2 + n3 + 2 * n4] = x1[self.spec.k - 1];
        }
        Some(chi)
    }
}

pub fn cascade_observer(system: &CascadeSystem, gains: &CascadeGains) -> Result<Arc<dyn Observer>> {
    let n4 = system.spec.dims[3];
    if !(gains.alpha > 0.0) {
        return Err(Error::config(format!(
            "cascade filter pole must be positive, got {}",
            gains.alpha
        )));
    }
    if !(gains.gamma.len() == 1 || gains.gamma.len() == n4)
        || gains.gamma.iter().any(|g| !(*g > 0.0))
    {
        return Err(Error::config(
            "cascade estimator gain must be positive with 1 or n4 entries",
        ));
    }
    Ok(Arc::new(CascadeObserver {
        spec: system.spec.clone(),
        alpha: gains.alpha,
        gamma: gains.gamma.clone(),
        prime_filters: gains.prime_filters,
    }))
}
