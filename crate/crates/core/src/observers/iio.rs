use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;

use nalgebra::DMatrix;

use super::{JacobianMap, Map, Map2, Observer};
use crate::error::{Error, Result};
use crate::numerics::{fd_jacobian, RealVec, FD_STEP};
use crate::plants::PlantModel;

/// `(y, chi) -> matrix`.
pub type PairJacobian = Arc<dyn Fn(&RealVec, &RealVec) -> DMatrix<f64> + Send + Sync>;
/// `(y, chi, u) -> R^{n_chi}`.
pub type FreeField = Arc<dyn Fn(&RealVec, &RealVec, &RealVec) -> RealVec + Send + Sync>;

/// Mappings of an immersion-and-invariance observer.
#[derive(Clone)]
pub struct IioMaps {
    pub name: String,
    pub n_chi: usize,
    pub n_z: usize,
    /// `beta(y, chi)`.
    pub beta: Map2,
    /// `d beta / d chi` as an `n_z x n_chi` matrix.
    pub beta_chi_jacobian: Option<PairJacobian>,
    /// `d beta / d y` as an `n_z x p` matrix.
    pub beta_y_jacobian: Option<PairJacobian>,
    pub phi: Map,
    pub phi_jacobian: Option<JacobianMap>,
    /// `phi_left(z, y)`.
    pub phi_left: Map2,
    /// Free vector field projected onto the kernel of `d beta / d chi`.
    pub free: Option<FreeField>,
    /// Default extension from `(y0, u0)`; zero when absent.
    pub initial: Option<Map2>,
    /// Extension on the manifold for a plant state.
    pub on_manifold: Option<Map2>,
}

/// Generalised I&I observer
///
/// ```text
/// chi'  = -J^+ (d beta/dy dh/dx(x_hat) - dphi/dx(x_hat)) f(x_hat, u) + (I - J^+ J) Q(y, chi, u)
/// x_hat = phi_left(beta(y, chi), y),    J = d beta / d chi
/// ```
///
/// `J^+` comes from a singular value decomposition. Singular values below
/// `rank_tol * sigma_max` count as zero, and a rank below `n_z` is an error.
#[derive(Clone)]
pub struct IioGeneric {
    pub maps: IioMaps,
    pub plant: PlantModel,
    pub rank_tol: f64,
}

impl IioGeneric {
    pub fn new(maps: IioMaps, plant: PlantModel) -> Result<Self> {
        if maps.n_chi < maps.n_z {
            return Err(Error::config(format!(
                "{}: n_chi = {} must be at least n_z = {}",
                maps.name, maps.n_chi, maps.n_z
            )));
        }
        Ok(Self {
            maps,
            plant,
            rank_tol: 1e-10,
        })
    }

    pub fn beta(&self, y: &RealVec, chi: &RealVec) -> RealVec {
        (self.maps.beta)(y, chi)
    }

    pub fn beta_chi_jacobian(&self, y: &RealVec, chi: &RealVec) -> Result<DMatrix<f64>> {
        match &self.maps.beta_chi_jacobian {
            Some(j) => Ok(j(y, chi)),
            None => fd_jacobian(|c| Ok((self.maps.beta)(y, c)), chi, FD_STEP),
        }
    }

    pub fn beta_y_jacobian(&self, y: &RealVec, chi: &RealVec) -> Result<DMatrix<f64>> {
        match &self.maps.beta_y_jacobian {
            Some(j) => Ok(j(y, chi)),
            None => fd_jacobian(|v| Ok((self.maps.beta)(v, chi)), y, FD_STEP),
        }
    }

    fn phi_jacobian(&self, x: &RealVec) -> Result<DMatrix<f64>> {
        match &self.maps.phi_jacobian {
            Some(j) => Ok(j(x)),
            None => fd_jacobian(|z| Ok((self.maps.phi)(z)), x, FD_STEP),
        }
    }

    /// `J^+` with the rank condition enforced.
    pub fn pseudo_inverse(
        &self,
        j: &DMatrix<f64>,
        y: &RealVec,
        chi: &RealVec,
    ) -> Result<DMatrix<f64>> {
        let svd = j.clone().svd(true, true);
        let smax = svd.singular_values.amax();
        let tol = self.rank_tol * smax;
        let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
        if rank < self.maps.n_z || !(smax > 0.0) {
            return Err(Error::SingularManifold {
                rank,
                required: self.maps.n_z,
                y: y.iter().copied().collect(),
                chi: chi.iter().copied().collect(),
            });
        }
        svd.pseudo_inverse(tol)
            .map_err(|e| Error::config(format!("{}: {e}", self.maps.name)))
    }
}

impl Observer for IioGeneric {
    fn name(&self) -> &str {
        &self.maps.name
    }
    fn dim(&self) -> usize {
        self.maps.n_chi
    }
    fn n_x(&self) -> usize {
        self.plant.n
    }
    fn initial_state(&self, y0: &RealVec, u0: &RealVec) -> RealVec {
        match &self.maps.initial {
            Some(f) => f(y0, u0),
            None => RealVec::zeros(self.maps.n_chi),
        }
    }
    fn derivative(&self, chi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec> {
        let x_hat = self.estimate(chi, y, u)?;
        let j = self.beta_chi_jacobian(y, chi)?;
        let jy = self.beta_y_jacobian(y, chi)?;
        let pinv = self.pseudo_inverse(&j, y, chi)?;
        let f = self.plant.field(&x_hat, u)?;
        let drift = (jy * self.plant.output_jacobian() - self.phi_jacobian(&x_hat)?) * f;
        let mut rate = -(&pinv * drift);
        if let Some(q) = &self.maps.free {
            let n = self.maps.n_chi;
            let projector = DMatrix::<f64>::identity(n, n) - &pinv * &j;
            rate += projector * q(y, chi, u);
        }
        Ok(rate)
    }
    fn estimate(&self, chi: &RealVec, y: &RealVec, _u: &RealVec) -> Result<RealVec> {
        Ok((self.maps.phi_left)(&self.beta(y, chi), y))
    }
    fn off_manifold(&self, chi: &RealVec, y: &RealVec, x: &RealVec) -> Option<RealVec> {
        Some(self.beta(y, chi) - (self.maps.phi)(x))
    }
    fn on_manifold_state(&self, x: &RealVec, u: &RealVec) -> Option<RealVec> {
        self.maps.on_manifold.as_ref().map(|f| f(x, u))
    }
}
