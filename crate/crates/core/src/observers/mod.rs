//! Observer algorithms.
//!
//! Every observer is a dynamic extension `chi' = F(y, chi, u)` with an
//! estimate map `x_hat = H(y, chi, u)`. The simulator integrates it jointly
//! with the plant, and [`ObserverInstance`] steps it alone with `y` and `u`
//! held over the step.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{fd_jacobian, gradient_rate, rk4_step, FilterState, RealVec, FD_STEP};

mod acad3;
mod cascade;
mod cuk;
mod iio;

pub use acad3::{acad3_observer, acad3_triple, Acad3Gains, Acad3Regression};
pub use cascade::{cascade_observer, CascadeGains, CascadeObserver};
pub use cuk::{
    cuk_iio_generic, cuk_kkl_pebo_triple, cuk_kklo_triple, cuk_observer, cuk_pebo_triple, CukGains,
    CukIio, CukKklPeboRegression, CukObserverId, CukPeboRegression, HgoLin, HgoTv, IioVariant,
    KklPeboYVariant,
};
pub use iio::{IioGeneric, IioMaps};

/// Maps a vector to a vector.
pub type Map = Arc<dyn Fn(&RealVec) -> RealVec + Send + Sync>;
/// Maps a vector to a matrix.
pub type JacobianMap = Arc<dyn Fn(&RealVec) -> DMatrix<f64> + Send + Sync>;
/// Maps `(a, b)` to a vector.
pub type Map2 = Arc<dyn Fn(&RealVec, &RealVec) -> RealVec + Send + Sync>;

/// A dynamic observer `chi' = F(y, chi, u)`, `x_hat = H(y, chi, u)`.
pub trait Observer: Send + Sync {
    fn name(&self) -> &str;
    /// Dimension of `chi`.
    fn dim(&self) -> usize;
    /// Plant state dimension.
    fn n_x(&self) -> usize;
    /// Default initial extension given the first measurement and input.
    fn initial_state(&self, y0: &RealVec, u0: &RealVec) -> RealVec;
    fn derivative(&self, chi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec>;
    fn estimate(&self, chi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec>;
    fn theta_hat(&self, _chi: &RealVec) -> Option<RealVec> {
        None
    }
    /// `theta` consistent with the plant state `x` and the current `chi`.
    fn true_theta(&self, _chi: &RealVec, _x: &RealVec) -> Option<RealVec> {
        None
    }
    /// Off-the-manifold coordinate `beta(y, chi) - phi(x)`.
    fn off_manifold(&self, _chi: &RealVec, _y: &RealVec, _x: &RealVec) -> Option<RealVec> {
        None
    }
    /// An extension that reproduces `x` exactly (on the manifold, `theta_hat = theta`).
    fn on_manifold_state(&self, _x: &RealVec, _u: &RealVec) -> Option<RealVec> {
        None
    }
}

/// An observer together with its current extension.
#[derive(Clone)]
pub struct ObserverInstance {
    pub observer: Arc<dyn Observer>,
    pub chi: RealVec,
}

impl ObserverInstance {
    pub fn new(observer: Arc<dyn Observer>, y0: &RealVec, u0: &RealVec) -> Self {
        let chi = observer.initial_state(y0, u0);
        Self { observer, chi }
    }

    pub fn with_state(observer: Arc<dyn Observer>, chi: RealVec) -> Result<Self> {
        if chi.len() != observer.dim() {
            return Err(Error::config(format!(
                "{}: extension has {} entries, expected {}",
                observer.name(),
                chi.len(),
                observer.dim()
            )));
        }
        Ok(Self { observer, chi })
    }

    /// One RK4 step with `y` and `u` held constant over `[t, t + dt]`.
    pub fn step(&mut self, y: &RealVec, u: &RealVec, t: f64, dt: f64) -> Result<()> {
        let obs = &self.observer;
        self.chi = rk4_step(|_, c| obs.derivative(c, y, u), &self.chi, t, dt)?;
        Ok(())
    }

    pub fn estimate(&self, y: &RealVec, u: &RealVec) -> Result<RealVec> {
        self.observer.estimate(&self.chi, y, u)
    }
}

/// A candidate solution `(phi, Lambda, B, phi_left)` of the design equation
///
/// ```text
/// dphi/dx f(x, u) = P^T diag(Lambda_L(u), 0) P phi(x) + B(h(x), u)
/// ```
///
/// The first `q` rotated coordinates form the Luenberger block, the rest the
/// parameter-estimation block.
#[derive(Clone)]
pub struct DesignTriple {
    pub name: String,
    pub n_x: usize,
    pub n_xi: usize,
    pub q: usize,
    pub phi: Map,
    pub phi_jacobian: Option<JacobianMap>,
    /// Diagonal of `Lambda_L` as a function of `u`.
    pub lambda_l: Map,
    /// `B(y, u)`.
    pub b_map: Map2,
    /// `phi_left(xi, y)`.
    pub phi_left: Map2,
    /// Orthogonal `P`; `None` is the identity.
    pub rotation: Option<DMatrix<f64>>,
    /// Indices of the measured states (outputs are partial states).
    pub measured: Vec<usize>,
}

impl DesignTriple {
    pub fn validate(&self) -> Result<()> {
        if self.q > self.n_xi {
            return Err(Error::config(format!(
                "{}: q = {} exceeds n_xi = {}",
                self.name, self.q, self.n_xi
            )));
        }
        if let Some(p) = &self.rotation {
            if p.nrows() != self.n_xi || p.ncols() != self.n_xi {
                return Err(Error::config(format!(
                    "{}: P must be {n}x{n}",
                    self.name,
                    n = self.n_xi
                )));
            }
            let defect = (p.transpose() * p - DMatrix::identity(self.n_xi, self.n_xi)).amax();
            if defect > 1e-12 {
                return Err(Error::config(format!(
                    "{}: P is not orthogonal (defect {defect:e})",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// `dphi/dx`, analytic when registered.
    pub fn jacobian(&self, x: &RealVec) -> Result<DMatrix<f64>> {
        match &self.phi_jacobian {
            Some(j) => Ok(j(x)),
            None => self.fd_jacobian(x),
        }
    }

    pub fn fd_jacobian(&self, x: &RealVec) -> Result<DMatrix<f64>> {
        fd_jacobian(|z| Ok((self.phi)(z)), x, FD_STEP)
    }

    /// `Lambda` in the rotated coordinates.
    pub fn lambda_rotated(&self, u: &RealVec) -> DMatrix<f64> {
        let l = (self.lambda_l)(u);
        DMatrix::from_fn(self.n_xi, self.n_xi, |i, j| {
            if i == j && i < self.q {
                l[i]
            } else {
                0.0
            }
        })
    }

    /// `A(u) = P^T diag(Lambda_L(u), 0) P` in the original coordinates.
    pub fn lambda_matrix(&self, u: &RealVec) -> DMatrix<f64> {
        let l = self.lambda_rotated(u);
        match &self.rotation {
            Some(p) => p.transpose() * l * p,
            None => l,
        }
    }

    /// Checks `Lambda_L(u) < 0` for the given inputs and `phi_left(phi(x), h(x)) = x`
    /// within `1e-8` on the given states.
    pub fn check_structure<'a>(
        &self,
        states: impl IntoIterator<Item = &'a RealVec>,
        inputs: impl IntoIterator<Item = &'a RealVec>,
    ) -> Result<()> {
        self.validate()?;
        for u in inputs {
            let l = (self.lambda_l)(u);
            if l.len() != self.q || l.iter().any(|v| !(*v < 0.0)) {
                return Err(Error::config(format!(
                    "{}: Lambda_L must have {} strictly negative entries, got {:?}",
                    self.name,
                    self.q,
                    l.as_slice()
                )));
            }
        }
        for x in states {
            let back = (self.phi_left)(&(self.phi)(x), &self.output(x));
            let gap = (&back - x).amax();
            if !(gap <= 1e-8 * x.amax().max(1.0)) {
                return Err(Error::config(format!(
                    "{}: phi_left is not a left inverse at {:?} (gap {gap:e})",
                    self.name,
                    x.as_slice()
                )));
            }
        }
        Ok(())
    }

    pub fn output(&self, x: &RealVec) -> RealVec {
        RealVec::from_iterator(self.measured.len(), self.measured.iter().map(|&i| x[i]))
    }

    pub(crate) fn rotate(&self, v: RealVec) -> RealVec {
        rotate(&self.rotation, v)
    }

    pub(crate) fn unrotate(&self, v: RealVec) -> RealVec {
        match &self.rotation {
            Some(p) => p.transpose() * v,
            None => v,
        }
    }
}

fn rotate(p: &Option<DMatrix<f64>>, v: RealVec) -> RealVec {
    match p {
        Some(p) => p * v,
        None => v,
    }
}

/// Filtered regression `Y = M theta` driving the gradient estimator.
///
/// Filter states are part of the observer extension. `xi` handed to the
/// regression is the extension in the original (unrotated) coordinates.
pub trait Regression: Send + Sync {
    fn n_theta(&self) -> usize;
    fn n_filters(&self) -> usize;
    fn alpha(&self) -> f64;
    /// Diagonal of `Gamma`.
    fn gain(&self) -> RealVec;
    fn initial_filters(&self, y0: &RealVec, u0: &RealVec) -> RealVec;
    /// Initial estimator state.
    fn initial_estimate(&self) -> RealVec {
        RealVec::zeros(self.n_theta())
    }
    /// Signals fed to each filter.
    fn filter_inputs(&self, xi: &RealVec, y: &RealVec, u: &RealVec) -> RealVec;
    /// `(Y, M)` from the filter states and the current signals.
    fn assemble(
        &self,
        z: &RealVec,
        xi: &RealVec,
        y: &RealVec,
        u: &RealVec,
    ) -> (RealVec, DMatrix<f64>);
    /// `theta` from the estimator state.
    fn theta(&self, estimate: &RealVec) -> RealVec {
        estimate.clone()
    }
    /// Estimator state that represents `theta`.
    fn estimate_of(&self, theta: &RealVec) -> RealVec {
        theta.clone()
    }
}

fn filter_rates(alpha: f64, z: &RealVec, inputs: &RealVec) -> RealVec {
    RealVec::from_fn(z.len(), |i, _| FilterState::rate(alpha, z[i], inputs[i]))
}

fn check_len(name: &str, what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::config(format!(
            "{name}: {what} has {got} entries, expected {want}"
        )));
    }
    Ok(())
}

/// Luenberger-type observer `xi' = Lambda xi + B(y, u)`, `x_hat = phi_left(xi, y)` (`q = n_xi`).
#[derive(Clone)]
pub struct Kklo {
    pub triple: DesignTriple,
}

impl Kklo {
    pub fn new(triple: DesignTriple) -> Result<Self> {
        triple.validate()?;
        if triple.q != triple.n_xi {
            return Err(Error::config(format!(
                "{}: a pure Luenberger observer needs q = n_xi, got q = {}",
                triple.name, triple.q
            )));
        }
        Ok(Self { triple })
    }
}

impl Observer for Kklo {
    fn name(&self) -> &str {
        &self.triple.name
    }
    fn dim(&self) -> usize {
        self.triple.n_xi
    }
    fn n_x(&self) -> usize {
        self.triple.n_x
    }
    fn initial_state(&self, _y0: &RealVec, _u0: &RealVec) -> RealVec {
        RealVec::zeros(self.triple.n_xi)
    }
    fn derivative(&self, chi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec> {
        let d = &self.triple;
        check_len(&d.name, "extension", chi.len(), d.n_xi)?;
        let lambda = (d.lambda_l)(u);
        let b = d.rotate((d.b_map)(y, u));
        Ok(RealVec::from_fn(d.n_xi, |i, _| lambda[i] * chi[i] + b[i]))
    }
    fn estimate(&self, chi: &RealVec, y: &RealVec, _u: &RealVec) -> Result<RealVec> {
        let d = &self.triple;
        Ok((d.phi_left)(&d.unrotate(chi.clone()), y))
    }
    fn off_manifold(&self, chi: &RealVec, _y: &RealVec, x: &RealVec) -> Option<RealVec> {
        Some(chi - self.triple.rotate((self.triple.phi)(x)))
    }
    fn on_manifold_state(&self, x: &RealVec, _u: &RealVec) -> Option<RealVec> {
        Some(self.triple.rotate((self.triple.phi)(x)))
    }
}

/// Layout of the parameter-estimation observers' extension:
/// `chi = (xi, estimate, filters)`.
fn split(chi: &RealVec, n_xi: usize, n_theta: usize) -> (RealVec, RealVec, RealVec) {
    let xi = chi.rows(0, n_xi).into_owned();
    let est = chi.rows(n_xi, n_theta).into_owned();
    let z = chi
        .rows(n_xi + n_theta, chi.len() - n_xi - n_theta)
        .into_owned();
    (xi, est, z)
}

fn join(parts: &[&RealVec]) -> RealVec {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = RealVec::zeros(n);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}

/// Parameter-estimation-based observer (`q = 0`):
/// `xi' = B(y, u)`, `x_hat = phi_left(xi + theta_hat, y)`.
#[derive(Clone)]
pub struct Pebo {
    pub triple: DesignTriple,
    pub regression: Arc<dyn Regression>,
}

impl Pebo {
    pub fn new(triple: DesignTriple, regression: Arc<dyn Regression>) -> Result<Self> {
        triple.validate()?;
        if triple.q != 0 {
            return Err(Error::config(format!(
                "{}: a pure estimation-based observer needs q = 0, got q = {}",
                triple.name, triple.q
            )));
        }
        if regression.n_theta() != triple.n_xi {
            return Err(Error::config(format!(
                "{}: regression estimates {} parameters for {} coordinates",
                triple.name,
                regression.n_theta(),
                triple.n_xi
            )));
        }
        Ok(Self { triple, regression })
    }
}

impl Observer for Pebo {
    fn name(&self) -> &str {
        &self.triple.name
    }
    fn dim(&self) -> usize {
        self.triple.n_xi + self.regression.n_theta() + self.regression.n_filters()
    }
    fn n_x(&self) -> usize {
        self.triple.n_x
    }
    fn initial_state(&self, y0: &RealVec, u0: &RealVec) -> RealVec {
        let r = &self.regression;
        join(&[
            &RealVec::zeros(self.triple.n_xi),
            &r.initial_estimate(),
            &r.initial_filters(y0, u0),
        ])
    }
    fn derivative(&self, chi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec> {
        let (d, r) = (&self.triple, &self.regression);
        check_len(&d.name, "extension", chi.len(), self.dim())?;
        let (xi, est, z) = split(chi, d.n_xi, r.n_theta());
        let dxi = d.rotate((d.b_map)(y, u));
        let xi_orig = d.unrotate(xi);
        let (big_y, m) = r.assemble(&z, &xi_orig, y, u);
        let dest = gradient_rate(&r.gain(), &m, &big_y, &est)?;
        let dz = filter_rates(r.alpha(), &z, &r.filter_inputs(&xi_orig, y, u));
        Ok(join(&[&dxi, &dest, &dz]))
    }
    fn estimate(&self, chi: &RealVec, y: &RealVec, _u: &RealVec) -> Result<RealVec> {
        let (d, r) = (&self.triple, &self.regression);
        let (xi, est, _) = split(chi, d.n_xi, r.n_theta());
        Ok((d.phi_left)(&d.unrotate(xi + r.theta(&est)), y))
    }
    fn theta_hat(&self, chi: &RealVec) -> Option<RealVec> {
        let r = &self.regression;
        Some(r.theta(&chi.rows(self.triple.n_xi, r.n_theta()).into_owned()))
    }
    fn true_theta(&self, chi: &RealVec, x: &RealVec) -> Option<RealVec> {
        let d = &self.triple;
        Some(d.rotate((d.phi)(x)) - chi.rows(0, d.n_xi))
    }
    fn off_manifold(&self, chi: &RealVec, _y: &RealVec, x: &RealVec) -> Option<RealVec> {
        let d = &self.triple;
        let beta = chi.rows(0, d.n_xi) + self.theta_hat(chi)?;
        Some(beta - d.rotate((d.phi)(x)))
    }
    fn on_manifold_state(&self, x: &RealVec, u: &RealVec) -> Option<RealVec> {
        let (d, r) = (&self.triple, &self.regression);
        let theta = d.rotate((d.phi)(x));
        let y0 = d.output(x);
        Some(join(&[
            &RealVec::zeros(d.n_xi),
            &r.estimate_of(&theta),
            &r.initial_filters(&y0, u),
        ]))
    }
}

/// Combined observer with `0 <= q <= n_xi`:
///
/// ```text
/// xi_L' = Lambda_L xi_L + (P B)_L
/// xi_P' = (P B)_P
/// x_hat = phi_left(P^T (xi + col(0, theta_hat)), y)
/// ```
///
/// For `q = n_xi` and `q = 0` it performs the same floating-point operations
/// as [`Kklo`] and [`Pebo`].
#[derive(Clone)]
pub struct KklPebo {
    pub triple: DesignTriple,
    pub regression: Option<Arc<dyn Regression>>,
}

impl KklPebo {
    pub fn new(triple: DesignTriple, regression: Option<Arc<dyn Regression>>) -> Result<Self> {
        triple.validate()?;
        let n_p = triple.n_xi - triple.q;
        match &regression {
            Some(r) if r.n_theta() != n_p => {
                return Err(Error::config(format!(
                    "{}: regression estimates {} parameters for a block of size {n_p}",
                    triple.name,
                    r.n_theta()
                )))
            }
            None if n_p != 0 => {
                return Err(Error::config(format!(
                    "{}: q < n_xi needs a regression",
                    triple.name
                )))
            }
            _ => {}
        }
        Ok(Self { triple, regression })
    }

    fn n_theta(&self) -> usize {
        self.regression.as_ref().map_or(0, |r| r.n_theta())
    }

    /// `beta(chi) = xi + col(0, theta_hat)` in rotated coordinates.
    pub fn beta(&self, chi: &RealVec) -> RealVec {
        let d = &self.triple;
        let mut b = chi.rows(0, d.n_xi).into_owned();
        if let Some(r) = &self.regression {
            let th = r.theta(&chi.rows(d.n_xi, r.n_theta()).into_owned());
            for i in 0..th.len() {
                b[d.q + i] += th[i];
            }
        }
        b
    }
}

impl Observer for KklPebo {
    fn name(&self) -> &str {
        &self.triple.name
    }
    fn dim(&self) -> usize {
        self.triple.n_xi
            + self
                .regression
                .as_ref()
                .map_or(0, |r| r.n_theta() + r.n_filters())
    }
    fn n_x(&self) -> usize {
        self.triple.n_x
    }
    fn initial_state(&self, y0: &RealVec, u0: &RealVec) -> RealVec {
        let xi = RealVec::zeros(self.triple.n_xi);
        match &self.regression {
            Some(r) => join(&[&xi, &r.initial_estimate(), &r.initial_filters(y0, u0)]),
            None => xi,
        }
    }
    fn derivative(&self, chi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec> {
        let d = &self.triple;
        check_len(&d.name, "extension", chi.len(), self.dim())?;
        let lambda = (d.lambda_l)(u);
        let b = d.rotate((d.b_map)(y, u));
        let (xi, est, z) = split(chi, d.n_xi, self.n_theta());
        let dxi = RealVec::from_fn(d.n_xi, |i, _| {
            if i < d.q {
                lambda[i] * xi[i] + b[i]
            } else {
                b[i]
            }
        });
        let Some(r) = &self.regression else {
            return Ok(dxi);
        };
        let xi_orig = d.unrotate(xi);
        let (big_y, m) = r.assemble(&z, &xi_orig, y, u);
        let dest = gradient_rate(&r.gain(), &m, &big_y, &est)?;
        let dz = filter_rates(r.alpha(), &z, &r.filter_inputs(&xi_orig, y, u));
        Ok(join(&[&dxi, &dest, &dz]))
    }
    fn estimate(&self, chi: &RealVec, y: &RealVec, _u: &RealVec) -> Result<RealVec> {
        let d = &self.triple;
        Ok((d.phi_left)(&d.unrotate(self.beta(chi)), y))
    }
    fn theta_hat(&self, chi: &RealVec) -> Option<RealVec> {
        let r = self.regression.as_ref()?;
        Some(r.theta(&chi.rows(self.triple.n_xi, r.n_theta()).into_owned()))
    }
    fn true_theta(&self, chi: &RealVec, x: &RealVec) -> Option<RealVec> {
        let d = &self.triple;
        self.regression.as_ref()?;
        let gap = d.rotate((d.phi)(x)) - chi.rows(0, d.n_xi);
        Some(gap.rows(d.q, d.n_xi - d.q).into_owned())
    }
    fn off_manifold(&self, chi: &RealVec, _y: &RealVec, x: &RealVec) -> Option<RealVec> {
        let d = &self.triple;
        Some(self.beta(chi) - d.rotate((d.phi)(x)))
    }
    fn on_manifold_state(&self, x: &RealVec, u: &RealVec) -> Option<RealVec> {
        let d = &self.triple;
        let target = d.rotate((d.phi)(x));
        let Some(r) = &self.regression else {
            return Some(target);
        };
        let mut xi = target.clone();
        let theta = target.rows(d.q, d.n_xi - d.q).into_owned();
        xi.rows_mut(d.q, d.n_xi - d.q).fill(0.0);
        Some(join(&[
            &xi,
            &r.estimate_of(&theta),
            &r.initial_filters(&d.output(x), u),
        ]))
    }
}

#[cfg(test)]
mod tests;
