//! Fixed-step integration, first-order LTI regressor filters, the gradient
//! estimator, finite-difference Jacobians and sampled measurement noise.
//!
//! Everything here is a pure function over explicit state so that whole
//! simulations stay deterministic and can be replayed bit for bit.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Real vector used for states, outputs, inputs and parameters.
pub type RealVec = DVector<f64>;

/// Default relative finite-difference step.
pub const FD_STEP: f64 = 1e-6;

pub(crate) fn all_finite(v: &RealVec) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Errors out with the offending state if any entry of `x` is NaN or infinite.
pub fn ensure_finite(x: &RealVec, t: f64) -> Result<()> {
    if all_finite(x) {
        Ok(())
    } else {
        Err(Error::IntegrationBlowup {
            t,
            state: x.iter().copied().collect(),
        })
    }
}

/// One classical fourth-order Runge-Kutta step of `x' = field(t, x)`.
///
/// Inputs that drive the field are captured by the closure. The update is
/// computed component-wise, so stacking independent systems into one vector
/// gives exactly the same numbers for every block as integrating it alone.
pub fn rk4_step<F>(mut field: F, x: &RealVec, t: f64, dt: f64) -> Result<RealVec>
where
    F: FnMut(f64, &RealVec) -> Result<RealVec>,
{
    if !(dt > 0.0) {
        return Err(Error::config(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let half = 0.5 * dt;
    let k1 = field(t, x)?;
    let k2 = field(t + half, &(x + &k1 * half))?;
    let k3 = field(t + half, &(x + &k2 * half))?;
    let k4 = field(t + dt, &(x + &k3 * dt))?;
    if k1.len() != x.len() || k2.len() != x.len() || k3.len() != x.len() || k4.len() != x.len() {
        return Err(Error::config("vector field changed the state dimension"));
    }
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    ensure_finite(&next, t + dt)?;
    Ok(next)
}

/// State of the first-order filter `F(p) = alpha / (p + alpha)`.
///
/// The companion `W(p) = alpha p / (p + alpha)` shares the same state through
/// `W[u] = alpha (u - F[u])`, a dirty derivative that never differentiates `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub alpha: f64,
    pub z: f64,
}

impl FilterState {
    pub fn new(alpha: f64, z: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::config(format!(
                "filter pole alpha must be positive, got {alpha}"
            )));
        }
        if !z.is_finite() {
            return Err(Error::config("filter state must be finite"));
        }
        Ok(Self { alpha, z })
    }

    /// Time derivative of the internal state for the input `u_in`.
    #[inline]
    pub fn rate(alpha: f64, z: f64, u_in: f64) -> f64 {
        alpha * (u_in - z)
    }

    /// Output of `F` (the state itself).
    #[inline]
    pub fn f_output(&self) -> f64 {
        self.z
    }

    /// Output of `W` for the current input.
    #[inline]
    pub fn w_output(&self, u_in: f64) -> f64 {
        self.alpha * (u_in - self.z)
    }

    fn advance(self, u_in: f64, dt: f64) -> Result<Self> {
        let alpha = self.alpha;
        let z = rk4_step(
            |_, z| Ok(RealVec::from_element(1, Self::rate(alpha, z[0], u_in))),
            &RealVec::from_element(1, self.z),
            0.0,
            dt,
        )?;
        Ok(Self { alpha, z: z[0] })
    }
}

/// Advances `z' = alpha (u_in - z)` by one RK4 step and returns `F[u]`.
pub fn filter_f_step(fs: FilterState, u_in: f64, dt: f64) -> Result<(FilterState, f64)> {
    let next = fs.advance(u_in, dt)?;
    Ok((next, next.f_output()))
}

/// Advances the shared filter state and returns `W[u] = alpha (u - F[u])`.
pub fn filter_w_step(fs: FilterState, u_in: f64, dt: f64) -> Result<(FilterState, f64)> {
    let next = fs.advance(u_in, dt)?;
    Ok((next, next.w_output(u_in)))
}

/// Gradient estimator for the linear regression `Y = M theta`.
///
/// `gain` holds the diagonal of the adaptation gain matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimatorState {
    pub theta_hat: RealVec,
    pub gain: RealVec,
}

impl GradientEstimatorState {
    pub fn new(theta_hat: RealVec, gain: RealVec) -> Result<Self> {
        if theta_hat.len() != gain.len() {
            return Err(Error::config(format!(
                "estimator has {} parameters but {} gains",
                theta_hat.len(),
                gain.len()
            )));
        }
        if gain.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::config("estimator gains must be positive"));
        }
        if !all_finite(&theta_hat) {
            return Err(Error::config("initial estimate must be finite"));
        }
        Ok(Self { theta_hat, gain })
    }

    /// Scalar-gain convenience constructor.
    pub fn scalar(theta_hat: f64, gamma: f64) -> Result<Self> {
        Self::new(
            RealVec::from_element(1, theta_hat),
            RealVec::from_element(1, gamma),
        )
    }
}

/// `theta_hat' = Gamma M^T (Y - M theta_hat)`.
pub fn gradient_rate(
    gain: &RealVec,
    m: &DMatrix<f64>,
    y: &RealVec,
    theta_hat: &RealVec,
) -> Result<RealVec> {
    if m.ncols() != theta_hat.len() || m.nrows() != y.len() || gain.len() != theta_hat.len() {
        return Err(Error::config(format!(
            "regressor is {}x{}, measurement has {} rows, estimate has {} entries",
            m.nrows(),
            m.ncols(),
            y.len(),
            theta_hat.len()
        )));
    }
    let residual = y - m * theta_hat;
    Ok((m.transpose() * residual).component_mul(gain))
}

/// One RK4 step of the gradient estimator with the regressor held over the step.
pub fn gradient_step(
    ge: &GradientEstimatorState,
    m: &DMatrix<f64>,
    y: &RealVec,
    dt: f64,
) -> Result<GradientEstimatorState> {
    gradient_rate(&ge.gain, m, y, &ge.theta_hat)?;
    let theta_hat = rk4_step(
        |_, th| gradient_rate(&ge.gain, m, y, th),
        &ge.theta_hat,
        0.0,
        dt,
    )?;
    Ok(GradientEstimatorState {
        theta_hat,
        gain: ge.gain.clone(),
    })
}

/// Central-difference Jacobian, entry `(i, j) = d g_i / d x_j`.
///
/// The step for coordinate `j` is `max(h, h |x_j|)`. The divisor is the step
/// actually realised in floating point, which removes the rounding of `x +- h`
/// from the quotient.
pub fn fd_jacobian<G>(mut g: G, x: &RealVec, h: f64) -> Result<DMatrix<f64>>
where
    G: FnMut(&RealVec) -> Result<RealVec>,
{
    if !(h > 0.0) {
        return Err(Error::config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let check = |v: &RealVec, at: &RealVec| -> Result<()> {
        if all_finite(v) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                what: "finite-difference sample".into(),
                at: at.iter().copied().collect(),
            })
        }
    };
    let mut columns: Vec<RealVec> = Vec::with_capacity(x.len());
    let mut rows = None;
    for j in 0..x.len() {
        let step = h.max(h * x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] = x[j] + step;
        xm[j] = x[j] - step;
        let span = xp[j] - xm[j];
        let gp = g(&xp)?;
        check(&gp, &xp)?;
        let gm = g(&xm)?;
        check(&gm, &xm)?;
        if *rows.get_or_insert(gp.len()) != gp.len() || gp.len() != gm.len() {
            return Err(Error::config("mapping changed its output dimension"));
        }
        columns.push((gp - gm) / span);
    }
    let nrows = match rows {
        Some(r) => r,
        None => g(x)?.len(),
    };
    Ok(DMatrix::from_fn(nrows, x.len(), |i, j| columns[j][i]))
}

/// Bounded uniform measurement noise, zero-order held between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub amplitude: RealVec,
    pub sample_period: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(amplitude: RealVec, sample_period: f64, seed: u64) -> Result<Self> {
        if amplitude.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::config(
                "noise amplitudes must be finite and non-negative",
            ));
        }
        if !(sample_period > 0.0) || !sample_period.is_finite() {
            return Err(Error::config("noise sample period must be positive"));
        }
        Ok(Self {
            amplitude,
            sample_period,
            seed,
        })
    }

    /// Index of the hold interval containing `t`.
    pub fn sample_index(&self, t: f64) -> u64 {
        // tolerate t = k * period landing a hair below the boundary
        let k = (t / self.sample_period * (1.0 + 1e-12) + 1e-9).floor();
        if k <= 0.0 {
            0
        } else {
            k as u64
        }
    }

    /// Noise vector for the `k`-th hold interval.
    pub fn sample_at(&self, k: u64) -> RealVec {
        let channels = self.amplitude.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // each f64 draw consumes two 32-bit words of the keystream
        rng.set_word_pos(u128::from(k) * channels as u128 * 2);
        RealVec::from_fn(channels, |i, _| {
            let v: f64 = rng.random();
            self.amplitude[i] * (2.0 * v - 1.0)
        })
    }
}

/// Noise seen by the measurement channels at time `t`.
pub fn noise_sample(ns: &NoiseSpec, t: f64) -> RealVec {
    ns.sample_at(ns.sample_index(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> RealVec {
        RealVec::from_column_slice(xs)
    }

    #[test]
    fn rk4_zero_field_keeps_state() {
        let x = rk4_step(|_, x| Ok(RealVec::zeros(x.len())), &v(&[3.5]), 0.0, 0.1).unwrap();
        assert_eq!(x[0], 3.5);
    }

    #[test]
    fn rk4_exponential_decay() {
        let x = rk4_step(|_, x| Ok(-x), &v(&[1.0]), 0.0, 0.1).unwrap();
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn rk4_harmonic_oscillator_full_turn() {
        let dt = 1e-3;
        let n = (2.0 * core::f64::consts::PI / dt).round() as usize;
        // land exactly on 2 pi with a final partial step
        let mut x = v(&[1.0, 0.0]);
        let mut t = 0.0;
        for _ in 0..n - 1 {
            x = rk4_step(|_, x| Ok(v(&[x[1], -x[0]])), &x, t, dt).unwrap();
            t += dt;
        }
        let last = 2.0 * core::f64::consts::PI - t;
        x = rk4_step(|_, x| Ok(v(&[x[1], -x[0]])), &x, t, last).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && x[1].abs() < 1e-6, "{x}");
    }

    #[test]
    fn rk4_rejects_bad_step_and_blowup() {
        assert!(matches!(
            rk4_step(|_, x| Ok(x.clone()), &v(&[1.0]), 0.0, 0.0),
            Err(Error::Config(_))
        ));
        let err = rk4_step(|_, x| Ok(x * f64::INFINITY), &v(&[1.0]), 2.0, 0.1).unwrap_err();
        assert!(matches!(err, Error::IntegrationBlowup { t, .. } if (t - 2.1).abs() < 1e-12));
    }

    #[test]
    fn f_filter_limits_and_equilibrium() {
        let mut fs = FilterState::new(2.0, 0.0).unwrap();
        let mut out = 0.0;
        for _ in 0..10_000 {
            (fs, out) = filter_f_step(fs, 3.0, 1e-3).unwrap();
        }
        assert!((out - 3.0).abs() < 1e-6);

        let mut fs = FilterState::new(2.0, 1.5).unwrap();
        for _ in 0..100 {
            (fs, out) = filter_f_step(fs, 1.5, 1e-2).unwrap();
        }
        assert_eq!(out, 1.5);
    }

    #[test]
    fn f_filter_free_response() {
        let alpha = 0.7;
        let dt = 1e-3;
        let mut fs = FilterState::new(alpha, 1.0).unwrap();
        let mut out = 1.0;
        for _ in 0..2000 {
            (fs, out) = filter_f_step(fs, 0.0, dt).unwrap();
        }
        assert!((out - (-alpha * 2.0).exp()).abs() < 1e-6);
    }

    #[test]
    fn w_filter_responses() {
        let mut fs = FilterState::new(1.3, 4.0).unwrap();
        let (_, w) = filter_w_step(fs, 4.0, 1e-3).unwrap();
        assert_eq!(w, 0.0);

        fs = FilterState::new(1.3, 0.0).unwrap();
        let mut w = 0.0;
        for _ in 0..1500 {
            (fs, w) = filter_w_step(fs, 2.0, 1e-3).unwrap();
        }
        assert!((w - 1.3 * 2.0 * (-1.3f64 * 1.5).exp()).abs() < 1e-6);
    }

    #[test]
    fn filter_rejects_nonpositive_pole() {
        assert!(FilterState::new(0.0, 0.0).is_err());
        assert!(FilterState::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn gradient_without_excitation_is_frozen() {
        let ge = GradientEstimatorState::scalar(0.4, 3.0).unwrap();
        let next = gradient_step(&ge, &DMatrix::zeros(1, 1), &v(&[7.0]), 0.1).unwrap();
        assert_eq!(next.theta_hat[0], 0.4);
    }

    #[test]
    fn gradient_scalar_convergence() {
        let mut ge = GradientEstimatorState::scalar(0.0, 1.0).unwrap();
        let m = DMatrix::from_element(1, 1, 1.0);
        let y = v(&[2.0]);
        for _ in 0..1000 {
            ge = gradient_step(&ge, &m, &y, 1e-3).unwrap();
        }
        assert!((ge.theta_hat[0] - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-6);
    }

    #[test]
    fn gradient_consistent_measurement_is_invariant() {
        let theta = v(&[1.5, -0.25]);
        let m = DMatrix::from_row_slice(2, 2, &[0.3, 2.0, -1.0, 0.5]);
        let y = &m * &theta;
        let ge = GradientEstimatorState::new(theta.clone(), v(&[5.0, 0.1])).unwrap();
        let next = gradient_step(&ge, &m, &y, 0.05).unwrap();
        assert!((next.theta_hat - theta).amax() < 1e-15);
    }

    #[test]
    fn gradient_dimension_mismatch() {
        let ge = GradientEstimatorState::scalar(0.0, 1.0).unwrap();
        let err = gradient_step(&ge, &DMatrix::zeros(2, 2), &v(&[1.0]), 0.1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn fd_jacobian_linear_map() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, -7.25]);
        let j = fd_jacobian(|x| Ok(&a * x), &v(&[0.3, -0.2, 0.5]), FD_STEP).unwrap();
        assert!((j - a).amax() < 1e-9);
    }

    #[test]
    fn fd_jacobian_quadratic_map() {
        let j = fd_jacobian(
            |x| Ok(v(&[x[0] * x[0], x[0] * x[1]])),
            &v(&[1.0, 2.0]),
            FD_STEP,
        )
        .unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 2.0, 1.0]);
        assert!((j - expected).amax() < 1e-6);
    }

    #[test]
    fn fd_jacobian_constant_map_and_nonfinite() {
        let j = fd_jacobian(|_| Ok(v(&[4.0, 5.0])), &v(&[1.0, 1.0, 1.0]), FD_STEP).unwrap();
        assert_eq!(j, DMatrix::zeros(2, 3));
        let err = fd_jacobian(
            |x| Ok(v(&[if x[0] > 1.0 { f64::NAN } else { x[0] }])),
            &v(&[1.0]),
            FD_STEP,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn noise_zero_amplitude_and_determinism() {
        let quiet = NoiseSpec::new(v(&[0.0, 0.0]), 1e-4, 7).unwrap();
        assert_eq!(noise_sample(&quiet, 0.123), RealVec::zeros(2));

        let ns = NoiseSpec::new(v(&[0.02, 2e-4]), 1e-4, 7).unwrap();
        assert_eq!(noise_sample(&ns, 0.5), noise_sample(&ns, 0.5));
        // held within one sample interval
        assert_eq!(noise_sample(&ns, 0.50001), noise_sample(&ns, 0.50009));
        assert_ne!(noise_sample(&ns, 0.5), noise_sample(&ns, 0.5001));
        let other = NoiseSpec::new(v(&[0.02, 2e-4]), 1e-4, 8).unwrap();
        assert_ne!(noise_sample(&ns, 0.5), noise_sample(&other, 0.5));
    }

    #[test]
    fn noise_bounds_and_mean() {
        let amp = [0.02, 2e-4];
        let ns = NoiseSpec::new(v(&amp), 1e-4, 42).unwrap();
        let n = 100_000u64;
        let mut sum = [0.0; 2];
        for k in 0..n {
            let s = ns.sample_at(k);
            for c in 0..2 {
                assert!(s[c].abs() <= amp[c]);
                sum[c] += s[c];
            }
        }
        for c in 0..2 {
            // uniform on [-a, a]: variance a^2 / 3
            let sigma_mean = amp[c] / 3f64.sqrt() / (n as f64).sqrt();
            assert!((sum[c] / n as f64).abs() < 3.0 * sigma_mean);
        }
    }

    #[test]
    fn noise_rejects_bad_spec() {
        assert!(NoiseSpec::new(v(&[-0.1]), 1e-4, 0).is_err());
        assert!(NoiseSpec::new(v(&[0.1]), 0.0, 0).is_err());
    }
}
