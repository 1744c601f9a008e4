//! Numerical certificates: design-equation residuals, off-manifold decay,
//! observer coincidence and persistency of excitation.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::numerics::RealVec;
use crate::observers::{DesignTriple, KklPebo, Observer};
use crate::plants::{InputLaw, PlantModel};
use crate::sim::{simulate, SimSettings, SimTrace};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`, the Halton coordinate in `[0, 1)`.
pub fn halton(mut index: usize, base: u32) -> f64 {
    let b = base as f64;
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= b;
        r += f * (index % base as usize) as f64;
        index /= base as usize;
    }
    r
}

/// The `index`-th Halton point scaled into `bounds`.
pub fn halton_point(index: usize, bounds: &[(f64, f64)]) -> Result<RealVec> {
    if bounds.len() > PRIMES.len() {
        return Err(Error::config(format!(
            "Halton sampling supports at most {} dimensions",
            PRIMES.len()
        )));
    }
    Ok(RealVec::from_fn(bounds.len(), |i, _| {
        let (lo, hi) = bounds[i];
        lo + (hi - lo) * halton(index, PRIMES[i])
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeMode {
    /// `dphi/dx f = A(u) phi + B`.
    General,
    /// The same equation in the rotated block coordinates `P phi`.
    Block,
    /// For `f = F(x) + g(x) u`: `dphi/dx F = A(0) phi + B(y, 0)` and
    /// `dphi/dx g = (A(1) - A(0)) phi + B(y, 1) - B(y, 0)`.
    InputAffine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianSource {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeCheckReport {
    /// Sup-norm of the residual over the samples.
    pub max_residual: f64,
    /// Sup of `|r| / (1 + |dphi/dx f|)`, the residual relative to the size of
    /// the terms that cancel.
    pub max_relative_residual: f64,
    pub worst_x: RealVec,
    pub worst_u: RealVec,
    pub samples: usize,
    pub mode: PdeMode,
    /// Some sample produced NaN or Inf.
    pub non_finite: bool,
}

/// Residual of the design equation at `(x, u)`.
pub fn pde_residual_at(
    plant: &PlantModel,
    d: &DesignTriple,
    x: &RealVec,
    u: &RealVec,
    mode: PdeMode,
    jac: JacobianSource,
) -> Result<RealVec> {
    let j = jacobian(d, x, jac)?;
    residual_with(plant, d, &j, x, u, mode)
}

fn jacobian(d: &DesignTriple, x: &RealVec, jac: JacobianSource) -> Result<DMatrix<f64>> {
    Ok(match jac {
        JacobianSource::Analytic => match &d.phi_jacobian {
            Some(j) => j(x),
            None => {
                return Err(Error::config(format!(
                    "{}: no analytic Jacobian registered",
                    d.name
                )))
            }
        },
        JacobianSource::FiniteDifference => d.fd_jacobian(x)?,
    })
}

fn residual_with(
    plant: &PlantModel,
    d: &DesignTriple,
    j: &DMatrix<f64>,
    x: &RealVec,
    u: &RealVec,
    mode: PdeMode,
) -> Result<RealVec> {
    let phi = (d.phi)(x);
    let y = plant.output(x);
    match mode {
        PdeMode::General => {
            Ok(j * plant.field(x, u)? - d.lambda_matrix(u) * &phi - (d.b_map)(&y, u))
        }
        PdeMode::Block => {
            let lhs = d.rotate(j * plant.field(x, u)?);
            Ok(lhs - d.lambda_rotated(u) * d.rotate(phi) - d.rotate((d.b_map)(&y, u)))
        }
        PdeMode::InputAffine => {
            if !plant.input_affine || plant.m != 1 {
                return Err(Error::config(format!(
                    "{}: the input-affine split needs a single-input affine plant",
                    plant.name
                )));
            }
            let u0 = RealVec::zeros(1);
            let u1 = RealVec::from_element(1, 1.0);
            let f0 = plant.field(x, &u0)?;
            let g = plant.field(x, &u1)? - &f0;
            let a0 = d.lambda_matrix(&u0);
            let a1 = d.lambda_matrix(&u1) - &a0;
            let b0 = (d.b_map)(&y, &u0);
            let b1 = (d.b_map)(&y, &u1) - &b0;
            let r_drift = j * f0 - a0 * &phi - b0;
            let r_input = j * g - a1 * &phi - b1;
            let mut out = RealVec::zeros(2 * r_drift.len());
            out.rows_mut(0, r_drift.len()).copy_from(&r_drift);
            out.rows_mut(r_drift.len(), r_input.len())
                .copy_from(&r_input);
            Ok(out)
        }
    }
}

/// Sup-norm of the design-equation residual over `n_samples` Halton points in
/// `state_box x u_range`.
pub fn pde_residual(
    plant: &PlantModel,
    d: &DesignTriple,
    n_samples: usize,
    state_box: &[(f64, f64)],
    u_range: &[(f64, f64)],
    mode: PdeMode,
    jac: JacobianSource,
) -> Result<PdeCheckReport> {
    d.validate()?;
    if state_box.len() != plant.n || u_range.len() != plant.m {
        return Err(Error::config(
            "sampling box does not match the plant dimensions",
        ));
    }
    let bounds: Vec<(f64, f64)> = state_box.iter().chain(u_range.iter()).copied().collect();
    let mut report = PdeCheckReport {
        max_residual: 0.0,
        max_relative_residual: 0.0,
        worst_x: RealVec::zeros(plant.n),
        worst_u: RealVec::zeros(plant.m),
        samples: n_samples,
        mode,
        non_finite: false,
    };
    for i in 1..=n_samples {
        let p = halton_point(i, &bounds)?;
        let x = p.rows(0, plant.n).into_owned();
        let u = p.rows(plant.n, plant.m).into_owned();
        let j = jacobian(d, &x, jac)?;
        let r = residual_with(plant, d, &j, &x, &u, mode)?;
        let norm = if r.iter().all(|v| v.is_finite()) {
            r.amax()
        } else {
            report.non_finite = true;
            f64::INFINITY
        };
        let scale = 1.0 + (&j * plant.field(&x, &u)?).amax();
        report.max_relative_residual = report.max_relative_residual.max(norm / scale);
        if norm > report.max_residual || (i == 1 && norm >= report.max_residual) {
            report.max_residual = norm;
            report.worst_x = x;
            report.worst_u = u;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldTrace {
    pub t: Vec<f64>,
    pub d_m: Vec<RealVec>,
    pub norms: Vec<f64>,
    /// Norm at the end is below the norm at 10% of the horizon.
    pub decays: bool,
}

/// `d_M = beta(y, chi) - phi(x)` along a trace, recomputed from the recorded
/// true states.
pub fn manifold_monitor(trace: &SimTrace, observer: &dyn Observer) -> Result<ManifoldTrace> {
    let mut out = ManifoldTrace {
        t: Vec::with_capacity(trace.rows.len()),
        d_m: Vec::with_capacity(trace.rows.len()),
        norms: Vec::with_capacity(trace.rows.len()),
        decays: false,
    };
    for row in &trace.rows {
        let d = observer
            .off_manifold(&row.chi, &row.y_clean, &row.x)
            .ok_or_else(|| Error::config(format!("{}: no manifold is defined", observer.name())))?;
        out.t.push(row.t);
        out.norms.push(d.norm());
        out.d_m.push(d);
    }
    if let (Some(last), false) = (out.norms.last(), out.norms.is_empty()) {
        let early = out.norms[out.norms.len() / 10];
        out.decays = *last < early;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// `sup_t |chi_a(t) - chi_b(t)|_inf`.
    pub max_chi_deviation: f64,
    /// `sup_t |x_hat_a(t) - x_hat_b(t)|_inf`.
    pub max_estimate_deviation: f64,
    pub steps: usize,
}

/// Runs two observers with the same extension layout from the same initial
/// extension against one noiseless plant trajectory and reports how far they
/// drift apart.
#[allow(clippy::too_many_arguments)]
pub fn equivalence_check(
    plant: &PlantModel,
    input: &dyn InputLaw,
    x0: &RealVec,
    a: &dyn Observer,
    b: &dyn Observer,
    chi0: Option<RealVec>,
    horizon: f64,
    dt: f64,
) -> Result<EquivalenceReport> {
    if a.dim() != b.dim() {
        return Err(Error::config(format!(
            "{} and {} have extensions of size {} and {}",
            a.name(),
            b.name(),
            a.dim(),
            b.dim()
        )));
    }
    let settings = SimSettings::new(dt, horizon);
    let chi0 = match chi0 {
        Some(c) => c,
        None => {
            let u0 = input.input(0.0, 0.0, x0)?;
            a.initial_state(&plant.output(x0), &u0)
        }
    };
    let ta = simulate(plant, input, a, x0, Some(chi0.clone()), &settings)?.into_result()?;
    let tb = simulate(plant, input, b, x0, Some(chi0), &settings)?.into_result()?;
    let mut report = EquivalenceReport {
        max_chi_deviation: 0.0,
        max_estimate_deviation: 0.0,
        steps: settings.steps(),
    };
    for (ra, rb) in ta.rows.iter().zip(tb.rows.iter()) {
        report.max_chi_deviation = report.max_chi_deviation.max((&ra.chi - &rb.chi).amax());
        report.max_estimate_deviation = report
            .max_estimate_deviation
            .max((&ra.x_hat - &rb.x_hat).amax());
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeReport {
    /// Smallest Gramian eigenvalue of every window.
    pub window_min: Vec<f64>,
    pub min_eigenvalue: f64,
    /// Every window satisfies `min eigenvalue >= delta`.
    pub excited: bool,
}

/// Trapezoidal windowed Gramians `int_t^{t+T} b b^T ds` over all windows of a
/// uniformly sampled regressor trace.
pub fn pe_check(b_trace: &[RealVec], dt: f64, window: f64, delta: f64) -> Result<PeReport> {
    if !(dt > 0.0) || !(window > 0.0) {
        return Err(Error::config("PE check needs a positive step and window"));
    }
    let w = (window / dt).round() as usize;
    if w == 0 || b_trace.len() <= w {
        return Err(Error::config(format!(
            "regressor trace of {} samples does not cover a window of {w} steps",
            b_trace.len()
        )));
    }
    let n = b_trace[0].len();
    if b_trace.iter().any(|b| b.len() != n) {
        return Err(Error::config("regressor changes dimension along the trace"));
    }
    // cumulative trapezoidal integral of b b^T
    let mut cumulative = Vec::with_capacity(b_trace.len());
    let mut acc = DMatrix::<f64>::zeros(n, n);
    cumulative.push(acc.clone());
    for k in 1..b_trace.len() {
        let (b0, b1) = (&b_trace[k - 1], &b_trace[k]);
        acc += (b0 * b0.transpose() + b1 * b1.transpose()) * (0.5 * dt);
        cumulative.push(acc.clone());
    }
    let mut window_min = Vec::with_capacity(b_trace.len() - w);
    for i in 0..b_trace.len() - w {
        let g = &cumulative[i + w] - &cumulative[i];
        let g = (&g + g.transpose()) * 0.5;
        window_min.push(g.symmetric_eigenvalues().min());
    }
    let min_eigenvalue = window_min.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PeReport {
        excited: min_eigenvalue >= delta,
        window_min,
        min_eigenvalue,
    })
}

/// Largest norm of `d theta_hat / dt` evaluated with the estimation block of
/// `xi` moved onto `phi(x)`, at `samples` evenly spaced rows of `trace`.
/// For estimators with `N = theta_hat` this is the left side of the identity
/// the on-manifold dynamics must satisfy.
pub fn identity_b2(observer: &KklPebo, trace: &SimTrace, samples: usize) -> Result<f64> {
    let d = &observer.triple;
    let r = observer
        .regression
        .as_ref()
        .ok_or_else(|| Error::config(format!("{}: no estimation block", d.name)))?;
    if trace.rows.is_empty() || samples == 0 {
        return Err(Error::config("identity check needs a non-empty trace"));
    }
    let stride = (trace.rows.len() / samples).max(1);
    let mut worst: f64 = 0.0;
    for row in trace.rows.iter().step_by(stride).take(samples) {
        let target = d.rotate((d.phi)(&row.x));
        let mut chi = row.chi.clone();
        for i in d.q..d.n_xi {
            chi[i] = target[i];
        }
        let rate = observer.derivative(&chi, &row.y_clean, &row.u)?;
        worst = worst.max(rate.rows(d.n_xi, r.n_theta()).amax());
    }
    Ok(worst)
}
