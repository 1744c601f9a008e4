//! The six converter observers: Luenberger-type, estimation-based, combined,
//! I&I and two high-gain designs.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::iio::{IioGeneric, IioMaps};
use super::{DesignTriple, KklPebo, Kklo, Observer, Pebo, Regression};
use crate::error::{Error, Result};
use crate::numerics::RealVec;
use crate::plants::{cuk_model, CukParams};

/// Which `Y` the combined observer's regression uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KklPeboYVariant {
    /// `Y = W[y1] - F[(1-u) xi_P + u y2] / C2`, with `xi_P` the coordinate tracking `i1`.
    #[default]
    Derived,
    /// `Y = W[y1] - F[(1-u) xi_L + u y2] / C2` as typeset.
    Printed,
}

/// Which I&I observer equations to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IioVariant {
    /// Signs chosen so that `x_hat - x` obeys `e1' = -gamma1 (1-u) e1`,
    /// `e2' = -(G/C4 + gamma2) e2`.
    #[default]
    Corrected,
    /// Equations as typeset: `+gamma1 u y2` in `xi1'` and `x_hat2 = xi2 + L3 gamma2 y2`.
    Printed,
}

/// Observer gains.
#[derive(Debug, Clone, PartialEq)]
pub struct CukGains {
    /// Filter pole of `F` and `W`.
    pub alpha: f64,
    /// Scalar gain of the combined observer's estimator.
    pub gamma: f64,
    /// Diagonal gain of the estimation-based observer.
    pub gamma_pebo: [f64; 2],
    pub gamma1: f64,
    pub gamma2: f64,
    /// High-gain parameter of the time-varying design.
    pub r1: f64,
    /// High-gain parameter of the linear design.
    pub r2: f64,
    /// `alpha_1..alpha_4` of both high-gain designs.
    pub hgo_alpha: [f64; 4],
    /// Start the filters driven by `y` at `y(0)`, which removes the start-up
    /// transient of `W[y]`.
    pub prime_filters: bool,
    pub kkl_pebo_y: KklPeboYVariant,
    pub iio: IioVariant,
}

impl Default for CukGains {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gamma: 0.001,
            gamma_pebo: [0.001, 100.0],
            gamma1: 50.0,
            gamma2: 1.0,
            r1: 0.05,
            r2: 0.005,
            hgo_alpha: [2.0, 1.0, 2.0, 1.0],
            prime_filters: true,
            kkl_pebo_y: KklPeboYVariant::Derived,
            iio: IioVariant::Corrected,
        }
    }
}

impl CukGains {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("gamma_pebo[0]", self.gamma_pebo[0]),
            ("gamma_pebo[1]", self.gamma_pebo[1]),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("hgo_alpha[0]", self.hgo_alpha[0]),
            ("hgo_alpha[1]", self.hgo_alpha[1]),
            ("hgo_alpha[2]", self.hgo_alpha[2]),
            ("hgo_alpha[3]", self.hgo_alpha[3]),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!(
                    "gain {name} must be positive, got {v}"
                )));
            }
        }
        for (name, r) in [("r1", self.r1), ("r2", self.r2)] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1], got {r}")));
            }
        }
        Ok(())
    }
}

/// Identifiers of the six converter observers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CukObserverId {
    Kklo,
    Pebo,
    KklPebo,
    Iio,
    HgoTv,
    HgoLin,
}

impl CukObserverId {
    pub const ALL: [CukObserverId; 6] = [
        CukObserverId::Kklo,
        CukObserverId::Pebo,
        CukObserverId::KklPebo,
        CukObserverId::Iio,
        CukObserverId::HgoTv,
        CukObserverId::HgoLin,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CukObserverId::Kklo => "kklo",
            CukObserverId::Pebo => "pebo",
            CukObserverId::KklPebo => "kkl-pebo",
            CukObserverId::Iio => "iio",
            CukObserverId::HgoTv => "hgo-tv",
            CukObserverId::HgoLin => "hgo-lin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|id| id.as_str() == s)
    }

    pub fn valid_ids() -> String {
        Self::ALL
            .iter()
            .map(|id| id.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl core::fmt::Display for CukObserverId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

const MEASURED: [usize; 2] = [2, 3];

fn v(xs: &[f64]) -> RealVec {
    RealVec::from_column_slice(xs)
}

/// `phi = (v4, L1 i1 - C2 v2)`, `Lambda = diag(-G/C4, -(1-u)/L1)`.
pub fn cuk_kklo_triple(p: CukParams) -> DesignTriple {
    DesignTriple {
        name: "cuk-kklo".to_string(),
        n_x: 4,
        n_xi: 2,
        q: 2,
        phi: Arc::new(move |x| v(&[x[1], p.l1 * x[0] - p.c2 * x[2]])),
        phi_jacobian: Some(Arc::new(move |_| {
            DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 0.0, 0.0, p.l1, 0.0, -p.c2, 0.0])
        })),
        lambda_l: Arc::new(move |u| v(&[-p.g / p.c4, -(1.0 - u[0]) / p.l1])),
        b_map: Arc::new(move |y, u| {
            let u = u[0];
            v(&[
                y[1] / p.c4,
                (1.0 + p.c2 / p.l1) * (-1.0 + u) * y[0] + p.e - u * y[1],
            ])
        }),
        phi_left: Arc::new(move |xi, y| v(&[xi[1] / p.l1 + p.c2 * y[0] / p.l1, xi[0], y[0], y[1]])),
        rotation: None,
        measured: MEASURED.to_vec(),
    }
}

/// `phi = (i1, v4 - G L3 i3 / C4)`, `Lambda = 0`.
pub fn cuk_pebo_triple(p: CukParams) -> DesignTriple {
    let k = p.g * p.l3 / p.c4;
    DesignTriple {
        name: "cuk-pebo".to_string(),
        n_x: 4,
        n_xi: 2,
        q: 0,
        phi: Arc::new(move |x| v(&[x[0], x[1] - k * x[3]])),
        phi_jacobian: Some(Arc::new(move |_| {
            DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -k])
        })),
        lambda_l: Arc::new(|_| RealVec::zeros(0)),
        b_map: Arc::new(move |y, u| {
            let u = u[0];
            v(&[
                (p.e - (1.0 - u) * y[0]) / p.l1,
                (y[1] + p.g * u * y[0]) / p.c4,
            ])
        }),
        phi_left: Arc::new(move |xi, y| v(&[xi[0], xi[1] + k * y[1], y[0], y[1]])),
        rotation: None,
        measured: MEASURED.to_vec(),
    }
}

/// `phi = (i1, v4)`, `Lambda = diag(0, -G/C4)`, realised with the swap
/// rotation so that the Luenberger coordinate comes first internally.
pub fn cuk_kkl_pebo_triple(p: CukParams) -> DesignTriple {
    DesignTriple {
        name: "cuk-kkl-pebo".to_string(),
        n_x: 4,
        n_xi: 2,
        q: 1,
        phi: Arc::new(|x| v(&[x[0], x[1]])),
        phi_jacobian: Some(Arc::new(|_| {
            DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        })),
        lambda_l: Arc::new(move |_| v(&[-p.g / p.c4])),
        b_map: Arc::new(move |y, u| v(&[(p.e - (1.0 - u[0]) * y[0]) / p.l1, y[1] / p.c4])),
        phi_left: Arc::new(|xi, y| v(&[xi[0], xi[1], y[0], y[1]])),
        rotation: Some(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])),
        measured: MEASURED.to_vec(),
    }
}

/// Regression of the estimation-based observer:
///
/// ```text
/// Y1 = W[y1] - F[xi1 (1-u) + u y2] / C2                 M11 = F[1-u] / C2
/// Y2 = W[y2] + F[(u y1 + xi2) / L3 + G y2 / C4]         M22 = -F[1] / L3
/// ```
#[derive(Debug, Clone)]
pub struct CukPeboRegression {
    pub params: CukParams,
    pub alpha: f64,
    pub gain: [f64; 2],
    pub prime: bool,
}

impl Regression for CukPeboRegression {
    fn n_theta(&self) -> usize {
        2
    }
    fn n_filters(&self) -> usize {
        6
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn gain(&self) -> RealVec {
        v(&self.gain)
    }
    fn initial_filters(&self, y0: &RealVec, _u0: &RealVec) -> RealVec {
        let mut z = RealVec::zeros(6);
        if self.prime {
            z[0] = y0[0];
            z[3] = y0[1];
        }
        z
    }
    fn filter_inputs(&self, xi: &RealVec, y: &RealVec, u: &RealVec) -> RealVec {
        let (p, u) = (&self.params, u[0]);
        v(&[
            y[0],
            xi[0] * (1.0 - u) + u * y[1],
            1.0 - u,
            y[1],
            (u * y[0] + xi[1]) / p.l3 + p.g * y[1] / p.c4,
            1.0,
        ])
    }
    fn assemble(
        &self,
        z: &RealVec,
        _xi: &RealVec,
        y: &RealVec,
        _u: &RealVec,
    ) -> (RealVec, DMatrix<f64>) {
        let (p, a) = (&self.params, self.alpha);
        let big_y = v(&[a * (y[0] - z[0]) - z[1] / p.c2, a * (y[1] - z[3]) + z[4]]);
        let m = DMatrix::from_row_slice(2, 2, &[z[2] / p.c2, 0.0, 0.0, -z[5] / p.l3]);
        (big_y, m)
    }
}

/// Regression of the combined observer, `Y = W[y1] - F[(1-u) xi + u y2] / C2`,
/// `M = F[1-u] / C2`.
#[derive(Debug, Clone)]
pub struct CukKklPeboRegression {
    pub params: CukParams,
    pub alpha: f64,
    pub gamma: f64,
    pub prime: bool,
    pub variant: KklPeboYVariant,
}

impl Regression for CukKklPeboRegression {
    fn n_theta(&self) -> usize {
        1
    }
    fn n_filters(&self) -> usize {
        3
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn gain(&self) -> RealVec {
        v(&[self.gamma])
    }
    fn initial_filters(&self, y0: &RealVec, _u0: &RealVec) -> RealVec {
        v(&[if self.prime { y0[0] } else { 0.0 }, 0.0, 0.0])
    }
    fn filter_inputs(&self, xi: &RealVec, y: &RealVec, u: &RealVec) -> RealVec {
        let u = u[0];
        let carrier = match self.variant {
            KklPeboYVariant::Derived => xi[0],
            KklPeboYVariant::Printed => xi[1],
        };
        v(&[y[0], (1.0 - u) * carrier + u * y[1], 1.0 - u])
    }
    fn assemble(
        &self,
        z: &RealVec,
        _xi: &RealVec,
        y: &RealVec,
        _u: &RealVec,
    ) -> (RealVec, DMatrix<f64>) {
        let c2 = self.params.c2;
        let big_y = v(&[self.alpha * (y[0] - z[0]) - z[1] / c2]);
        (big_y, DMatrix::from_element(1, 1, z[2] / c2))
    }
}

/// Closed-form I&I observer, `x_hat = xi + (C2 gamma1 y1, -L3 gamma2 y2)`.
#[derive(Debug, Clone)]
pub struct CukIio {
    pub params: CukParams,
    pub gamma1: f64,
    pub gamma2: f64,
    pub variant: IioVariant,
}

impl CukIio {
    fn offset(&self, y: &RealVec) -> [f64; 2] {
        let p = &self.params;
        let s = match self.variant {
            IioVariant::Corrected => -1.0,
            IioVariant::Printed => 1.0,
        };
        [p.c2 * self.gamma1 * y[0], s * p.l3 * self.gamma2 * y[1]]
    }
}

impl Observer for CukIio {
    fn name(&self) -> &str {
        "cuk-iio"
    }
    fn dim(&self) -> usize {
        2
    }
    fn n_x(&self) -> usize {
        4
    }
    fn initial_state(&self, _y0: &RealVec, _u0: &RealVec) -> RealVec {
        RealVec::zeros(2)
    }
    fn derivative(&self, chi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec> {
        let (p, g1, g2, u) = (&self.params, self.gamma1, self.gamma2, u[0]);
        let s = match self.variant {
            IioVariant::Corrected => -1.0,
            IioVariant::Printed => 1.0,
        };
        let d1 = -g1 * (1.0 - u) * (chi[0] + p.c2 * g1 * y[0])
            + s * g1 * u * y[1]
            + (p.e - (1.0 - u) * y[0]) / p.l1;
        let x2 = chi[1] - p.l3 * g2 * y[1];
        let d2 = (y[1] - p.g * x2) / p.c4 - g2 * (u * y[0] + x2);
        Ok(v(&[d1, d2]))
    }
    fn estimate(&self, chi: &RealVec, y: &RealVec, _u: &RealVec) -> Result<RealVec> {
        let o = self.offset(y);
        Ok(v(&[chi[0] + o[0], chi[1] + o[1], y[0], y[1]]))
    }
    fn off_manifold(&self, chi: &RealVec, y: &RealVec, x: &RealVec) -> Option<RealVec> {
        let o = self.offset(y);
        Some(v(&[chi[0] + o[0] - x[0], chi[1] + o[1] - x[1]]))
    }
    fn on_manifold_state(&self, x: &RealVec, _u: &RealVec) -> Option<RealVec> {
        let o = self.offset(&v(&[x[2], x[3]]));
        Some(v(&[x[0] - o[0], x[1] - o[1]]))
    }
}

/// High-gain observer whose error dynamics depend on `u`. Estimates `(xi2, xi4)`.
#[derive(Debug, Clone)]
pub struct HgoTv {
    pub params: CukParams,
    pub r: f64,
    pub a: [f64; 4],
}

impl Observer for HgoTv {
    fn name(&self) -> &str {
        "cuk-hgo-tv"
    }
    fn dim(&self) -> usize {
        4
    }
    fn n_x(&self) -> usize {
        4
    }
    fn initial_state(&self, _y0: &RealVec, _u0: &RealVec) -> RealVec {
        RealVec::zeros(4)
    }
    fn derivative(&self, xi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec> {
        let (p, r, a, u) = (&self.params, self.r, &self.a, u[0]);
        let e1 = y[0] - xi[0];
        let e3 = y[1] - xi[2];
        Ok(v(&[
            (1.0 - u) * xi[1] / p.c2 + u * y[1] / p.c2 + a[0] / r * e1,
            -(1.0 - u) * y[0] / p.l1 + p.e / p.l1 + a[1] / (r * r) * e1,
            -xi[3] / p.l3 - u * y[0] / p.l3 + a[2] / r * e3,
            y[1] / p.c4 - p.g * xi[3] / p.c4 + a[3] / (r * r) * e3,
        ]))
    }
    fn estimate(&self, xi: &RealVec, y: &RealVec, _u: &RealVec) -> Result<RealVec> {
        Ok(v(&[xi[1], xi[3], y[0], y[1]]))
    }
    fn off_manifold(&self, xi: &RealVec, _y: &RealVec, x: &RealVec) -> Option<RealVec> {
        Some(xi - v(&[x[2], x[0], x[3], x[1]]))
    }
    fn on_manifold_state(&self, x: &RealVec, _u: &RealVec) -> Option<RealVec> {
        Some(v(&[x[2], x[0], x[3], x[1]]))
    }
}

/// High-gain observer with linear error dynamics; `xi2`, `xi4` estimate the
/// output derivatives, which are inverted algebraically.
#[derive(Debug, Clone)]
pub struct HgoLin {
    pub params: CukParams,
    pub r: f64,
    pub a: [f64; 4],
}

impl HgoLin {
    /// Output derivatives of the averaged model.
    fn output_rates(&self, x: &RealVec, u: f64) -> [f64; 2] {
        let p = &self.params;
        [
            (1.0 - u) * x[0] / p.c2 + u * x[3] / p.c2,
            -u * x[2] / p.l3 - x[1] / p.l3,
        ]
    }
}

impl Observer for HgoLin {
    fn name(&self) -> &str {
        "cuk-hgo-lin"
    }
    fn dim(&self) -> usize {
        4
    }
    fn n_x(&self) -> usize {
        4
    }
    fn initial_state(&self, _y0: &RealVec, _u0: &RealVec) -> RealVec {
        RealVec::zeros(4)
    }
    fn derivative(&self, xi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec> {
        let (p, r, a, u) = (&self.params, self.r, &self.a, u[0]);
        let e1 = y[0] - xi[0];
        let e3 = y[1] - xi[2];
        Ok(v(&[
            xi[1] + a[0] / r * e1,
            -(1.0 - u) * y[0] / p.l1 + p.e / p.l1 + a[1] / (r * r) * e1,
            xi[3] + a[2] / r * e3,
            y[1] / p.c4 - p.g * xi[3] / p.c4 + a[3] / (r * r) * e3,
        ]))
    }
    fn estimate(&self, xi: &RealVec, y: &RealVec, u: &RealVec) -> Result<RealVec> {
        let (p, u) = (&self.params, u[0]);
        if (1.0 - u).abs() < 1e-3 {
            return Err(Error::DivisionGuard(format!(
                "1 - u = {} is too close to zero",
                1.0 - u
            )));
        }
        Ok(v(&[
            (p.c2 * xi[1] - u * y[1]) / (1.0 - u),
            -p.l3 * xi[3] - u * y[0],
            y[0],
            y[1],
        ]))
    }
    fn on_manifold_state(&self, x: &RealVec, u: &RealVec) -> Option<RealVec> {
        let d = self.output_rates(x, u[0]);
        Some(v(&[x[2], d[0], x[3], d[1]]))
    }
}

/// Builds one of the six converter observers.
pub fn cuk_observer(id: CukObserverId, p: CukParams, g: &CukGains) -> Result<Arc<dyn Observer>> {
    p.validate()?;
    g.validate()?;
    Ok(match id {
        CukObserverId::Kklo => Arc::new(Kklo::new(cuk_kklo_triple(p))?),
        CukObserverId::Pebo => Arc::new(Pebo::new(
            cuk_pebo_triple(p),
            Arc::new(CukPeboRegression {
                params: p,
                alpha: g.alpha,
                gain: g.gamma_pebo,
                prime: g.prime_filters,
            }),
        )?),
        CukObserverId::KklPebo => Arc::new(KklPebo::new(
            cuk_kkl_pebo_triple(p),
            Some(Arc::new(CukKklPeboRegression {
                params: p,
                alpha: g.alpha,
                gamma: g.gamma,
                prime: g.prime_filters,
                variant: g.kkl_pebo_y,
            })),
        )?),
        CukObserverId::Iio => Arc::new(CukIio {
            params: p,
            gamma1: g.gamma1,
            gamma2: g.gamma2,
            variant: g.iio,
        }),
        CukObserverId::HgoTv => Arc::new(HgoTv {
            params: p,
            r: g.r1,
            a: g.hgo_alpha,
        }),
        CukObserverId::HgoLin => Arc::new(HgoLin {
            params: p,
            r: g.r2,
            a: g.hgo_alpha,
        }),
    })
}

/// The generalised I&I observer instantiated with `beta = xi + col(0, theta_hat)`
/// and `Q = 0` for the Luenberger-type (`Kklo`) or combined (`KklPebo`) design.
/// The extension layout matches the corresponding observer built by
/// [`cuk_observer`].
pub fn cuk_iio_generic(id: CukObserverId, p: CukParams, g: &CukGains) -> Result<IioGeneric> {
    let plant = cuk_model(p)?;
    let (triple, partner, n_chi) = match id {
        CukObserverId::Kklo => (cuk_kklo_triple(p), cuk_observer(id, p, g)?, 2),
        CukObserverId::KklPebo => (cuk_kkl_pebo_triple(p), cuk_observer(id, p, g)?, 6),
        other => {
            return Err(Error::config(format!(
                "no I&I instantiation is registered for observer {other}"
            )))
        }
    };
    let n_z = triple.n_xi;
    let q = triple.q;
    // beta = S chi with S = [I_nz | e_P theta-selector | 0]
    let select = DMatrix::from_fn(n_z, n_chi, |i, j| {
        if i == j || (i >= q && j == n_z + (i - q)) {
            1.0
        } else {
            0.0
        }
    });
    let sel = select.clone();
    let t_phi = triple.clone();
    let t_jac = triple.clone();
    let t_left = triple.clone();
    let init_partner = partner.clone();
    let manifold_partner = partner;
    let maps = IioMaps {
        name: format!("{}-iio", triple.name),
        n_chi,
        n_z,
        beta: Arc::new(move |_, chi| &sel * chi),
        beta_chi_jacobian: Some(Arc::new(move |_, _| select.clone())),
        beta_y_jacobian: Some(Arc::new(move |y, _| DMatrix::zeros(n_z, y.len()))),
        phi: Arc::new(move |x| t_phi.rotate((t_phi.phi)(x))),
        phi_jacobian: Some(Arc::new(move |x| {
            let j = (t_jac
                .phi_jacobian
                .as_ref()
                .expect("shipped triples are analytic"))(x);
            match &t_jac.rotation {
                Some(r) => r * j,
                None => j,
            }
        })),
        phi_left: Arc::new(move |z, y| (t_left.phi_left)(&t_left.unrotate(z.clone()), y)),
        free: None,
        initial: Some(Arc::new(move |y0, u0| init_partner.initial_state(y0, u0))),
        on_manifold: Some(Arc::new(move |x, u| {
            manifold_partner
                .on_manifold_state(x, u)
                .expect("shipped observers define a manifold start")
        })),
    };
    IioGeneric::new(maps, plant)
}
