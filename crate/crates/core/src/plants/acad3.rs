use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{labels, PlantModel};
use crate::error::{Error, Result};
use crate::numerics::RealVec;

/// `x1' = -x1^3 + e^x3`, `x2' = -x2 + x1^2 + sin x1`, `x3' = 1/(x1^2 + 1) + x1 u`, `y = x1`.
pub fn acad3_field(x: &RealVec, u: f64) -> RealVec {
    let x1 = x[0];
    RealVec::from_column_slice(&[
        -x1 * x1 * x1 + x[2].exp(),
        -x[1] + x1 * x1 + x1.sin(),
        1.0 / (x1 * x1 + 1.0) + x1 * u,
    ])
}

/// Equilibrium for a constant negative input, from the positive root of
/// `u x1^3 + u x1 + 1 = 0` (Newton iteration).
pub fn acad3_equilibrium(u: f64) -> Result<[f64; 3]> {
    if !(u < 0.0) {
        return Err(Error::Domain(
            "the academic plant has an equilibrium only for u < 0".into(),
        ));
    }
    let g = |s: f64| u * s * s * s + u * s + 1.0;
    let dg = |s: f64| 3.0 * u * s * s + u;
    // g is strictly decreasing, g(0) = 1 > 0
    let mut s = 1.0f64;
    while g(s) > 0.0 {
        s *= 2.0;
    }
    for _ in 0..100 {
        let step = g(s) / dg(s);
        s -= step;
        if step.abs() < 1e-15 * s.abs().max(1.0) {
            break;
        }
    }
    Ok([s, s * s + s.sin(), 3.0 * s.ln()])
}

pub fn acad3_model() -> PlantModel {
    PlantModel {
        name: "acad3".to_string(),
        n: 3,
        m: 1,
        field: Arc::new(|x: &RealVec, u: &RealVec| acad3_field(x, u[0])),
        measured: vec![0],
        params: vec![],
        state_box: vec![(0.2, 1.5), (-1.0, 3.0), (-3.0, 1.0)],
        input_range: vec![(-2.0, -0.5)],
        state_labels: labels("x", 3),
        input_affine: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn origin_evaluation() {
        let f = acad3_field(&RealVec::zeros(3), 0.0);
        assert_eq!(f.as_slice(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn equilibrium_matches_cubic_root() {
        let [x1, x2, x3] = acad3_equilibrium(-1.0).unwrap();
        // bisection on x^3 + x - 1 as an independent root oracle
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid * mid + mid - 1.0 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((x1 - lo).abs() < 1e-12);
        assert!((x1 - 0.682328).abs() < 1e-6);
        assert!((x2 - (lo * lo + lo.sin())).abs() < 1e-12);
        assert!((x3 - 3.0 * lo.ln()).abs() < 1e-12);
        assert!((x2 - 1.096173).abs() < 1e-6);
        assert!((x3 + 1.146735).abs() < 1e-6);
        let f = acad3_field(&RealVec::from_column_slice(&[x1, x2, x3]), -1.0);
        assert!(f.amax() < 1e-9, "{f}");
        assert!(acad3_equilibrium(0.5).is_err());
    }

    #[test]
    fn equilibrium_is_locally_stable() {
        let eq = RealVec::from_column_slice(&acad3_equilibrium(-1.0).unwrap());
        let j = crate::numerics::fd_jacobian(|x| Ok(acad3_field(x, -1.0)), &eq, 1e-6).unwrap();
        let eig = DMatrix::from(j).complex_eigenvalues();
        assert!(eig.iter().all(|l| l.re < 0.0), "{eig}");
    }

    #[test]
    fn x2_relaxes_to_its_target_for_frozen_x1() {
        // with x1 frozen the x2 subsystem is x2' = -(x2 - target)
        let x1 = 0.4f64;
        let target = x1 * x1 + x1.sin();
        let mut x = RealVec::from_column_slice(&[x1, target + 1.0, 0.0]);
        let dt = 1e-3;
        for k in 0..1000 {
            let f = acad3_field(&x, 0.0);
            x[1] = crate::numerics::rk4_step(
                |_, z| Ok(RealVec::from_element(1, -z[0] + x1 * x1 + x1.sin())),
                &RealVec::from_element(1, x[1]),
                k as f64 * dt,
                dt,
            )
            .unwrap()[0];
            assert!(f[1] < 0.0);
        }
        assert!((x[1] - target - (-1.0f64).exp()).abs() < 1e-9);
    }
}
