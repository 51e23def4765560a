//! The standard C-infinity bump, its derivatives and its cumulative integral.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::cplx::C64;
use crate::quad::{gk15, integrate, QuadOptions};

/// Integral of exp(-1/(1-t^2)) over (-1, 1).
pub const BUMP_MASS: f64 = 0.443_993_816_168_079_437_823_048_921_171;

/// Measured sup |d^m/dt^m| of the unit-mass bump on (-1, 1), m = 0, 1, 2.
/// With these, sup |d^m δ_ε| <= c_m ε^-(m+1).
pub const BUMP_DERIVATIVE_BOUNDS: [f64; 3] = [0.828_568_84, 1.798_290_3, 17.454_534];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BumpShape {
    /// exp(-1/(1-t^2)) on |t| < 1.
    #[default]
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub eps: f64,
    pub shape: BumpShape,
}

impl MollifierSpec {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            shape: BumpShape::Standard,
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        mollifier(self.eps, y)
    }

    /// m-th derivative, m <= 2.
    pub fn derivative(&self, m: usize, y: f64) -> f64 {
        let t = y / self.eps;
        bump_derivative(m, t) / self.eps.powi(m as i32 + 1)
    }

    /// ∫_{-∞}^{y} δ_ε.
    pub fn cdf(&self, y: f64) -> f64 {
        bump_cdf(y / self.eps)
    }
}

/// Unit-mass bump on (-1, 1).
#[inline]
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let u = 1.0 - t * t;
    (-1.0 / u).exp() / BUMP_MASS
}

fn bump_derivative(m: usize, t: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let u = 1.0 - t * t;
    let phi = bump(t);
    match m {
        0 => phi,
        1 => phi * (-2.0 * t / (u * u)),
        2 => {
            let a = 2.0 * t / (u * u);
            phi * (a * a - 2.0 / (u * u) - 8.0 * t * t / (u * u * u))
        }
        _ => panic!("bump derivatives implemented up to order 2"),
    }
}

/// δ_ε(y) = ε^-1 bump(y/ε).
#[inline]
pub fn mollifier(eps: f64, y: f64) -> f64 {
    bump(y / eps) / eps
}

const CDF_CELLS: usize = 4096;

fn cdf_table() -> &'static Vec<f64> {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 2.0 / CDF_CELLS as f64;
        let f = |t: f64| C64::new(bump(t), 0.0);
        let mut out = Vec::with_capacity(CDF_CELLS + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for i in 0..CDF_CELLS {
            let a = -1.0 + i as f64 * h;
            let (v, _) = gk15(&f, a, a + h);
            acc += v.re;
            out.push(acc);
        }
        let total = acc;
        out.iter_mut().for_each(|v| *v /= total);
        out
    })
}

/// Cumulative integral of the unit bump, by cubic Hermite interpolation of a tabulated integral.
pub fn bump_cdf(t: f64) -> f64 {
    if t <= -1.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let table = cdf_table();
    let h = 2.0 / CDF_CELLS as f64;
    let s = (t + 1.0) / h;
    let i = (s.floor() as usize).min(CDF_CELLS - 1);
    let x = s - i as f64;
    let t0 = -1.0 + i as f64 * h;
    let (y0, y1) = (table[i], table[i + 1]);
    let (m0, m1) = (bump(t0) * h, bump(t0 + h) * h);
    let x2 = x * x;
    let x3 = x2 * x;
    (2.0 * x3 - 3.0 * x2 + 1.0) * y0
        + (x3 - 2.0 * x2 + x) * m0
        + (-2.0 * x3 + 3.0 * x2) * y1
        + (x3 - x2) * m1
}

/// ∫ δ_ε over its support, by adaptive quadrature; used to check the normalization.
pub fn mollifier_mass(eps: f64) -> f64 {
    integrate(
        |y| C64::new(mollifier(eps, y), 0.0),
        -eps,
        eps,
        QuadOptions {
            abs_tol: 1e-16,
            rel_tol: 1e-15,
            max_intervals: 2000,
        },
    )
    .map(|r| r.value.re)
    .unwrap_or(f64::NAN)
}
