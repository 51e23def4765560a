//! Closed-form mode profiles of the linearized Marangoni problem and its dispersion relation.

mod dispersion;
mod solve;
mod theta;

use serde::{Deserialize, Serialize};

use crate::cplx::{phi1, sqrt_principal, C64};
use crate::error::{Error, Result};

pub use dispersion::{
    dispersion_residual_exact, dispersion_residual_limit, limit_residual_tilde,
    surface_value_integral,
};
pub use solve::{
    solve_eigenvalue, solve_limit_tilde, spectrum_scan, spectrum_to_csv, ComplexEigenvalue, Mode,
    SolveOptions, SpectrumRow,
};
pub use theta::{theta_fd, theta_profile, ModeProfiles};

/// Physical and asymptotic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub nu: f64,
    pub d_thermal: f64,
    pub b: f64,
    pub h: f64,
    pub asymptotic: bool,
}

impl FluidParams {
    /// Layer depth tied to the viscosity, h = 10 ln ν.
    pub fn asymptotic(nu: f64, d_thermal: f64, b: f64) -> Result<Self> {
        if !(nu > 1.0) {
            return Err(Error::InvalidInput(format!(
                "asymptotic regime needs nu > 1, got {nu}"
            )));
        }
        Self::check(nu, d_thermal, b, 10.0 * nu.ln(), true)
    }

    pub fn with_depth(nu: f64, d_thermal: f64, b: f64, h: f64) -> Result<Self> {
        Self::check(nu, d_thermal, b, h, false)
    }

    fn check(nu: f64, d_thermal: f64, b: f64, h: f64, asymptotic: bool) -> Result<Self> {
        for (name, v) in [("nu", nu), ("D", d_thermal), ("b", b), ("h", h)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self {
            nu,
            d_thermal,
            b,
            h,
            asymptotic,
        })
    }

    pub fn dbar(&self) -> f64 {
        self.d_thermal / self.b
    }

    pub fn with_b(&self, b: f64) -> Self {
        Self { b, ..*self }
    }
}

/// D̄ = D/b stored as its offset from 1, so that D̄ = 1 + O(κ) keeps full precision for tiny κ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dbar {
    excess: f64,
}

impl Dbar {
    pub const ONE: Dbar = Dbar { excess: 0.0 };

    pub fn from_value(v: f64) -> Self {
        Self { excess: v - 1.0 }
    }

    pub fn from_excess(excess: f64) -> Self {
        Self { excess }
    }

    pub fn value(&self) -> f64 {
        1.0 + self.excess
    }

    pub fn excess(&self) -> f64 {
        self.excess
    }

    /// D̄ after b → b(1 + s).
    pub fn with_b_scaled(&self, s: f64) -> Self {
        Self {
            excess: (self.excess - s) / (1.0 + s),
        }
    }
}

/// Horizontal wave number, k > 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct WaveNumber(f64);

impl WaveNumber {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidInput(format!(
                "wave number must be positive, got {k}"
            )));
        }
        Ok(Self(k))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// k̄ = (k² + λ/D)^{1/2}.
pub fn kbar(k: f64, lambda: C64, d_thermal: f64) -> C64 {
    sqrt_principal(C64::new(k * k, 0.0) + lambda / d_thermal)
}

/// k̄_ν = (k² + λ/ν)^{1/2}.
pub fn kbar_nu(k: f64, lambda: C64, nu: f64) -> C64 {
    sqrt_principal(C64::new(k * k, 0.0) + lambda / nu)
}

/// sinh(a(h-y))/sinh(ah) written with decaying exponentials.
fn sinh_ratio(a: C64, h: f64, y: f64) -> C64 {
    if y == h {
        return C64::new(0.0, 0.0);
    }
    if y == 0.0 {
        return C64::new(1.0, 0.0);
    }
    ((-a * y).exp() - (-a * (2.0 * h - y)).exp()) / (1.0 - (-a * (2.0 * h)).exp())
}

/// ω_k(y, λ)/β_k = sinh(k̄_ν(h-y))/sinh(k̄_ν h).
pub fn vorticity_profile(k: WaveNumber, lambda: C64, params: &FluidParams, y: f64) -> Result<C64> {
    check_y(y, params.h)?;
    let a = kbar_nu(k.get(), lambda, params.nu);
    if !(a.re > 0.0) {
        return Err(Error::InvalidInput(format!(
            "branch ambiguity: Re kbar_nu = {} <= 0",
            a.re
        )));
    }
    Ok(sinh_ratio(a, params.h, y))
}

fn check_y(y: f64, h: f64) -> Result<()> {
    if !(0.0..=h).contains(&y) {
        return Err(Error::InvalidInput(format!("y = {y} outside [0, {h}]")));
    }
    Ok(())
}

/// Precomputed constants for evaluating ψ_k(·, λ) at many depths.
///
/// ψ = -ν λ^-1 (S_{k_ν} - S_k) with S_a(y) = sinh(a(h-y))/sinh(ah). Writing δ = k_ν - k =
/// (λ/ν)/(k_ν + k) gives ψ = -[S_{k+δ} - S_k]/δ / (k_ν + k), and the divided difference is
/// evaluated through (e^z - 1)/z so that λ = 0 and tiny λ need no special branch.
#[derive(Debug, Clone, Copy)]
pub struct StreamKernel {
    k: f64,
    h: f64,
    delta: C64,
    sum: C64,
    den1: f64,
    den2: C64,
    dden: C64,
}

impl StreamKernel {
    pub fn new(k: WaveNumber, lambda: C64, params: &FluidParams) -> Result<Self> {
        let kk = k.get();
        let h = params.h;
        let knu = kbar_nu(kk, lambda, params.nu);
        if !(knu.re > 0.0) {
            return Err(Error::InvalidInput(format!(
                "branch ambiguity: Re kbar_nu = {} <= 0",
                knu.re
            )));
        }
        let sum = knu + kk;
        let delta = (lambda / params.nu) / sum;
        let den1 = -(-2.0 * kk * h).exp_m1();
        let den2 =
            C64::new(den1, 0.0) - (-2.0 * kk * h).exp() * crate::cplx::expm1(-delta * 2.0 * h);
        // (den2 - den1)/δ
        let dden = phi1(-delta * (2.0 * h)) * ((-2.0 * kk * h).exp() * 2.0 * h);
        Ok(Self {
            k: kk,
            h,
            delta,
            sum,
            den1,
            den2,
            dden,
        })
    }

    pub fn eval(&self, y: f64) -> C64 {
        let (k, h, delta) = (self.k, self.h, self.delta);
        if y <= 0.0 || y >= h {
            return C64::new(0.0, 0.0);
        }
        let c2 = 2.0 * h - y;
        let e1 = (-k * y).exp();
        let e2 = (-k * c2).exp();
        let num1 = e1 - e2;
        // (N_{k+δ} - N_k)/δ
        let dnum = -phi1(-delta * y) * (y * e1) + phi1(-delta * c2) * (c2 * e2);
        let dd = (dnum * self.den1 - self.dden * num1) / (self.den2 * self.den1);
        -dd / self.sum
    }
}

/// ψ_k(y, λ)/β_k, finite at λ = 0.
pub fn stream_profile(k: WaveNumber, lambda: C64, params: &FluidParams, y: f64) -> Result<C64> {
    check_y(y, params.h)?;
    Ok(StreamKernel::new(k, lambda, params)?.eval(y))
}

/// ρ_k̄(y) = cosh(k̄(h-y))/(k̄ sinh(k̄h)).
pub fn greens_weight(kbar: C64, params: &FluidParams, y: f64) -> Result<C64> {
    check_y(y, params.h)?;
    greens_weight_unchecked(kbar, params.h, y)
}

pub(crate) fn greens_weight_unchecked(kbar: C64, h: f64, y: f64) -> Result<C64> {
    if !(kbar.re > 0.0) {
        return Err(Error::InvalidInput(format!(
            "Re kbar = {} must be positive",
            kbar.re
        )));
    }
    Ok(((-kbar * y).exp() + (-kbar * (2.0 * h - y)).exp())
        / (kbar * (1.0 - (-kbar * (2.0 * h)).exp())))
}
