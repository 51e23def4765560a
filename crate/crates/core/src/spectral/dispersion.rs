use crate::cplx::C64;
use crate::error::{Error, Result};
use crate::profile::TemperatureProfile;
use crate::quad::{integrate_pieces, QuadOptions};

use super::{greens_weight_unchecked, kbar, Dbar, FluidParams, StreamKernel, WaveNumber};

/// ∫_0^h ψ_k(y, λ) ρ_k̄(y) U_y(y) dy.
fn profile_integral(
    k: WaveNumber,
    lambda: C64,
    params: &FluidParams,
    profile: &TemperatureProfile,
) -> Result<C64> {
    let kb = kbar(k.get(), lambda, params.d_thermal);
    if !(kb.re > 0.0) {
        return Err(Error::InvalidInput(format!(
            "Re kbar = {} must be positive",
            kb.re
        )));
    }
    let stream = StreamKernel::new(k, lambda, params)?;
    let h = params.h;
    match profile {
        TemperatureProfile::Zero => Ok(C64::new(0.0, 0.0)),
        TemperatureProfile::Step { z0 } => {
            if !(*z0 > 0.0 && *z0 < h) {
                return Err(Error::InvalidInput(format!(
                    "step position {z0} outside (0, h)"
                )));
            }
            Ok(stream.eval(*z0) * greens_weight_unchecked(kb, h, *z0)? * (2.0 / z0))
        }
        TemperatureProfile::Designed(pp) => {
            let b = pp.coefficients();
            let floor = pp.support_floor();
            let pts = profile.breakpoints(h);
            let (z0, eps) = (pp.z0, pp.kappa);
            let mu = pp.mu;
            let integrand = |y: f64| {
                if y <= floor {
                    return C64::new(0.0, 0.0);
                }
                let u = 2.0 * crate::profile::mollifier(eps, y - z0) / y
                    + if mu == 0.0 {
                        0.0
                    } else {
                        2.0 * mu * pp.cutoff(y) * crate::profile::eval_polynomial(&b, y)
                    };
                let rho = greens_weight_unchecked(kb, h, y).unwrap_or_default();
                stream.eval(y) * rho * u
            };
            let r = integrate_pieces(integrand, &pts, QuadOptions::default())?;
            Ok(r.value)
        }
        _ => {
            let pts = profile.breakpoints(h);
            let r = integrate_pieces(
                |y| {
                    let u = profile.u_y(y).unwrap_or(0.0);
                    if u == 0.0 {
                        return C64::new(0.0, 0.0);
                    }
                    stream.eval(y) * greens_weight_unchecked(kb, h, y).unwrap_or_default() * u
                },
                &pts,
                QuadOptions::default(),
            )?;
            Ok(r.value)
        }
    }
}

/// Residual R(λ) = k² D^-1 ∫_0^h ψ_k ρ_k̄ U_y dy - b^-1 of the finite-ν eigenvalue relation.
pub fn dispersion_residual_exact(
    k: WaveNumber,
    lambda: C64,
    params: &FluidParams,
    profile: &TemperatureProfile,
) -> Result<C64> {
    let kk = k.get();
    let integral = profile_integral(k, lambda, params, profile)?;
    Ok(integral * (kk * kk / params.d_thermal) - 1.0 / params.b)
}

/// Surface temperature w_k(0) = -∫ f ρ_k̄ dy with f = D^-1 i k U_y ψ_k.
pub fn surface_value_integral(
    k: WaveNumber,
    lambda: C64,
    params: &FluidParams,
    profile: &TemperatureProfile,
) -> Result<C64> {
    let integral = profile_integral(k, lambda, params, profile)?;
    Ok(-integral * C64::new(0.0, k.get() / params.d_thermal))
}

/// ν → ∞ residual D̄ p/k - 1 - D̄ - S(p).
pub fn dispersion_residual_limit(
    k: WaveNumber,
    p: C64,
    dbar: Dbar,
    profile: &TemperatureProfile,
) -> Result<C64> {
    let kk = k.get();
    if !(p.re > kk) {
        return Err(Error::InvalidInput(format!(
            "Re p = {} must exceed k = {kk}",
            p.re
        )));
    }
    let s = profile.limit_s(p)?;
    Ok(p * (dbar.value() / kk) - 1.0 - dbar.value() - s)
}

/// The same residual in the variable p = (2 + p̃)k, arranged as (1 + e) p̃ + e - S with
/// D̄ = 1 + e so nothing cancels when p̃ and e are tiny.
pub fn limit_residual_tilde(
    k: WaveNumber,
    tilde_p: C64,
    dbar: Dbar,
    profile: &TemperatureProfile,
) -> Result<C64> {
    if !(tilde_p.re > -1.0) {
        return Err(Error::InvalidInput(format!(
            "Re p~ = {} must exceed -1",
            tilde_p.re
        )));
    }
    let s = profile.limit_s_tilde(k.get(), tilde_p)?;
    Ok(tilde_p * dbar.value() + dbar.excess() - s)
}
