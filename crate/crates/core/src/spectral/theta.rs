use serde::{Deserialize, Serialize};

use crate::cplx::C64;
use crate::error::{Error, Result};
use crate::profile::TemperatureProfile;
use crate::tridiag::neumann_complex;

use super::{kbar, FluidParams, StreamKernel, WaveNumber};

/// Sampled ω_k, ψ_k, θ_k on a uniform grid over [0, h] (β_k = 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeProfiles {
    pub y_grid: Vec<f64>,
    pub omega: Vec<C64>,
    pub psi: Vec<C64>,
    pub theta: Vec<C64>,
    pub k: f64,
    pub lambda: C64,
}

pub fn uniform_grid(h: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| h * i as f64 / (n - 1) as f64).collect()
}

/// Second-order finite-difference solution of θ'' - k̄²θ = D^-1 i k U_y ψ_k with θ'(0) = θ'(h) = 0.
pub fn theta_fd(
    k: WaveNumber,
    lambda: C64,
    params: &FluidParams,
    profile: &TemperatureProfile,
    n: usize,
) -> Result<Vec<C64>> {
    if n < 3 {
        return Err(Error::InvalidInput("need at least 3 grid points".into()));
    }
    let grid = uniform_grid(params.h, n);
    let u_y = profile.sample_u_y(&grid).ok_or_else(|| {
        Error::InvalidInput("a sharp step has no pointwise U_y; use a mollified profile".into())
    })?;
    let stream = StreamKernel::new(k, lambda, params)?;
    let coef = C64::new(0.0, k.get() / params.d_thermal);
    let f: Vec<C64> = grid
        .iter()
        .zip(&u_y)
        .map(|(&y, &u)| {
            if u == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                coef * u * stream.eval(y)
            }
        })
        .collect();
    let kb = kbar(k.get(), lambda, params.d_thermal);
    neumann_complex(kb * kb, grid[1] - grid[0], &f)
}

/// Mode profiles on `n` uniform points; θ from two second-order solves combined by Richardson
/// extrapolation (fourth order at the shared nodes).
pub fn theta_profile(
    k: WaveNumber,
    lambda: C64,
    params: &FluidParams,
    profile: &TemperatureProfile,
    n: usize,
) -> Result<ModeProfiles> {
    let coarse = theta_fd(k, lambda, params, profile, n)?;
    let fine = theta_fd(k, lambda, params, profile, 2 * n - 1)?;
    let theta: Vec<C64> = coarse
        .iter()
        .enumerate()
        .map(|(i, c)| (fine[2 * i] * 4.0 - c) / 3.0)
        .collect();
    let y_grid = uniform_grid(params.h, n);
    let stream = StreamKernel::new(k, lambda, params)?;
    let psi = y_grid.iter().map(|&y| stream.eval(y)).collect();
    let omega = y_grid
        .iter()
        .map(|&y| super::vorticity_profile(k, lambda, params, y.min(params.h)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModeProfiles {
        y_grid,
        omega,
        psi,
        theta,
        k: k.get(),
        lambda,
    })
}
