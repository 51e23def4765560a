//! Choosing the polynomial correction d so that the ν → ∞ spectrum has λ = 0 exactly at a
//! prescribed set of integer wave numbers and λ < 0 at every other k ≤ M.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cplx::C64;
use crate::error::{Error, Result};
use crate::profile::{transform_g, ProfileParams, TemperatureProfile};
use crate::spectral::{dispersion_residual_exact, Dbar, FluidParams, WaveNumber};

/// H(p̃) and a finite-difference estimate of |dH/dp̃| at that point.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointValue {
    pub value: C64,
    pub lipschitz: f64,
}

fn h_map(tilde_p: C64, k: f64, dbar: Dbar, profile: &TemperatureProfile) -> Result<C64> {
    let s = profile.limit_s_tilde(k, tilde_p)?;
    Ok((s - dbar.excess()) / dbar.value())
}

/// H(p̃, k, D̄) = D̄^-1 (g_κ(p) + μ G(p, d)) + D̄^-1 - 1 at p = (2 + p̃)k.
///
/// The polynomial term uses the transform of the cut-off polynomial actually present in the
/// profile (see [`crate::profile::cutoff_transform`]); it differs from the bare G by a term of
/// order μ z0².
pub fn fixed_point_map(
    tilde_p: C64,
    k: WaveNumber,
    dbar: Dbar,
    params: &ProfileParams,
) -> Result<FixedPointValue> {
    let profile = TemperatureProfile::Designed(params.clone());
    let kk = k.get();
    let value = h_map(tilde_p, kk, dbar, &profile)?;
    let step = 1e-5;
    let plus = h_map(tilde_p + step, kk, dbar, &profile)?;
    let minus = h_map(tilde_p - step, kk, dbar, &profile)?;
    Ok(FixedPointValue {
        value,
        lipschitz: ((plus - minus) / (2.0 * step)).norm(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TildeRoot {
    pub tilde_p: f64,
    /// |p̃ - H(p̃)| at the returned point.
    pub residual: f64,
    pub lipschitz: f64,
    pub iterations: usize,
}

/// The real fixed point p̃ = H(p̃), by Newton on p̃ - H(p̃) started from H(0).
pub fn solve_tilde_p(k: WaveNumber, dbar: Dbar, params: &ProfileParams) -> Result<TildeRoot> {
    let profile = TemperatureProfile::Designed(params.clone());
    solve_tilde_p_profile(k, dbar, &profile)
}

fn solve_tilde_p_profile(
    k: WaveNumber,
    dbar: Dbar,
    profile: &TemperatureProfile,
) -> Result<TildeRoot> {
    let kk = k.get();
    let h = |x: f64| h_map(C64::new(x, 0.0), kk, dbar, profile).map(|v| v.re);
    let mut x = h(0.0)?;
    let fd = 1e-5;
    let mut best: Option<(f64, f64, f64, usize)> = None;
    for it in 1..=60 {
        let hx = h(x)?;
        let f = x - hx;
        let slope = (h(x + fd)? - h(x - fd)?) / (2.0 * fd);
        let lipschitz = slope.abs();
        if lipschitz >= 1.0 {
            return Err(Error::NotContracting { lipschitz });
        }
        // Stop once |f| stops improving: the iterate is at the rounding floor of H.
        if let Some((bx, bf, bl, bit)) = best {
            if f.abs() >= bf {
                return Ok(TildeRoot {
                    tilde_p: bx,
                    residual: bf,
                    lipschitz: bl,
                    iterations: bit,
                });
            }
        }
        best = Some((x, f.abs(), lipschitz, it));
        if f == 0.0 {
            break;
        }
        x -= f / (1.0 - slope);
    }
    let (bx, bf, bl, bit) = best.expect("at least one iteration");
    if bf <= 1e-12 {
        return Ok(TildeRoot {
            tilde_p: bx,
            residual: bf,
            lipschitz: bl,
            iterations: bit,
        });
    }
    Err(Error::NoConvergence {
        iterations: 60,
        last: C64::new(bx, 0.0),
        residual: bf,
    })
}

/// λ = D k² (2 + p̃) p̃.
pub fn lambda_from_tilde(k: f64, tilde_p: f64, d_thermal: f64) -> f64 {
    d_thermal * k * k * (2.0 + tilde_p) * tilde_p
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignResult {
    pub d: Vec<f64>,
    /// p̃_k for k = 1..=M at D̄_c.
    pub achieved_tilde_p: Vec<f64>,
    pub newton_iters: usize,
    pub residual_norm: f64,
    pub k_n: Vec<u32>,
    pub kappa: f64,
    pub dbar_c: Dbar,
}

impl DesignResult {
    pub fn params(&self) -> Result<ProfileParams> {
        ProfileParams::new(self.kappa, self.d.clone())
    }
}

/// Design targets: p̃* = 0 on K_N, -κ elsewhere.
fn targets(k_n: &[u32], m: usize, kappa: f64) -> Vec<f64> {
    (1..=m as u32)
        .map(|k| if k_n.contains(&k) { 0.0 } else { -kappa })
        .collect()
}

fn tilde_vector(kappa: f64, d: &[f64], dbar: Dbar) -> Result<Vec<f64>> {
    let params = ProfileParams::new(kappa, d.to_vec())?;
    (1..=d.len())
        .map(|k| solve_tilde_p(WaveNumber::new(k as f64)?, dbar, &params).map(|r| r.tilde_p))
        .collect()
}

/// Tolerance on the design residual: 1e-9, tightened proportionally for κ < 1.
pub fn design_tolerance(kappa: f64) -> f64 {
    1e-9 * kappa.min(1.0)
}

/// Newton solve for d with central-difference Jacobian (step 1e-6), starting at d = 0.
pub fn design_profile(
    k_n: &[u32],
    kappa: f64,
    dbar_c: Dbar,
) -> Result<(DesignResult, TemperatureProfile)> {
    let m = *k_n
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidInput("K_N is empty".into()))? as usize;
    design_profile_from(k_n, kappa, dbar_c, vec![0.0; m])
}

/// As [`design_profile`], from a given starting d.
pub fn design_profile_from(
    k_n: &[u32],
    kappa: f64,
    dbar_c: Dbar,
    d0: Vec<f64>,
) -> Result<(DesignResult, TemperatureProfile)> {
    if k_n.is_empty() || k_n.contains(&0) {
        return Err(Error::InvalidInput(
            "K_N must be a non-empty set of positive integers".into(),
        ));
    }
    let m = *k_n.iter().max().expect("non-empty") as usize;
    if d0.len() != m {
        return Err(Error::InvalidInput(format!(
            "d has length {}, expected M = {m}",
            d0.len()
        )));
    }
    let target = targets(k_n, m, kappa);
    let tol = design_tolerance(kappa);
    let residual = |d: &[f64]| -> Result<(Vec<f64>, DVector<f64>)> {
        let tp = tilde_vector(kappa, d, dbar_c)?;
        let r = DVector::from_iterator(m, tp.iter().zip(&target).map(|(a, b)| a - b));
        Ok((tp, r))
    };
    let mut d = d0;
    let (mut tp, mut r) = residual(&d)?;
    let fd = 1e-6;
    for iter in 0..=40 {
        if r.amax() < tol {
            let params = ProfileParams::new(kappa, d.clone())?;
            return Ok((
                DesignResult {
                    d,
                    achieved_tilde_p: tp,
                    newton_iters: iter,
                    residual_norm: r.norm(),
                    k_n: sorted(k_n),
                    kappa,
                    dbar_c,
                },
                TemperatureProfile::Designed(params),
            ));
        }
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut dp = d.clone();
            let mut dm = d.clone();
            dp[j] += fd;
            dm[j] -= fd;
            if dp[j].abs() >= 0.5 || dm[j].abs() >= 0.5 {
                return Err(infeasible(k_n, kappa, dbar_c, &d, &r));
            }
            let (_, rp) = residual(&dp)?;
            let (_, rm) = residual(&dm)?;
            jac.set_column(j, &((rp - rm) / (2.0 * fd)));
        }
        let step = jac
            .clone()
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::Singular("design Jacobian is singular".into()))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = d
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a - alpha * s)
                .collect();
            if trial.iter().all(|v| v.abs() < 0.5 - fd) {
                let (tp_t, r_t) = residual(&trial)?;
                if r_t.norm() < r.norm() {
                    d = trial;
                    tp = tp_t;
                    r = r_t;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(infeasible(k_n, kappa, dbar_c, &d, &r));
        }
    }
    Err(infeasible(k_n, kappa, dbar_c, &d, &r))
}

fn sorted(k_n: &[u32]) -> Vec<u32> {
    let mut v = k_n.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Explains a failed design: for each k in K_N, how large μG(2k, d) must be versus how large it is.
fn infeasible(k_n: &[u32], kappa: f64, dbar: Dbar, d: &[f64], r: &DVector<f64>) -> Error {
    let mut parts = Vec::new();
    if let Ok(params) = ProfileParams::new(kappa, d.to_vec()) {
        let profile = TemperatureProfile::Designed(ProfileParams {
            mu: 0.0,
            ..params.clone()
        });
        for &k in &sorted(k_n) {
            let p = C64::new(2.0 * k as f64, 0.0);
            let needed = profile
                .limit_s(p)
                .map(|g| (dbar.excess() - g.re).abs())
                .unwrap_or(f64::NAN);
            // The factor that vanishes at p = 2k is the only one d_k controls directly.
            let have = [-0.499, 0.499]
                .iter()
                .map(|&s| {
                    let mut trial = d.to_vec();
                    if let Some(v) = trial.get_mut(k as usize - 1) {
                        *v = s;
                    }
                    params.mu * transform_g(p, &trial).norm()
                })
                .fold(0.0, f64::max);
            parts.push(format!(
                "k={k}: needs |mu G(2k)| = {needed:.3e}, reachable about {have:.3e}"
            ));
        }
    }
    Error::InfeasibleDesign(format!(
        "Newton could not reach the targets with |d_j| < 1/2 (max |residual| {:.3e}); {}; a smaller kappa is required",
        r.amax(),
        parts.join(", ")
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyRow {
    pub k: u32,
    pub selected: bool,
    pub lambda_b1: f64,
    pub lambda_bc: f64,
    pub lambda_b2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignReport {
    pub rows: Vec<VerifyRow>,
    /// min over non-selected k of -λ(k, b_c).
    pub gap: f64,
    pub failures: Vec<String>,
}

impl DesignReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks λ(k_j, b_c) = 0, the sign change across b ∈ {b_c(1-κ), b_c, b_c(1+κ)} and
/// λ(k, b_c) < 0 for the other k ≤ M + 3 (ν → ∞ relation).
pub fn verify_design(
    params: &ProfileParams,
    k_n: &[u32],
    dbar_c: Dbar,
    fluid: &FluidParams,
    lambda_tol: f64,
) -> Result<DesignReport> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut gap = f64::INFINITY;
    let kappa = params.kappa;
    let d = fluid.d_thermal;
    for k in 1..=(params.m as u32 + 3) {
        let wk = WaveNumber::new(k as f64)?;
        let kk = k as f64;
        let at = |dbar: Dbar| -> Result<f64> {
            Ok(lambda_from_tilde(
                kk,
                solve_tilde_p(wk, dbar, params)?.tilde_p,
                d,
            ))
        };
        let lambda_b1 = at(dbar_c.with_b_scaled(-kappa))?;
        let lambda_bc = at(dbar_c)?;
        let lambda_b2 = at(dbar_c.with_b_scaled(kappa))?;
        let selected = k_n.contains(&k);
        if selected {
            if lambda_bc.abs() >= lambda_tol * kk * kk {
                failures.push(format!("k={k}: |lambda(b_c)| = {:.3e}", lambda_bc.abs()));
            }
            if !(lambda_b1 < 0.0) {
                failures.push(format!(
                    "k={k}: lambda(b1) = {lambda_b1:.3e} is not negative"
                ));
            }
            if !(lambda_b2 > 0.0) {
                failures.push(format!(
                    "k={k}: lambda(b2) = {lambda_b2:.3e} is not positive"
                ));
            }
        } else {
            gap = gap.min(-lambda_bc);
            if !(lambda_bc < 0.0) {
                failures.push(format!(
                    "k={k}: lambda(b_c) = {lambda_bc:.3e} is not negative"
                ));
            }
        }
        rows.push(VerifyRow {
            k,
            selected,
            lambda_b1,
            lambda_bc,
            lambda_b2,
        });
    }
    Ok(DesignReport {
        rows,
        gap,
        failures,
    })
}

/// Finite-ν correction of a ν → ∞ design: Newton on d so that the exact residual vanishes at
/// λ*_k = D k²(2 + p̃*_k) p̃*_k for k = 1..=M, with b = D/D̄_c.
pub fn refine_design_exact(
    design: &DesignResult,
    fluid: &FluidParams,
    max_iter: usize,
) -> Result<DesignResult> {
    let m = design.d.len();
    let target = targets(&design.k_n, m, design.kappa);
    let fluid = fluid.with_b(fluid.d_thermal / design.dbar_c.value());
    let residual = |d: &[f64]| -> Result<DVector<f64>> {
        let params = ProfileParams::new(design.kappa, d.to_vec())?;
        let profile = TemperatureProfile::Designed(params);
        let mut r = DVector::zeros(m);
        for k in 1..=m {
            let kk = k as f64;
            let lam = lambda_from_tilde(kk, target[k - 1], fluid.d_thermal);
            let v = dispersion_residual_exact(
                WaveNumber::new(kk)?,
                C64::new(lam, 0.0),
                &fluid,
                &profile,
            )?;
            r[k - 1] = v.re * fluid.b;
        }
        Ok(r)
    };
    let mut d = design.d.clone();
    let mut r = residual(&d)?;
    let fd = 1e-6;
    let mut iters = 0;
    while r.amax() > 1e-12 && iters < max_iter {
        iters += 1;
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut dp = d.clone();
            let mut dm = d.clone();
            dp[j] += fd;
            dm[j] -= fd;
            jac.set_column(j, &((residual(&dp)? - residual(&dm)?) / (2.0 * fd)));
        }
        let step = jac
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::Singular("refinement Jacobian is singular".into()))?;
        let trial: Vec<f64> = d.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
        if trial.iter().any(|v| v.abs() >= 0.5) {
            return Err(Error::InfeasibleDesign(
                "finite-nu refinement pushed |d_j| past 1/2".into(),
            ));
        }
        d = trial;
        r = residual(&d)?;
    }
    if r.amax() > 1e-12 {
        return Err(Error::NoConvergence {
            iterations: iters,
            last: C64::new(r.amax(), 0.0),
            residual: r.amax(),
        });
    }
    let tp = tilde_vector(design.kappa, &d, design.dbar_c)?;
    Ok(DesignResult {
        d,
        achieved_tilde_p: tp,
        newton_iters: iters,
        residual_norm: r.norm(),
        ..design.clone()
    })
}
