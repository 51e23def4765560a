use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cplx::{sqrt_principal, C64};
use crate::error::{Error, Result};
use crate::profile::TemperatureProfile;

use super::{dispersion_residual_exact, limit_residual_tilde, Dbar, FluidParams, WaveNumber};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Finite ν, full profile integral.
    Exact,
    /// ν → ∞ relation D̄p/k = 1 + D̄ + S(p).
    Limit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexEigenvalue {
    pub k: f64,
    pub lambda: C64,
    pub p: C64,
    /// p/k - 2, the variable the solver works in.
    pub tilde_p: C64,
    pub residual: C64,
    /// Re λ > -1/2. Roots to the left are reported, not discarded.
    pub in_half_plane: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Absolute residual tolerance; `None` picks 1e-12 (limit) or 1e-9 (exact).
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Previously found roots (in p̃) divided out of the residual.
    pub deflate: Vec<C64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 100,
            deflate: Vec::new(),
        }
    }
}

/// p̃ = p/k - 2 for a given λ, λ = D k² (2 + p̃) p̃.
fn tilde_from_lambda(k: f64, lambda: C64, d_thermal: f64) -> C64 {
    let a = lambda / d_thermal;
    let root = sqrt_principal(C64::new(k * k, 0.0) + a);
    a / (k * (root + k))
}

fn lambda_from_tilde(k: f64, tp: C64, d_thermal: f64) -> C64 {
    (tp + 2.0) * tp * (d_thermal * k * k)
}

/// Complex secant iteration on r(z) / Π (z - z_i), stopping on the undeflated residual.
fn secant<F: Fn(C64) -> Result<C64>>(
    f: F,
    z0: C64,
    scale: f64,
    tol: f64,
    opts: &SolveOptions,
) -> Result<(C64, C64, usize)> {
    let deflated = |z: C64, r: C64| opts.deflate.iter().fold(r, |acc, zi| acc / (z - zi));
    let mut za = z0;
    let ra = f(za)?;
    if ra.norm() < tol {
        return Ok((za, ra, 0));
    }
    let mut fa = deflated(za, ra);
    let mut zb = z0 + C64::new(scale, 0.0);
    let mut rb = f(zb)?;
    let mut fb = deflated(zb, rb);
    for it in 1..=opts.max_iter {
        if rb.norm() < tol {
            return Ok((zb, rb, it));
        }
        let denom = fb - fa;
        if denom.norm() == 0.0 || !denom.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it,
                last: zb,
                residual: rb.norm(),
            });
        }
        let mut step = fb * (zb - za) / denom;
        // Keep the iterate inside Re p > k.
        let max_step = 0.5_f64.max(4.0 * zb.norm());
        if step.norm() > max_step {
            step *= max_step / step.norm();
        }
        let mut zn = zb - step;
        while zn.re <= -1.0 {
            step *= 0.5;
            zn = zb - step;
        }
        if zn == zb {
            return if rb.norm() < 100.0 * tol {
                Ok((zb, rb, it))
            } else {
                Err(Error::NoConvergence {
                    iterations: it,
                    last: zb,
                    residual: rb.norm(),
                })
            };
        }
        za = zb;
        fa = fb;
        zb = zn;
        rb = f(zb)?;
        fb = deflated(zb, rb);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last: zb,
        residual: rb.norm(),
    })
}

/// Root of the ν → ∞ relation in the p̃ variable, for an explicit D̄.
pub fn solve_limit_tilde(
    k: WaveNumber,
    dbar: Dbar,
    profile: &TemperatureProfile,
    guess: C64,
    opts: &SolveOptions,
) -> Result<(C64, C64, usize)> {
    let tol = opts.tol.unwrap_or(1e-12);
    let scale = 1e-3 * guess.norm().max(1e-6);
    let (tp, r, it) = secant(
        |z| limit_residual_tilde(k, z, dbar, profile),
        guess,
        scale,
        tol,
        opts,
    )?;
    if !(tp.re > -1.0) {
        return Err(Error::OutsideDomain(tp));
    }
    Ok((tp, r, it))
}

/// Eigenvalue near `guess` (a λ value). Searches in p̃ = p/k - 2.
pub fn solve_eigenvalue(
    k: WaveNumber,
    params: &FluidParams,
    profile: &TemperatureProfile,
    guess: C64,
    mode: Mode,
    opts: &SolveOptions,
) -> Result<ComplexEigenvalue> {
    let kk = k.get();
    let d = params.d_thermal;
    let start = tilde_from_lambda(kk, guess, d);
    let (tp, residual, iterations) = match mode {
        Mode::Limit => solve_limit_tilde(k, Dbar::from_value(params.dbar()), profile, start, opts)?,
        Mode::Exact => {
            let tol = opts.tol.unwrap_or(1e-9);
            let scale = 1e-3 * start.norm().max(1e-3);
            secant(
                |z| dispersion_residual_exact(k, lambda_from_tilde(kk, z, d), params, profile),
                start,
                scale,
                tol,
                opts,
            )?
        }
    };
    let lambda = lambda_from_tilde(kk, tp, d);
    if !(tp.re > -1.0) {
        return Err(Error::OutsideDomain(lambda));
    }
    if mode == Mode::Exact && lambda.norm() > params.nu.powf(0.75) {
        return Err(Error::OutsideDomain(lambda));
    }
    Ok(ComplexEigenvalue {
        k: kk,
        lambda,
        p: (tp + 2.0) * kk,
        tilde_p: tp,
        residual,
        in_half_plane: lambda.re > -0.5,
        iterations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub k: f64,
    pub eigen: Option<ComplexEigenvalue>,
    pub error: Option<String>,
}

/// λ(k) over a list of wave numbers with continuation p̃_{i+1} = p̃_i k_i / k_{i+1}
/// (i.e. p_{i+1} - 2k_{i+1} = p_i - 2k_i). Rows come back sorted by k.
pub fn spectrum_scan(
    k_range: &[WaveNumber],
    params: &FluidParams,
    profile: &TemperatureProfile,
    mode: Mode,
    initial_guess: C64,
) -> Vec<SpectrumRow> {
    let mut ks: Vec<WaveNumber> = k_range.to_vec();
    ks.sort_by(|a, b| a.get().total_cmp(&b.get()));
    let mut rows = Vec::with_capacity(ks.len());
    let mut prev: Option<(f64, C64)> = None;
    for k in ks {
        let kk = k.get();
        let guess = match prev {
            Some((k_prev, tp_prev)) => {
                lambda_from_tilde(kk, tp_prev * (k_prev / kk), params.d_thermal)
            }
            None => initial_guess,
        };
        match solve_eigenvalue(k, params, profile, guess, mode, &SolveOptions::default()) {
            Ok(ev) => {
                prev = Some((kk, ev.tilde_p));
                rows.push(SpectrumRow {
                    k: kk,
                    eigen: Some(ev),
                    error: None,
                });
            }
            Err(e) => rows.push(SpectrumRow {
                k: kk,
                eigen: None,
                error: Some(e.to_string()),
            }),
        }
    }
    rows
}

/// `k,re_lambda,im_lambda,re_p,im_p,residual_abs,converged` with 17 significant digits.
pub fn spectrum_to_csv(rows: &[SpectrumRow]) -> String {
    let mut out = String::from("k,re_lambda,im_lambda,re_p,im_p,residual_abs,converged\n");
    for row in rows {
        match &row.eigen {
            Some(ev) => {
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},true",
                    row.k,
                    ev.lambda.re,
                    ev.lambda.im,
                    ev.p.re,
                    ev.p.im,
                    ev.residual.norm()
                );
            }
            None => {
                let _ = writeln!(out, "{:.16e},NaN,NaN,NaN,NaN,NaN,false", row.k);
            }
        }
    }
    out
}
