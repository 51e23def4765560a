//! Vertical temperature profiles: the mollified step with polynomial correction and a few
//! reference profiles used for testing and for the step-limit spectrum.

pub mod mollifier;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cplx::{expm1, C64};
use crate::error::{Error, Result};
use crate::quad::{cumulative_trapezoid, integrate_pieces, QuadOptions};

pub use mollifier::{bump, bump_cdf, mollifier, MollifierSpec, BUMP_DERIVATIVE_BOUNDS, BUMP_MASS};

/// Parameters of the designed family V(y, d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub kappa: f64,
    pub z0: f64,
    pub mu: f64,
    pub m: usize,
    pub d: Vec<f64>,
}

impl ProfileParams {
    /// The family itself: z0 = 5κ, μ = κ^(2/3), M = d.len().
    pub fn new(kappa: f64, d: Vec<f64>) -> Result<Self> {
        Self::with_shape(kappa, 5.0 * kappa, kappa.powf(2.0 / 3.0), d)
    }

    /// Free z0 and μ, for limit studies (κ → 0 at fixed z0, μ = 0, ...).
    pub fn with_shape(kappa: f64, z0: f64, mu: f64, d: Vec<f64>) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        if !(z0 - kappa > 0.0) {
            return Err(Error::InvalidInput(format!(
                "mollifier support must stay above y = 0 (z0 = {z0}, kappa = {kappa})"
            )));
        }
        if !(mu >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "mu must be non-negative, got {mu}"
            )));
        }
        if let Some(bad) = d.iter().find(|v| !(v.abs() < 0.5)) {
            return Err(Error::InvalidInput(format!(
                "|d_j| must be < 1/2, got {bad}"
            )));
        }
        Ok(Self {
            kappa,
            z0,
            mu,
            m: d.len(),
            d,
        })
    }

    pub fn mollifier(&self) -> MollifierSpec {
        MollifierSpec::new(self.kappa)
    }

    /// Roots a_j = 1/(2j + d_j) of the factor polynomial in 1/p.
    pub fn roots(&self) -> Vec<f64> {
        pole_roots(&self.d)
    }

    pub fn coefficients(&self) -> Vec<f64> {
        polynomial_coefficients(&self.d)
    }

    pub fn support_floor(&self) -> f64 {
        self.z0 - self.kappa
    }

    /// Smooth switch from 0 below z0 - κ to 1 above z0 + κ.
    pub fn cutoff(&self, y: f64) -> f64 {
        self.mollifier().cdf(y - self.z0)
    }
}

pub fn pole_roots(d: &[f64]) -> Vec<f64> {
    d.iter()
        .enumerate()
        .map(|(j, dj)| 1.0 / (2.0 * (j + 1) as f64 + dj))
        .collect()
}

/// Elementary symmetric polynomials e_0..e_n of `a`.
pub fn elementary_symmetric(a: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; a.len() + 1];
    e[0] = 1.0;
    for (n, &x) in a.iter().enumerate() {
        for r in (1..=n + 1).rev() {
            e[r] += x * e[r - 1];
        }
    }
    e
}

/// Coefficients b_0..b_M of P_M(y) = Σ b_j y^j whose transform ∫ y P_M e^{-py} dy equals
/// G(p, d) = p^-2 (-1)^(M+1) Π (1/p - a_j).
pub fn polynomial_coefficients(d: &[f64]) -> Vec<f64> {
    let a = pole_roots(d);
    let m = a.len();
    let e = elementary_symmetric(&a);
    let mut fact = 1.0;
    (0..=m)
        .map(|j| {
            fact *= (j + 1) as f64;
            let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
            sign * e[m - j] / fact
        })
        .collect()
}

pub fn eval_polynomial(b: &[f64], y: f64) -> f64 {
    b.iter().rev().fold(0.0, |acc, &c| acc * y + c)
}

/// Closed form G(p, d).
pub fn transform_g(p: C64, d: &[f64]) -> C64 {
    let a = pole_roots(d);
    let inv = p.inv();
    let sign = if (a.len() + 1) % 2 == 0 { 1.0 } else { -1.0 };
    a.iter().fold(inv * inv * sign, |acc, &aj| acc * (inv - aj))
}

/// G at p = (2 + p̃)k with each factor written as ((2j - 2k) + d_j - k p̃)/(p (2j + d_j)), which
/// keeps full relative accuracy next to the zeros p = 2j + d_j.
pub fn transform_g_tilde(k: f64, tilde_p: C64, d: &[f64]) -> C64 {
    let p = (tilde_p + 2.0) * k;
    let inv = p.inv();
    let sign = if (d.len() + 1) % 2 == 0 { 1.0 } else { -1.0 };
    d.iter()
        .enumerate()
        .fold(inv * inv * sign, |acc, (i, &dj)| {
            let two_j = 2.0 * (i + 1) as f64;
            acc * ((two_j - 2.0 * k) + dj - tilde_p * k) * inv / (two_j + dj)
        })
}

/// g_κ(p) = -1 + ∫ δ_κ(y - z0) e^{-py} dy, computed as ∫ δ (e^{-py} - 1) to keep relative
/// accuracy when p z0 is tiny.
pub fn g_kappa(p: C64, spec: &MollifierSpec, z0: f64) -> Result<C64> {
    if !(z0 - spec.eps > 0.0) {
        return Err(Error::InvalidInput(
            "mollifier support must lie in y > 0".into(),
        ));
    }
    let eps = spec.eps;
    let r = integrate_pieces(
        |t| expm1(-p * (z0 + eps * t)) * bump(t),
        &[-1.0, 0.0, 1.0],
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-14,
            max_intervals: 2000,
        },
    )?;
    Ok(r.value)
}

/// A callable U_y with the points where it is not smooth.
#[derive(Clone)]
pub struct CustomProfile {
    pub u_y: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub breaks: Vec<f64>,
    pub floor: f64,
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProfile")
            .field("breaks", &self.breaks)
            .field("floor", &self.floor)
            .finish_non_exhaustive()
    }
}

/// Temperature profile U(y) = V(y), described by its derivative U_y.
#[derive(Debug, Clone)]
pub enum TemperatureProfile {
    Zero,
    /// Sharp step of height 2/z0 at z0, i.e. U_y = 2 y^-1 δ(y - z0): the κ → 0 limit of the
    /// designed family with μ = 0. Its limit relation is exp(-p z0) = D̄ p/k - D̄.
    Step {
        z0: f64,
    },
    Designed(ProfileParams),
    /// Piecewise-linear U_y through samples.
    Tabulated {
        y: Vec<f64>,
        v_y: Vec<f64>,
    },
    Custom(CustomProfile),
}

impl TemperatureProfile {
    pub fn designed(params: ProfileParams) -> Self {
        Self::Designed(params)
    }

    pub fn custom(u_y: impl Fn(f64) -> f64 + Send + Sync + 'static, breaks: Vec<f64>) -> Self {
        Self::Custom(CustomProfile {
            u_y: Arc::new(u_y),
            breaks,
            floor: 0.0,
        })
    }

    /// U_y(y) for profiles with a pointwise derivative; `None` for the sharp step.
    pub fn u_y(&self, y: f64) -> Option<f64> {
        match self {
            Self::Zero => Some(0.0),
            Self::Step { .. } => None,
            Self::Designed(pp) => Some(designed_u_y(pp, &pp.coefficients(), y)),
            Self::Tabulated { y: ys, v_y } => Some(interp_linear(ys, v_y, y)),
            Self::Custom(c) => Some((c.u_y)(y)),
        }
    }

    /// Samples U_y on a grid, reusing the polynomial coefficients.
    pub fn sample_u_y(&self, grid: &[f64]) -> Option<Vec<f64>> {
        match self {
            Self::Designed(pp) => {
                let b = pp.coefficients();
                Some(grid.iter().map(|&y| designed_u_y(pp, &b, y)).collect())
            }
            Self::Step { .. } => None,
            _ => Some(
                grid.iter()
                    .map(|&y| self.u_y(y).expect("pointwise profile"))
                    .collect(),
            ),
        }
    }

    /// δ1 with V = 0 on [0, δ1).
    pub fn support_floor(&self) -> f64 {
        match self {
            Self::Zero => f64::INFINITY,
            Self::Step { z0 } => *z0,
            Self::Designed(pp) => pp.support_floor(),
            Self::Tabulated { y, v_y } => y
                .iter()
                .zip(v_y)
                .find(|(_, v)| **v != 0.0)
                .map(|(y, _)| *y)
                .unwrap_or(f64::INFINITY),
            Self::Custom(c) => c.floor,
        }
    }

    /// Ordered points in [0, h] where the integrand should be split.
    pub fn breakpoints(&self, h: f64) -> Vec<f64> {
        let mut pts = vec![0.0, h];
        match self {
            Self::Designed(pp) => {
                let (z0, k) = (pp.z0, pp.kappa);
                pts.extend([z0 - k, z0 - 0.5 * k, z0, z0 + 0.5 * k, z0 + k]);
                // Unit panels above the spike so the adaptive pass starts resolved.
                let mut y = (z0 + k).ceil();
                while y < h {
                    pts.push(y);
                    y += 1.0;
                }
            }
            Self::Tabulated { y, .. } => pts.extend(y.iter().copied()),
            Self::Custom(c) => pts.extend(c.breaks.iter().copied()),
            _ => {}
        }
        pts.retain(|y| *y >= 0.0 && *y <= h);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Right end of the data for sampled and callable profiles.
    pub fn extent(&self) -> f64 {
        match self {
            Self::Tabulated { y, .. } => y.last().copied().unwrap_or(0.0),
            Self::Custom(c) => c.breaks.iter().copied().fold(0.0, f64::max),
            _ => f64::INFINITY,
        }
    }

    /// S(p) = (1/2) ∫ y U_y e^{-py} dy - 1, the profile term of the ν → ∞ dispersion relation.
    pub fn limit_s(&self, p: C64) -> Result<C64> {
        match self {
            Self::Zero => Ok(C64::new(-1.0, 0.0)),
            Self::Step { z0 } => Ok(expm1(-p * *z0)),
            Self::Designed(pp) => designed_limit_s(pp, p),
            _ => {
                let pts = self.breakpoints(self.extent());
                let r = integrate_pieces(
                    |y| (-p * y).exp() * (0.5 * y * self.u_y(y).unwrap_or(0.0)),
                    &pts,
                    QuadOptions::default(),
                )?;
                Ok(r.value - 1.0)
            }
        }
    }

    /// S at p = (2 + p̃)k; for the designed family the polynomial term is evaluated without
    /// cancellation near its zeros.
    pub fn limit_s_tilde(&self, k: f64, tilde_p: C64) -> Result<C64> {
        let p = (tilde_p + 2.0) * k;
        match self {
            Self::Designed(pp) if pp.mu != 0.0 => {
                let g = g_kappa(p, &pp.mollifier(), pp.z0)?;
                Ok(g + cutoff_transform_tilde(pp, k, tilde_p)? * pp.mu)
            }
            _ => self.limit_s(p),
        }
    }

    /// V(y) = ∫_0^y U_y.
    pub fn v(&self, y: f64) -> Result<f64> {
        match self {
            Self::Zero => Ok(0.0),
            Self::Step { z0 } => Ok(if y > *z0 { 2.0 / z0 } else { 0.0 }),
            _ => {
                let mut pts: Vec<f64> = self
                    .breakpoints(y.max(0.0))
                    .into_iter()
                    .filter(|p| *p <= y)
                    .collect();
                if pts.last() != Some(&y) {
                    pts.push(y);
                }
                let r = integrate_pieces(
                    |s| C64::new(self.u_y(s).unwrap_or(0.0), 0.0),
                    &pts,
                    QuadOptions::default(),
                )?;
                Ok(r.value.re)
            }
        }
    }
}

fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    let i = xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    if x1 == x0 {
        return ys[i];
    }
    let t = (x - x0) / (x1 - x0);
    ys[i - 1] * (1.0 - t) + ys[i] * t
}

fn designed_u_y(pp: &ProfileParams, b: &[f64], y: f64) -> f64 {
    if y <= pp.z0 - pp.kappa {
        return 0.0;
    }
    let spike = 2.0 * mollifier(pp.kappa, y - pp.z0) / y;
    let smooth = if pp.mu == 0.0 {
        0.0
    } else {
        2.0 * pp.mu * pp.cutoff(y) * eval_polynomial(b, y)
    };
    spike + smooth
}

/// μ ∫_0^∞ y χ(y) P_M(y) e^{-py} dy, with χ the smooth cutoff: the closed form G minus the part
/// the cutoff removes near the surface.
pub fn cutoff_transform(pp: &ProfileParams, p: C64) -> Result<C64> {
    Ok(transform_g(p, &pp.d) - cutoff_removed(pp, p)?)
}

/// [`cutoff_transform`] at p = (2 + p̃)k, using [`transform_g_tilde`].
pub fn cutoff_transform_tilde(pp: &ProfileParams, k: f64, tilde_p: C64) -> Result<C64> {
    let p = (tilde_p + 2.0) * k;
    Ok(transform_g_tilde(k, tilde_p, &pp.d) - cutoff_removed(pp, p)?)
}

fn cutoff_removed(pp: &ProfileParams, p: C64) -> Result<C64> {
    let b = pp.coefficients();
    let (lo, hi) = (pp.z0 - pp.kappa, pp.z0 + pp.kappa);
    let removed = integrate_pieces(
        |y| (-p * y).exp() * (y * (1.0 - pp.cutoff(y)) * eval_polynomial(&b, y)),
        &[0.0, lo, pp.z0, hi],
        QuadOptions {
            abs_tol: 1e-300,
            rel_tol: 1e-14,
            max_intervals: 2000,
        },
    )?;
    Ok(removed.value)
}

fn designed_limit_s(pp: &ProfileParams, p: C64) -> Result<C64> {
    let g = g_kappa(p, &pp.mollifier(), pp.z0)?;
    if pp.mu == 0.0 {
        return Ok(g);
    }
    Ok(g + cutoff_transform(pp, p)? * pp.mu)
}

/// Persisted form of a designed profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub kappa: f64,
    pub z0: f64,
    pub mu: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub d: Vec<f64>,
    #[serde(rename = "K_N")]
    pub k_n: Vec<u32>,
    #[serde(rename = "Dbar_c")]
    pub dbar_c: f64,
    pub y: Vec<f64>,
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    #[serde(rename = "V_y")]
    pub v_y: Vec<f64>,
}

impl ProfileDocument {
    /// Samples the profile on [0, y_max]: 201 points across the mollifier support and
    /// `outer` points on each side, V by cumulative trapezoid.
    pub fn new(params: &ProfileParams, k_n: &[u32], dbar_c: f64, y_max: f64, outer: usize) -> Self {
        let grid = profile_grid(params, y_max, outer);
        let profile = TemperatureProfile::Designed(params.clone());
        let v_y = profile
            .sample_u_y(&grid)
            .expect("designed profile is pointwise");
        let v = cumulative_trapezoid(&grid, &v_y);
        Self {
            kappa: params.kappa,
            z0: params.z0,
            mu: params.mu,
            m: params.m,
            d: params.d.clone(),
            k_n: k_n.to_vec(),
            dbar_c,
            y: grid,
            v,
            v_y,
        }
    }

    pub fn params(&self) -> Result<ProfileParams> {
        ProfileParams::with_shape(self.kappa, self.z0, self.mu, self.d.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn profile_grid(params: &ProfileParams, y_max: f64, outer: usize) -> Vec<f64> {
    let (lo, hi) = (params.z0 - params.kappa, params.z0 + params.kappa);
    let mut grid = Vec::new();
    let below = outer.max(2);
    for i in 0..below {
        grid.push(lo * i as f64 / below as f64);
    }
    let inner = 200;
    for i in 0..=inner {
        grid.push(lo + (hi - lo) * i as f64 / inner as f64);
    }
    if y_max > hi {
        for i in 1..=outer.max(2) {
            grid.push(hi + (y_max - hi) * i as f64 / outer.max(2) as f64);
        }
    }
    grid
}
