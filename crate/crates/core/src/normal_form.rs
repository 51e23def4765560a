//! Quadratic amplitude equations at the bifurcation point.
//!
//! Real modes follow the (+) / (−) convention: ψ⁺ = P sin kx, θ⁺ = T cos kx, ψ⁻ = −P cos kx,
//! θ⁻ = T sin kx, and conjugates θ̃⁺ = C cos kx, θ̃⁻ = C sin kx. All x-integrals are done
//! analytically, so entries excluded by the resonance rule are exact zeros.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cplx::C64;
use crate::error::{Error, Result};
use crate::profile::TemperatureProfile;
use crate::spectral::{theta_profile, FluidParams, WaveNumber};
use crate::tridiag::dirichlet_real;

/// Frequencies closer than this are treated as equal when matching resonances.
pub const RESONANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Cos,
    Sin,
}

/// `scale · cos(kx)` or `scale · sin(kx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trig {
    pub parity: Parity,
    pub k: f64,
    pub scale: f64,
}

impl Trig {
    pub fn cos(k: f64) -> Self {
        Trig {
            parity: Parity::Cos,
            k,
            scale: 1.0,
        }
    }

    pub fn sin(k: f64) -> Self {
        Trig {
            parity: Parity::Sin,
            k,
            scale: 1.0,
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        Trig {
            scale: self.scale * s,
            ..self
        }
    }

    pub fn dx(self) -> Self {
        match self.parity {
            Parity::Cos => Trig {
                parity: Parity::Sin,
                k: self.k,
                scale: -self.k * self.scale,
            },
            Parity::Sin => Trig {
                parity: Parity::Cos,
                k: self.k,
                scale: self.k * self.scale,
            },
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.scale
            * match self.parity {
                Parity::Cos => (self.k * x).cos(),
                Parity::Sin => (self.k * x).sin(),
            }
    }

    fn exponentials(&self) -> [(f64, C64); 2] {
        let s = self.scale;
        match self.parity {
            Parity::Cos => [
                (self.k, C64::new(0.5 * s, 0.0)),
                (-self.k, C64::new(0.5 * s, 0.0)),
            ],
            Parity::Sin => [
                (self.k, C64::new(0.0, -0.5 * s)),
                (-self.k, C64::new(0.0, 0.5 * s)),
            ],
        }
    }
}

/// Mean over x of a product of trig factors (the almost-periodic mean for incommensurate k).
pub fn trig_mean(factors: &[Trig]) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    let n = factors.len();
    for mask in 0..(1usize << n) {
        let mut freq = 0.0;
        let mut coef = C64::new(1.0, 0.0);
        for (b, t) in factors.iter().enumerate() {
            let (f, c) = t.exponentials()[(mask >> b) & 1];
            freq += f;
            coef *= c;
        }
        if freq.abs() <= RESONANCE_TOL {
            acc += coef;
        }
    }
    acc.re
}

/// ∫₀^{2π} of the product, taken as 2π times the mean.
pub fn x_integral(factors: &[Trig]) -> f64 {
    let m = trig_mean(factors);
    if m == 0.0 {
        0.0
    } else {
        2.0 * PI * m
    }
}

/// A separable field f(y)·trig(x) with its y-derivative, sampled on the basis grid.
#[derive(Debug, Clone, Copy)]
pub struct FieldRef<'a> {
    pub value: &'a [f64],
    pub dy: &'a [f64],
    pub trig: Trig,
}

/// ⟨{a, b}, c⟩ with {a, b} = a_y b_x − a_x b_y; the x-integral is analytic.
pub fn poisson_bracket_project(a: FieldRef, b: FieldRef, c: FieldRef, weights: &[f64]) -> f64 {
    let x1 = x_integral(&[a.trig, b.trig.dx(), c.trig]);
    let x2 = x_integral(&[a.trig.dx(), b.trig, c.trig]);
    let mut out = 0.0;
    if x1 != 0.0 {
        let y1: f64 = (0..weights.len())
            .map(|i| weights[i] * a.dy[i] * b.value[i] * c.value[i])
            .sum();
        out += x1 * y1;
    }
    if x2 != 0.0 {
        let y2: f64 = (0..weights.len())
            .map(|i| weights[i] * a.value[i] * b.dy[i] * c.value[i])
            .sum();
        out -= x2 * y2;
    }
    out
}

/// ⟨a, b⟩ for two separable fields.
pub fn pair_project(a: FieldRef, b: FieldRef, weights: &[f64]) -> f64 {
    let x = x_integral(&[a.trig, b.trig]);
    if x == 0.0 {
        return 0.0;
    }
    x * (0..weights.len())
        .map(|i| weights[i] * a.value[i] * b.value[i])
        .sum::<f64>()
}

/// Composite Simpson weights on a uniform grid with an odd number of points.
pub fn simpson_weights(n: usize, dy: f64) -> Vec<f64> {
    assert!(n >= 3 && n % 2 == 1, "simpson needs an odd point count");
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * dy / 3.0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    fn offset(self, n: usize) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => n,
        }
    }
}

/// λ = 0 mode k and its conjugate, normalised so θ(0) = 1 and ⟨e⁺, ẽ⁺⟩ = 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealMode {
    pub k: f64,
    /// A_k: ω = A_k sinh(k(h−y))/sinh(kh).
    pub amplitude: f64,
    /// a_k: θ̃ = a_k cosh(k(h−y))/cosh(kh).
    pub conj_amplitude: f64,
    pub omega: Vec<f64>,
    pub omega_y: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_y: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_y: Vec<f64>,
    pub conj_omega: Vec<f64>,
    pub conj_theta: Vec<f64>,
    pub conj_theta_y: Vec<f64>,
    /// |A_k + b k|/(b k): zero when the Marangoni condition holds at the given b.
    pub criticality: f64,
    /// Relative mismatch of the adjoint boundary condition at y = 0.
    pub adjoint_bc: f64,
}

#[derive(Debug, Clone)]
pub struct BasisOptions {
    /// Uniform grid size (odd); default puts about 64 points across the mollifier.
    pub grid_points: Option<usize>,
    /// Accept non-integer wave numbers, with x-overlaps taken as almost-periodic means.
    pub quasiperiodic: bool,
    pub gram_tol: f64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            grid_points: None,
            quasiperiodic: false,
            gram_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeBasis {
    pub k_n: Vec<f64>,
    pub h: f64,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
    pub modes: Vec<RealMode>,
    pub quasiperiodic: bool,
    /// ⟨e_j^τ, ẽ_i^σ⟩ in (+, −) block order.
    pub gram: Vec<Vec<f64>>,
}

pub fn default_grid_points(profile: &TemperatureProfile, h: f64) -> usize {
    let scale = match profile {
        TemperatureProfile::Designed(p) => p.kappa / 32.0,
        _ => 0.01,
    };
    let n = ((h / scale).ceil() as usize + 1).clamp(401, 400_001);
    n | 1
}

// e^{-ky} ± e^{-k(2h-y)}, i.e. sinh or cosh of k(h−y) divided by e^{kh}
fn exp_pair(k: f64, h: f64, y: f64, sign: f64) -> f64 {
    (-k * y).exp() + sign * (-k * (2.0 * h - y)).exp()
}

/// ψ at λ = 0 for ω = sinh(k(h−y))/sinh(kh), with its derivative.
pub fn stream_at_zero(k: f64, h: f64, y: f64) -> (f64, f64) {
    let den = -(-2.0 * k * h).exp_m1();
    let s = exp_pair(k, h, y, -1.0) / den;
    let cs = exp_pair(k, h, y, 1.0) / den;
    let coth = (1.0 + (-2.0 * k * h).exp()) / den;
    let u = h - y;
    let psi = (h * coth * s - u * cs) / (2.0 * k);
    let dpsi = (-h * k * coth * cs + cs + u * k * s) / (2.0 * k);
    (psi, dpsi)
}

fn derivative4(f: &[f64], dy: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = if i >= 2 && i + 2 < n {
            (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * dy)
        } else {
            (f[i + 1] - f[i - 1]) / (2.0 * dy)
        };
    }
    d
}

/// λ = 0 eigenfunctions and conjugates for every k in `k_n` on a shared grid.
pub fn build_mode_basis(
    k_n: &[f64],
    params: &FluidParams,
    profile: &TemperatureProfile,
    opts: &BasisOptions,
) -> Result<ModeBasis> {
    if k_n.is_empty() {
        return Err(Error::InvalidInput("empty wave-number set".into()));
    }
    for (i, &k) in k_n.iter().enumerate() {
        if k_n[..i].iter().any(|&q| (q - k).abs() <= RESONANCE_TOL) {
            return Err(Error::InvalidInput(format!("wave number {k} repeated")));
        }
        if !opts.quasiperiodic && k.fract() != 0.0 {
            return Err(Error::InvalidInput(format!(
                "wave number {k} is not an integer; enable quasiperiodic mode"
            )));
        }
    }
    let h = params.h;
    let n = opts
        .grid_points
        .unwrap_or_else(|| default_grid_points(profile, h));
    if n < 401 || n % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "grid needs an odd count >= 401, got {n}"
        )));
    }
    let dy = h / (n - 1) as f64;
    let y: Vec<f64> = (0..n).map(|i| h * i as f64 / (n - 1) as f64).collect();
    let weights = simpson_weights(n, dy);
    let u_y = profile.sample_u_y(&y).ok_or_else(|| {
        Error::InvalidInput("a sharp step has no pointwise U_y; use a mollified profile".into())
    })?;

    let mut modes = Vec::with_capacity(k_n.len());
    for &k in k_n {
        modes.push(build_mode(k, params, profile, &y, &weights, &u_y)?);
    }

    let nn = k_n.len();
    let mut gram = vec![vec![0.0; 2 * nn]; 2 * nn];
    let mut basis = ModeBasis {
        k_n: k_n.to_vec(),
        h,
        y,
        weights,
        modes,
        quasiperiodic: opts.quasiperiodic,
        gram: Vec::new(),
    };
    let mut worst: f64 = 0.0;
    for si in Sign::BOTH {
        for i in 0..nn {
            for sj in Sign::BOTH {
                for j in 0..nn {
                    let w =
                        pair_project(basis.omega(j, sj), basis.conj_omega(i, si), &basis.weights)
                            + pair_project(
                                basis.theta(j, sj),
                                basis.conj_theta(i, si),
                                &basis.weights,
                            );
                    let r = si.offset(nn) + i;
                    let c = sj.offset(nn) + j;
                    gram[r][c] = w;
                    let target = if r == c { 1.0 } else { 0.0 };
                    worst = worst.max((w - target).abs());
                }
            }
        }
    }
    basis.gram = gram;
    if worst > opts.gram_tol {
        return Err(Error::Biorthogonality {
            max_deviation: worst,
        });
    }
    Ok(basis)
}

fn build_mode(
    k: f64,
    params: &FluidParams,
    profile: &TemperatureProfile,
    y: &[f64],
    weights: &[f64],
    u_y: &[f64],
) -> Result<RealMode> {
    let n = y.len();
    let h = params.h;
    let dy = y[1] - y[0];
    let wk = WaveNumber::new(k)?;
    let prof = theta_profile(wk, C64::new(0.0, 0.0), params, profile, n)?;
    // Θ = i k T for the complex mode with ω(0) = 1
    let t: Vec<f64> = prof.theta.iter().map(|z| z.im / k).collect();
    if t[0] == 0.0 || !t[0].is_finite() {
        return Err(Error::Singular(format!(
            "θ_k(0) vanishes for k = {k}; the profile does not couple this mode"
        )));
    }
    let amplitude = 1.0 / (k * t[0]);
    let den_s = -(-2.0 * k * h).exp_m1();
    let den_c = 1.0 + (-2.0 * k * h).exp();

    let mut omega = Vec::with_capacity(n);
    let mut omega_y = Vec::with_capacity(n);
    let mut psi = Vec::with_capacity(n);
    let mut psi_y = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut c_y = Vec::with_capacity(n);
    for &yy in y {
        omega.push(amplitude * exp_pair(k, h, yy, -1.0) / den_s);
        omega_y.push(-amplitude * k * exp_pair(k, h, yy, 1.0) / den_s);
        let (p, dp) = stream_at_zero(k, h, yy);
        psi.push(amplitude * p);
        psi_y.push(amplitude * dp);
        c.push(exp_pair(k, h, yy, 1.0) / den_c);
        c_y.push(-k * exp_pair(k, h, yy, -1.0) / den_c);
    }
    psi[0] = 0.0;
    psi[n - 1] = 0.0;
    let theta: Vec<f64> = t.iter().map(|v| amplitude * k * v).collect();
    let theta_y = derivative4(&theta, dy);

    // Adjoint vorticity: W̃ = −(k/ν) G_k[G_k[U_y c]] with G_k = (−∂² + k²)⁻¹ (Dirichlet).
    let src: Vec<f64> = u_y.iter().zip(&c).map(|(u, cc)| -u * cc).collect();
    let q = dirichlet_real(k * k, dy, &src)?;
    let src2: Vec<f64> = q.iter().map(|v| -v).collect();
    let r = dirichlet_real(k * k, dy, &src2)?;
    let w1: Vec<f64> = r.iter().map(|v| -k / params.nu * v).collect();

    // D c'(0) + b k² r'(0) = 0 is the solvability condition of the λ = 0 problem.
    let r_y0 = (-3.0 * r[0] + 4.0 * r[1] - r[2]) / (2.0 * dy);
    let dc0 = c_y[0];
    let adjoint_bc =
        (params.d_thermal * dc0 + params.b * k * k * r_y0).abs() / (params.d_thermal * dc0.abs());

    let pair: f64 = (0..n)
        .map(|i| weights[i] * (omega[i] * w1[i] + theta[i] * c[i]))
        .sum();
    if pair == 0.0 || !pair.is_finite() {
        return Err(Error::Singular(format!(
            "conjugate pairing vanishes for k = {k}"
        )));
    }
    let conj_amplitude = 1.0 / (PI * pair);
    Ok(RealMode {
        k,
        amplitude,
        conj_amplitude,
        criticality: (amplitude + params.b * k).abs() / (params.b * k).abs(),
        adjoint_bc,
        omega,
        omega_y,
        psi,
        psi_y,
        theta,
        theta_y,
        conj_omega: w1.iter().map(|v| conj_amplitude * v).collect(),
        conj_theta: c.iter().map(|v| conj_amplitude * v).collect(),
        conj_theta_y: c_y.iter().map(|v| conj_amplitude * v).collect(),
    })
}

impl ModeBasis {
    pub fn len(&self) -> usize {
        self.k_n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_n.is_empty()
    }

    fn k(&self, j: usize) -> f64 {
        self.k_n[j]
    }

    pub fn psi(&self, j: usize, s: Sign) -> FieldRef<'_> {
        let m = &self.modes[j];
        let trig = match s {
            Sign::Plus => Trig::sin(self.k(j)),
            Sign::Minus => Trig::cos(self.k(j)).scaled(-1.0),
        };
        FieldRef {
            value: &m.psi,
            dy: &m.psi_y,
            trig,
        }
    }

    pub fn omega(&self, j: usize, s: Sign) -> FieldRef<'_> {
        let m = &self.modes[j];
        FieldRef {
            value: &m.omega,
            dy: &m.omega_y,
            trig: self.psi(j, s).trig,
        }
    }

    pub fn theta(&self, j: usize, s: Sign) -> FieldRef<'_> {
        let m = &self.modes[j];
        let trig = match s {
            Sign::Plus => Trig::cos(self.k(j)),
            Sign::Minus => Trig::sin(self.k(j)),
        };
        FieldRef {
            value: &m.theta,
            dy: &m.theta_y,
            trig,
        }
    }

    pub fn conj_theta(&self, i: usize, s: Sign) -> FieldRef<'_> {
        let m = &self.modes[i];
        FieldRef {
            value: &m.conj_theta,
            dy: &m.conj_theta_y,
            trig: self.theta(i, s).trig,
        }
    }

    /// ω̃ has no derivative samples; brackets never differentiate it.
    pub fn conj_omega(&self, i: usize, s: Sign) -> FieldRef<'_> {
        let m = &self.modes[i];
        FieldRef {
            value: &m.conj_omega,
            dy: &m.conj_omega,
            trig: self.psi(i, s).trig,
        }
    }

    pub fn max_criticality(&self) -> f64 {
        self.modes.iter().map(|m| m.criticality).fold(0.0, f64::max)
    }
}

/// One Fourier component cos(mx)·φ(y) or sin(mx)·φ(y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierComponent {
    pub m: f64,
    pub parity: Parity,
    pub profile: Vec<f64>,
}

/// A finite Fourier series in x with y-samples on the basis grid, vanishing below `delta1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inhomogeneity {
    pub y: Vec<f64>,
    pub delta1: f64,
    pub components: Vec<FourierComponent>,
}

impl Inhomogeneity {
    pub fn new(y: Vec<f64>, delta1: f64, components: Vec<FourierComponent>) -> Result<Self> {
        for c in &components {
            if c.profile.len() != y.len() {
                return Err(Error::InvalidInput(format!(
                    "component m = {} has {} samples, grid has {}",
                    c.m,
                    c.profile.len(),
                    y.len()
                )));
            }
            if !(c.m >= 0.0) {
                return Err(Error::InvalidInput(format!("negative frequency {}", c.m)));
            }
            if let Some((yy, _)) = y
                .iter()
                .zip(&c.profile)
                .find(|(yy, v)| **yy < delta1 && **v != 0.0)
            {
                return Err(Error::InvalidInput(format!(
                    "component m = {} is nonzero at y = {yy} < delta1",
                    c.m
                )));
            }
        }
        Ok(Self {
            y,
            delta1,
            components,
        })
    }

    pub fn zero(y: Vec<f64>, delta1: f64) -> Self {
        Self {
            y,
            delta1,
            components: Vec::new(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.components {
            c.profile.iter_mut().for_each(|v| *v *= a);
        }
        out
    }

    /// Concatenates the two series (shared grid assumed).
    pub fn sum(&self, other: &Inhomogeneity) -> Result<Self> {
        if self.y != other.y {
            return Err(Error::InvalidInput(
                "inhomogeneities live on different grids".into(),
            ));
        }
        let mut components = self.components.clone();
        components.extend(other.components.iter().cloned());
        Ok(Self {
            y: self.y.clone(),
            delta1: self.delta1.min(other.delta1),
            components,
        })
    }

    /// Value at (x, y_index).
    pub fn eval(&self, x: f64, iy: usize) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let t = match c.parity {
                    Parity::Cos => Trig::cos(c.m),
                    Parity::Sin => Trig::sin(c.m),
                };
                t.eval(x) * c.profile[iy]
            })
            .sum()
    }

    fn field(&self, c: usize) -> FieldRef<'_> {
        let comp = &self.components[c];
        let trig = match comp.parity {
            Parity::Cos => Trig::cos(comp.m),
            Parity::Sin => Trig::sin(comp.m),
        };
        FieldRef {
            value: &comp.profile,
            dy: &comp.profile,
            trig,
        }
    }

    fn check_grid(&self, basis: &ModeBasis) -> Result<()> {
        if self.y != basis.y {
            return Err(Error::InvalidInput(
                "inhomogeneity is not sampled on the basis grid".into(),
            ));
        }
        Ok(())
    }
}

/// Dense N×N×N tensor, index (i, j, l) at (i·N + j)·N + l.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + l]
    }

    pub fn set(&mut self, i: usize, j: usize, l: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + l] = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GTensor {
    /// G^{+++}_{ijl}
    pub ppp: Tensor3,
    /// G^{−−+}_{ijl}
    pub mmp: Tensor3,
    /// G^{+−−}_{ijl}
    pub pmm: Tensor3,
    /// Largest |⟨{ψ_j, ω_l}, ω̃_i⟩| over the three families; these O(ν⁻¹) terms are not included.
    pub dropped: f64,
}

pub fn compute_g_tensor(basis: &ModeBasis) -> GTensor {
    let n = basis.len();
    let w = &basis.weights;
    let mut g = GTensor {
        ppp: Tensor3::zeros(n),
        mmp: Tensor3::zeros(n),
        pmm: Tensor3::zeros(n),
        dropped: 0.0,
    };
    let (p, m) = (Sign::Plus, Sign::Minus);
    let mut dropped: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let v = poisson_bracket_project(
                    basis.psi(j, p),
                    basis.theta(l, p),
                    basis.conj_theta(i, p),
                    w,
                );
                g.ppp.set(i, j, l, v);
                let v = poisson_bracket_project(
                    basis.psi(j, m),
                    basis.theta(l, m),
                    basis.conj_theta(i, p),
                    w,
                );
                g.mmp.set(i, j, l, v);
                let v = poisson_bracket_project(
                    basis.psi(j, p),
                    basis.theta(l, m),
                    basis.conj_theta(i, m),
                    w,
                ) + poisson_bracket_project(
                    basis.psi(l, m),
                    basis.theta(j, p),
                    basis.conj_theta(i, m),
                    w,
                );
                g.pmm.set(i, j, l, v);

                let d1 = poisson_bracket_project(
                    basis.psi(j, p),
                    basis.omega(l, p),
                    basis.conj_omega(i, p),
                    w,
                );
                let d2 = poisson_bracket_project(
                    basis.psi(j, m),
                    basis.omega(l, m),
                    basis.conj_omega(i, p),
                    w,
                );
                let d3 = poisson_bracket_project(
                    basis.psi(j, p),
                    basis.omega(l, m),
                    basis.conj_omega(i, m),
                    w,
                ) + poisson_bracket_project(
                    basis.psi(l, m),
                    basis.omega(j, p),
                    basis.conj_omega(i, m),
                    w,
                );
                dropped = dropped.max(d1.abs()).max(d2.abs()).max(d3.abs());
            }
        }
    }
    g.dropped = dropped;
    g
}

/// 2N×2N matrix with blocks [[M⁺⁺, M⁺⁻], [M⁻⁺, M⁻⁻]]; M^{στ}_{ij} = ⟨{ψ_j^τ, θ̃_i^σ}, u₁⟩.
pub fn compute_m_matrix(basis: &ModeBasis, u1: &Inhomogeneity) -> Result<Vec<Vec<f64>>> {
    u1.check_grid(basis)?;
    let n = basis.len();
    let mut out = vec![vec![0.0; 2 * n]; 2 * n];
    for si in Sign::BOTH {
        for i in 0..n {
            for sj in Sign::BOTH {
                for j in 0..n {
                    let v: f64 = (0..u1.components.len())
                        .map(|c| {
                            poisson_bracket_project(
                                basis.psi(j, sj),
                                basis.conj_theta(i, si),
                                u1.field(c),
                                &basis.weights,
                            )
                        })
                        .sum();
                    out[si.offset(n) + i][sj.offset(n) + j] = v;
                }
            }
        }
    }
    Ok(out)
}

/// f_i^± = ⟨η₁, θ̃_i^±⟩, returned as (f⁺, f⁻) stacked.
pub fn compute_f(basis: &ModeBasis, eta1: &Inhomogeneity) -> Result<Vec<f64>> {
    eta1.check_grid(basis)?;
    let n = basis.len();
    let mut f = vec![0.0; 2 * n];
    for s in Sign::BOTH {
        for i in 0..n {
            f[s.offset(n) + i] = (0..eta1.components.len())
                .map(|c| pair_project(eta1.field(c), basis.conj_theta(i, s), &basis.weights))
                .sum();
        }
    }
    Ok(f)
}

#[derive(Debug, Clone)]
pub struct InverseOptions {
    /// Envelopes start this far above δ₁.
    pub margin: f64,
    /// Number of overlapping bumps per Fourier component.
    pub envelopes: usize,
    /// Total height covered by the envelopes.
    pub span: f64,
    /// Restrict the available u₁ frequencies; default is every k_i + k_j and |k_i − k_j|.
    pub frequencies: Option<Vec<f64>>,
    /// Relative singular-value cutoff.
    pub rcond: f64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self {
            margin: 0.1,
            envelopes: 6,
            span: 3.0,
            frequencies: None,
            rcond: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InverseDesign {
    pub u1: Inhomogeneity,
    pub achieved: Vec<Vec<f64>>,
    /// Frobenius norm of achieved − target.
    pub residual: f64,
    pub rank: usize,
    /// Entries (row, col) no admissible u₁ can reach, with requested nonzero value.
    pub flagged: Vec<(usize, usize)>,
}

/// Smooth bump exp(−1/(1−t²)) on (c − w, c + w).
pub fn envelope(y: f64, center: f64, half_width: f64) -> f64 {
    let t = (y - center) / half_width;
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// Frequencies reachable by products of two basis modes.
pub fn coupling_frequencies(k_n: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &a in k_n {
        for &b in k_n {
            for m in [a + b, (a - b).abs()] {
                if !out.iter().any(|q| (q - m).abs() <= RESONANCE_TOL) {
                    out.push(m);
                }
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

/// Least-squares u₁ whose M matrix matches `target` (layout of [`compute_m_matrix`]).
pub fn invert_m_design(
    basis: &ModeBasis,
    target: &[Vec<f64>],
    delta1: f64,
    opts: &InverseOptions,
) -> Result<InverseDesign> {
    let n = basis.len();
    if target.len() != 2 * n || target.iter().any(|r| r.len() != 2 * n) {
        return Err(Error::InvalidInput(format!(
            "target must be {0}x{0}",
            2 * n
        )));
    }
    if opts.envelopes == 0 {
        return Err(Error::InvalidInput("need at least one envelope".into()));
    }
    let freqs = opts
        .frequencies
        .clone()
        .unwrap_or_else(|| coupling_frequencies(&basis.k_n));
    let lo = delta1 + opts.margin;
    if lo + opts.span > basis.h {
        return Err(Error::InvalidInput(format!(
            "envelopes [{lo}, {}] do not fit below h = {}",
            lo + opts.span,
            basis.h
        )));
    }
    let half = opts.span / (opts.envelopes as f64 + 1.0);
    let shapes: Vec<Vec<f64>> = (0..opts.envelopes)
        .map(|e| {
            let center = lo + half * (e as f64 + 1.0);
            basis.y.iter().map(|&y| envelope(y, center, half)).collect()
        })
        .collect();

    let mut columns: Vec<FourierComponent> = Vec::new();
    for &m in &freqs {
        for parity in [Parity::Cos, Parity::Sin] {
            if parity == Parity::Sin && m == 0.0 {
                continue;
            }
            for s in &shapes {
                columns.push(FourierComponent {
                    m,
                    parity,
                    profile: s.clone(),
                });
            }
        }
    }
    let rows = 4 * n * n;
    let mut a = DMatrix::<f64>::zeros(rows, columns.len());
    for (c, comp) in columns.iter().enumerate() {
        let single = Inhomogeneity {
            y: basis.y.clone(),
            delta1,
            components: vec![comp.clone()],
        };
        let mm = compute_m_matrix(basis, &single)?;
        for r in 0..2 * n {
            for q in 0..2 * n {
                a[(r * 2 * n + q, c)] = mm[r][q];
            }
        }
    }
    let b = DVector::from_iterator(rows, target.iter().flat_map(|r| r.iter().copied()));

    let mut flagged = Vec::new();
    for r in 0..rows {
        if b[r] != 0.0 && a.row(r).iter().all(|v| *v == 0.0) {
            flagged.push((r / (2 * n), r % (2 * n)));
        }
    }

    let (x, rank) = if columns.is_empty() {
        (DVector::zeros(0), 0)
    } else {
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let eps = opts.rcond * smax;
        let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
        let x = if smax == 0.0 {
            DVector::zeros(columns.len())
        } else {
            svd.solve(&b, eps)
                .map_err(|e| Error::Singular(e.to_string()))?
        };
        (x, rank)
    };

    let mut components = Vec::new();
    for (c, comp) in columns.iter().enumerate() {
        if x[c] != 0.0 {
            components.push(FourierComponent {
                m: comp.m,
                parity: comp.parity,
                profile: comp.profile.iter().map(|v| v * x[c]).collect(),
            });
        }
    }
    let u1 = Inhomogeneity::new(basis.y.clone(), delta1, components)?;
    let achieved = compute_m_matrix(basis, &u1)?;
    let residual = achieved
        .iter()
        .flatten()
        .zip(target.iter().flatten())
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(InverseDesign {
        u1,
        achieved,
        residual,
        rank,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GFamily {
    #[serde(rename = "+++")]
    Ppp,
    #[serde(rename = "--+")]
    Mmp,
    #[serde(rename = "+--")]
    Pmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GEntry {
    pub family: GFamily,
    pub i: usize,
    pub j: usize,
    pub l: usize,
    pub value: f64,
}

/// dX_i^± = γ(G_i^±(X) + M_i^±(X) + f_i^±), dX₀ = 0, over X = (X₀, X⁺, X⁻).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticNormalForm {
    pub n: usize,
    pub k_n: Vec<f64>,
    pub gamma: f64,
    pub g: GTensor,
    pub m: Vec<Vec<f64>>,
    pub f: Vec<f64>,
}

pub fn assemble_normal_form(
    basis: &ModeBasis,
    u1: &Inhomogeneity,
    eta1: &Inhomogeneity,
    gamma: f64,
) -> Result<QuadraticNormalForm> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(QuadraticNormalForm {
        n: basis.len(),
        k_n: basis.k_n.clone(),
        gamma,
        g: compute_g_tensor(basis),
        m: compute_m_matrix(basis, u1)?,
        f: compute_f(basis, eta1)?,
    })
}

impl QuadraticNormalForm {
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "state has {} entries, expected {}",
                x.len(),
                self.dim()
            )));
        }
        let xp = &x[1..=n];
        let xm = &x[n + 1..];
        let mut out = vec![0.0; self.dim()];
        for i in 0..n {
            let mut gp = 0.0;
            let mut gm = 0.0;
            for j in 0..n {
                for l in 0..n {
                    gp += self.g.ppp.get(i, j, l) * xp[j] * xp[l]
                        + self.g.mmp.get(i, j, l) * xm[j] * xm[l];
                    gm += self.g.pmm.get(i, j, l) * xp[j] * xm[l];
                }
            }
            let mut mp = 0.0;
            let mut mm = 0.0;
            for j in 0..n {
                mp += self.m[i][j] * xp[j] + self.m[i][n + j] * xm[j];
                mm += self.m[n + i][j] * xp[j] + self.m[n + i][n + j] * xm[j];
            }
            out[1 + i] = self.gamma * (gp + mp + self.f[i]);
            out[1 + n + i] = self.gamma * (gm + mm + self.f[n + i]);
        }
        Ok(out)
    }

    pub fn to_document(&self) -> NormalFormDocument {
        let n = self.n;
        let mut g = Vec::with_capacity(3 * n * n * n);
        for (family, t) in [
            (GFamily::Ppp, &self.g.ppp),
            (GFamily::Mmp, &self.g.mmp),
            (GFamily::Pmm, &self.g.pmm),
        ] {
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        g.push(GEntry {
                            family,
                            i,
                            j,
                            l,
                            value: t.get(i, j, l),
                        });
                    }
                }
            }
        }
        NormalFormDocument {
            n,
            k_n: self.k_n.clone(),
            gamma: self.gamma,
            g,
            m: self.m.clone(),
            f: self.f.clone(),
            dropped_vorticity_terms: self.g.dropped,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<NormalFormDocument>(s)?.into_normal_form()
    }
}

/// Serialized normal form; indices are zero-based, G lists every (i, j, l) of each family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalFormDocument {
    pub n: usize,
    pub k_n: Vec<f64>,
    pub gamma: f64,
    pub g: Vec<GEntry>,
    pub m: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    #[serde(default)]
    pub dropped_vorticity_terms: f64,
}

impl NormalFormDocument {
    pub fn into_normal_form(self) -> Result<QuadraticNormalForm> {
        let n = self.n;
        if self.k_n.len() != n
            || self.f.len() != 2 * n
            || self.m.len() != 2 * n
            || self.m.iter().any(|r| r.len() != 2 * n)
        {
            return Err(Error::InvalidInput(
                "normal form dimensions are inconsistent".into(),
            ));
        }
        let mut g = GTensor {
            ppp: Tensor3::zeros(n),
            mmp: Tensor3::zeros(n),
            pmm: Tensor3::zeros(n),
            dropped: self.dropped_vorticity_terms,
        };
        for e in &self.g {
            if e.i >= n || e.j >= n || e.l >= n {
                return Err(Error::InvalidInput(format!(
                    "G index ({}, {}, {}) out of range",
                    e.i, e.j, e.l
                )));
            }
            let t = match e.family {
                GFamily::Ppp => &mut g.ppp,
                GFamily::Mmp => &mut g.mmp,
                GFamily::Pmm => &mut g.pmm,
            };
            t.set(e.i, e.j, e.l, e.value);
        }
        Ok(QuadraticNormalForm {
            n,
            k_n: self.k_n,
            gamma: self.gamma,
            g,
            m: self.m,
            f: self.f,
        })
    }
}
