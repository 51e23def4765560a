//! Quadratic systems dX/dt = K(X) + MX + g, slow-fast embedding of a target field, and the
//! integrators used to check it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal_form::{NormalFormDocument, QuadraticNormalForm};

/// Anything RK4 can step.
pub trait VectorField {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// J(x)·v; the default is a central difference.
    fn jvp(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let vn = norm(v);
        if vn == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let eps = 1e-6 * (1.0 + norm(x)) / vn;
        let xp: Vec<f64> = (0..n).map(|i| x[i] + eps * v[i]).collect();
        let xm: Vec<f64> = (0..n).map(|i| x[i] - eps * v[i]).collect();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        self.eval(&xp, &mut fp);
        self.eval(&xm, &mut fm);
        for i in 0..n {
            out[i] = (fp[i] - fm[i]) / (2.0 * eps);
        }
    }

    /// Integration stops once |X| exceeds this.
    fn guard(&self) -> Option<f64> {
        None
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn eval_vec<F: VectorField + ?Sized>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; f.dim()];
    f.eval(x, &mut out);
    out
}

/// Central-difference Jacobian, column by column.
pub fn jacobian_fd<F: VectorField + ?Sized>(f: &F, x: &[f64], step: f64) -> DMatrix<f64> {
    let n = f.dim();
    let mut j = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for c in 0..n {
        xp[c] = x[c] + step;
        let fp = eval_vec(f, &xp);
        xp[c] = x[c] - step;
        let fm = eval_vec(f, &xp);
        xp[c] = x[c];
        for r in 0..n {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * step);
        }
    }
    j
}

/// dX/dt = K(X) + MX + g with K symmetrised in its last two indices.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    pub n: usize,
    /// K_{ijl} at (i·N + j)·N + l.
    pub k: Vec<f64>,
    /// Row-major N×N.
    pub m: Vec<f64>,
    pub g: Vec<f64>,
    pub r0: f64,
    nonzero: Vec<(usize, usize, usize, f64)>,
}

impl QuadraticSystem {
    pub fn new(n: usize, k: Vec<f64>, m: Vec<f64>, g: Vec<f64>, r0: f64) -> Result<Self> {
        if k.len() != n * n * n || m.len() != n * n || g.len() != n {
            return Err(Error::InvalidInput(format!(
                "inconsistent shapes for N = {n}"
            )));
        }
        if k.iter().chain(&m).chain(&g).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        if !(r0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "trust radius must be positive, got {r0}"
            )));
        }
        let mut sym = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    sym[(i * n + j) * n + l] =
                        0.5 * (k[(i * n + j) * n + l] + k[(i * n + l) * n + j]);
                }
            }
        }
        let mut out = Self {
            n,
            k: sym,
            m,
            g,
            r0,
            nonzero: Vec::new(),
        };
        out.index();
        Ok(out)
    }

    pub fn zeros(n: usize, r0: f64) -> Self {
        Self::new(n, vec![0.0; n * n * n], vec![0.0; n * n], vec![0.0; n], r0).unwrap()
    }

    fn index(&mut self) {
        let n = self.n;
        self.nonzero.clear();
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let v = self.k[(i * n + j) * n + l];
                    if v != 0.0 {
                        self.nonzero.push((i, j, l, v));
                    }
                }
            }
        }
    }

    pub fn k_at(&self, i: usize, j: usize, l: usize) -> f64 {
        self.k[(i * self.n + j) * self.n + l]
    }

    /// K(X) + MX + g, refusing states beyond 10·R0.
    pub fn evaluate_rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "state has {} entries, expected {}",
                x.len(),
                self.n
            )));
        }
        let r = norm(x);
        if r >= 10.0 * self.r0 {
            return Err(Error::GuardExceeded {
                norm: r,
                limit: 10.0 * self.r0,
            });
        }
        Ok(eval_vec(self, x))
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut j = DMatrix::from_row_slice(n, n, &self.m);
        for &(i, a, b, v) in &self.nonzero {
            j[(i, a)] += v * x[b];
            j[(i, b)] += v * x[a];
        }
        j
    }

    /// Normal form over (X₀, X⁺, X⁻) with γ folded into every coefficient.
    pub fn from_normal_form(nf: &QuadraticNormalForm, r0: f64) -> Result<Self> {
        let n = nf.n;
        let dim = nf.dim();
        let mut k = vec![0.0; dim * dim * dim];
        let mut add =
            |i: usize, j: usize, l: usize, v: f64| k[(i * dim + j) * dim + l] += nf.gamma * v;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    add(1 + i, 1 + j, 1 + l, nf.g.ppp.get(i, j, l));
                    add(1 + i, 1 + n + j, 1 + n + l, nf.g.mmp.get(i, j, l));
                    add(1 + n + i, 1 + j, 1 + n + l, nf.g.pmm.get(i, j, l));
                }
            }
        }
        let mut m = vec![0.0; dim * dim];
        for r in 0..2 * n {
            for c in 0..2 * n {
                m[(1 + r) * dim + 1 + c] = nf.gamma * nf.m[r][c];
            }
        }
        let mut g = vec![0.0; dim];
        for r in 0..2 * n {
            g[1 + r] = nf.gamma * nf.f[r];
        }
        Self::new(dim, k, m, g, r0)
    }

    pub fn to_document(&self) -> SystemDocument {
        SystemDocument {
            n: self.n,
            r0: self.r0,
            k: self
                .nonzero
                .iter()
                .map(|&(i, j, l, value)| KEntry { i, j, l, value })
                .collect(),
            m: self.m.chunks(self.n).map(|r| r.to_vec()).collect(),
            g: self.g.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    /// Reads either a system file or a normal-form file (the latter with trust radius `r0`).
    pub fn from_json(s: &str, r0: f64) -> Result<Self> {
        match serde_json::from_str::<AnyDocument>(s)? {
            AnyDocument::System(d) => d.into_system(),
            AnyDocument::NormalForm(d) => Self::from_normal_form(&d.into_normal_form()?, r0),
        }
    }
}

impl VectorField for QuadraticSystem {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.copy_from_slice(&self.g);
        for i in 0..n {
            let row = &self.m[i * n..(i + 1) * n];
            out[i] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        for &(i, j, l, v) in &self.nonzero {
            out[i] += v * x[j] * x[l];
        }
    }

    fn jvp(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.m[i * n..(i + 1) * n];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
        for &(i, j, l, c) in &self.nonzero {
            out[i] += c * (v[j] * x[l] + x[j] * v[l]);
        }
    }

    fn guard(&self) -> Option<f64> {
        Some(10.0 * self.r0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEntry {
    pub i: usize,
    pub j: usize,
    pub l: usize,
    pub value: f64,
}

/// Serialized system; K lists the nonzero symmetrised entries with zero-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    pub n: usize,
    pub r0: f64,
    pub k: Vec<KEntry>,
    pub m: Vec<Vec<f64>>,
    pub g: Vec<f64>,
}

impl SystemDocument {
    pub fn into_system(self) -> Result<QuadraticSystem> {
        let n = self.n;
        if self.m.len() != n || self.m.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("M has the wrong shape".into()));
        }
        let mut k = vec![0.0; n * n * n];
        for e in &self.k {
            if e.i >= n || e.j >= n || e.l >= n {
                return Err(Error::InvalidInput(format!(
                    "K index ({}, {}, {}) out of range",
                    e.i, e.j, e.l
                )));
            }
            k[(e.i * n + e.j) * n + e.l] = e.value;
        }
        QuadraticSystem::new(n, k, self.m.concat(), self.g, self.r0)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnyDocument {
    System(SystemDocument),
    NormalForm(NormalFormDocument),
}

/// Split of {0..N} into slow (I_p) and fast (J_p) coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub slow: Vec<usize>,
    pub fast: Vec<usize>,
}

impl Decomposition {
    pub fn new(n: usize, slow: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &slow {
            if i >= n || seen[i] {
                return Err(Error::InvalidInput(format!(
                    "slow index {i} invalid or repeated"
                )));
            }
            seen[i] = true;
        }
        let fast = (0..n).filter(|i| !seen[*i]).collect();
        Ok(Self { slow, fast })
    }

    pub fn p(&self) -> usize {
        self.slow.len()
    }
}

/// Symmetric index pairs (j ≤ l) of the slow block, in the order used for fast slots.
pub fn symmetric_pairs(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for j in 0..p {
        for l in j..p {
            out.push((j, l));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub satisfied: bool,
    pub rank: usize,
    pub needed: usize,
}

/// Solvability of Σ_{i∈J} K̃_{ijl} u_i = b_{jl} for every symmetric b.
pub fn check_p_decomposition(sys: &QuadraticSystem, dec: &Decomposition) -> DecompositionReport {
    let pairs = symmetric_pairs(dec.p());
    let needed = pairs.len();
    let mut a = DMatrix::zeros(needed, dec.fast.len());
    for (r, &(j, l)) in pairs.iter().enumerate() {
        for (c, &i) in dec.fast.iter().enumerate() {
            a[(r, c)] = sys.k_at(i, dec.slow[j], dec.slow[l]);
        }
    }
    let rank = if a.is_empty() {
        0
    } else {
        let sv = a.svd(false, false).singular_values;
        let tol = sv.max() * 1e-10 * needed.max(dec.fast.len()) as f64;
        sv.iter().filter(|s| **s > tol).count()
    };
    DecompositionReport {
        satisfied: rank == needed && needed > 0,
        rank,
        needed,
    }
}

/// Target field F(Y) = D(Y) + RY + f.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedField {
    pub p: usize,
    /// D_{ijl} at (i·p + j)·p + l.
    pub d: Vec<f64>,
    pub r: Vec<f64>,
    pub f: Vec<f64>,
}

impl ReducedField {
    pub fn new(p: usize, d: Vec<f64>, r: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if d.len() != p * p * p || r.len() != p * p || f.len() != p {
            return Err(Error::InvalidInput(format!(
                "inconsistent shapes for p = {p}"
            )));
        }
        if d.iter().chain(&r).chain(&f).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        Ok(Self { p, d, r, f })
    }

    pub fn zero(p: usize) -> Self {
        Self::new(p, vec![0.0; p * p * p], vec![0.0; p * p], vec![0.0; p]).unwrap()
    }

    /// Lorenz written as D(Y) + RY with the xz and xy terms split symmetrically.
    pub fn lorenz(sigma: f64, rho: f64, beta: f64) -> Self {
        let mut d = vec![0.0; 27];
        d[9 + 2] = -0.5;
        d[9 + 6] = -0.5;
        d[18 + 1] = 0.5;
        d[18 + 3] = 0.5;
        let r = vec![-sigma, sigma, 0.0, rho, -1.0, 0.0, 0.0, 0.0, -beta];
        Self::new(3, d, r, vec![0.0; 3]).unwrap()
    }

    pub fn d_at(&self, i: usize, j: usize, l: usize) -> f64 {
        self.d[(i * self.p + j) * self.p + l]
    }

    /// The field multiplied by `s` (a change of time unit).
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            p: self.p,
            d: self.d.iter().map(|v| v * s).collect(),
            r: self.r.iter().map(|v| v * s).collect(),
            f: self.f.iter().map(|v| v * s).collect(),
        }
    }

    /// Same field in permuted coordinates: new coordinate a is old coordinate perm[a].
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.p;
        let mut out = Self::zero(p);
        for a in 0..p {
            out.f[a] = self.f[perm[a]];
            for b in 0..p {
                out.r[a * p + b] = self.r[perm[a] * p + perm[b]];
                for c in 0..p {
                    out.d[(a * p + b) * p + c] = self.d_at(perm[a], perm[b], perm[c]);
                }
            }
        }
        out
    }

    pub fn jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let p = self.p;
        let mut j = DMatrix::from_row_slice(p, p, &self.r);
        for i in 0..p {
            for a in 0..p {
                for b in 0..p {
                    let v = self.d_at(i, a, b);
                    if v != 0.0 {
                        j[(i, a)] += v * y[b];
                        j[(i, b)] += v * y[a];
                    }
                }
            }
        }
        j
    }

    /// Sampled sup of the spectral norm of ∇F over the ball of radius `radius`.
    pub fn sup_jacobian_norm(&self, radius: f64, samples: usize, seed: u64) -> f64 {
        sample_ball(self.p, radius, samples, seed)
            .iter()
            .map(|y| self.jacobian(y).svd(false, false).singular_values.max())
            .fold(0.0, f64::max)
    }

    /// F(Y)·Y < 0 on sampled boundary points.
    pub fn inward_on_ball(&self, radius: f64, samples: usize, seed: u64) -> bool {
        sample_ball(self.p, 1.0, samples, seed).iter().all(|u| {
            let un = norm(u);
            if un == 0.0 {
                return true;
            }
            let y: Vec<f64> = u.iter().map(|v| v * radius / un).collect();
            let f = eval_vec(self, &y);
            f.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() < 0.0
        })
    }
}

impl VectorField for ReducedField {
    fn dim(&self) -> usize {
        self.p
    }

    fn eval(&self, y: &[f64], out: &mut [f64]) {
        let p = self.p;
        for i in 0..p {
            let mut s = self.f[i];
            for j in 0..p {
                s += self.r[i * p + j] * y[j];
                for l in 0..p {
                    let v = self.d_at(i, j, l);
                    if v != 0.0 {
                        s += v * y[j] * y[l];
                    }
                }
            }
            out[i] = s;
        }
    }

    fn jvp(&self, y: &[f64], v: &[f64], out: &mut [f64]) {
        let j = self.jacobian(y);
        let r = j * DVector::from_column_slice(v);
        out.copy_from_slice(r.as_slice());
    }
}

/// Lorenz equilibria (0, 0, 0) and (±√(β(ρ−1)), ±√(β(ρ−1)), ρ−1).
pub fn lorenz_equilibria(rho: f64, beta: f64) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0, 0.0, 0.0]];
    if rho > 1.0 {
        let a = (beta * (rho - 1.0)).sqrt();
        out.push([a, a, rho - 1.0]);
        out.push([-a, -a, rho - 1.0]);
    }
    out
}

/// Deterministic uniform samples from the closed ball (rejection from the cube).
pub fn sample_ball(p: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let y: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if norm(&y) <= 1.0 {
            out.push(y.iter().map(|v| v * radius).collect());
        }
    }
    out
}

/// A target realized as the slow dynamics of a larger quadratic system.
///
/// Slots s = (j, l), j ≤ l, carry Z_s with dZ_s/dt = Y_j Y_l − Z_s/ξ, and the slow block reads
/// dY/dt = RY + f + ξ⁻¹TZ with T chosen so that T·K̃(Y) = D(Y).
#[derive(Debug, Clone)]
pub struct Embedding {
    pub system: QuadraticSystem,
    pub decomposition: Decomposition,
    pub xi: f64,
    pub pairs: Vec<(usize, usize)>,
    /// p × (N − p), row-major.
    pub t: Vec<f64>,
    pub target: ReducedField,
    /// Whether N/2 < p² + p ≤ N also holds.
    pub theorem_window: bool,
}

pub fn embed_target(
    target: &ReducedField,
    xi: f64,
    n: Option<usize>,
    r0: f64,
) -> Result<Embedding> {
    let p = target.p;
    let pairs = symmetric_pairs(p);
    let nmin = p + pairs.len();
    let n = n.unwrap_or(nmin);
    if n < nmin {
        return Err(Error::InvalidInput(format!(
            "N = {n} is below the minimum p + p(p+1)/2 = {nmin}"
        )));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidInput(format!(
            "xi must lie in (0, 1), got {xi}"
        )));
    }
    let nf = n - p;
    let mut k = vec![0.0; n * n * n];
    let mut m = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    let mut t = vec![0.0; p * nf];
    for (s, &(j, l)) in pairs.iter().enumerate() {
        let z = p + s;
        // K̃_{s j l} = K̃_{s l j}, summing to the entry 1 of Y_j Y_l
        k[(z * n + j) * n + l] += if j == l { 1.0 } else { 0.5 };
        k[(z * n + l) * n + j] += if j == l { 0.0 } else { 0.5 };
        for i in 0..p {
            t[i * nf + s] = if j == l {
                target.d_at(i, j, j)
            } else {
                target.d_at(i, j, l) + target.d_at(i, l, j)
            };
        }
    }
    for z in p..n {
        m[z * n + z] = -1.0 / xi;
    }
    for i in 0..p {
        for j in 0..p {
            m[i * n + j] = target.r[i * p + j];
        }
        for s in 0..nf {
            m[i * n + p + s] = t[i * nf + s] / xi;
        }
        g[i] = target.f[i];
    }
    let r_sys = r0 + xi * r0 * r0;
    let system = QuadraticSystem::new(n, k, m, g, r_sys)?;
    let decomposition = Decomposition::new(n, (0..p).collect())?;
    let report = check_p_decomposition(&system, &decomposition);
    if !report.satisfied {
        return Err(Error::RankDeficient {
            rank: report.rank,
            needed: report.needed,
        });
    }
    let window = p * p + p;
    Ok(Embedding {
        system,
        decomposition,
        xi,
        pairs,
        t,
        target: target.clone(),
        theorem_window: n < 2 * window && window <= n,
    })
}

impl Embedding {
    pub fn p(&self) -> usize {
        self.target.p
    }

    pub fn n(&self) -> usize {
        self.system.n
    }

    /// K̃(Y) on the fast slots.
    pub fn k_tilde(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n() - self.p()];
        for (s, &(j, l)) in self.pairs.iter().enumerate() {
            out[s] = y[j] * y[l];
        }
        out
    }

    /// D_Y K̃ · v.
    fn dk_tilde(&self, y: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n() - self.p()];
        for (s, &(j, l)) in self.pairs.iter().enumerate() {
            out[s] = v[j] * y[l] + y[j] * v[l];
        }
        out
    }

    /// Leading-order manifold point Z = ξ K̃(Y).
    pub fn slow_manifold(&self, y: &[f64]) -> Vec<f64> {
        self.k_tilde(y).into_iter().map(|v| self.xi * v).collect()
    }

    fn t_times(&self, w: &[f64]) -> Vec<f64> {
        let p = self.p();
        let nf = self.n() - p;
        (0..p)
            .map(|i| (0..nf).map(|s| self.t[i * nf + s] * w[s]).sum())
            .collect()
    }

    fn first_correction(&self, y: &[f64]) -> Vec<f64> {
        let f0 = eval_vec(&self.target, y);
        self.dk_tilde(y, &f0)
            .into_iter()
            .map(|v| -self.xi * v)
            .collect()
    }

    /// W(Y) in Z = ξ(K̃(Y) + W(Y)) through second order in ξ, from the invariance equation
    /// W = −ξ D_Y(K̃ + W)·(F + T W).
    pub fn manifold_correction(&self, y: &[f64]) -> Vec<f64> {
        let p = self.p();
        let f0 = eval_vec(&self.target, y);
        let w1 = self.first_correction(y);
        let tw1 = self.t_times(&w1);
        let a = self.dk_tilde(y, &tw1);
        // D W1 · F0 by a central difference along F0
        let fnorm = norm(&f0);
        let mut b = vec![0.0; w1.len()];
        if fnorm > 0.0 {
            let e = 1e-4 * (1.0 + norm(y)) / fnorm;
            let yp: Vec<f64> = (0..p).map(|i| y[i] + e * f0[i]).collect();
            let ym: Vec<f64> = (0..p).map(|i| y[i] - e * f0[i]).collect();
            let wp = self.first_correction(&yp);
            let wm = self.first_correction(&ym);
            for s in 0..b.len() {
                b[s] = (wp[s] - wm[s]) / (2.0 * e);
            }
        }
        (0..w1.len())
            .map(|s| w1[s] - self.xi * (a[s] + b[s]))
            .collect()
    }

    /// Manifold point including the correction.
    pub fn manifold_point(&self, y: &[f64]) -> Vec<f64> {
        let kt = self.k_tilde(y);
        let w = self.manifold_correction(y);
        kt.iter().zip(&w).map(|(a, b)| self.xi * (a + b)).collect()
    }

    /// Slow field restricted to the manifold: F(Y) + T W(Y).
    pub fn reduced_rhs(&self, y: &[f64]) -> Vec<f64> {
        let f = eval_vec(&self.target, y);
        let tw = self.t_times(&self.manifold_correction(y));
        f.iter().zip(&tw).map(|(a, b)| a + b).collect()
    }

    /// Full state (Y, Z) with Z on the corrected manifold.
    pub fn lift(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        x.extend(self.manifold_point(y));
        x
    }

    /// sup |reduced_rhs − F| over the given points.
    pub fn rhs_gap(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .map(|y| {
                let a = self.reduced_rhs(y);
                let b = eval_vec(&self.target, y);
                norm(&a.iter().zip(&b).map(|(u, v)| u - v).collect::<Vec<_>>())
            })
            .fold(0.0, f64::max)
    }

    /// Sampled C¹ distance: sup |Δ| + sup ‖∇Δ‖ with Δ = reduced_rhs − F and a central-difference
    /// Jacobian.
    pub fn c1_gap(&self, points: &[Vec<f64>], step: f64) -> f64 {
        let diff = DiffField { emb: self };
        let mut value: f64 = 0.0;
        let mut slope: f64 = 0.0;
        for y in points {
            value = value.max(norm(&eval_vec(&diff, y)));
            slope = slope.max(
                jacobian_fd(&diff, y, step)
                    .svd(false, false)
                    .singular_values
                    .max(),
            );
        }
        value + slope
    }
}

struct DiffField<'a> {
    emb: &'a Embedding,
}

impl VectorField for DiffField<'_> {
    fn dim(&self) -> usize {
        self.emb.p()
    }

    fn eval(&self, y: &[f64], out: &mut [f64]) {
        let a = self.emb.reduced_rhs(y);
        let b = eval_vec(&self.emb.target, y);
        for i in 0..out.len() {
            out[i] = a[i] - b[i];
        }
    }
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub embedding: Embedding,
    pub c1_gap: f64,
    pub bisection_steps: usize,
}

/// Largest ξ (to a factor 1.05) whose sampled C¹ gap on the ball is below ε.
pub fn epsilon_realize(
    target: &ReducedField,
    eps: f64,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<Realization> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    let points = sample_ball(target.p, radius, samples, seed);
    let step = 1e-4 * radius.max(1.0);
    let gap = |xi: f64| -> Result<(Embedding, f64)> {
        let e = embed_target(target, xi, None, radius)?;
        let g = e.c1_gap(&points, step);
        Ok((e, g))
    };
    let mut hi = 0.5;
    let mut steps = 0;
    let (mut best, mut best_gap) = gap(hi)?;
    if best_gap < eps {
        return Ok(Realization {
            embedding: best,
            c1_gap: best_gap,
            bisection_steps: 0,
        });
    }
    let mut lo = hi;
    loop {
        lo /= 2.0;
        steps += 1;
        let (e, g) = gap(lo)?;
        if g < eps {
            best = e;
            best_gap = g;
            break;
        }
        hi = lo;
        if lo < 1e-12 {
            return Err(Error::NoConvergence {
                iterations: steps,
                last: crate::cplx::C64::new(lo, 0.0),
                residual: g,
            });
        }
    }
    while hi / lo > 1.05 {
        let mid = (lo * hi).sqrt();
        steps += 1;
        let (e, g) = gap(mid)?;
        if g < eps {
            lo = mid;
            best = e;
            best_gap = g;
        } else {
            hi = mid;
        }
    }
    Ok(Realization {
        embedding: best,
        c1_gap: best_gap,
        bisection_steps: steps,
    })
}

/// Fixed-step samples; `escaped` marks a run cut short by the guard or a non-finite state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    pub record_every: usize,
    pub method: String,
    pub escaped: bool,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",X{i}"));
        }
        out.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.16e}"));
            for v in x {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Index of the sample closest to time t.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        if self.times.is_empty()
            || t < self.times[0] - 0.5 * self.dt
            || t > *self.times.last().unwrap() + 0.5 * self.dt
        {
            return None;
        }
        let step = self.dt * self.record_every as f64;
        let i = ((t - self.times[0]) / step).round() as usize;
        Some(i.min(self.times.len() - 1))
    }
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl IntegrateOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            record_every: 1,
        }
    }
}

struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

fn rk4_step<F: VectorField + ?Sized>(f: &F, x: &mut [f64], dt: f64, w: &mut Rk4Work) {
    let n = x.len();
    f.eval(x, &mut w.k1);
    for i in 0..n {
        w.tmp[i] = x[i] + 0.5 * dt * w.k1[i];
    }
    f.eval(&w.tmp, &mut w.k2);
    for i in 0..n {
        w.tmp[i] = x[i] + 0.5 * dt * w.k2[i];
    }
    f.eval(&w.tmp, &mut w.k3);
    for i in 0..n {
        w.tmp[i] = x[i] + dt * w.k3[i];
    }
    f.eval(&w.tmp, &mut w.k4);
    for i in 0..n {
        x[i] += dt / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
    }
}

/// Classical RK4 with fixed step; deterministic for identical inputs.
pub fn integrate<F: VectorField + ?Sized>(
    f: &F,
    x0: &[f64],
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(opts.t_end > 0.0) || opts.record_every == 0 {
        return Err(Error::InvalidInput(
            "dt, t_end and record_every must be positive".into(),
        ));
    }
    if x0.len() != f.dim() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "initial state has the wrong size or is not finite".into(),
        ));
    }
    let steps = (opts.t_end / opts.dt).round() as usize;
    let mut x = x0.to_vec();
    let mut work = Rk4Work::new(x.len());
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        dt: opts.dt,
        record_every: opts.record_every,
        method: "rk4".into(),
        escaped: false,
    };
    let guard = f.guard();
    for step in 1..=steps {
        rk4_step(f, &mut x, opts.dt, &mut work);
        let bad = x.iter().any(|v| !v.is_finite()) || guard.is_some_and(|g| norm(&x) >= g);
        if bad {
            traj.escaped = true;
            break;
        }
        if step % opts.record_every == 0 {
            traj.times.push(step as f64 * opts.dt);
            traj.states.push(x.clone());
        }
    }
    Ok(traj)
}

/// State and one tangent vector stepped together.
struct Tangent<'a, F: VectorField + ?Sized> {
    f: &'a F,
}

impl<F: VectorField + ?Sized> VectorField for Tangent<'_, F> {
    fn dim(&self) -> usize {
        2 * self.f.dim()
    }

    fn eval(&self, xv: &[f64], out: &mut [f64]) {
        let n = self.f.dim();
        let (x, v) = xv.split_at(n);
        let (ox, ov) = out.split_at_mut(n);
        self.f.eval(x, ox);
        self.f.jvp(x, v, ov);
    }
}

#[derive(Debug, Clone)]
pub struct LyapunovOptions {
    pub dt: f64,
    pub transient: f64,
    pub t_total: f64,
    /// Renormalisation interval, a multiple of dt.
    pub renorm: f64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            transient: 20.0,
            t_total: 200.0,
            renorm: 0.1,
        }
    }
}

/// Largest Lyapunov exponent by Benettin renormalisation of one tangent vector.
pub fn lyapunov_exponent<F: VectorField + ?Sized>(
    f: &F,
    x0: &[f64],
    opts: &LyapunovOptions,
) -> Result<f64> {
    let n = f.dim();
    if x0.len() != n {
        return Err(Error::InvalidInput(
            "initial state has the wrong size".into(),
        ));
    }
    let guard = f.guard();
    let escaped =
        |x: &[f64]| x.iter().any(|v| !v.is_finite()) || guard.is_some_and(|g| norm(x) >= g);
    let mut x = x0.to_vec();
    let mut work = Rk4Work::new(n);
    let transient_steps = (opts.transient / opts.dt).round() as usize;
    for s in 0..transient_steps {
        rk4_step(f, &mut x, opts.dt, &mut work);
        if escaped(&x) {
            return Err(Error::Escaped {
                t: (s + 1) as f64 * opts.dt,
            });
        }
    }
    let tan = Tangent { f };
    let mut xv = x;
    xv.extend((0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }));
    let mut work2 = Rk4Work::new(2 * n);
    let per = ((opts.renorm / opts.dt).round() as usize).max(1);
    let blocks = ((opts.t_total / opts.dt).round() as usize / per).max(1);
    let mut sum = 0.0;
    for b in 0..blocks {
        for _ in 0..per {
            rk4_step(&tan, &mut xv, opts.dt, &mut work2);
        }
        if escaped(&xv[..n]) {
            return Err(Error::Escaped {
                t: opts.transient + ((b + 1) * per) as f64 * opts.dt,
            });
        }
        let vn = norm(&xv[n..]);
        if !(vn > 0.0) || !vn.is_finite() {
            return Err(Error::Singular("tangent vector collapsed".into()));
        }
        sum += vn.ln();
        xv[n..].iter_mut().for_each(|v| *v /= vn);
    }
    Ok(sum / (blocks * per) as f64 / opts.dt)
}

/// |Z(t) − ξ K̃(Y(t))| along a trajectory of the embedded system.
pub fn manifold_deviation(traj: &Trajectory, emb: &Embedding) -> Vec<f64> {
    let p = emb.p();
    traj.states
        .iter()
        .map(|x| {
            let z0 = emb.slow_manifold(&x[..p]);
            norm(
                &x[p..]
                    .iter()
                    .zip(&z0)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            )
        })
        .collect()
}

/// Newton's method on the full system, starting from `x0`.
pub fn find_equilibrium(
    sys: &QuadraticSystem,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    for it in 0..max_iter {
        let f = eval_vec(sys, &x);
        let r = norm(&f);
        if r <= tol {
            return Ok(x);
        }
        let j = sys.jacobian(&x);
        let dx = j
            .lu()
            .solve(&DVector::from_column_slice(&f))
            .ok_or_else(|| Error::Singular(format!("singular Jacobian at Newton step {it}")))?;
        for i in 0..x.len() {
            x[i] -= dx[i];
        }
    }
    let r = norm(&eval_vec(sys, &x));
    if r <= tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            iterations: max_iter,
            last: crate::cplx::C64::new(x[0], 0.0),
            residual: r,
        })
    }
}

/// Lorenz embedded with its time rescaled by Λ so that the target has sup‖∇F/Λ‖ < 1 on the ball.
#[derive(Debug, Clone)]
pub struct ScaledEmbedding {
    pub embedding: Embedding,
    /// Target time per embedded time unit.
    pub lambda: f64,
}

impl ScaledEmbedding {
    /// Wraps `target` with Λ = 1.1 × sampled sup‖∇F‖ over the ball of `radius`.
    pub fn new(target: &ReducedField, xi: f64, radius: f64, seed: u64) -> Result<Self> {
        let lambda = 1.1 * target.sup_jacobian_norm(radius, 2000, seed).max(1e-12);
        let embedding = embed_target(&target.scaled(1.0 / lambda), xi, None, radius)?;
        Ok(Self { embedding, lambda })
    }

    /// Exponent of the embedded system converted to target time units.
    pub fn lyapunov(&self, y0: &[f64], opts: &LyapunovOptions) -> Result<f64> {
        let x0 = self.embedding.lift(y0);
        let scaled = LyapunovOptions {
            dt: opts.dt,
            transient: opts.transient * self.lambda,
            t_total: opts.t_total * self.lambda,
            renorm: opts.renorm * self.lambda,
        };
        Ok(self.lambda * lyapunov_exponent(&self.embedding.system, &x0, &scaled)?)
    }
}
