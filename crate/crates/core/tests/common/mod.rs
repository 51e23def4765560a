//! Independent reference solvers used only by the tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64 as C;
use superbif::normal_form::*;
use superbif::profile::*;
use superbif::spectral::*;

/// Plain Gaussian elimination on a tridiagonal system stored as three dense bands.
pub fn band_solve(mut a: Vec<C>, mut b: Vec<C>, mut c: Vec<C>, mut r: Vec<C>) -> Vec<C> {
    let n = b.len();
    for i in 1..n {
        let m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        let prev = r[i - 1];
        r[i] -= m * prev;
        a[i] = C::new(0.0, 0.0);
    }
    let mut x = vec![C::new(0.0, 0.0); n];
    x[n - 1] = r[n - 1] / b[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (r[i] - c[i] * x[i + 1]) / b[i];
    }
    let _ = &mut c;
    x
}

/// u'' - q u = f, u(0) = u0, u(L) = u1, on n uniform nodes.
pub fn dirichlet(q: C, len: f64, f: &[C], u0: C, u1: C) -> Vec<C> {
    let n = f.len();
    let dy = len / (n - 1) as f64;
    let s = 1.0 / (dy * dy);
    let mut a = vec![C::new(s, 0.0); n];
    let mut b = vec![C::new(-2.0 * s, 0.0) - q; n];
    let mut c = vec![C::new(s, 0.0); n];
    let mut r = f.to_vec();
    b[0] = C::new(1.0, 0.0);
    c[0] = C::new(0.0, 0.0);
    r[0] = u0;
    a[n - 1] = C::new(0.0, 0.0);
    b[n - 1] = C::new(1.0, 0.0);
    r[n - 1] = u1;
    a[0] = C::new(0.0, 0.0);
    c[n - 1] = C::new(0.0, 0.0);
    band_solve(a, b, c, r)
}

/// u'' - q u = f, u'(0) = u'(L) = 0, ghost-point closure.
pub fn neumann(q: C, len: f64, f: &[C]) -> Vec<C> {
    let n = f.len();
    let dy = len / (n - 1) as f64;
    let s = 1.0 / (dy * dy);
    let mut a = vec![C::new(s, 0.0); n];
    let b = vec![C::new(-2.0 * s, 0.0) - q; n];
    let mut c = vec![C::new(s, 0.0); n];
    c[0] = C::new(2.0 * s, 0.0);
    a[n - 1] = C::new(2.0 * s, 0.0);
    a[0] = C::new(0.0, 0.0);
    c[n - 1] = C::new(0.0, 0.0);
    band_solve(a, b, c, f.to_vec())
}

pub fn sqrt_re_pos(z: C) -> C {
    let r = z.sqrt();
    if r.re < 0.0 {
        -r
    } else {
        r
    }
}

/// Surface temperature w(0) from the three boundary value problems solved in sequence on n nodes.
pub fn bvp_surface(
    k: f64,
    lambda: C,
    nu: f64,
    d: f64,
    h: f64,
    u_y: &dyn Fn(f64) -> f64,
    n: usize,
) -> C {
    let dy = h / (n - 1) as f64;
    let y: Vec<f64> = (0..n).map(|i| i as f64 * dy).collect();
    let knu2 = C::new(k * k, 0.0) + lambda / nu;
    let zero = vec![C::new(0.0, 0.0); n];
    let omega = dirichlet(knu2, h, &zero, C::new(1.0, 0.0), C::new(0.0, 0.0));
    let rhs: Vec<C> = omega.iter().map(|w| -w).collect();
    let psi = dirichlet(
        C::new(k * k, 0.0),
        h,
        &rhs,
        C::new(0.0, 0.0),
        C::new(0.0, 0.0),
    );
    let f: Vec<C> = y
        .iter()
        .zip(&psi)
        .map(|(&yy, p)| C::new(0.0, k / d) * u_y(yy) * p)
        .collect();
    let kb2 = C::new(k * k, 0.0) + lambda / d;
    neumann(kb2, h, &f)[0]
}

/// Richardson-extrapolated surface value from grids n and 2n - 1.
pub fn bvp_surface_extrapolated(
    k: f64,
    lambda: C,
    nu: f64,
    d: f64,
    h: f64,
    u_y: &dyn Fn(f64) -> f64,
    n: usize,
) -> C {
    let coarse = bvp_surface(k, lambda, nu, d, h, u_y, n);
    let fine = bvp_surface(k, lambda, nu, d, h, u_y, 2 * n - 1);
    (fine * 4.0 - coarse) / 3.0
}

/// Bisection for a sign change of f on [a, b].
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    assert!(fa * f(b) < 0.0, "no sign change");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if f(m) * fa > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Composite Simpson on [a, b] with n (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// The spectrum and basis shared by the normal-form oracles.
pub fn desk_basis(k_n: &[f64]) -> ModeBasis {
    let fluid = FluidParams::with_depth(1e3, 1.0, 1.6, 6.0).unwrap();
    let profile =
        TemperatureProfile::Designed(ProfileParams::new(0.05, vec![0.1, -0.1, 0.2]).unwrap());
    build_mode_basis(
        k_n,
        &fluid,
        &profile,
        &BasisOptions {
            grid_points: Some(1201),
            ..Default::default()
        },
    )
    .unwrap()
}

pub const NX: usize = 96;

pub fn independent_simpson(n: usize, dy: f64) -> Vec<f64> {
    let mut w = vec![2.0 * dy / 3.0; n];
    for (i, wi) in w.iter_mut().enumerate() {
        if i % 2 == 1 {
            *wi = 4.0 * dy / 3.0;
        }
    }
    w[0] = dy / 3.0;
    w[n - 1] = dy / 3.0;
    w
}

/// ∫∫ (a_y b_x − a_x b_y) c over a tensor grid, x by the periodic trapezoid rule.
pub fn brute_bracket(a: FieldRef, b: FieldRef, c: FieldRef, y: &[f64]) -> f64 {
    let w = independent_simpson(y.len(), y[1] - y[0]);
    let dx = 2.0 * PI / NX as f64;
    let mut total = 0.0;
    for ix in 0..NX {
        let x = ix as f64 * dx;
        let (ta, tb, tc) = (a.trig.eval(x), b.trig.eval(x), c.trig.eval(x));
        let (ta_x, tb_x) = (a.trig.dx().eval(x), b.trig.dx().eval(x));
        for iy in 0..y.len() {
            let br = a.dy[iy] * ta * b.value[iy] * tb_x - a.value[iy] * ta_x * b.dy[iy] * tb;
            total += w[iy] * dx * br * c.value[iy] * tc;
        }
    }
    total
}

pub fn brute_pair(a: FieldRef, b: FieldRef, y: &[f64]) -> f64 {
    let w = independent_simpson(y.len(), y[1] - y[0]);
    let dx = 2.0 * PI / NX as f64;
    let mut total = 0.0;
    for ix in 0..NX {
        let x = ix as f64 * dx;
        let t = a.trig.eval(x) * b.trig.eval(x);
        for iy in 0..y.len() {
            total += w[iy] * dx * a.value[iy] * b.value[iy] * t;
        }
    }
    total
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn resonant(ki: f64, kj: f64, kl: f64) -> bool {
    ki == kj + kl || ki == (kj - kl).abs()
}

pub fn bump_component(
    basis: &ModeBasis,
    m: f64,
    parity: Parity,
    center: f64,
    amp: f64,
) -> FourierComponent {
    FourierComponent {
        m,
        parity,
        profile: basis
            .y
            .iter()
            .map(|&y| amp * envelope(y, center, 0.8))
            .collect(),
    }
}
