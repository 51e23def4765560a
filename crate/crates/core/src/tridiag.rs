//! Thomas algorithm for tridiagonal systems, complex and real.

use crate::cplx::C64;
use crate::error::{Error, Result};

/// Solves `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
/// `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_complex(lower: &[C64], diag: &[C64], upper: &[C64], rhs: &[C64]) -> Result<Vec<C64>> {
    let n = diag.len();
    let mut c = vec![C64::new(0.0, 0.0); n];
    let mut d = vec![C64::new(0.0, 0.0); n];
    let scale = diag.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut denom = diag[0];
    if denom.norm() <= 1e-14 * scale {
        return Err(Error::Singular(format!("zero pivot at row 0 of {n}")));
    }
    c[0] = if n > 1 {
        upper[0] / denom
    } else {
        C64::new(0.0, 0.0)
    };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom.norm() <= 1e-14 * scale {
            return Err(Error::Singular(format!("zero pivot at row {i} of {n}")));
        }
        if i + 1 < n {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        let next = d[i + 1];
        d[i] -= c[i] * next;
    }
    Ok(d)
}

/// Real counterpart of [`solve_complex`].
pub fn solve_real(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let scale = diag.iter().map(|z| z.abs()).fold(0.0, f64::max);
    let mut denom = diag[0];
    if denom.abs() <= 1e-14 * scale {
        return Err(Error::Singular(format!("zero pivot at row 0 of {n}")));
    }
    c[0] = if n > 1 { upper[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom.abs() <= 1e-14 * scale {
            return Err(Error::Singular(format!("zero pivot at row {i} of {n}")));
        }
        if i + 1 < n {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        let next = d[i + 1];
        d[i] -= c[i] * next;
    }
    Ok(d)
}

/// Second-order solve of w'' - q w = f on a uniform grid with w'(0) = w'(h) = 0 (ghost-point closure).
pub fn neumann_complex(q: C64, dy: f64, f: &[C64]) -> Result<Vec<C64>> {
    let n = f.len();
    let inv = 1.0 / (dy * dy);
    let lower = vec![C64::new(inv, 0.0); n];
    let mut upper = vec![C64::new(inv, 0.0); n];
    let diag = vec![C64::new(-2.0 * inv, 0.0) - q; n];
    let mut lower = lower;
    upper[0] = C64::new(2.0 * inv, 0.0);
    lower[n - 1] = C64::new(2.0 * inv, 0.0);
    solve_complex(&lower, &diag, &upper, f)
}

/// Second-order solve of w'' - q w = f with homogeneous Dirichlet ends; `f` holds interior and boundary
/// nodes, the boundary entries are ignored and the returned vector has zeros there.
pub fn dirichlet_real(q: f64, dy: f64, f: &[f64]) -> Result<Vec<f64>> {
    let n = f.len();
    if n < 3 {
        return Ok(vec![0.0; n]);
    }
    let m = n - 2;
    let inv = 1.0 / (dy * dy);
    let lower = vec![inv; m];
    let upper = vec![inv; m];
    let diag = vec![-2.0 * inv - q; m];
    let inner = solve_real(&lower, &diag, &upper, &f[1..n - 1])?;
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    out.extend(inner);
    out.push(0.0);
    Ok(out)
}

/// Dirichlet solve of w'' - q w = f with w(0) = w0, w(h) = wh, complex coefficients.
pub fn dirichlet_complex(q: C64, dy: f64, f: &[C64], w0: C64, wh: C64) -> Result<Vec<C64>> {
    let n = f.len();
    let m = n - 2;
    let inv = 1.0 / (dy * dy);
    let lower = vec![C64::new(inv, 0.0); m];
    let upper = vec![C64::new(inv, 0.0); m];
    let diag = vec![C64::new(-2.0 * inv, 0.0) - q; m];
    let mut rhs = f[1..n - 1].to_vec();
    rhs[0] -= w0 * inv;
    rhs[m - 1] -= wh * inv;
    let inner = solve_complex(&lower, &diag, &upper, &rhs)?;
    let mut out = Vec::with_capacity(n);
    out.push(w0);
    out.extend(inner);
    out.push(wh);
    Ok(out)
}
