//! Surface-temperature patterns rebuilt from slow-mode amplitudes.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::normal_form::ModeBasis;

/// Trajectory columns (0-based state indices) feeding X⁺ and X⁻ of one mode; `None` means zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeColumns {
    pub plus: Option<usize>,
    pub minus: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub wave_numbers: Vec<f64>,
    /// θ_k(0) per mode.
    pub surface_weights: Vec<f64>,
    pub x_extent: f64,
    pub x_samples: usize,
    pub gamma: f64,
    pub columns: Vec<ModeColumns>,
}

impl PatternSpec {
    /// X⁺_j fed by column j, X⁻ zero, unit surface weights.
    pub fn direct(wave_numbers: Vec<f64>, gamma: f64, x_extent: f64, x_samples: usize) -> Self {
        let n = wave_numbers.len();
        Self {
            surface_weights: vec![1.0; n],
            columns: (0..n)
                .map(|j| ModeColumns {
                    plus: Some(j),
                    minus: None,
                })
                .collect(),
            wave_numbers,
            x_extent,
            x_samples,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.wave_numbers.len();
        if n == 0 || self.surface_weights.len() != n || self.columns.len() != n {
            return Err(Error::InvalidInput(
                "wave_numbers, surface_weights and columns must have equal, nonzero length".into(),
            ));
        }
        if self.x_samples < 2 || !(self.x_extent > 0.0) {
            return Err(Error::InvalidInput(
                "need x_samples >= 2 and x_extent > 0".into(),
            ));
        }
        for (i, k) in self.wave_numbers.iter().enumerate() {
            if !(*k > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "wave number {k} is not positive"
                )));
            }
            if self.wave_numbers[..i].contains(k) {
                return Err(Error::InvalidInput(format!("wave number {k} repeated")));
            }
        }
        Ok(())
    }

    /// Sample points x_i = i·x_extent/(x_samples − 1).
    pub fn x_grid(&self) -> Vec<f64> {
        let dx = self.x_extent / (self.x_samples - 1) as f64;
        (0..self.x_samples).map(|i| i as f64 * dx).collect()
    }

    fn amplitudes(&self, state: &[f64]) -> Result<Vec<(f64, f64)>> {
        let get = |c: Option<usize>| -> Result<f64> {
            match c {
                None => Ok(0.0),
                Some(i) => state.get(i).copied().ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "column {i} outside a state of size {}",
                        state.len()
                    ))
                }),
            }
        };
        self.columns
            .iter()
            .map(|c| Ok((get(c.plus)?, get(c.minus)?)))
            .collect()
    }

    /// u(x, 0) for one state vector.
    pub fn surface_at(&self, state: &[f64], x: f64) -> Result<f64> {
        let amps = self.amplitudes(state)?;
        Ok(self.sum(&amps, x))
    }

    fn sum(&self, amps: &[(f64, f64)], x: f64) -> f64 {
        let mut u = 0.0;
        for ((k, w), (p, m)) in self
            .wave_numbers
            .iter()
            .zip(&self.surface_weights)
            .zip(amps)
        {
            let (s, c) = (k * x).sin_cos();
            u += w * (p * c + m * s);
        }
        self.gamma * u
    }
}

/// u(x, 0, t) = γ Σ θ_j(0)[X⁺_j cos k_j x + X⁻_j sin k_j x] at sample `t_index`.
pub fn reconstruct_surface(
    spec: &PatternSpec,
    traj: &Trajectory,
    t_index: usize,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let state = traj.states.get(t_index).ok_or_else(|| {
        Error::InvalidInput(format!(
            "time index {t_index} out of range (0..{})",
            traj.states.len()
        ))
    })?;
    let amps = spec.amplitudes(state)?;
    Ok(spec
        .x_grid()
        .into_iter()
        .map(|x| spec.sum(&amps, x))
        .collect())
}

/// ψ and u on a tensor grid, rows indexed by y.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrids {
    pub psi: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

fn interp(y: &[f64], v: &[f64], at: f64) -> f64 {
    let n = y.len();
    if at <= y[0] {
        return v[0];
    }
    if at >= y[n - 1] {
        return v[n - 1];
    }
    let dy = (y[n - 1] - y[0]) / (n - 1) as f64;
    let i = (((at - y[0]) / dy).floor() as usize).min(n - 2);
    let s = (at - y[i]) / (y[i + 1] - y[i]);
    if s == 0.0 {
        v[i]
    } else {
        v[i] + s * (v[i + 1] - v[i])
    }
}

/// Slow-mode truncation of ψ and u; `x` holds X⁺ then X⁻ (length 2N). Depth profiles are linearly
/// interpolated from the basis grid.
pub fn reconstruct_field(
    basis: &ModeBasis,
    x: &[f64],
    gamma: f64,
    x_grid: &[f64],
    y_grid: &[f64],
) -> Result<FieldGrids> {
    let n = basis.len();
    if x.len() != 2 * n {
        return Err(Error::InvalidInput(format!(
            "amplitude vector has {} entries, expected {}",
            x.len(),
            2 * n
        )));
    }
    let mut psi = vec![vec![0.0; x_grid.len()]; y_grid.len()];
    let mut u = psi.clone();
    for (r, &y) in y_grid.iter().enumerate() {
        for (j, m) in basis.modes.iter().enumerate() {
            let (p, q) = (x[j], x[n + j]);
            if p == 0.0 && q == 0.0 {
                continue;
            }
            let ps = interp(&basis.y, &m.psi, y);
            let th = interp(&basis.y, &m.theta, y);
            for (c, &xv) in x_grid.iter().enumerate() {
                let (s, co) = (m.k * xv).sin_cos();
                psi[r][c] += gamma * ps * (p * s - q * co);
                u[r][c] += gamma * th * (p * co + q * s);
            }
        }
    }
    Ok(FieldGrids { psi, u })
}

/// Pearson correlation of u against itself shifted by `lag` samples.
pub fn lag_correlation(u: &[f64], lag: usize) -> f64 {
    let a = &u[..u.len() - lag];
    let b = &u[lag..];
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if saa == sbb { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

/// Smallest lag (in samples) beyond the central peak whose correlation reaches `threshold`.
///
/// The central peak ends where the correlation first turns negative. Lags keep at least half the
/// samples in the overlap.
pub fn spatial_period(u: &[f64], threshold: f64) -> Option<usize> {
    let max_lag = u.len() / 2;
    let mut lag = 1;
    while lag <= max_lag && lag_correlation(u, lag) >= 0.0 {
        lag += 1;
    }
    (lag..=max_lag).find(|&l| lag_correlation(u, l) >= threshold)
}

/// ‖a − b‖ / max(‖a‖, ‖b‖).
pub fn normalized_l2_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let d = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let s = na.max(nb);
    if s == 0.0 {
        0.0
    } else {
        d / s
    }
}

/// Range used to map a grid to gray levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgmSidecar {
    pub min: f64,
    pub max: f64,
    pub rows: usize,
    pub cols: usize,
}

/// Plain-text graymap (P2), values mapped linearly from [min, max] to 0..=255.
pub fn to_pgm(grid: &[Vec<f64>]) -> Result<(String, PgmSidecar)> {
    let rows = grid.len();
    let cols = grid.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 || grid.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput(
            "grid must be non-empty and rectangular".into(),
        ));
    }
    if grid.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "grid contains non-finite values".into(),
        ));
    }
    let min = grid.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let max = grid
        .iter()
        .flatten()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut out = format!("P2\n{cols} {rows}\n255\n");
    for row in grid {
        let line: Vec<String> = row
            .iter()
            .map(|v| {
                let g = if span > 0.0 {
                    ((v - min) / span * 255.0).round()
                } else {
                    0.0
                };
                (g as u8).to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok((
        out,
        PgmSidecar {
            min,
            max,
            rows,
            cols,
        },
    ))
}

/// Surface patterns stacked over consecutive trajectory samples (rows = time).
pub fn space_time(
    spec: &PatternSpec,
    traj: &Trajectory,
    indices: &[usize],
) -> Result<Vec<Vec<f64>>> {
    indices
        .iter()
        .map(|&i| reconstruct_surface(spec, traj, i))
        .collect()
}
