use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::Failure;

/// Every stage's parameters. Sections that are absent are skipped by `pipeline`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub fluid: FluidConfig,
    pub spectrum: Option<SpectrumConfig>,
    pub design: Option<DesignConfig>,
    pub normal_form: Option<NormalFormConfig>,
    pub embed: Option<EmbedConfig>,
    pub simulate: Option<SimulateConfig>,
    pub pattern: Option<PatternConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidConfig {
    pub nu: f64,
    pub d_thermal: f64,
    /// D̄ = D/b.
    pub dbar: f64,
    /// Finite layer depth; absent means h = 10 ln ν.
    pub depth: Option<f64>,
}

impl Default for FluidConfig {
    fn default() -> Self {
        Self {
            nu: 1e6,
            d_thermal: 1.0,
            dbar: 1.0,
            depth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Step,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub profile: ProfileKind,
    pub z0: f64,
    pub k: Vec<f64>,
    /// "limit" or "exact".
    pub mode: String,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            profile: ProfileKind::Step,
            z0: 0.0008,
            k: (1..=6).map(f64::from).collect(),
            mode: "limit".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub k_n: Vec<u32>,
    pub kappa: f64,
    pub dbar_c: f64,
    /// Finite-ν Newton correction after the ν → ∞ design.
    pub refine_exact: bool,
    pub lambda_tol: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            k_n: vec![1, 2, 3, 5],
            kappa: 0.05,
            dbar_c: 1.0,
            refine_exact: false,
            lambda_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileShape {
    pub kappa: f64,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalFormConfig {
    pub k_n: Vec<f64>,
    pub gamma: f64,
    pub quasiperiodic: bool,
    pub grid_points: Option<usize>,
    /// Used when no design stage ran.
    pub profile: Option<ProfileShape>,
}

impl Default for NormalFormConfig {
    fn default() -> Self {
        Self {
            k_n: vec![1.0, 2.0, 3.0],
            gamma: 0.05,
            quasiperiodic: false,
            grid_points: None,
            profile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub xi: f64,
    pub radius: f64,
    pub n: Option<usize>,
    /// Divide the target by Λ ≈ sup‖∇F‖ on the ball before embedding.
    pub time_scale: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            xi: 0.01,
            radius: 60.0,
            n: None,
            time_scale: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Lorenz integrated directly.
    Lorenz,
    /// The embedded system from the embed stage.
    Embedded,
    /// The normal form from the normal_form stage.
    NormalForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub source: Source,
    pub x0: Vec<f64>,
    /// Step in target (Lorenz) time; the embedded run uses `embedded_dt`.
    pub dt: f64,
    pub embedded_dt: Option<f64>,
    pub t_end: f64,
    pub record_every: usize,
    pub lyapunov: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            source: Source::Lorenz,
            x0: vec![1.0, 1.0, 1.0],
            dt: 1e-3,
            embedded_dt: None,
            t_end: 150.0,
            record_every: 10,
            lyapunov: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatternConfig {
    pub wave_numbers: Vec<f64>,
    /// Physical times; amplitudes are read at τ = γ t.
    pub times: Vec<f64>,
    pub gamma: f64,
    pub x_extent: f64,
    pub x_samples: usize,
    pub surface_weights: Option<Vec<f64>>,
    /// Trajectory state columns feeding X⁺ (and optionally X⁻) per mode.
    pub plus_columns: Option<Vec<usize>>,
    pub minus_columns: Option<Vec<usize>>,
    /// Rows of the space-time image.
    pub spacetime_rows: usize,
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self {
            wave_numbers: vec![1.0, 2.1, 3.3],
            times: vec![1000.0, 2000.0, 3000.0],
            gamma: 0.05,
            x_extent: 40.0,
            x_samples: 2001,
            surface_weights: None,
            plus_columns: None,
            minus_columns: None,
            spacetime_rows: 301,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Step and designed spectra for k = 1..6.
    Fig1,
    /// Lorenz-driven three-mode surface patterns.
    Fig00,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Fig1 => Self {
                spectrum: Some(SpectrumConfig::default()),
                design: Some(DesignConfig {
                    // κ = 0.05 admits no design for {1, 2, 3, 5}; see the README
                    kappa: 1e-33,
                    ..Default::default()
                }),
                ..Default::default()
            },
            Preset::Fig00 => Self {
                simulate: Some(SimulateConfig::default()),
                pattern: Some(PatternConfig::default()),
                ..Default::default()
            },
        }
    }

    pub fn from_toml(s: &str) -> Result<Self, Failure> {
        let cfg: Self =
            toml::from_str(s).map_err(|e| Failure::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked before a stage runs.
    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |m: String| Err(Failure::Validation(m));
        let f = &self.fluid;
        if !(f.nu > 1.0 && f.d_thermal > 0.0 && f.dbar > 0.0) || f.depth.is_some_and(|h| !(h > 0.0))
        {
            return bad(format!(
                "fluid: need nu > 1, d_thermal > 0, dbar > 0, depth > 0 (got {f:?})"
            ));
        }
        if let Some(s) = &self.spectrum {
            if s.k.is_empty() || s.k.iter().any(|k| !(*k > 0.0)) {
                return bad("spectrum.k must be a non-empty list of positive numbers".into());
            }
            if s.mode != "limit" && s.mode != "exact" {
                return bad(format!(
                    "spectrum.mode must be \"limit\" or \"exact\", got {:?}",
                    s.mode
                ));
            }
            if s.profile == ProfileKind::Step && !(s.z0 > 0.0) {
                return bad("spectrum.z0 must be positive".into());
            }
        }
        if let Some(d) = &self.design {
            if d.k_n.is_empty()
                || d.k_n.contains(&0)
                || !(d.kappa > 0.0 && d.kappa < 1.0)
                || !(d.dbar_c > 0.0)
            {
                return bad(
                    "design: need a non-empty k_n of positive integers, 0 < kappa < 1, dbar_c > 0"
                        .into(),
                );
            }
        }
        if let Some(n) = &self.normal_form {
            if n.k_n.is_empty() || n.k_n.iter().any(|k| !(*k > 0.0)) || !(n.gamma > 0.0) {
                return bad("normal_form: need positive k_n and gamma".into());
            }
            if n.profile.is_none() && self.design.is_none() {
                return bad(
                    "normal_form needs either normal_form.profile or a design section".into(),
                );
            }
        }
        if let Some(e) = &self.embed {
            if !(e.xi > 0.0 && e.xi < 1.0) || !(e.radius > 0.0) {
                return bad("embed: need 0 < xi < 1 and radius > 0".into());
            }
        }
        if let Some(s) = &self.simulate {
            if !(s.dt > 0.0 && s.t_end > 0.0)
                || s.record_every == 0
                || s.embedded_dt.is_some_and(|d| !(d > 0.0))
            {
                return bad(
                    "simulate: need dt, t_end, record_every (and embedded_dt) positive".into(),
                );
            }
            if s.source == Source::Embedded && self.embed.is_none() {
                return bad("simulate.source = \"embedded\" needs an embed section".into());
            }
            if s.source == Source::NormalForm && self.normal_form.is_none() {
                return bad("simulate.source = \"normal_form\" needs a normal_form section".into());
            }
        }
        if let Some(p) = &self.pattern {
            let n = p.wave_numbers.len();
            if n == 0
                || p.times.is_empty()
                || p.x_samples < 2
                || !(p.x_extent > 0.0)
                || !(p.gamma > 0.0)
            {
                return bad(
                    "pattern: need wave numbers, times, x_samples >= 2, x_extent > 0, gamma > 0"
                        .into(),
                );
            }
            for (name, len) in [
                ("surface_weights", p.surface_weights.as_ref().map(Vec::len)),
                ("plus_columns", p.plus_columns.as_ref().map(Vec::len)),
                ("minus_columns", p.minus_columns.as_ref().map(Vec::len)),
            ] {
                if len.is_some_and(|l| l != n) {
                    return bad(format!(
                        "pattern.{name} must have one entry per wave number"
                    ));
                }
            }
            if p.spacetime_rows < 2 {
                return bad("pattern.spacetime_rows must be at least 2".into());
            }
        }
        Ok(())
    }
}
