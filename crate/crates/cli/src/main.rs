//! Command-line driver: spectra, profile design, normal forms, Lorenz embedding and surface patterns.

mod config;
mod output;
mod stages;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use superbif::dynamics::{QuadraticSystem, Trajectory};
use superbif::profile::ProfileDocument;

use config::*;
use output::Outputs;
use stages::*;

/// Exit 1: bad input or configuration. Exit 2: a numerical stage failed.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    pub fn from_core(stage: &str, e: superbif::Error) -> Self {
        match e {
            superbif::Error::InvalidInput(m) => Failure::Validation(format!("{stage}: {m}")),
            other => Failure::Numerical(format!("{stage}: {other}")),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "validation error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "superbif", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output_dir in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every sampled quantity.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues λ(k) for the step or zero profile.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        z0: Option<f64>,
        /// Comma-separated wave numbers.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<f64>>,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Designs a profile making K_N critical.
    Design {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        k_n: Option<Vec<u32>>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        dbar_c: Option<f64>,
        #[arg(long)]
        refine_exact: bool,
    },
    /// Quadratic normal form for a profile.
    Normalform {
        #[command(flatten)]
        common: Common,
        /// Profile file written by `design`.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        k_n: Option<Vec<f64>>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        quasiperiodic: bool,
    },
    /// Embeds Lorenz in a slow-fast quadratic system.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Integrates Lorenz directly, or any system or normal-form file.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// System or normal-form JSON; Lorenz when absent.
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        lyapunov: bool,
    },
    /// Surface patterns from a trajectory table.
    Pattern {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        wave_numbers: Option<Vec<f64>>,
    },
    /// Runs every configured stage and writes a manifest.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Built-in configuration used when --config is absent.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))
}

fn load(common: &Common, fallback: RunConfig) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_toml(&read(p)?)?,
        None => fallback,
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| {
            Failure::Validation("no output directory: pass --out or set output_dir".into())
        })
}

/// Validates, creates the output directory, runs `body` and always writes the manifest.
fn with_outputs(
    name: &str,
    common: &Common,
    cfg: RunConfig,
    body: impl FnOnce(&RunConfig, &mut Outputs) -> Result<(), Failure>,
) -> Result<(), Failure> {
    cfg.validate()?;
    let dir = out_dir(common, &cfg)?;
    let mut out = Outputs::create(&dir)?;
    let result = body(&cfg, &mut out);
    out.finish(name, result.is_ok(), &cfg)?;
    result
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Spectrum {
            common,
            z0,
            k,
            mode,
        } => {
            let mut cfg = load(&common, RunConfig::default())?;
            let s = cfg.spectrum.get_or_insert_with(SpectrumConfig::default);
            if let Some(v) = z0 {
                s.z0 = v;
            }
            if let Some(v) = k {
                s.k = v;
            }
            if let Some(v) = mode {
                s.mode = v;
            }
            with_outputs("spectrum", &common, cfg, |cfg, out| {
                run_spectrum(cfg, cfg.spectrum.as_ref().unwrap(), out)
            })
        }
        Command::Design {
            common,
            k_n,
            kappa,
            dbar_c,
            refine_exact,
        } => {
            let mut cfg = load(&common, RunConfig::default())?;
            let d = cfg.design.get_or_insert_with(DesignConfig::default);
            if let Some(v) = k_n {
                d.k_n = v;
            }
            if let Some(v) = kappa {
                d.kappa = v;
            }
            if let Some(v) = dbar_c {
                d.dbar_c = v;
            }
            d.refine_exact |= refine_exact;
            with_outputs("design", &common, cfg, |cfg, out| {
                run_design(cfg, cfg.design.as_ref().unwrap(), out).map(|_| ())
            })
        }
        Command::Normalform {
            common,
            profile,
            k_n,
            gamma,
            quasiperiodic,
        } => {
            let mut cfg = load(&common, RunConfig::default())?;
            let mut dbar = cfg.fluid.dbar;
            let n = cfg
                .normal_form
                .get_or_insert_with(NormalFormConfig::default);
            if let Some(path) = profile {
                let doc = ProfileDocument::from_json(&read(&path)?)
                    .map_err(|e| Failure::from_core("normal_form", e))?;
                n.profile = Some(ProfileShape {
                    kappa: doc.kappa,
                    d: doc.d.clone(),
                });
                dbar = doc.dbar_c;
            }
            if let Some(v) = k_n {
                n.k_n = v;
            }
            if let Some(v) = gamma {
                n.gamma = v;
            }
            n.quasiperiodic |= quasiperiodic;
            cfg.design = None;
            with_outputs("normalform", &common, cfg, |cfg, out| {
                let n = cfg.normal_form.as_ref().unwrap();
                let shape = n.profile.as_ref().unwrap();
                let params = superbif::profile::ProfileParams::new(shape.kappa, shape.d.clone())
                    .map_err(|e| Failure::from_core("normal_form", e))?;
                run_normal_form(cfg, n, &params, dbar, out).map(|_| ())
            })
        }
        Command::Embed { common, xi, radius } => {
            let mut cfg = load(&common, RunConfig::default())?;
            let e = cfg.embed.get_or_insert_with(EmbedConfig::default);
            if let Some(v) = xi {
                e.xi = v;
            }
            if let Some(v) = radius {
                e.radius = v;
            }
            with_outputs("embed", &common, cfg, |cfg, out| {
                run_embed(cfg, cfg.embed.as_ref().unwrap(), out).map(|_| ())
            })
        }
        Command::Simulate {
            common,
            system,
            x0,
            dt,
            t_end,
            lyapunov,
        } => {
            let mut cfg = load(&common, RunConfig::default())?;
            let s = cfg.simulate.get_or_insert_with(SimulateConfig::default);
            if let Some(v) = x0 {
                s.x0 = v;
            }
            if let Some(v) = dt {
                s.dt = v;
            }
            if let Some(v) = t_end {
                s.t_end = v;
            }
            s.lyapunov |= lyapunov;
            match system {
                None => {
                    s.source = Source::Lorenz;
                    with_outputs("simulate", &common, cfg, |cfg, out| {
                        run_simulate(cfg.simulate.as_ref().unwrap(), None, None, 60.0, out)
                            .map(|_| ())
                    })
                }
                Some(path) => {
                    let text = read(&path)?;
                    with_outputs("simulate", &common, cfg, |cfg, out| {
                        simulate_file(cfg, &text, out)
                    })
                }
            }
        }
        Command::Pattern {
            common,
            trajectory,
            times,
            wave_numbers,
        } => {
            let mut cfg = load(&common, RunConfig::default())?;
            let p = cfg.pattern.get_or_insert_with(PatternConfig::default);
            if let Some(v) = times {
                p.times = v;
            }
            if let Some(v) = wave_numbers {
                p.wave_numbers = v;
            }
            let traj = read_trajectory(&read(&trajectory)?)?;
            with_outputs("pattern", &common, cfg, |cfg, out| {
                let sim = Simulated {
                    trajectory: traj,
                    columns: Vec::new(),
                    weights: Vec::new(),
                };
                run_pattern(cfg.pattern.as_ref().unwrap(), &sim, out)
            })
        }
        Command::Pipeline { common, preset } => {
            let fallback = match (preset, &common.config) {
                (Some(p), None) => RunConfig::preset(p),
                (None, Some(_)) => RunConfig::default(),
                (Some(_), Some(_)) => {
                    return Err(Failure::Validation(
                        "pass either --config or --preset, not both".into(),
                    ))
                }
                (None, None) => {
                    return Err(Failure::Validation(
                        "pipeline needs --config or --preset".into(),
                    ))
                }
            };
            let cfg = load(&common, fallback)?;
            with_outputs("pipeline", &common, cfg, run_pipeline)
        }
    }
}

/// A generic system file (or normal form) integrated in its own time.
fn simulate_file(cfg: &RunConfig, text: &str, out: &mut Outputs) -> Result<(), Failure> {
    let s = cfg.simulate.as_ref().unwrap();
    let sys =
        QuadraticSystem::from_json(text, 60.0).map_err(|e| Failure::from_core("simulate", e))?;
    if s.x0.len() != sys.n {
        return Err(Failure::Validation(format!(
            "simulate: x0 has {} entries, the system has {}",
            s.x0.len(),
            sys.n
        )));
    }
    let opts = superbif::dynamics::IntegrateOptions {
        dt: s.dt,
        t_end: s.t_end,
        record_every: s.record_every,
    };
    let t: Trajectory = superbif::dynamics::integrate(&sys, &s.x0, &opts)
        .map_err(|e| Failure::from_core("simulate", e))?;
    out.write("trajectory.csv", t.to_csv())?;
    if t.escaped {
        return Err(Failure::Numerical(
            "simulate: trajectory left the trust region".into(),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
