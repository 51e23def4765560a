use std::fmt::Write as _;

use serde::Serialize;
use superbif::cplx::C64;
use superbif::design::{design_profile, refine_design_exact, verify_design, DesignResult};
use superbif::dynamics::{
    embed_target, integrate, lyapunov_exponent, sample_ball, IntegrateOptions, LyapunovOptions,
    QuadraticSystem, ReducedField, ScaledEmbedding, Trajectory,
};
use superbif::normal_form::{
    assemble_normal_form, build_mode_basis, BasisOptions, Inhomogeneity, ModeBasis,
    QuadraticNormalForm,
};
use superbif::pattern::{
    normalized_l2_distance, reconstruct_surface, space_time, spatial_period, to_pgm, ModeColumns,
    PatternSpec,
};
use superbif::profile::{ProfileDocument, ProfileParams, TemperatureProfile};
use superbif::spectral::{spectrum_scan, spectrum_to_csv, Dbar, FluidParams, Mode, WaveNumber};

use crate::config::*;
use crate::output::Outputs;
use crate::Failure;

fn stage_err(stage: &'static str) -> impl Fn(superbif::Error) -> Failure {
    move |e| Failure::from_core(stage, e)
}

pub fn fluid_params(f: &FluidConfig, dbar: f64) -> Result<FluidParams, Failure> {
    let b = f.d_thermal / dbar;
    match f.depth {
        Some(h) => FluidParams::with_depth(f.nu, f.d_thermal, b, h),
        None => FluidParams::asymptotic(f.nu, f.d_thermal, b),
    }
    .map_err(stage_err("fluid"))
}

pub fn run_spectrum(cfg: &RunConfig, s: &SpectrumConfig, out: &mut Outputs) -> Result<(), Failure> {
    let err = stage_err("spectrum");
    let fluid = fluid_params(&cfg.fluid, cfg.fluid.dbar)?;
    let (profile, name) = match s.profile {
        ProfileKind::Step => (TemperatureProfile::Step { z0: s.z0 }, "step"),
        ProfileKind::Zero => (TemperatureProfile::Zero, "zero"),
    };
    let mode = if s.mode == "exact" {
        Mode::Exact
    } else {
        Mode::Limit
    };
    let ks =
        s.k.iter()
            .map(|k| WaveNumber::new(*k))
            .collect::<Result<Vec<_>, _>>()
            .map_err(&err)?;
    let rows = spectrum_scan(&ks, &fluid, &profile, mode, C64::new(0.0, 0.0));
    out.write(&format!("spectrum_{name}.csv"), spectrum_to_csv(&rows))?;
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("k={}: {e}", r.k)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "spectrum: {}",
            failed.join("; ")
        )))
    }
}

pub struct Designed {
    pub result: DesignResult,
    pub params: ProfileParams,
}

pub fn run_design(
    cfg: &RunConfig,
    d: &DesignConfig,
    out: &mut Outputs,
) -> Result<Designed, Failure> {
    let err = stage_err("design");
    let dbar = Dbar::from_value(d.dbar_c);
    let (mut result, _) = design_profile(&d.k_n, d.kappa, dbar).map_err(&err)?;
    let fluid = fluid_params(&cfg.fluid, d.dbar_c)?;
    if d.refine_exact {
        result = refine_design_exact(&result, &fluid, 20).map_err(&err)?;
    }
    let params = result.params().map_err(&err)?;
    let report = verify_design(&params, &d.k_n, dbar, &fluid, d.lambda_tol).map_err(&err)?;
    let doc = ProfileDocument::new(
        &params,
        &d.k_n,
        d.dbar_c,
        2.0 * (params.z0 + params.kappa),
        200,
    );
    out.write("profile.json", doc.to_json().map_err(&err)? + "\n")?;
    out.write_json("design_report.json", &report)?;
    let mut csv = String::from("k,selected,lambda_b1,lambda_bc,lambda_b2\n");
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{:.16e},{:.16e},{:.16e}",
            r.k, r.selected, r.lambda_b1, r.lambda_bc, r.lambda_b2
        );
    }
    out.write("spectrum_designed.csv", csv)?;
    if !report.passed() {
        return Err(Failure::Numerical(format!(
            "design: verification failed: {}",
            report.failures.join("; ")
        )));
    }
    Ok(Designed { result, params })
}

#[derive(Serialize)]
struct BasisRow {
    k: f64,
    theta_surface: f64,
    criticality: f64,
    adjoint_bc: f64,
}

pub fn run_normal_form(
    cfg: &RunConfig,
    n: &NormalFormConfig,
    profile: &ProfileParams,
    dbar: f64,
    out: &mut Outputs,
) -> Result<(QuadraticNormalForm, ModeBasis), Failure> {
    let err = stage_err("normal_form");
    let fluid = fluid_params(&cfg.fluid, dbar)?;
    let opts = BasisOptions {
        grid_points: n.grid_points,
        quasiperiodic: n.quasiperiodic,
        ..Default::default()
    };
    let basis = build_mode_basis(
        &n.k_n,
        &fluid,
        &TemperatureProfile::Designed(profile.clone()),
        &opts,
    )
    .map_err(&err)?;
    let zero = Inhomogeneity::zero(basis.y.clone(), 0.0);
    let nf = assemble_normal_form(&basis, &zero, &zero, n.gamma).map_err(&err)?;
    out.write("normal_form.json", nf.to_json().map_err(&err)? + "\n")?;
    let rows: Vec<BasisRow> = basis
        .modes
        .iter()
        .map(|m| BasisRow {
            k: m.k,
            theta_surface: m.theta[0],
            criticality: m.criticality,
            adjoint_bc: m.adjoint_bc,
        })
        .collect();
    out.write_json("basis_report.json", &rows)?;
    Ok((nf, basis))
}

#[derive(Serialize)]
struct EmbedReport {
    n: usize,
    p: usize,
    xi: f64,
    lambda: f64,
    theorem_window: bool,
    /// sup |reduced − target| over 100 ball samples, in target time units.
    rhs_gap: f64,
}

pub fn run_embed(
    cfg: &RunConfig,
    e: &EmbedConfig,
    out: &mut Outputs,
) -> Result<ScaledEmbedding, Failure> {
    let err = stage_err("embed");
    let target = ReducedField::lorenz(e.sigma, e.rho, e.beta);
    let lambda = if e.time_scale {
        1.1 * target
            .sup_jacobian_norm(e.radius, 2000, cfg.seed)
            .max(1e-12)
    } else {
        1.0
    };
    let embedding =
        embed_target(&target.scaled(1.0 / lambda), e.xi, e.n, e.radius).map_err(&err)?;
    let gap = lambda * embedding.rhs_gap(&sample_ball(3, e.radius, 100, cfg.seed.wrapping_add(1)));
    out.write(
        "system.json",
        embedding.system.to_json().map_err(&err)? + "\n",
    )?;
    out.write_json(
        "embedding.json",
        &EmbedReport {
            n: embedding.n(),
            p: embedding.p(),
            xi: e.xi,
            lambda,
            theorem_window: embedding.theorem_window,
            rhs_gap: gap,
        },
    )?;
    Ok(ScaledEmbedding { embedding, lambda })
}

/// Trajectory with times in slow time τ.
pub struct Simulated {
    pub trajectory: Trajectory,
    pub columns: Vec<ModeColumns>,
    pub weights: Vec<f64>,
}

fn retime(mut t: Trajectory, factor: f64) -> Trajectory {
    for v in &mut t.times {
        *v *= factor;
    }
    t.dt *= factor;
    t
}

fn check_escape(t: &Trajectory) -> Result<(), Failure> {
    if t.escaped {
        Err(Failure::Numerical(format!(
            "simulate: trajectory left the trust region at t = {:.6e}",
            t.times.last().copied().unwrap_or(0.0)
        )))
    } else {
        Ok(())
    }
}

pub fn run_simulate(
    s: &SimulateConfig,
    embedding: Option<&ScaledEmbedding>,
    normal_form: Option<&(QuadraticNormalForm, ModeBasis)>,
    embed_radius: f64,
    out: &mut Outputs,
) -> Result<Simulated, Failure> {
    let err = stage_err("simulate");
    let lyap = |f: &dyn Fn() -> superbif::Result<f64>| f().map_err(&err);
    let mut le = None;
    if s.source != Source::NormalForm && s.x0.len() != 3 {
        return Err(Failure::Validation(
            "simulate.x0 must have three entries for Lorenz amplitudes".into(),
        ));
    }
    let sim = match s.source {
        Source::Lorenz => {
            let l = ReducedField::lorenz(10.0, 28.0, 8.0 / 3.0);
            let opts = IntegrateOptions {
                dt: s.dt,
                t_end: s.t_end,
                record_every: s.record_every,
            };
            let t = integrate(&l, &s.x0, &opts).map_err(&err)?;
            if s.lyapunov {
                le = Some(lyap(&|| {
                    lyapunov_exponent(
                        &l,
                        &s.x0,
                        &LyapunovOptions {
                            dt: s.dt,
                            ..Default::default()
                        },
                    )
                })?);
            }
            Simulated {
                trajectory: t,
                columns: (0..3)
                    .map(|j| ModeColumns {
                        plus: Some(j),
                        minus: None,
                    })
                    .collect(),
                weights: vec![1.0; 3],
            }
        }
        Source::Embedded => {
            let se =
                embedding.ok_or_else(|| Failure::Validation("simulate: no embedding".into()))?;
            let xi = se.embedding.xi;
            let dt = s.embedded_dt.unwrap_or(0.2 * xi);
            let every = ((s.record_every as f64 * s.dt * se.lambda / dt).round() as usize).max(1);
            let opts = IntegrateOptions {
                dt,
                t_end: s.t_end * se.lambda,
                record_every: every,
            };
            let t =
                integrate(&se.embedding.system, &se.embedding.lift(&s.x0), &opts).map_err(&err)?;
            if s.lyapunov {
                let o = LyapunovOptions {
                    dt,
                    ..Default::default()
                };
                le = Some(lyap(&|| se.lyapunov(&s.x0, &o))?);
            }
            Simulated {
                trajectory: retime(t, 1.0 / se.lambda),
                columns: (0..3)
                    .map(|j| ModeColumns {
                        plus: Some(j),
                        minus: None,
                    })
                    .collect(),
                weights: vec![1.0; 3],
            }
        }
        Source::NormalForm => {
            let (nf, basis) = normal_form
                .ok_or_else(|| Failure::Validation("simulate: no normal form".into()))?;
            let sys = QuadraticSystem::from_normal_form(nf, embed_radius).map_err(&err)?;
            if s.x0.len() != sys.n {
                return Err(Failure::Validation(format!(
                    "simulate.x0 needs {} entries for this normal form",
                    sys.n
                )));
            }
            // the normal form runs in physical time t = τ/γ
            let opts = IntegrateOptions {
                dt: s.dt / nf.gamma,
                t_end: s.t_end / nf.gamma,
                record_every: s.record_every,
            };
            let t = integrate(&sys, &s.x0, &opts).map_err(&err)?;
            let n = nf.n;
            Simulated {
                trajectory: retime(t, nf.gamma),
                columns: (0..n)
                    .map(|j| ModeColumns {
                        plus: Some(1 + j),
                        minus: Some(1 + n + j),
                    })
                    .collect(),
                weights: basis.modes.iter().map(|m| m.theta[0]).collect(),
            }
        }
    };
    out.write("trajectory.csv", sim.trajectory.to_csv())?;
    if let Some(v) = le {
        out.write_json(
            "lyapunov.json",
            &serde_json::json!({ "largest_exponent": v }),
        )?;
    }
    check_escape(&sim.trajectory)?;
    Ok(sim)
}

#[derive(Serialize)]
struct SnapshotReport {
    t: f64,
    tau: f64,
    index: usize,
    /// Smallest lag beyond the central peak with correlation ≥ 0.999, in x units.
    near_period: Option<f64>,
}

#[derive(Serialize)]
struct PatternReport {
    snapshots: Vec<SnapshotReport>,
    /// (i, j, normalized L2 distance).
    distances: Vec<(usize, usize, f64)>,
}

fn fmt_time(t: f64) -> String {
    if t.fract() == 0.0 && t.abs() < 1e15 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

pub fn run_pattern(p: &PatternConfig, sim: &Simulated, out: &mut Outputs) -> Result<(), Failure> {
    let err = stage_err("pattern");
    let n = p.wave_numbers.len();
    let columns = match (&p.plus_columns, &p.minus_columns) {
        (None, None) if sim.columns.len() == n => sim.columns.clone(),
        (None, None) => (0..n)
            .map(|j| ModeColumns {
                plus: Some(j),
                minus: None,
            })
            .collect(),
        (plus, minus) => (0..n)
            .map(|j| ModeColumns {
                plus: plus.as_ref().map(|c| c[j]),
                minus: minus.as_ref().map(|c| c[j]),
            })
            .collect(),
    };
    let weights = match &p.surface_weights {
        Some(w) => w.clone(),
        None if sim.weights.len() == n => sim.weights.clone(),
        None => vec![1.0; n],
    };
    let spec = PatternSpec {
        wave_numbers: p.wave_numbers.clone(),
        surface_weights: weights,
        x_extent: p.x_extent,
        x_samples: p.x_samples,
        gamma: p.gamma,
        columns,
    };
    spec.validate().map_err(&err)?;
    let traj = &sim.trajectory;
    let xs = spec.x_grid();
    let dx = xs[1] - xs[0];
    let mut snaps = Vec::new();
    let mut reports = Vec::new();
    for &t in &p.times {
        let tau = p.gamma * t;
        let index = traj.index_at(tau).ok_or_else(|| {
            Failure::Validation(format!(
                "pattern: t = {t} (tau = {tau}) lies outside the trajectory"
            ))
        })?;
        let u = reconstruct_surface(&spec, traj, index).map_err(&err)?;
        let mut csv = String::from("x,u\n");
        for (x, v) in xs.iter().zip(&u) {
            let _ = writeln!(csv, "{x:.16e},{v:.16e}");
        }
        out.write(&format!("pattern_t{}.csv", fmt_time(t)), csv)?;
        reports.push(SnapshotReport {
            t,
            tau,
            index,
            near_period: spatial_period(&u, 0.999).map(|l| l as f64 * dx),
        });
        snaps.push(u);
    }
    let mut distances = Vec::new();
    for i in 0..snaps.len() {
        for j in i + 1..snaps.len() {
            distances.push((i, j, normalized_l2_distance(&snaps[i], &snaps[j])));
        }
    }
    let (pgm, side) = to_pgm(&snaps).map_err(&err)?;
    out.write("patterns.pgm", pgm)?;
    out.write_json("patterns.pgm.json", &side)?;

    let last = traj.states.len() - 1;
    let rows = p.spacetime_rows.min(last + 1);
    let idx: Vec<usize> = (0..rows).map(|r| r * last / (rows - 1).max(1)).collect();
    let grid = space_time(&spec, traj, &idx).map_err(&err)?;
    let (pgm, side) = to_pgm(&grid).map_err(&err)?;
    out.write("spacetime.pgm", pgm)?;
    out.write_json("spacetime.pgm.json", &side)?;
    out.write_json(
        "pattern_report.json",
        &PatternReport {
            snapshots: reports,
            distances,
        },
    )
}

/// Parses a `t,X1,..,XN` table back into a trajectory.
pub fn read_trajectory(text: &str) -> Result<Trajectory, Failure> {
    let bad = |m: String| Failure::Validation(format!("trajectory: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let cols = header.split(',').count();
    if !header.starts_with("t,") || cols < 2 {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, line) in lines.enumerate() {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        if v.len() != cols {
            return Err(bad(format!(
                "row {} has {} fields, expected {cols}",
                i + 1,
                v.len()
            )));
        }
        times.push(v[0]);
        states.push(v[1..].to_vec());
    }
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(bad("need at least two rows with increasing times".into()));
    }
    let dt = times[1] - times[0];
    Ok(Trajectory {
        times,
        states,
        dt,
        record_every: 1,
        method: "file".into(),
        escaped: false,
    })
}

/// Every configured stage, in order, keeping partial outputs on failure.
pub fn run_pipeline(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    if let Some(s) = &cfg.spectrum {
        run_spectrum(cfg, s, out)?;
    }
    let designed = match &cfg.design {
        Some(d) => Some(run_design(cfg, d, out)?),
        None => None,
    };
    let normal_form = match &cfg.normal_form {
        Some(n) => {
            let (params, dbar) = match (&n.profile, &designed) {
                (Some(shape), _) => (
                    ProfileParams::new(shape.kappa, shape.d.clone())
                        .map_err(stage_err("normal_form"))?,
                    cfg.fluid.dbar,
                ),
                (None, Some(d)) => (d.params.clone(), d.result.dbar_c.value()),
                (None, None) => return Err(Failure::Validation("normal_form: no profile".into())),
            };
            Some(run_normal_form(cfg, n, &params, dbar, out)?)
        }
        None => None,
    };
    let embedding = match &cfg.embed {
        Some(e) => Some(run_embed(cfg, e, out)?),
        None => None,
    };
    let radius = cfg
        .embed
        .as_ref()
        .map_or(EmbedConfig::default().radius, |e| e.radius);
    let sim = match &cfg.simulate {
        Some(s) => Some(run_simulate(
            s,
            embedding.as_ref(),
            normal_form.as_ref(),
            radius,
            out,
        )?),
        None => None,
    };
    if let Some(p) = &cfg.pattern {
        let sim =
            sim.ok_or_else(|| Failure::Validation("pattern needs a simulate section".into()))?;
        run_pattern(p, &sim, out)?;
    }
    Ok(())
}
