//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use superbif::design::*;
use superbif::dynamics::*;
use superbif::normal_form::*;
use superbif::pattern::*;
use superbif::profile::*;
use superbif::spectral::*;

use common::{brute_bracket, brute_pair, bump_component, close, desk_basis, resonant};

const SIGMA: f64 = 10.0;
const RHO: f64 = 28.0;
const BETA: f64 = 8.0 / 3.0;

/// What a criterion found: pass/fail plus a one-line summary.
struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn run(id: &str, budget_s: f64, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Outcome::new(false, format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let in_time = secs < budget_s;
    let pass = out.pass && in_time;
    let timing = if in_time {
        format!("{secs:.2}s")
    } else {
        format!("{secs:.2}s, over the {budget_s}s budget")
    };
    println!(
        "criterion {id}: {} [{timing}] {}",
        if pass { "PASS" } else { "FAIL" },
        out.detail
    );
    pass
}

fn step_spectrum() -> Outcome {
    let z0 = 0.0008;
    let fluid = FluidParams::asymptotic(1e6, 1.0, 1.0).unwrap();
    let ks: Vec<WaveNumber> = (1..=6)
        .map(|k| WaveNumber::new(k as f64).unwrap())
        .collect();
    let rows = spectrum_scan(
        &ks,
        &fluid,
        &TemperatureProfile::Step { z0 },
        Mode::Limit,
        C::new(0.0, 0.0),
    );
    let mut problems = Vec::new();
    let mut lams = Vec::new();
    let mut worst_res: f64 = 0.0;
    for row in &rows {
        let Some(ev) = &row.eigen else {
            problems.push(format!("k={} unsolved: {:?}", row.k, row.error));
            continue;
        };
        let k = row.k;
        let p = ev.p.re;
        let res = ((-p * z0).exp() - (p / k - 1.0)).abs();
        worst_res = worst_res.max(res);
        if res >= 1e-12 || ev.p.im != 0.0 && ev.p.im.abs() > 1e-12 {
            problems.push(format!("k={k} residual {res:.2e}"));
        }
        let lam = ev.lambda.re;
        if !(lam < 0.0) {
            problems.push(format!("k={k} lambda {lam:.3e} not negative"));
        }
        if k <= 3.0 {
            let first = -4.0 * k.powi(3) * z0;
            if ((lam - first) / first).abs() > 0.2 {
                problems.push(format!("k={k} lambda {lam:.4e} vs first order {first:.4e}"));
            }
        }
        lams.push(lam);
    }
    if !lams.windows(2).all(|w| w[1].abs() > w[0].abs()) {
        problems.push(format!("|lambda| not increasing: {lams:?}"));
    }
    let detail = format!(
        "lambda(1..6) = [{}], max residual {worst_res:.1e}",
        lams.iter()
            .map(|l| format!("{l:.4e}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    finish(problems, detail)
}

fn designed_criticality() -> Outcome {
    let k_n = [1, 2, 3, 5];
    let (res, _) = match design_profile(&k_n, 0.05, Dbar::ONE) {
        Ok(r) => r,
        Err(e) => {
            return Outcome::new(
                false,
                format!("design_profile(K_N = {{1,2,3,5}}, kappa = 0.05) failed: {e}"),
            )
        }
    };
    let mut problems = Vec::new();
    if res.d.iter().any(|d| d.abs() >= 0.5) {
        problems.push(format!("|d_j| >= 1/2: {:?}", res.d));
    }
    let params = res.params().unwrap();
    let fluid = FluidParams::asymptotic(1e6, 1.0, 1.0).unwrap();
    let report = verify_design(&params, &k_n, Dbar::ONE, &fluid, 1e-9).unwrap();
    for row in &report.rows {
        let kk = row.k as f64;
        if row.selected {
            if row.lambda_bc.abs() >= 1e-9 * kk * kk {
                problems.push(format!(
                    "k={} |lambda(b_c)| = {:.2e}",
                    row.k,
                    row.lambda_bc.abs()
                ));
            }
            if !(row.lambda_b1 < 0.0 && row.lambda_b2 > 0.0) {
                problems.push(format!("k={} no sign change", row.k));
            }
        } else if [4, 6, 7, 8].contains(&row.k) && !(row.lambda_bc < -1e-3) {
            problems.push(format!("k={} lambda(b_c) = {:.3e}", row.k, row.lambda_bc));
        }
    }
    finish(problems, format!("d = {:?}, gap {:.3e}", res.d, report.gap))
}

fn transform_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = rng.gen_range(1.0..12.0);
        let m = rng.gen_range(1..=5);
        let d: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.49..0.49)).collect();
        let closed = transform_g(C::new(p, 0.0), &d).re;
        let b = polynomial_coefficients(&d);
        let upper = (60.0 + 10.0 * b.len() as f64) / p;
        let quad = common::simpson(
            |y| y * eval_polynomial(&b, y) * (-p * y).exp(),
            0.0,
            upper,
            400_000,
        );
        worst = worst.max(((closed - quad) / closed).abs());
    }
    Outcome::new(
        worst < 1e-8,
        format!("20 points, worst relative difference {worst:.2e}"),
    )
}

fn normal_form_oracle() -> Outcome {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    let n = basis.len();
    let k = basis.k_n.clone();
    let (p, m) = (Sign::Plus, Sign::Minus);
    let mut problems = Vec::new();
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    let mut check = |what: String, v: f64, brute: f64, problems: &mut Vec<String>| {
        worst = worst.max((v - brute).abs() / v.abs().max(brute.abs()).max(1.0));
        if !close(v, brute, 1e-7) {
            problems.push(format!("{what}: {v:.6e} vs {brute:.6e}"));
        }
    };

    let g = compute_g_tensor(&basis);
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let b = [
                    brute_bracket(
                        basis.psi(j, p),
                        basis.theta(l, p),
                        basis.conj_theta(i, p),
                        &basis.y,
                    ),
                    brute_bracket(
                        basis.psi(j, m),
                        basis.theta(l, m),
                        basis.conj_theta(i, p),
                        &basis.y,
                    ),
                    brute_bracket(
                        basis.psi(j, p),
                        basis.theta(l, m),
                        basis.conj_theta(i, m),
                        &basis.y,
                    ) + brute_bracket(
                        basis.psi(l, m),
                        basis.theta(j, p),
                        basis.conj_theta(i, m),
                        &basis.y,
                    ),
                ];
                let structural = !(resonant(k[i], k[j], k[l]) || resonant(k[i], k[l], k[j]));
                for (name, t, brute) in [
                    ("ppp", &g.ppp, b[0]),
                    ("mmp", &g.mmp, b[1]),
                    ("pmm", &g.pmm, b[2]),
                ] {
                    let v = t.get(i, j, l);
                    if structural && v != 0.0 {
                        problems.push(format!(
                            "G {name}({i},{j},{l}) = {v:e} should be exactly zero"
                        ));
                    }
                    if v != 0.0 {
                        nonzero += 1;
                    }
                    check(format!("G {name}({i},{j},{l})"), v, brute, &mut problems);
                }
            }
        }
    }

    let row = |s: Sign, i: usize| if s == Sign::Plus { i } else { n + i };
    let freqs = coupling_frequencies(&k);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut comps = Vec::new();
    for &f in &freqs {
        comps.push(bump_component(
            &basis,
            f,
            Parity::Cos,
            rng.gen_range(1.2..2.5),
            rng.gen_range(-1.0..1.0),
        ));
        if f > 0.0 {
            comps.push(bump_component(
                &basis,
                f,
                Parity::Sin,
                rng.gen_range(1.2..2.5),
                rng.gen_range(-1.0..1.0),
            ));
        }
    }

    // M for a generic u1 against the oracle; sparsity from one component at a time.
    let u1 = Inhomogeneity::new(basis.y.clone(), 0.3, comps.clone()).unwrap();
    let mm = compute_m_matrix(&basis, &u1).unwrap();
    let f_all = compute_f(&basis, &u1).unwrap();
    for si in Sign::BOTH {
        for i in 0..n {
            for sj in Sign::BOTH {
                for j in 0..n {
                    let brute: f64 = comps
                        .iter()
                        .map(|c| {
                            brute_bracket(
                                basis.psi(j, sj),
                                basis.conj_theta(i, si),
                                field(c),
                                &basis.y,
                            )
                        })
                        .sum();
                    check(
                        format!("M({},{})", row(si, i), row(sj, j)),
                        mm[row(si, i)][row(sj, j)],
                        brute,
                        &mut problems,
                    );
                }
            }
            let brute: f64 = comps
                .iter()
                .map(|c| brute_pair(field(c), basis.conj_theta(i, si), &basis.y))
                .sum();
            check(
                format!("f({})", row(si, i)),
                f_all[row(si, i)],
                brute,
                &mut problems,
            );
        }
    }
    for c in &comps {
        let single = Inhomogeneity::new(basis.y.clone(), 0.3, vec![c.clone()]).unwrap();
        let mm = compute_m_matrix(&basis, &single).unwrap();
        let f = compute_f(&basis, &single).unwrap();
        for si in Sign::BOTH {
            for i in 0..n {
                for sj in Sign::BOTH {
                    for j in 0..n {
                        let v = mm[row(si, i)][row(sj, j)];
                        if k[i] + k[j] != c.m && (k[i] - k[j]).abs() != c.m && v != 0.0 {
                            problems.push(format!(
                                "M({},{}) = {v:e} with m = {} should be exactly zero",
                                row(si, i),
                                row(sj, j),
                                c.m
                            ));
                        }
                        nonzero += usize::from(v != 0.0);
                    }
                }
                let v = f[row(si, i)];
                if k[i] != c.m && v != 0.0 {
                    problems.push(format!(
                        "f({}) = {v:e} with m = {} should be exactly zero",
                        row(si, i),
                        c.m
                    ));
                }
                nonzero += usize::from(v != 0.0);
            }
        }
    }
    problems.truncate(5);
    finish(
        problems,
        format!("{nonzero} nonzero entries checked, worst difference {worst:.2e}"),
    )
}

fn field(c: &FourierComponent) -> FieldRef<'_> {
    FieldRef {
        value: &c.profile,
        dy: &c.profile,
        trig: match c.parity {
            Parity::Cos => Trig::cos(c.m),
            Parity::Sin => Trig::sin(c.m),
        },
    }
}

fn lorenz_realization() -> Outcome {
    let lorenz = ReducedField::lorenz(SIGMA, RHO, BETA);
    let radius = 60.0;
    let mut problems = Vec::new();
    let mut notes = Vec::new();

    // (a) rhs gap in Lorenz units
    let xis = [0.02, 0.01, 0.005];
    let pts = sample_ball(3, radius, 100, 17);
    let scaled: Vec<ScaledEmbedding> = xis
        .iter()
        .map(|&xi| ScaledEmbedding::new(&lorenz, xi, radius, 7).unwrap())
        .collect();
    if scaled[1].embedding.n() != 9 || scaled[1].embedding.p() != 3 {
        problems.push(format!(
            "embedding has p = {}, N = {}",
            scaled[1].embedding.p(),
            scaled[1].embedding.n()
        ));
    }
    let gaps: Vec<f64> = scaled
        .iter()
        .map(|s| s.lambda * s.embedding.rhs_gap(&pts))
        .collect();
    let c0 = gaps[1] / 0.01f64.sqrt();
    let ratios: Vec<f64> = gaps
        .iter()
        .zip(xis)
        .map(|(g, xi)| g / xi.sqrt() / c0)
        .collect();
    if ratios.iter().any(|r| (r - 1.0).abs() > 0.5) {
        problems.push(format!("(a) gap/sqrt(xi) ratios {ratios:.3?}"));
    }
    notes.push(format!("(a) c0 = {c0:.3}, ratios {ratios:.3?}"));

    // (b) deviation from the slow manifold over ξ²
    let mut fitted = Vec::new();
    for (s, xi) in scaled.iter().zip(xis) {
        let e = &s.embedding;
        let mut x0 = vec![1.0, 1.0, 1.0];
        x0.extend(e.slow_manifold(&[1.0, 1.0, 1.0]));
        let mut opts = IntegrateOptions::new(0.2 * xi, 200.0);
        opts.record_every = 5;
        let traj = integrate(&e.system, &x0, &opts).unwrap();
        if traj.escaped {
            problems.push(format!("(b) trajectory escaped at xi = {xi}"));
        }
        let dev = manifold_deviation(&traj, e);
        let skip = traj.index_at(10.0).unwrap();
        fitted.push(dev[skip..].iter().cloned().fold(0.0, f64::max) / (xi * xi));
    }
    let mean = fitted.iter().sum::<f64>() / fitted.len() as f64;
    if fitted.iter().any(|c| (c / mean - 1.0).abs() > 0.5) {
        problems.push(format!("(b) deviation/xi^2 {fitted:.3?}"));
    }
    notes.push(format!("(b) deviation/xi^2 {fitted:.3?}"));

    // (c) Lyapunov exponents
    let le_opts = |dt| LyapunovOptions {
        dt,
        transient: 20.0,
        t_total: 200.0,
        renorm: 0.1,
    };
    let reference = lyapunov_exponent(&lorenz, &[1.0, 1.0, 1.0], &le_opts(1e-4)).unwrap();
    let embedded = scaled[1]
        .lyapunov(&[1.0, 1.0, 1.0], &le_opts(0.2 * xis[1]))
        .unwrap();
    if !(embedded > 0.0 && (embedded - reference).abs() <= 0.15) {
        problems.push(format!(
            "(c) exponent {embedded:.3} vs reference {reference:.3}"
        ));
    }
    notes.push(format!("(c) exponent {embedded:.3}, direct {reference:.3}"));

    // (d) equilibria
    let e = &scaled[1].embedding;
    let mut worst: f64 = 0.0;
    for eq in lorenz_equilibria(RHO, BETA) {
        let mut guess = e.lift(&[eq[0] + 0.5, eq[1] - 0.5, eq[2] + 0.5]);
        for v in guess[3..].iter_mut() {
            *v *= 1.01;
        }
        match find_equilibrium(&e.system, &guess, 1e-10, 50) {
            Ok(x) => {
                let d = x[..3]
                    .iter()
                    .zip(eq)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(d);
            }
            Err(err) => problems.push(format!("(d) no equilibrium near {eq:?}: {err}")),
        }
    }
    if worst > xis[1] {
        problems.push(format!("(d) equilibria off by {worst:.2e}"));
    }
    notes.push(format!("(d) equilibria within {worst:.1e}"));
    finish(problems, notes.join("; "))
}

fn pattern_reproduction() -> Outcome {
    let gamma = 0.05;
    let lorenz = ReducedField::lorenz(SIGMA, RHO, BETA);
    let mut opts = IntegrateOptions::new(1e-3, 150.0);
    opts.record_every = 10;
    let traj = integrate(&lorenz, &[1.0, 1.0, 1.0], &opts).unwrap();
    let spec = PatternSpec::direct(vec![1.0, 2.1, 3.3], gamma, 40.0, 2001);
    let dx = 40.0 / 2000.0;
    let mut problems = Vec::new();
    let mut notes = Vec::new();
    let times = [1000.0, 2000.0, 3000.0];
    let mut snaps = Vec::new();
    for t in times {
        let u = reconstruct_surface(&spec, &traj, traj.index_at(gamma * t).unwrap()).unwrap();
        if let Some(lag) = spatial_period(&u, 0.999) {
            problems.push(format!(
                "(a) t = {t}: period {:.3} (correlation {:.5})",
                lag as f64 * dx,
                lag_correlation(&u, lag)
            ));
        }
        snaps.push(u);
    }
    let mut dists = Vec::new();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let d = normalized_l2_distance(&snaps[a], &snaps[b]);
        if !(d > 0.1) {
            problems.push(format!(
                "(b) distance t{} vs t{} = {d:.3}",
                times[a], times[b]
            ));
        }
        dists.push(d);
    }
    notes.push(format!("distances {dists:.3?}"));

    for k in [1.0, 2.1, 3.3] {
        let single = PatternSpec::direct(vec![k], gamma, 40.0, 2001);
        let state = [0.7, -0.4, 1.3];
        let period = 2.0 * PI / k;
        let shift = (0..50)
            .map(|i| {
                let x = i as f64 * 0.37;
                (single.surface_at(&state, x + period).unwrap()
                    - single.surface_at(&state, x).unwrap())
                .abs()
            })
            .fold(0.0, f64::max);
        let u: Vec<f64> = single
            .x_grid()
            .iter()
            .map(|&x| single.surface_at(&state, x).unwrap())
            .collect();
        // the threshold is crossed just before the correlation peak; compare the peak
        let found = spatial_period(&u, 0.999).map(|mut l| {
            while lag_correlation(&u, l + 1) > lag_correlation(&u, l) {
                l += 1;
            }
            l as f64 * dx
        });
        if shift > 1e-12 || found.is_none_or(|p| (p - period).abs() > dx) {
            problems.push(format!(
                "single mode k = {k}: shift error {shift:.1e}, detected period {found:?}"
            ));
        }
    }
    notes.push("single modes 2pi/k-periodic".into());
    finish(problems, notes.join("; "))
}

fn integrator() -> Outcome {
    let mut problems = Vec::new();
    let decay = QuadraticSystem::new(1, vec![0.0], vec![-1.0], vec![0.0], 10.0).unwrap();
    let err = |dt: f64| {
        let t = integrate(&decay, &[1.0], &IntegrateOptions::new(dt, 1.0)).unwrap();
        (t.last()[0] - (-1.0f64).exp()).abs()
    };
    let ratio = err(0.1) / err(0.05);
    if !(12.0..=20.0).contains(&ratio) {
        problems.push(format!("error ratio {ratio:.2}"));
    }
    let lorenz = ReducedField::lorenz(SIGMA, RHO, BETA);
    let opts = IntegrateOptions::new(1e-3, 20.0);
    let a = integrate(&lorenz, &[1.0, 1.0, 1.0], &opts).unwrap();
    let b = integrate(&lorenz, &[1.0, 1.0, 1.0], &opts).unwrap();
    let e = ScaledEmbedding::new(&lorenz, 0.02, 60.0, 7).unwrap();
    let x0 = e.embedding.lift(&[1.0, 1.0, 1.0]);
    let eo = IntegrateOptions::new(4e-3, 50.0);
    let c = integrate(&e.embedding.system, &x0, &eo).unwrap();
    let d = integrate(&e.embedding.system, &x0, &eo).unwrap();
    let identical = a.to_csv() == b.to_csv() && a == b && c.to_csv() == d.to_csv() && c == d;
    if !identical {
        problems.push("reruns differ".into());
    }
    finish(
        problems,
        format!("error ratio {ratio:.2}, reruns bit-identical: {identical}"),
    )
}

fn finish(problems: Vec<String>, detail: String) -> Outcome {
    if problems.is_empty() {
        Outcome::new(true, detail)
    } else {
        Outcome::new(false, format!("{detail} | {}", problems.join("; ")))
    }
}

fn main() {
    let results = [
        run("1 (step spectrum)", 1.0, step_spectrum),
        run(
            "2 (designed multi-mode criticality)",
            10.0,
            designed_criticality,
        ),
        run("3 (transform identity)", f64::INFINITY, transform_identity),
        run(
            "4 (normal-form coefficients)",
            f64::INFINITY,
            normal_form_oracle,
        ),
        run("5 (Lorenz realization)", 60.0, lorenz_realization),
        run("6 (pattern reproduction)", 5.0, pattern_reproduction),
        run(
            "7 (integrator order, determinism)",
            f64::INFINITY,
            integrator,
        ),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
