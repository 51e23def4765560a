mod common;

use common::{brute_bracket, brute_pair, bump_component, close, desk_basis, resonant};

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use superbif::design::*;
use superbif::normal_form::*;
use superbif::profile::*;
use superbif::spectral::*;

fn critical_single() -> (FluidParams, TemperatureProfile) {
    let guess = ProfileParams::new(0.05, vec![0.1]).unwrap();
    let s = TemperatureProfile::Designed(guess)
        .limit_s(C::new(2.0, 0.0))
        .unwrap();
    let dbar = Dbar::from_value(1.0 + s.re);
    let (res, _) = design_profile(&[1], 0.05, dbar).unwrap();
    let fluid = FluidParams::asymptotic(1e3, 1.0, 1.0 / dbar.value()).unwrap();
    let refined = refine_design_exact(&res, &fluid, 10).unwrap();
    (
        fluid,
        TemperatureProfile::Designed(refined.params().unwrap()),
    )
}

#[test]
fn critical_mode_satisfies_adjoint_condition() {
    let (fluid, profile) = critical_single();
    let basis = build_mode_basis(&[1.0], &fluid, &profile, &BasisOptions::default()).unwrap();
    let m = &basis.modes[0];
    assert!(m.criticality < 1e-6, "{}", m.criticality);
    assert!(m.adjoint_bc < 2e-5, "{}", m.adjoint_bc);
}

#[test]
fn modes_satisfy_boundary_conditions_and_normalisation() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    for m in &basis.modes {
        assert_eq!(*m.omega.last().unwrap(), 0.0);
        assert_eq!(m.psi[0], 0.0);
        assert_eq!(*m.psi.last().unwrap(), 0.0);
        assert!((m.theta[0] - 1.0).abs() < 1e-14);
        assert_eq!(m.theta_y[0], 0.0);
        assert!(m.conj_omega[0] == 0.0 && *m.conj_omega.last().unwrap() == 0.0);
    }
}

#[test]
fn stream_samples_match_spectral_kernel() {
    let basis = desk_basis(&[2.0]);
    let fluid = FluidParams::with_depth(1e3, 1.0, 1.6, 6.0).unwrap();
    let kern = StreamKernel::new(WaveNumber::new(2.0).unwrap(), C::new(0.0, 0.0), &fluid).unwrap();
    let m = &basis.modes[0];
    for (i, &y) in basis.y.iter().enumerate().step_by(37) {
        assert!((m.psi[i] - m.amplitude * kern.eval(y).re).abs() < 1e-13);
    }
}

#[test]
fn gram_matrix_is_identity() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    for (r, row) in basis.gram.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let t = if r == c { 1.0 } else { 0.0 };
            assert!((v - t).abs() < 1e-8);
        }
    }
    // ⟨θ₁ cos x, θ̃₁ cos x⟩ alone plus the small vorticity pairing is one; check by brute force
    let n = basis.len();
    for i in 0..n {
        for j in 0..n {
            for (si, sj) in [
                (Sign::Plus, Sign::Plus),
                (Sign::Minus, Sign::Minus),
                (Sign::Plus, Sign::Minus),
            ] {
                let v = brute_pair(basis.theta(j, sj), basis.conj_theta(i, si), &basis.y)
                    + brute_pair(basis.omega(j, sj), basis.conj_omega(i, si), &basis.y);
                let t = if i == j && si == sj { 1.0 } else { 0.0 };
                assert!((v - t).abs() < 1e-8, "{i} {j} {si:?} {sj:?} {v}");
            }
        }
    }
}

#[test]
fn non_integer_wave_numbers_need_quasiperiodic_mode() {
    let fluid = FluidParams::with_depth(1e3, 1.0, 1.6, 6.0).unwrap();
    let profile = TemperatureProfile::Designed(ProfileParams::new(0.05, vec![0.1]).unwrap());
    let opts = BasisOptions {
        grid_points: Some(1201),
        ..Default::default()
    };
    assert!(build_mode_basis(&[1.0, 2.1], &fluid, &profile, &opts).is_err());
    let q = BasisOptions {
        quasiperiodic: true,
        ..opts
    };
    let basis = build_mode_basis(&[1.0, 2.1, 3.1], &fluid, &profile, &q).unwrap();
    let g = compute_g_tensor(&basis);
    // 3.1 = 1 + 2.1 is the only resonance family
    for i in 0..3 {
        for j in 0..3 {
            for l in 0..3 {
                let k = &basis.k_n;
                let res =
                    (k[i] - k[j] - k[l]).abs() < 1e-9 || (k[i] - (k[j] - k[l]).abs()).abs() < 1e-9;
                if !res {
                    assert_eq!(g.ppp.get(i, j, l), 0.0);
                }
            }
        }
    }
    assert!(g.ppp.get(2, 0, 1) != 0.0);
}

#[test]
fn bracket_selection_and_oracle() {
    let basis = desk_basis(&[1.0, 2.0, 3.0, 4.0]);
    let (p, w) = (Sign::Plus, &basis.weights);
    // (j, l, i) = (1, 2, 4): 4 ∉ {3, 1}
    assert_eq!(
        poisson_bracket_project(
            basis.psi(0, p),
            basis.theta(1, p),
            basis.conj_theta(3, p),
            w
        ),
        0.0
    );
    let v = poisson_bracket_project(
        basis.psi(0, p),
        basis.theta(1, p),
        basis.conj_theta(2, p),
        w,
    );
    assert!(v != 0.0);
    let brute = brute_bracket(
        basis.psi(0, p),
        basis.theta(1, p),
        basis.conj_theta(2, p),
        &basis.y,
    );
    assert!(close(v, brute, 1e-8), "{v} vs {brute}");
}

#[test]
fn bracket_is_antisymmetric() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    let w = &basis.weights;
    for (a, b, c) in [(0, 1, 2), (1, 0, 2), (0, 2, 1)] {
        for s in Sign::BOTH {
            let fa = basis.theta(a, s);
            let fb = basis.theta(b, Sign::Plus);
            let fc = basis.conj_theta(c, s);
            let ab = poisson_bracket_project(fa, fb, fc, w);
            let ba = poisson_bracket_project(fb, fa, fc, w);
            assert!((ab + ba).abs() <= 1e-15 * ab.abs().max(1e-300));
        }
    }
}

#[test]
fn g_tensor_sparsity_is_exact() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    let g = compute_g_tensor(&basis);
    let k = &basis.k_n;
    for i in 0..3 {
        for j in 0..3 {
            for l in 0..3 {
                for t in [&g.ppp, &g.mmp, &g.pmm] {
                    let v = t.get(i, j, l);
                    if resonant(k[i], k[j], k[l]) || resonant(k[i], k[l], k[j]) {
                        continue;
                    }
                    assert_eq!(v, 0.0, "({i},{j},{l})");
                }
                if resonant(k[i], k[j], k[l]) {
                    assert!(g.ppp.get(i, j, l) != 0.0, "({i},{j},{l})");
                }
            }
        }
    }
    assert!(g.dropped.is_finite());
}

#[test]
fn g_tensor_vanishes_without_resonant_triples() {
    let basis = desk_basis(&[1.0, 5.0]);
    let g = compute_g_tensor(&basis);
    assert!(g
        .ppp
        .data
        .iter()
        .chain(&g.mmp.data)
        .chain(&g.pmm.data)
        .all(|v| *v == 0.0));
}

#[test]
fn g_tensor_matches_brute_force_and_recomputation() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    let g = compute_g_tensor(&basis);
    let (p, m, w) = (Sign::Plus, Sign::Minus, &basis.weights);
    for i in 0..3 {
        for j in 0..3 {
            for l in 0..3 {
                let b1 = brute_bracket(
                    basis.psi(j, p),
                    basis.theta(l, p),
                    basis.conj_theta(i, p),
                    &basis.y,
                );
                let b2 = brute_bracket(
                    basis.psi(j, m),
                    basis.theta(l, m),
                    basis.conj_theta(i, p),
                    &basis.y,
                );
                let b3 = brute_bracket(
                    basis.psi(j, p),
                    basis.theta(l, m),
                    basis.conj_theta(i, m),
                    &basis.y,
                ) + brute_bracket(
                    basis.psi(l, m),
                    basis.theta(j, p),
                    basis.conj_theta(i, m),
                    &basis.y,
                );
                assert!(close(g.ppp.get(i, j, l), b1, 1e-7));
                assert!(close(g.mmp.get(i, j, l), b2, 1e-7));
                assert!(close(g.pmm.get(i, j, l), b3, 1e-7));
                let again = poisson_bracket_project(
                    basis.psi(j, p),
                    basis.theta(l, p),
                    basis.conj_theta(i, p),
                    w,
                );
                assert_eq!(again, g.ppp.get(i, j, l));
            }
        }
    }
}

fn sample_u1(basis: &ModeBasis, rng: &mut ChaCha8Rng) -> Inhomogeneity {
    let mut comps = Vec::new();
    for m in coupling_frequencies(&basis.k_n) {
        comps.push(bump_component(
            basis,
            m,
            Parity::Cos,
            rng.gen_range(1.2..2.5),
            rng.gen_range(-1.0..1.0),
        ));
        if m > 0.0 {
            comps.push(bump_component(
                basis,
                m,
                Parity::Sin,
                rng.gen_range(1.2..2.5),
                rng.gen_range(-1.0..1.0),
            ));
        }
    }
    Inhomogeneity::new(basis.y.clone(), 0.3, comps).unwrap()
}

#[test]
fn m_matrix_is_linear() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let zero = Inhomogeneity::zero(basis.y.clone(), 0.3);
    assert!(compute_m_matrix(&basis, &zero)
        .unwrap()
        .iter()
        .flatten()
        .all(|v| *v == 0.0));
    let u = sample_u1(&basis, &mut rng);
    let v = sample_u1(&basis, &mut rng);
    let mu = compute_m_matrix(&basis, &u).unwrap();
    let m2 = compute_m_matrix(&basis, &u.scaled(2.0)).unwrap();
    for (a, b) in mu.iter().flatten().zip(m2.iter().flatten()) {
        assert_eq!(2.0 * a, *b);
    }
    let mv = compute_m_matrix(&basis, &v).unwrap();
    let combo = u.scaled(0.3).sum(&v.scaled(-1.7)).unwrap();
    let mc = compute_m_matrix(&basis, &combo).unwrap();
    for ((a, b), c) in mu
        .iter()
        .flatten()
        .zip(mv.iter().flatten())
        .zip(mc.iter().flatten())
    {
        assert!((0.3 * a - 1.7 * b - c).abs() < 1e-13 * (a.abs() + b.abs()).max(1.0));
    }
}

#[test]
fn single_component_m_matches_oracle_and_selection() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    let n = basis.len();
    for (m, parity) in [(1.0, Parity::Cos), (4.0, Parity::Sin), (0.0, Parity::Cos)] {
        let u = Inhomogeneity::new(
            basis.y.clone(),
            0.3,
            vec![bump_component(&basis, m, parity, 1.5, 1.0)],
        )
        .unwrap();
        let mm = compute_m_matrix(&basis, &u).unwrap();
        let uf = FieldRef {
            value: &u.components[0].profile,
            dy: &u.components[0].profile,
            trig: match parity {
                Parity::Cos => Trig::cos(m),
                Parity::Sin => Trig::sin(m),
            },
        };
        for (si, sj) in [
            (Sign::Plus, Sign::Plus),
            (Sign::Plus, Sign::Minus),
            (Sign::Minus, Sign::Plus),
            (Sign::Minus, Sign::Minus),
        ] {
            for i in 0..n {
                for j in 0..n {
                    let r = if si == Sign::Plus { i } else { n + i };
                    let c = if sj == Sign::Plus { j } else { n + j };
                    let v = mm[r][c];
                    let ki = basis.k_n[i];
                    let kj = basis.k_n[j];
                    if ki + kj != m && (ki - kj).abs() != m {
                        assert_eq!(v, 0.0);
                    }
                    let brute =
                        brute_bracket(basis.psi(j, sj), basis.conj_theta(i, si), uf, &basis.y);
                    assert!(close(v, brute, 1e-8), "m={m} ({r},{c}) {v} vs {brute}");
                }
            }
        }
    }
}

#[test]
fn inverse_design_round_trips() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    let n = basis.len();
    let zero = vec![vec![0.0; 2 * n]; 2 * n];
    let inv = invert_m_design(&basis, &zero, 0.3, &InverseOptions::default()).unwrap();
    assert!(inv.u1.components.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let target = compute_m_matrix(&basis, &sample_u1(&basis, &mut rng)).unwrap();
    let inv = invert_m_design(&basis, &target, 0.3, &InverseOptions::default()).unwrap();
    let scale = target.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    for (a, b) in inv.achieved.iter().flatten().zip(target.iter().flatten()) {
        assert!((a - b).abs() < 1e-9 * scale.max(1.0));
    }
    assert!(inv.flagged.is_empty());
    // M^{+-}_ii = M^{-+}_ii for every u1, one lost direction per mode
    assert_eq!(inv.rank, 4 * n * n - n);
    for c in &inv.u1.components {
        for (y, v) in basis.y.iter().zip(&c.profile) {
            if *y < 0.4 {
                assert_eq!(*v, 0.0);
            }
        }
    }
}

#[test]
fn targets_are_reachable_up_to_the_diagonal_constraint() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    let n = basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let target: Vec<Vec<f64>> = (0..2 * n)
        .map(|_| (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let inv = invert_m_design(&basis, &target, 0.3, &InverseOptions::default()).unwrap();
    // only the antisymmetric part of the diagonal +- / -+ entries is out of reach
    let lost = (0..n)
        .map(|i| (target[i][n + i] - target[n + i][i]).powi(2) / 2.0)
        .sum::<f64>()
        .sqrt();
    assert!(
        (inv.residual - lost).abs() < 1e-9,
        "{} vs {lost}",
        inv.residual
    );
    for i in 0..n {
        assert!((inv.achieved[i][n + i] - inv.achieved[n + i][i]).abs() < 1e-12);
    }
}

#[test]
fn inadmissible_entry_is_flagged() {
    let basis = desk_basis(&[1.0, 5.0]);
    let mut target = vec![vec![0.0; 4]; 4];
    target[0][1] = 0.7;
    let opts = InverseOptions {
        frequencies: Some(vec![0.0, 2.0, 10.0]),
        ..Default::default()
    };
    let inv = invert_m_design(&basis, &target, 0.3, &opts).unwrap();
    assert_eq!(inv.flagged, vec![(0, 1)]);
    assert!((inv.residual - 0.7).abs() < 1e-12);
}

#[test]
fn forcing_projection() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    let zero = Inhomogeneity::zero(basis.y.clone(), 0.3);
    assert!(compute_f(&basis, &zero).unwrap().iter().all(|v| *v == 0.0));
    let eta = Inhomogeneity::new(
        basis.y.clone(),
        0.3,
        vec![bump_component(&basis, 2.0, Parity::Cos, 1.5, 1.0)],
    )
    .unwrap();
    let f = compute_f(&basis, &eta).unwrap();
    for (r, v) in f.iter().enumerate() {
        if r == 1 {
            let uf = FieldRef {
                value: &eta.components[0].profile,
                dy: &eta.components[0].profile,
                trig: Trig::cos(2.0),
            };
            let brute = brute_pair(uf, basis.conj_theta(1, Sign::Plus), &basis.y);
            assert!(*v != 0.0 && close(*v, brute, 1e-8));
        } else {
            assert_eq!(*v, 0.0);
        }
    }
}

fn random_form(basis: &ModeBasis, gamma: f64, seed: u64) -> QuadraticNormalForm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = sample_u1(basis, &mut rng);
    let eta = Inhomogeneity::new(
        basis.y.clone(),
        0.3,
        vec![
            bump_component(basis, basis.k_n[0], Parity::Cos, 1.5, 0.5),
            bump_component(basis, basis.k_n[1], Parity::Sin, 1.5, -0.3),
        ],
    )
    .unwrap();
    assemble_normal_form(basis, &u, &eta, gamma).unwrap()
}

#[test]
fn assembled_rhs_basic_properties() {
    let basis = desk_basis(&[1.0, 2.0]);
    let zero = Inhomogeneity::zero(basis.y.clone(), 0.3);
    let nf0 = assemble_normal_form(&basis, &zero, &zero, 0.05).unwrap();
    assert!(nf0.rhs(&[0.0; 5]).unwrap().iter().all(|v| *v == 0.0));
    let nf = random_form(&basis, 0.05, 1);
    let nf2 = QuadraticNormalForm {
        gamma: 0.1,
        ..nf.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a = nf.rhs(&x).unwrap();
        let b = nf2.rhs(&x).unwrap();
        assert_eq!(a[0], 0.0);
        for (p, q) in a.iter().zip(&b) {
            assert!((2.0 * p - q).abs() <= 1e-15 * q.abs());
        }
    }
}

#[test]
fn rhs_matches_hand_expansion_for_two_modes() {
    let basis = desk_basis(&[1.0, 2.0]);
    let nf = random_form(&basis, 0.05, 4);
    let (g, m, f) = (&nf.g, &nf.m, &nf.f);
    let x = [0.3, 0.7, -1.1, 0.4, 0.9];
    let (p1, p2, m1, m2) = (x[1], x[2], x[3], x[4]);
    let gp = |i| {
        g.ppp.get(i, 0, 0) * p1 * p1
            + g.ppp.get(i, 0, 1) * p1 * p2
            + g.ppp.get(i, 1, 0) * p2 * p1
            + g.ppp.get(i, 1, 1) * p2 * p2
            + g.mmp.get(i, 0, 0) * m1 * m1
            + g.mmp.get(i, 0, 1) * m1 * m2
            + g.mmp.get(i, 1, 0) * m2 * m1
            + g.mmp.get(i, 1, 1) * m2 * m2
    };
    let gm = |i| {
        g.pmm.get(i, 0, 0) * p1 * m1
            + g.pmm.get(i, 0, 1) * p1 * m2
            + g.pmm.get(i, 1, 0) * p2 * m1
            + g.pmm.get(i, 1, 1) * p2 * m2
    };
    let lin = |r: usize| m[r][0] * p1 + m[r][1] * p2 + m[r][2] * m1 + m[r][3] * m2;
    let expect = [
        0.0,
        0.05 * (gp(0) + lin(0) + f[0]),
        0.05 * (gp(1) + lin(1) + f[1]),
        0.05 * (gm(0) + lin(2) + f[2]),
        0.05 * (gm(1) + lin(3) + f[3]),
    ];
    let got = nf.rhs(&x).unwrap();
    for (a, b) in got.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-14 * b.abs().max(1.0));
    }
}

#[test]
fn normal_form_json_round_trip() {
    let basis = desk_basis(&[1.0, 2.0, 3.0]);
    let nf = random_form(&basis, 0.05, 9);
    let text = nf.to_json().unwrap();
    let back = QuadraticNormalForm::from_json(&text).unwrap();
    assert_eq!(back, nf);
    assert_eq!(nf.to_document().g.len(), 3 * 27);
    assert!(
        QuadraticNormalForm::from_json(&text.replacen("\"gamma\"", "\"gamma_typo\"", 1)).is_err()
    );
}
