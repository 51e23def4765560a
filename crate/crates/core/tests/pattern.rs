use std::f64::consts::PI;

use superbif::dynamics::*;
use superbif::normal_form::*;
use superbif::pattern::*;
use superbif::profile::*;
use superbif::spectral::*;
use superbif::Error;

fn constant_trajectory(states: Vec<Vec<f64>>) -> Trajectory {
    Trajectory {
        times: (0..states.len()).map(|i| i as f64).collect(),
        states,
        dt: 1.0,
        record_every: 1,
        method: "rk4".into(),
        escaped: false,
    }
}

fn basis(k_n: &[f64], quasiperiodic: bool) -> ModeBasis {
    let fluid = FluidParams::with_depth(1e3, 1.0, 1.6, 6.0).unwrap();
    let profile =
        TemperatureProfile::Designed(ProfileParams::new(0.05, vec![0.1, -0.1, 0.2]).unwrap());
    build_mode_basis(
        k_n,
        &fluid,
        &profile,
        &BasisOptions {
            grid_points: Some(1201),
            quasiperiodic,
            ..Default::default()
        },
    )
    .unwrap()
}

#[test]
fn single_mode_is_cosine() {
    let spec = PatternSpec::direct(vec![1.0], 1.0, 40.0, 401);
    let traj = constant_trajectory(vec![vec![1.0]]);
    let u = reconstruct_surface(&spec, &traj, 0).unwrap();
    for (x, v) in spec.x_grid().iter().zip(&u) {
        assert_eq!(*v, x.cos());
    }
}

#[test]
fn zero_amplitudes_zero_pattern() {
    let spec = PatternSpec::direct(vec![1.0, 2.1, 3.3], 0.05, 40.0, 101);
    let traj = constant_trajectory(vec![vec![0.0; 3]]);
    assert!(reconstruct_surface(&spec, &traj, 0)
        .unwrap()
        .iter()
        .all(|v| *v == 0.0));
}

#[test]
fn minus_amplitudes_give_sines() {
    let mut spec = PatternSpec::direct(vec![2.0], 0.5, 10.0, 51);
    spec.columns[0] = ModeColumns {
        plus: None,
        minus: Some(1),
    };
    spec.surface_weights[0] = 3.0;
    let traj = constant_trajectory(vec![vec![9.0, 2.0]]);
    let u = reconstruct_surface(&spec, &traj, 0).unwrap();
    for (x, v) in spec.x_grid().iter().zip(&u) {
        assert!((v - 3.0 * (2.0 * x).sin()).abs() < 1e-14);
    }
}

#[test]
fn surface_errors() {
    let spec = PatternSpec::direct(vec![1.0, 2.0], 1.0, 40.0, 101);
    let traj = constant_trajectory(vec![vec![1.0, 1.0]]);
    assert!(matches!(
        reconstruct_surface(&spec, &traj, 1),
        Err(Error::InvalidInput(_))
    ));
    let short = constant_trajectory(vec![vec![1.0]]);
    assert!(reconstruct_surface(&spec, &short, 0).is_err());
    let mut bad = spec.clone();
    bad.wave_numbers = vec![1.0, 1.0];
    assert!(bad.validate().is_err());
    bad.wave_numbers = vec![1.0, -2.0];
    assert!(bad.validate().is_err());
    bad = spec.clone();
    bad.x_samples = 1;
    assert!(bad.validate().is_err());
}

#[test]
fn single_mode_is_periodic() {
    for k in [1.0, 2.1, 3.3] {
        let spec = PatternSpec::direct(vec![k], 1.0, 40.0, 4001);
        let state = [0.7];
        let period = 2.0 * PI / k;
        for i in 0..50 {
            let x = i as f64 * 0.37;
            let a = spec.surface_at(&state, x).unwrap();
            let b = spec.surface_at(&state, x + period).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        let traj = constant_trajectory(vec![state.to_vec()]);
        let u = reconstruct_surface(&spec, &traj, 0).unwrap();
        let dx = 40.0 / 4000.0;
        let lag = spatial_period(&u, 0.999).expect("period found");
        assert!((lag as f64 * dx - period).abs() < 0.1 * period, "lag {lag}");
    }
}

#[test]
fn quasiperiodic_sum_has_no_period() {
    let spec = PatternSpec::direct(vec![1.0, 2.1, 3.3], 1.0, 40.0, 2001);
    let traj = constant_trajectory(vec![vec![1.0, 1.0, 1.0]]);
    let u = reconstruct_surface(&spec, &traj, 0).unwrap();
    assert_eq!(spatial_period(&u, 0.999), None);
    // integer wave numbers share the period 2π
    let spec = PatternSpec::direct(vec![1.0, 2.0, 3.0], 1.0, 40.0, 2001);
    let u = reconstruct_surface(&spec, &traj, 0).unwrap();
    assert!(spatial_period(&u, 0.999).is_some());
}

#[test]
fn lag_correlation_basics() {
    let u: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
    assert!((lag_correlation(&u, 0) - 1.0).abs() < 1e-12);
    let flat = vec![2.0; 10];
    assert_eq!(lag_correlation(&flat, 3), 1.0);
}

#[test]
fn distance_properties() {
    let a = [1.0, 2.0, 3.0];
    assert_eq!(normalized_l2_distance(&a, &a), 0.0);
    assert!((normalized_l2_distance(&a, &[0.0; 3]) - 1.0).abs() < 1e-15);
    assert!((normalized_l2_distance(&a, &[-1.0, -2.0, -3.0]) - 2.0).abs() < 1e-15);
    assert_eq!(normalized_l2_distance(&[0.0; 3], &[0.0; 3]), 0.0);
}

#[test]
fn lorenz_snapshots_differ() {
    let l = ReducedField::lorenz(10.0, 28.0, 8.0 / 3.0);
    let mut opts = IntegrateOptions::new(1e-3, 100.0);
    opts.record_every = 100;
    let traj = integrate(&l, &[1.0, 1.0, 1.0], &opts).unwrap();
    let spec = PatternSpec::direct(vec![1.0, 2.1, 3.3], 0.05, 40.0, 2001);
    let snaps: Vec<Vec<f64>> = [25.0, 50.0, 100.0]
        .iter()
        .map(|t| reconstruct_surface(&spec, &traj, traj.index_at(*t).unwrap()).unwrap())
        .collect();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        assert!(normalized_l2_distance(&snaps[a], &snaps[b]) > 0.1);
    }
    let again = reconstruct_surface(&spec, &traj, traj.index_at(50.0).unwrap()).unwrap();
    assert_eq!(again, snaps[1]);
}

#[test]
fn field_zero_and_boundaries() {
    let b = basis(&[1.0, 2.0], false);
    let xs: Vec<f64> = (0..17).map(|i| i as f64 * 0.4).collect();
    let ys = vec![0.0, 0.5, 1.0, b.h];
    let zero = reconstruct_field(&b, &[0.0; 4], 0.05, &xs, &ys).unwrap();
    assert!(zero.psi.iter().chain(&zero.u).flatten().all(|v| *v == 0.0));

    let g = reconstruct_field(&b, &[0.3, -1.2, 0.8, 0.1], 0.05, &xs, &ys).unwrap();
    assert!(g.psi[0].iter().all(|v| v.abs() < 1e-12));
    assert!(g.psi[3].iter().all(|v| v.abs() < 1e-12));
    assert!(g.u[1].iter().any(|v| v.abs() > 1e-6));
    assert!(reconstruct_field(&b, &[0.0; 3], 0.05, &xs, &ys).is_err());
}

#[test]
fn field_surface_row_matches_surface() {
    let b = basis(&[1.0, 2.1, 3.3], true);
    let x = [0.4, -0.3, 1.1, 0.2, 0.0, -0.7];
    let spec = PatternSpec {
        wave_numbers: b.k_n.clone(),
        surface_weights: b.modes.iter().map(|m| m.theta[0]).collect(),
        x_extent: 20.0,
        x_samples: 201,
        gamma: 0.05,
        columns: (0..3)
            .map(|j| ModeColumns {
                plus: Some(j),
                minus: Some(3 + j),
            })
            .collect(),
    };
    let traj = constant_trajectory(vec![x.to_vec()]);
    let surf = reconstruct_surface(&spec, &traj, 0).unwrap();
    let g = reconstruct_field(&b, &x, 0.05, &spec.x_grid(), &[0.0, 0.3]).unwrap();
    for (a, c) in g.u[0].iter().zip(&surf) {
        assert!((a - c).abs() < 1e-14 * (1.0 + c.abs()));
    }
}

#[test]
fn field_interpolation_hits_nodes() {
    let b = basis(&[1.0], false);
    let y = b.y[300];
    let g = reconstruct_field(&b, &[1.0, 0.0], 1.0, &[0.0, PI / 2.0], &[y]).unwrap();
    assert!((g.u[0][0] - b.modes[0].theta[300]).abs() < 1e-15);
    assert!((g.psi[0][1] - b.modes[0].psi[300]).abs() < 1e-15);
}

#[test]
fn pgm_mapping() {
    let grid = vec![vec![-1.0, 0.0], vec![0.5, 1.0]];
    let (text, side) = to_pgm(&grid).unwrap();
    assert_eq!(text, "P2\n2 2\n255\n0 128\n191 255\n");
    assert_eq!(
        side,
        PgmSidecar {
            min: -1.0,
            max: 1.0,
            rows: 2,
            cols: 2
        }
    );
    let (flat, _) = to_pgm(&[vec![3.0; 3]]).unwrap();
    assert!(flat.ends_with("0 0 0\n"));
    assert!(to_pgm(&[vec![1.0], vec![]]).is_err());
    assert!(to_pgm(&[vec![f64::NAN]]).is_err());
}
