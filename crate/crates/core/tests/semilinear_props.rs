//! Window policy, blow-up detection and energy behaviour of the semilinear solver.

use std::sync::Arc;

use fracwave_core::semilinear_solver::{solve_semilinear, Nonlinearity, SemilinearConfig, SolveOutcome, SolveStatus};
use fracwave_core::{GridFunction, SpectralGrid};
use proptest::prelude::*;

fn single(m: f64, u0: f64) -> (Arc<SpectralGrid>, GridFunction, GridFunction) {
    let g = Arc::new(SpectralGrid::single_mode(m).unwrap());
    let a = GridFunction::new(&g, vec![u0]).unwrap();
    let b = GridFunction::zeros(&g);
    (g, a, b)
}

fn blowup_time(out: &SolveOutcome) -> f64 {
    match out.status {
        SolveStatus::BlowupSuspected { t_max_estimate, .. } => t_max_estimate,
        ref s => panic!("expected blow-up, got {s:?}"),
    }
}

#[test]
fn quadratic_blowup_time_is_stable_under_refinement() {
    let (g, u0, u1) = single(1.0, 50.0);
    let nl = Nonlinearity::monomial(1.0, 2).unwrap();
    let coarse = SemilinearConfig {
        n_sub: 16,
        ..SemilinearConfig::default()
    };
    let fine = SemilinearConfig {
        n_sub: 64,
        ..SemilinearConfig::default()
    };
    let t1 = blowup_time(&solve_semilinear(&g, 1.5, &u0, &u1, &nl, 1.0, &coarse).unwrap());
    let t2 = blowup_time(&solve_semilinear(&g, 1.5, &u0, &u1, &nl, 1.0, &fine).unwrap());
    assert!(t1 > 0.0 && t1 < 1.0);
    assert!((t1 - t2).abs() <= 0.1 * t2, "{t1} vs {t2}");
}

#[test]
fn cubic_damping_stays_global_with_bounded_energy() {
    let (g, u0, u1) = single(1.0, 1.0);
    let nl = Nonlinearity::monomial(-1.0, 3).unwrap();
    let out = solve_semilinear(&g, 1.5, &u0, &u1, &nl, 2.0, &SemilinearConfig::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Global);
    assert_eq!(*out.trajectory.times.last().unwrap(), 2.0);
    let e0 = out.energy[0].e_weak;
    assert!(out.energy.iter().all(|e| e.e_weak.is_finite() && e.e_weak <= 10.0 * e0));
    assert!(out.energy.iter().all(|e| e.e_strong.is_some_and(f64::is_finite)));
}

#[test]
fn accepted_windows_are_fixed_points() {
    let grid = Arc::new(SpectralGrid::harmonic_oscillator(4).unwrap());
    let u0 = GridFunction::new(&grid, vec![0.8, -0.3, 0.2, 0.1]).unwrap();
    let u1 = GridFunction::new(&grid, vec![0.0, 0.5, 0.0, 0.0]).unwrap();
    let cfg = SemilinearConfig::default();
    let out = solve_semilinear(&grid, 1.7, &u0, &u1, &Nonlinearity::sine(1.0), 1.0, &cfg).unwrap();
    assert_eq!(out.status, SolveStatus::Global);
    for w in out.accepted_windows() {
        assert!(w.fixed_point_residual.unwrap() <= 2.0 * cfg.tol_fix);
        assert!(w.contraction < 1.0);
    }
    let again = solve_semilinear(&grid, 1.7, &u0, &u1, &Nonlinearity::sine(1.0), 1.0, &cfg).unwrap();
    assert_eq!(out.trajectory.times, again.trajectory.times);
    assert_eq!(out.trajectory.u, again.trajectory.u);
}

#[test]
fn shifting_operator_and_nonlinearity_together_is_invisible() {
    let grid = Arc::new(SpectralGrid::harmonic_oscillator(3).unwrap());
    let u0 = GridFunction::new(&grid, vec![0.5, 0.25, -0.1]).unwrap();
    let u1 = GridFunction::zeros(&grid);
    let nl = Nonlinearity::monomial(-1.0, 3).unwrap();
    let cfg = SemilinearConfig {
        tau0: Some(0.05),
        ..SemilinearConfig::default()
    };
    let plain = solve_semilinear(&grid, 1.5, &u0, &u1, &nl, 0.5, &cfg).unwrap();
    let shifted_cfg = SemilinearConfig {
        shift: Some(2.0),
        ..cfg
    };
    let shifted = solve_semilinear(&grid, 1.5, &u0, &u1, &nl, 0.5, &shifted_cfg).unwrap();
    assert_eq!(plain.trajectory.times, shifted.trajectory.times);
    for (a, b) in plain.trajectory.u.iter().zip(&shifted.trajectory.u) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-5, "{x} vs {y}");
        }
    }
}

#[test]
fn physical_space_mode_runs_on_dirichlet_grid() {
    let grid = Arc::new(SpectralGrid::dirichlet_laplacian(1.0, 8).unwrap());
    let mut v = vec![0.0; 8];
    v[0] = 1.0;
    let u0 = GridFunction::new(&grid, v).unwrap();
    let u1 = GridFunction::zeros(&grid);
    let cfg = SemilinearConfig {
        physical_points: Some(64),
        physical_length: Some(1.0),
        n_sub: 16,
        ..SemilinearConfig::default()
    };
    let out = solve_semilinear(
        &grid,
        1.5,
        &u0,
        &u1,
        &Nonlinearity::monomial(-1.0, 3).unwrap(),
        0.2,
        &cfg,
    )
    .unwrap();
    assert_eq!(out.status, SolveStatus::Global);
    // The cubic couples odd modes: mode 3 (index 2) is excited.
    assert!(out.trajectory.u.last().unwrap()[2].abs() > 1e-8);
    assert!(out.trajectory.u.last().unwrap()[1].abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn small_data_stays_global(c in -2.0f64..2.0, a in -0.5f64..0.5) {
        let (g, u0, u1) = single(2.0, a);
        let cfg = SemilinearConfig { n_sub: 8, ..SemilinearConfig::default() };
        let out = solve_semilinear(&g, 1.5, &u0, &u1, &Nonlinearity::linear(c), 0.5, &cfg).unwrap();
        prop_assert_eq!(&out.status, &SolveStatus::Global);
        for w in out.accepted_windows() {
            prop_assert!(w.fixed_point_residual.unwrap() <= 2.0 * cfg.tol_fix);
        }
    }
}
