//! Integration checks of the linear mild solution.

use std::sync::Arc;

use fracwave_core::linear_solver::{Monomial, Source};
use fracwave_core::{solve_linear, GridFunction, LinearProblem, SolveOptions, SpectralGrid, TimeGrid};
use proptest::prelude::*;

fn wave_gap(alpha: f64) -> f64 {
    let lam: f64 = 4.0;
    let (u0, u1) = (1.0, 0.5);
    let p = LinearProblem::single_mode(lam, alpha, u0, u1, Source::Zero).unwrap();
    let tg = TimeGrid::uniform(1.0, 200).unwrap();
    let tr = solve_linear(&p, &tg, &SolveOptions::default()).unwrap();
    let w = lam.sqrt();
    tr.times
        .iter()
        .zip(&tr.u)
        .map(|(t, u)| (u[0] - ((w * t).cos() * u0 + (w * t).sin() / w * u1)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn approaches_wave_solution_as_alpha_tends_to_two() {
    let g1 = wave_gap(1.99);
    let g2 = wave_gap(1.999);
    let g3 = wave_gap(1.9999);
    assert!(g2 <= 5e-3, "gap {g2}");
    assert!(g3 < g2 && g2 < g1, "{g1} {g2} {g3}");
}

#[test]
fn finite_differences_match_velocity() {
    let p = LinearProblem::single_mode(3.0, 1.6, 1.0, -0.5, Source::Zero).unwrap();
    let tg = TimeGrid::uniform(1.0, 512).unwrap();
    let tr = solve_linear(&p, &tg, &SolveOptions::default()).unwrap();
    let du = tr.du.as_ref().unwrap();
    let h = 1.0 / 512.0;
    for (k, d) in du.iter().enumerate().take(512).skip(8) {
        let fd = (tr.u[k + 1][0] - tr.u[k - 1][0]) / (2.0 * h);
        assert!((fd - d[0]).abs() <= 1e-3 * d[0].abs().max(1e-1), "k={k}");
    }
}

fn instance(grid: &Arc<SpectralGrid>, a: &[f64], b: &[f64], c: f64, q: f64) -> LinearProblem {
    let src = Source::ClosedForm(
        (0..grid.len())
            .map(|j| {
                vec![Monomial {
                    coef: c * (j + 1) as f64,
                    power: q,
                }]
            })
            .collect(),
    );
    LinearProblem::new(
        Arc::clone(grid),
        1.4,
        GridFunction::new(grid, a.to_vec()).unwrap(),
        GridFunction::new(grid, b.to_vec()).unwrap(),
        src,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn superposition(
        a1 in prop::collection::vec(-2.0..2.0f64, 3),
        b1 in prop::collection::vec(-2.0..2.0f64, 3),
        a2 in prop::collection::vec(-2.0..2.0f64, 3),
        b2 in prop::collection::vec(-2.0..2.0f64, 3),
        c1 in -1.0..1.0f64,
        c2 in -1.0..1.0f64,
    ) {
        let grid = Arc::new(SpectralGrid::harmonic_oscillator(3).unwrap());
        let tg = TimeGrid::graded(1.0, 24, 1.5).unwrap();
        let opts = SolveOptions::default();
        let q = 0.5;
        let s1 = solve_linear(&instance(&grid, &a1, &b1, c1, q), &tg, &opts).unwrap();
        let s2 = solve_linear(&instance(&grid, &a2, &b2, c2, q), &tg, &opts).unwrap();
        let sum_a: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x + y).collect();
        let sum_b: Vec<f64> = b1.iter().zip(&b2).map(|(x, y)| x + y).collect();
        let s = solve_linear(&instance(&grid, &sum_a, &sum_b, c1 + c2, q), &tg, &opts).unwrap();
        for k in 0..tg.len() {
            for j in 0..3 {
                let want = s1.u[k][j] + s2.u[k][j];
                prop_assert!((s.u[k][j] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }
}
