//! Convergence and residual checks of the discrete Caputo oracle.

use std::sync::Arc;

use fracwave_core::caputo_oracle::{caputo, caputo_startup, gconv, residual_linear, CaputoVariant, SampledSignal};
use fracwave_core::special::gamma;
use fracwave_core::{GridFunction, LinearProblem, SolveOptions, Source, SpectralGrid};
use proptest::prelude::*;

fn cubic_error(alpha: f64, m: usize) -> f64 {
    let h = 1.0 / m as f64;
    let sig = SampledSignal::from_fn(h, m, |t| t * t * t).unwrap();
    let exact = 6.0 / gamma(4.0 - alpha);
    (caputo(&sig, alpha).unwrap().at(m).unwrap() - exact).abs()
}

#[test]
fn cubic_consistency_order() {
    for alpha in [1.25, 1.5, 1.75] {
        let e1 = cubic_error(alpha, 200);
        let e2 = cubic_error(alpha, 400);
        let order = (e1 / e2).log2();
        assert!(order >= 3.0 - alpha - 0.3, "alpha={alpha} order={order}");
    }
}

fn manufactured(alpha: f64) -> LinearProblem {
    let grid = Arc::new(SpectralGrid::single_mode(1.0).unwrap());
    let src = Source::manufactured_quadratic(&grid, alpha);
    LinearProblem::new(
        Arc::clone(&grid),
        alpha,
        GridFunction::new(&grid, vec![1.0]).unwrap(),
        GridFunction::zeros(&grid),
        src,
    )
    .unwrap()
}

#[test]
fn manufactured_residual_is_small() {
    let r = residual_linear(
        &manufactured(1.5),
        1.0,
        5e-4,
        CaputoVariant::StartupCorrected,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(r.max_relative(0.1, 1.0) <= 2e-3, "{}", r.max_relative(0.1, 1.0));
    let plain = residual_linear(
        &manufactured(1.5),
        1.0,
        5e-4,
        CaputoVariant::Plain,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(plain.max_relative(0.1, 1.0) <= 2e-3);
}

#[test]
fn homogeneous_residual_converges() {
    let p = LinearProblem::single_mode(4.0, 1.5, 1.0, 0.0, Source::Zero).unwrap();
    let opts = SolveOptions::default();
    let mut errs = Vec::new();
    for h in [1e-3, 5e-4] {
        let r = residual_linear(&p, 1.0, h, CaputoVariant::StartupCorrected, &opts).unwrap();
        let unorm = r.solution_norm.iter().fold(0.0_f64, |a, b| a.max(*b));
        assert!(r.max_absolute(0.1, 1.0) <= 1e-2 * 4.0 * unorm);
        errs.push(r.max_absolute(0.1, 1.0));
    }
    assert!((errs[0] / errs[1]).log2() >= 1.0, "{errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn caputo_is_linear(
        a in prop::collection::vec(-1.0..1.0f64, 20),
        b in prop::collection::vec(-1.0..1.0f64, 20),
        c in -3.0..3.0f64,
    ) {
        let h = 0.05;
        let sa = SampledSignal::new(h, a.clone()).unwrap();
        let sb = SampledSignal::new(h, b.clone()).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + c * y).collect();
        let ss = SampledSignal::new(h, sum).unwrap();
        for f in [caputo, caputo_startup] {
            let (da, db, ds) = (f(&sa, 1.6).unwrap(), f(&sb, 1.6).unwrap(), f(&ss, 1.6).unwrap());
            for i in 0..ds.values.len() {
                let want = da.values[i] + c * db.values[i];
                prop_assert!((ds.values[i] - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn gconv_preserves_sign(y in prop::collection::vec(0.0..5.0f64, 3..40), g in 0.05..0.95f64) {
        let sig = SampledSignal::new(0.1, y).unwrap();
        prop_assert!(gconv(g, &sig).unwrap().values.iter().all(|v| *v >= 0.0));
    }
}
