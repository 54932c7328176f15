//! Exponent reproduction on equality instances, kernel inequalities, the
//! Mittag-Leffler bound and the derivative identities.

use std::sync::Arc;

use fracwave_core::linear_solver::{solve_linear, EstimateIndices, LinearProblem, SolveOptions, Source};
use fracwave_core::mittag_leffler::KernelDerivative;
use fracwave_core::rate_verifier::*;
use fracwave_core::{GridFunction, SpectralGrid, TimeGrid};
use proptest::prelude::*;

#[test]
fn equality_instances_reproduce_every_exponent() {
    let setup = SaturationSetup::default();
    for alpha in [1.25, 1.5, 1.75] {
        for e in Estimate::ALL {
            let spec = RateSpec::saturation(e, alpha);
            let r = run_saturation(&spec, &setup).unwrap();
            assert!(r.verdict.passed(), "alpha={alpha} {e}: {:?} {:?}", r.verdict, r.fit);
        }
    }
}

#[test]
fn fits_are_bit_reproducible() {
    let spec = RateSpec::saturation(Estimate::VelocityFromState, 1.5);
    let a = run_saturation(&spec, &SaturationSetup::default()).unwrap();
    let b = run_saturation(&spec, &SaturationSetup::default()).unwrap();
    assert_eq!(a.fit.unwrap().exponent.to_bits(), b.fit.unwrap().exponent.to_bits());
}

#[test]
fn smooth_multimode_data_respect_upper_bounds() {
    // Each estimate bounds a sum over data terms; feed only the term it scales.
    let grid = Arc::new(SpectralGrid::harmonic_oscillator(6).unwrap());
    let smooth = GridFunction::from_eigenvalues(&grid, |m| m.powf(-2.0)).unwrap();
    let zero = GridFunction::zeros(&grid);
    let tg = TimeGrid::graded(1.0, 128, 3.0).unwrap();
    let opts = SolveOptions {
        second_derivative: true,
        ..SolveOptions::default()
    };
    let displaced = LinearProblem::new(Arc::clone(&grid), 1.5, smooth.clone(), zero.clone(), Source::Zero).unwrap();
    let launched = LinearProblem::new(Arc::clone(&grid), 1.5, zero, smooth, Source::Zero).unwrap();
    for e in Estimate::ALL {
        let p = if e == Estimate::StateFromVelocity {
            &launched
        } else {
            &displaced
        };
        let tr = solve_linear(p, &tg, &opts).unwrap();
        let spec = RateSpec::new(e, 1.5, e.default_indices(), RateMode::UpperBound);
        let r = verify_rates(&tr, &[spec], None).remove(0);
        assert!(r.verdict.passed(), "{e}: {:?}", r.verdict);
    }
}

#[test]
fn violated_hypotheses_are_skipped() {
    let p = LinearProblem::single_mode(1.0, 1.5, 1.0, 0.0, Source::Zero).unwrap();
    let tr = solve_linear(&p, &TimeGrid::graded(1.0, 64, 3.0).unwrap(), &SolveOptions::default()).unwrap();
    let idx = EstimateIndices {
        gamma_tilde: 0.9,
        gamma: 0.1,
        theta: 0.0,
    };
    let spec = RateSpec::new(Estimate::StateFromVelocity, 1.5, idx, RateMode::Saturation);
    let r = verify_rates(&tr, &[spec], None);
    assert!(matches!(r[0].verdict, Verdict::Skipped { .. }));
}

#[test]
fn initial_conditions_approach_at_the_expected_rates() {
    for alpha in [1.25, 1.5, 1.75] {
        for (p, tg, sigma, rate) in initial_condition_instances(alpha).unwrap() {
            let tr = solve_linear(&p, &tg, &SolveOptions::default()).unwrap();
            let r = verify_initial_conditions(&tr, p.u0.values(), p.u1.values(), sigma, 0.6, 0.5, 0.1, None).unwrap();
            assert!(r.verdict.passed(), "{:?}", r.verdict);
            let fit = r.displacement.fit.unwrap();
            assert!(
                (fit.exponent - rate).abs() <= 0.1,
                "alpha={alpha} sigma={sigma}: {} vs {rate}",
                fit.exponent
            );
        }
    }
}

#[test]
fn zero_data_approach_is_identically_zero() {
    let p = LinearProblem::single_mode(1.0, 1.5, 0.0, 0.0, Source::Zero).unwrap();
    let tr = solve_linear(&p, &TimeGrid::graded(1.0, 64, 3.0).unwrap(), &SolveOptions::default()).unwrap();
    let r = verify_initial_conditions(&tr, &[0.0], &[0.0], 0.0, 0.6, 0.5, 1e-12, None).unwrap();
    assert!(r.displacement.values.iter().all(|v| *v == 0.0));
    assert!(r.verdict.passed());
}

#[test]
fn mittag_leffler_bound_is_uniform_and_stable() {
    for alpha in [1.1, 1.5, 1.9] {
        for beta in [1.0, 2.0, alpha, alpha - 1.0] {
            let r = verify_ml_bound(alpha, beta, -1e6, 1000, 10, 1e3, 1e-13).unwrap();
            assert!(r.pass, "alpha={alpha} beta={beta}: {r:?}");
        }
    }
}

#[test]
fn derivative_identities_match_differences() {
    for kind in [
        KernelDerivative::K11ToK3,
        KernelDerivative::K12ToK11,
        KernelDerivative::K3ToK3Prime,
    ] {
        for alpha in [1.25, 1.5, 1.75] {
            let r = verify_derivative_identity(kind, alpha, (1e-2, 1e4), (1e-3, 10.0), 13, 1e-5, 1e-14).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }
}

#[test]
fn kernel_inequalities_have_stable_finite_sups() {
    let r = verify_kernel_inequality(
        1.5,
        1.5,
        KernelInequality::Scaled { beta: 1.0, gamma: 1.0 },
        (1e-2, 1e4),
        (1e-3, 10.0),
        40,
        10,
        1e3,
        1e-13,
    )
    .unwrap();
    assert!(r.result.pass, "{r:?}");
    let r = verify_kernel_inequality(
        1.5,
        1.5,
        KernelInequality::Complementary { gamma: 0.5 },
        (1e-2, 1e4),
        (1e-3, 10.0),
        40,
        10,
        1e3,
        1e-13,
    )
    .unwrap();
    assert!(r.result.pass, "{r:?}");
    for ap in [1.0, 1.5, 2.0] {
        let r = verify_kernel_inequality(
            1.5,
            ap,
            KernelInequality::Scaled { beta: 0.0, gamma: 0.5 },
            (1e-2, 1e4),
            (1e-3, 10.0),
            40,
            2,
            1e3,
            1e-13,
        )
        .unwrap();
        assert!(r.result.pass, "{r:?}");
        assert!(r.result.refined_sup <= r.result.envelope.unwrap() + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_recovers_exact_power_laws(c in 1e-3f64..1e3, e in -3.0f64..3.0, n in 6usize..40) {
        let ts = log_space(1e-4, 1e-2, n);
        let vs: Vec<f64> = ts.iter().map(|t| c * t.powf(e)).collect();
        let fit = fit_power_law(&ts, &vs, (1e-4, 1e-2)).unwrap();
        prop_assert!((fit.exponent - e).abs() < 1e-9);
        prop_assert!(fit.r2 > 1.0 - 1e-9);
    }

    #[test]
    fn fit_is_scale_invariant(k in 1e-6f64..1e6, e in -2.0f64..2.0) {
        let ts = log_space(1e-3, 1.0, 12);
        let vs: Vec<f64> = ts.iter().map(|t| t.powf(e) * (1.0 + t)).collect();
        let ws: Vec<f64> = vs.iter().map(|v| k * v).collect();
        let a = fit_power_law(&ts, &vs, (0.0, 1.0)).unwrap();
        let b = fit_power_law(&ts, &ws, (0.0, 1.0)).unwrap();
        prop_assert!((a.exponent - b.exponent).abs() < 1e-9);
    }
}
