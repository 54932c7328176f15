//! Property tests for the multiplication-operator model.

use std::sync::Arc;

use fracwave_core::{FractionalIndex, GridFunction, SpectralGrid};
use proptest::prelude::*;

fn grid_and_values() -> impl Strategy<Value = (SpectralGrid, Vec<f64>)> {
    (
        0.05f64..5.0,
        prop::collection::vec((1.0f64..1e3, 0.01f64..10.0, -10.0f64..10.0), 1..12),
    )
        .prop_map(|(m0, rows)| {
            let pairs: Vec<(f64, f64)> = rows.iter().map(|(k, w, _)| (m0 * k, *w)).collect();
            let values = rows.iter().map(|r| r.2).collect();
            (SpectralGrid::new("random", m0, &pairs).unwrap(), values)
        })
}

proptest! {
    #[test]
    fn dual_norm_bounded_by_primal(
        (g, v) in grid_and_values(),
        gamma in 0.0f64..2.0,
    ) {
        let fi = FractionalIndex::new(gamma).unwrap();
        let lhs = g.norm(&v, fi.dual());
        let rhs = g.m0().powf(-2.0 * gamma) * g.norm(&v, fi);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn norm_equals_brute_force_sum((g, v) in grid_and_values(), sigma in -2.0f64..2.0) {
        let grid = Arc::new(g);
        let f = GridFunction::new(&grid, v.clone()).unwrap();
        let got = f.norm_v(FractionalIndex::new(sigma).unwrap());
        let brute: f64 = grid
            .modes()
            .iter()
            .zip(&v)
            .map(|(m, x)| m.weight * m.eigenvalue.powf(2.0 * sigma) * x * x)
            .sum::<f64>()
            .sqrt();
        prop_assert!((got - brute).abs() <= 1e-14 * brute.max(1e-300));
    }

    #[test]
    fn shifts_compose((g, _v) in grid_and_values(), c in 0.0f64..5.0, d in 0.0f64..5.0) {
        let twice = g.shift(c).unwrap().shift(d).unwrap();
        let once = g.shift(c + d).unwrap();
        for (a, b) in twice.eigenvalues().iter().zip(once.eigenvalues()) {
            prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b);
        }
        prop_assert!((twice.m0() - once.m0()).abs() <= 4.0 * f64::EPSILON * once.m0());
    }

    #[test]
    fn powers_compose((g, _v) in grid_and_values(), s in 0.05f64..1.0, t in 0.05f64..1.0) {
        let twice = g.fractional_power(s).unwrap().fractional_power(t).unwrap();
        let once = g.fractional_power(s * t).unwrap();
        for (a, b) in twice.eigenvalues().iter().zip(once.eigenvalues()) {
            prop_assert!((a - b).abs() <= 1e-14 * b);
        }
    }
}
