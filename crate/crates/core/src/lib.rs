//! Spectral mild-solution solvers for the superdiffusive fractional Cauchy
//! problem `D_t^alpha u + A u = f(u)`, `1 < alpha < 2`, with `A` given in
//! multiplication form, plus independent oracles and verification tools.

pub mod caputo_oracle;
pub mod error;
pub mod linear_solver;
pub mod mittag_leffler;
pub mod quadrature;
pub mod rate_verifier;
pub mod semilinear_solver;
pub mod special;
pub mod spectral_operator;
pub mod trajectory;

pub use error::{Error, Result};
pub use linear_solver::{solve_linear, LinearProblem, Monomial, SolveOptions, Source};
pub use semilinear_solver::{
    solve_semilinear, Nonlinearity, NonlinearitySpec, SemilinearConfig, SolveOutcome, SolveStatus,
};
pub use spectral_operator::{FractionalIndex, GridFunction, Mode, SpectralGrid};
pub use trajectory::{Field, TimeGrid, Trajectory};
