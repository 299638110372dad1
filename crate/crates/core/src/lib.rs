//! Thermodynamic formalism for the Feynman-Kac semigroup of `½ d²/dx² + V`
//! on the circle.
//!
//! - [`grid`]: periodic grids, sampled functions, spectral calculus.
//! - [`spectral`]: the generator matrix and its principal eigenpair `(λ_V, F)`.
//! - [`feynman_kac`]: `P_t^V` by Crank-Nicolson and by Monte Carlo.
//! - [`gibbs`]: the Doob-normalized semigroup, its diffusion, path weights.
//! - [`thermo`]: relative entropy, pressure, and the variational principle.
//!
//! Monte Carlo work runs on rayon when the `parallel` feature is on (the
//! default). Every path draws from its own `(seed, path)` stream, so results
//! are bit-identical between sequential and parallel runs.

// Negated comparisons such as `!(x > 0.0)` are used on purpose so that NaN
// inputs are rejected along with out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod feynman_kac;
pub mod gibbs;
pub mod grid;
pub mod spectral;
pub mod stats;
pub mod thermo;

pub use error::{Error, Result};
pub use exec::Execution;
pub use feynman_kac::{McConfig, PropagatorConfig};
pub use grid::{GridFunction, Harmonic, HarmonicSpec, PeriodicGrid};
pub use spectral::{EigenSolution, Laplacian};
pub use stats::McEstimate;
