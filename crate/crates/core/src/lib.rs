//! Numerical two-Hilbert-space scattering on weighted graphs.
//!
//! The crate builds pairs of weighted graph Laplacians `H_{b,mu}`, evolves
//! states under the heat semigroup `exp(-sH)` and the unitary propagator
//! `exp(-itH)` via Chebyshev expansions, and evaluates the criteria that
//! decide whether the two natural identification operators between
//! `l2(X, mu1)` and `l2(X, mu2)` — the unitary rescaling `J: psi -> psi /
//! sqrt(rho)` and the trivial inclusion `Jtilde: psi -> psi` — induce the
//! same wave operators.
//!
//! Module map:
//! - [`graph`]: weighted graphs, nested truncations, graph pairs and the
//!   density `rho` with `mu2 = rho * mu1`.
//! - [`operator`]: the Laplacian `H_{b,mu}`, identification operators,
//!   weighted inner products.
//! - [`chebyshev`]: Bessel-coefficient Chebyshev expansions of `exp(-sH)`,
//!   `exp(-itH)` and smoothed spectral windows.
//! - [`propagation`]: heat/unitary application, heat-kernel rows, the
//!   smoothing weight `phi(s, x)`, dense-eigendecomposition oracles.
//! - [`criteria`]: summability criteria over graph exhaustions, the
//!   pointwise metric-pencil distortion `delta` and its inequality check.
//! - [`scattering`]: ballistic wave packets, RAGE-type localization decay,
//!   wave-operator estimates and the asymptotic-equivalence experiment.
//!
//! With the `parallel` feature (default) data-parallel batches run on rayon;
//! without it the same code paths run sequentially with identical results.

pub mod chebyshev;
pub mod criteria;
pub mod error;
pub mod graph;
pub mod operator;
pub mod parallel;
pub mod propagation;
pub mod scattering;

pub use error::{Error, Result};

/// Complex scalar used for state vectors throughout.
pub type C64 = num_complex::Complex64;
