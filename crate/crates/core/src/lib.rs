//! A numerical laboratory for information functionals and the Gaussian
//! functional inequalities they satisfy.
//!
//! The crate computes entropy, entropy power, Fisher information, and
//! covariance on explicitly represented densities, and verifies the family of
//! inequalities connecting them: the logarithmic Sobolev inequality and its
//! reversed form, their Euclidean transcriptions, the entropy-power bounds
//! N·J ≥ n, N·|J_m|^{1/n} ≥ 1, N ≤ Tr K/n, N ≤ |K|^{1/n}, the Bernoulli
//! two-point seed inequality with its tensorization and central-limit
//! passage, the heat-semigroup interpolation identity that proves both
//! Sobolev forms, and Bobkov's isoperimetric translation inequality.
//!
//! Modules mirror that structure:
//!
//! - [`density`]: Gaussian, mixture, and grid densities; relative functions.
//! - [`functionals`]: quadrature rules and the information functionals.
//! - [`inequalities`]: one checker per inequality, reporting both sides.
//! - [`transforms`]: whitening, scaling, change of function, α-optimization.
//! - [`semigroup`]: the heat-flow entropy interpolation engine.
//! - [`discrete`]: two-point inequality, tensorization, CLT convergence.
//! - [`isoperimetry`]: Gaussian CDF/quantile/profile and Bobkov's inequality.
//! - [`corpus`]: seeded reproducible test-density generation.

pub mod corpus;
pub mod density;
pub mod discrete;
pub mod error;
pub mod functionals;
pub mod inequalities;
pub mod isoperimetry;
pub mod linalg;
pub mod semigroup;
mod special;
pub mod transforms;

pub use error::{Error, Result};
