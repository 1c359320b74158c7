//! Constrained maximum-likelihood estimation for the multivariate normal
//! model in which the mean is an eigenvector of the covariance with
//! eigenvalue one and the covariance has unit determinant.
//!
//! The crate provides the dense symmetric-matrix kernels ([`linalg`]), the
//! Gaussian likelihood with analytic derivatives and constraint maps
//! ([`likelihood`]), the iterative solvers ([`solvers`]), post-processors
//! that enforce the constraints exactly ([`enforce`]), and curvature /
//! coverage diagnostics ([`diagnostics`]).

pub mod diagnostics;
pub mod enforce;
pub mod error;
pub mod likelihood;
pub mod linalg;
pub mod solvers;

pub use error::{Error, Result};
pub use likelihood::{ConstraintResiduals, Dataset, EstimatePair, SufficientStats};
pub use solvers::{SolverConfig, SolverReport};
