//! Error type shared by all estimation routines.

use thiserror::Error;

/// Failures surfaced by decompositions, solvers and modifiers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is asymmetric beyond tolerance (max |M - M'| = {gap:.3e})")]
    Asymmetric { gap: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need {need} observations, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    #[error("iteration diverged at step {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("singular step at iteration {iteration}: denominator {value:.3e} too close to zero")]
    SingularStep { iteration: usize, value: f64 },

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("degenerate mean: {0}")]
    DegenerateMean(String),

    #[error("degenerate projection: {0}")]
    DegenerateProjection(String),
}

pub type Result<T> = std::result::Result<T, Error>;
