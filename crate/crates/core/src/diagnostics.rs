//! Curvature and coverage diagnostics: membership in the concavity region
//! `0 < Sigma < 2S`, the closed-form second directional derivative of the
//! profiled Lagrangian, the direction that certifies non-concavity outside
//! the region, and Monte-Carlo estimation of the probability that the region
//! captures the true covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spectral_decompose, symmetry_gap};

/// Inputs for the directional second derivative: the evaluation point, a
/// symmetric direction, the data scatter, the mean-gap outer product
/// `B = (xbar - mu)(xbar - mu)'` (zero when the mean is profiled out), and
/// the sample count scaling the Lagrangian.
#[derive(Debug, Clone)]
pub struct CurvatureQuery {
    pub sigma: DMatrix<f64>,
    pub direction: DMatrix<f64>,
    pub scatter: DMatrix<f64>,
    pub mean_gap: DMatrix<f64>,
    pub n: usize,
}

/// Monte-Carlo estimate of `P[lambda_min(W_{n-1}) > n/2]` with its binomial
/// standard error. `shards` records the fixed RNG stream count.
#[derive(Debug, Clone, Copy)]
pub struct CoverageEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub reps: usize,
    pub shards: usize,
}

/// True iff every eigenvalue of both `Sigma` and `2S - Sigma` exceeds 1e-12.
pub fn in_delta_region(sigma: &DMatrix<f64>, scatter: &DMatrix<f64>) -> Result<bool> {
    if sigma.nrows() != scatter.nrows() || sigma.ncols() != scatter.ncols() {
        return Err(Error::Dimension(format!(
            "sigma is {}x{}, scatter is {}x{}",
            sigma.nrows(),
            sigma.ncols(),
            scatter.nrows(),
            scatter.ncols()
        )));
    }
    let own = spectral_decompose(sigma)?;
    if own.values[own.values.len() - 1] <= 1e-12 {
        return Ok(false);
    }
    let gap = spectral_decompose(&(scatter * 2.0 - sigma))?;
    Ok(gap.values[gap.values.len() - 1] > 1e-12)
}

/// Second directional derivative of the profiled Lagrangian along a symmetric
/// direction D: `-(n/2) Tr[{2(S+B) - Sigma} Sigma^-1 D Sigma^-1 D Sigma^-1]`.
/// The multiplier term is linear in Sigma, so it contributes nothing here.
pub fn directional_curvature(query: &CurvatureQuery) -> Result<f64> {
    let p = query.sigma.nrows();
    if symmetry_gap(&query.direction) > 1e-10 * query.direction.amax().max(1.0) {
        return Err(Error::Asymmetric {
            gap: symmetry_gap(&query.direction),
        });
    }
    let chol = query
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("sigma is not positive definite".into()))?;
    let inv = chol.inverse();
    let front = (&query.scatter + &query.mean_gap) * 2.0 - &query.sigma;
    let step = &inv * &query.direction;
    let product = front * &step * step * inv;
    let _ = p;
    Ok(-0.5 * query.n as f64 * product.trace())
}

/// The direction `Sigma u u' Sigma` along which the Lagrangian fails to be
/// concave when `Sigma` lies outside the region, with `u` the eigenvector of
/// the most negative eigenvalue of `2S - Sigma`.
pub fn counterexample_direction(
    sigma: &DMatrix<f64>,
    scatter: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if in_delta_region(sigma, scatter)? {
        return Err(Error::Contract(
            "sigma lies inside the concavity region; no counterexample exists".into(),
        ));
    }
    let sd = spectral_decompose(&(scatter * 2.0 - sigma))?;
    let p = sd.values.len();
    let u: DVector<f64> = sd.vectors.column(p - 1).into_owned();
    let su = sigma * &u;
    let mut d = DMatrix::zeros(p, p);
    for c in 0..p {
        for r in c..p {
            d[(r, c)] = su[r] * su[c];
        }
    }
    for c in 0..p {
        for r in (c + 1)..p {
            d[(c, r)] = d[(r, c)];
        }
    }
    Ok(d)
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fraction of `reps` draws of `W = G'G` (G an (n-1) x p standard normal
/// matrix) whose smallest eigenvalue exceeds n/2, with the binomial standard
/// error. Replications are sharded over fixed per-shard RNG streams, so the
/// result depends only on `(n, p, reps, seed)`.
pub fn wishart_coverage(n: usize, p: usize, reps: usize, seed: u64) -> Result<CoverageEstimate> {
    if p < 1 || n <= p {
        return Err(Error::Domain(format!(
            "need n > p >= 1, got n = {n}, p = {p}"
        )));
    }
    if reps < 100 {
        return Err(Error::Domain(format!(
            "need at least 100 replications, got {reps}"
        )));
    }
    let shards = reps.min(64);
    let base = reps / shards;
    let extra = reps % shards;
    let threshold = n as f64 / 2.0;
    let hits: usize = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let quota = base + usize::from(shard < extra);
            let mut rng =
                ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed) ^ shard as u64));
            let mut local = 0usize;
            for _ in 0..quota {
                let g = DMatrix::from_fn(n - 1, p, |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                });
                let mut w = DMatrix::zeros(p, p);
                for c in 0..p {
                    for r in c..p {
                        w[(r, c)] = g.column(r).dot(&g.column(c));
                    }
                }
                for c in 0..p {
                    for r in (c + 1)..p {
                        w[(c, r)] = w[(r, c)];
                    }
                }
                let sd = spectral_decompose(&w).expect("Gram matrix is symmetric");
                if sd.values[p - 1] > threshold {
                    local += 1;
                }
            }
            local
        })
        .sum();
    let estimate = hits as f64 / reps as f64;
    let stderr = (estimate * (1.0 - estimate) / reps as f64).sqrt();
    Ok(CoverageEstimate {
        estimate,
        stderr,
        reps,
        shards,
    })
}
