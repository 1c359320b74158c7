//! Gaussian sufficient statistics, log-likelihood with analytic first and
//! second derivatives, the mean-eigenvector constraint in both its vector and
//! scalar forms, and the exponential-family maps (T, m, V) used by the
//! explicit-multiplier solver.
//!
//! All matrix derivatives treat the covariance as a full p x p variable with
//! column-stacked vec; symmetry is restored by callers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{commutation_matrix, symmetrize, symmetry_gap, unvec, vec_of};

/// An n x p sample, one observation per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    rows: DMatrix<f64>,
}

impl Dataset {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite entries".into()));
        }
        Ok(Self { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }
}

/// Sample mean and scatter `S = A(xbar)/n` (divisor n).
#[derive(Debug, Clone)]
pub struct SufficientStats {
    pub mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
    pub n: usize,
}

impl SufficientStats {
    /// `A(mu) = sum (x_i - mu)(x_i - mu)' = nS + n (xbar - mu)(xbar - mu)'`.
    pub fn scatter_about(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n as f64;
        let d = &self.mean - mu;
        let mut a = &self.scatter * n;
        let p = d.len();
        for c in 0..p {
            for r in 0..p {
                a[(r, c)] += n * d[r] * d[c];
            }
        }
        a
    }
}

/// A mean vector paired with a symmetric covariance estimate. Positive
/// definiteness is tracked by callers, never assumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatePair {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl EstimatePair {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::NonSquare {
                rows: cov.nrows(),
                cols: cov.ncols(),
            });
        }
        if mean.len() != cov.nrows() {
            return Err(Error::Dimension(format!(
                "mean length {} vs covariance {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    /// Strict PD probe via Cholesky on the symmetrized covariance.
    pub fn is_positive_definite(&self) -> bool {
        match symmetrize(&self.cov) {
            Ok(s) => s.cholesky().is_some(),
            Err(_) => false,
        }
    }
}

/// Residuals of the two constraints: `h = Sigma mu - mu` and `||Sigma| - 1|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    pub h: DVector<f64>,
    pub det_gap: f64,
}

impl ConstraintResiduals {
    pub fn h_norm(&self) -> f64 {
        self.h.norm()
    }
}

/// Canonical statistic, its expectation and covariance for the Gaussian
/// exponential family, with the scalar constraint evaluated at both points.
#[derive(Debug, Clone)]
pub struct NaturalParamState {
    pub t: DVector<f64>,
    pub m: DVector<f64>,
    pub v: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct NaturalParams {
    pub state: NaturalParamState,
    pub h_m: f64,
    pub grad_h_m: DVector<f64>,
    pub h_t: f64,
    pub grad_h_t: DVector<f64>,
}

/// Sample mean and scatter with divisor n, so that `A(xbar) = n * scatter`.
pub fn sufficient_stats(data: &Dataset) -> Result<SufficientStats> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InsufficientData { need: 2, got: n });
    }
    let p = data.p();
    let mut mean = DVector::zeros(p);
    for i in 0..n {
        for j in 0..p {
            mean[j] += data.rows()[(i, j)];
        }
    }
    mean /= n as f64;
    let mut scatter = DMatrix::zeros(p, p);
    for i in 0..n {
        for c in 0..p {
            let dc = data.rows()[(i, c)] - mean[c];
            for r in c..p {
                scatter[(r, c)] += (data.rows()[(i, r)] - mean[r]) * dc;
            }
        }
    }
    scatter /= n as f64;
    for c in 0..p {
        for r in (c + 1)..p {
            scatter[(c, r)] = scatter[(r, c)];
        }
    }
    Ok(SufficientStats { mean, scatter, n })
}

/// Cholesky-backed inverse and log-determinant; failure reports an estimated
/// condition number.
fn pd_inverse(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let sym = symmetrize(cov)?;
    match sym.clone().cholesky() {
        Some(chol) => {
            let logdet = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            Ok((chol.inverse(), logdet))
        }
        None => {
            let cond = match crate::linalg::spectral_decompose(&sym) {
                Ok(sd) => {
                    let hi = sd.values[0].abs();
                    let lo = sd.values[sd.values.len() - 1].abs().max(1e-300);
                    hi / lo
                }
                Err(_) => f64::INFINITY,
            };
            Err(Error::Numeric(format!(
                "covariance is not positive definite (condition estimate {cond:.3e})"
            )))
        }
    }
}

/// Log-likelihood up to the additive constant:
/// `-(n/2) log|Sigma| - (1/2) tr(Sigma^-1 A(mu))`.
pub fn log_likelihood(est: &EstimatePair, data: &Dataset) -> Result<f64> {
    check_dims(est, data)?;
    let stats = sufficient_stats(data)?;
    log_likelihood_stats(est, &stats)
}

/// Same as [`log_likelihood`] but reusing precomputed statistics.
pub fn log_likelihood_stats(est: &EstimatePair, stats: &SufficientStats) -> Result<f64> {
    let (inv, logdet) = pd_inverse(&est.cov)?;
    let a = stats.scatter_about(&est.mean);
    let n = stats.n as f64;
    let mut quad = 0.0;
    for c in 0..a.ncols() {
        for r in 0..a.nrows() {
            quad += inv[(r, c)] * a[(c, r)];
        }
    }
    Ok(-0.5 * n * logdet - 0.5 * quad)
}

/// Analytic score: `dl/dmu = n Sigma^-1 (xbar - mu)` and
/// `dl/dSigma = -(1/2)(n Sigma^-1 - Sigma^-1 A(mu) Sigma^-1)`.
pub fn score(est: &EstimatePair, data: &Dataset) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dims(est, data)?;
    let stats = sufficient_stats(data)?;
    score_stats(est, &stats)
}

pub fn score_stats(
    est: &EstimatePair,
    stats: &SufficientStats,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (inv, _) = pd_inverse(&est.cov)?;
    let n = stats.n as f64;
    let d_mu = &inv * (&stats.mean - &est.mean) * n;
    let a = stats.scatter_about(&est.mean);
    let d_sigma = (&inv * &a * &inv - &inv * n) * 0.5;
    Ok((d_mu, d_sigma))
}

/// The four blocks of the second-derivative matrix of the log-likelihood,
/// with the covariance treated as a full matrix variable (column-stacked vec).
#[derive(Debug, Clone)]
pub struct HessianBlocks {
    pub mu_mu: DMatrix<f64>,
    pub mu_sigma: DMatrix<f64>,
    pub sigma_mu: DMatrix<f64>,
    pub sigma_sigma: DMatrix<f64>,
}

pub fn hessian_blocks(est: &EstimatePair, data: &Dataset) -> Result<HessianBlocks> {
    check_dims(est, data)?;
    let stats = sufficient_stats(data)?;
    hessian_blocks_stats(est, &stats)
}

pub fn hessian_blocks_stats(est: &EstimatePair, stats: &SufficientStats) -> Result<HessianBlocks> {
    let (inv, _) = pd_inverse(&est.cov)?;
    let n = stats.n as f64;
    let p = est.p();
    let mu_mu = &inv * (-n);
    let w = &inv * (&stats.mean - &est.mean);
    let w_col = DMatrix::from_column_slice(p, 1, w.as_slice());
    // -(n/2) [ (Sigma^-1 (xbar-mu)) kron Sigma^-1 + Sigma^-1 kron (Sigma^-1 (xbar-mu)) ]
    let sigma_mu = (w_col.kronecker(&inv) + inv.kronecker(&w_col)) * (-0.5 * n);
    let mu_sigma = sigma_mu.transpose();
    let a = stats.scatter_about(&est.mean);
    let iai = &inv * &a * &inv;
    let sigma_sigma =
        (inv.kronecker(&inv) * n - iai.kronecker(&inv) - inv.kronecker(&iai)) * 0.5;
    Ok(HessianBlocks {
        mu_mu,
        mu_sigma,
        sigma_mu,
        sigma_sigma,
    })
}

/// `h = Sigma mu - mu` and the determinant gap `||Sigma| - 1|`.
pub fn constraint_residuals(est: &EstimatePair) -> ConstraintResiduals {
    let h = &est.cov * &est.mean - &est.mean;
    let det_gap = (est.cov.determinant() - 1.0).abs();
    ConstraintResiduals { h, det_gap }
}

/// Transposed Jacobian of the vector constraint: `[Sigma - I; mu kron I]`,
/// a (p + p^2) x p matrix whose column j differentiates h_j over theta.
pub fn constraint_jacobian(est: &EstimatePair) -> DMatrix<f64> {
    let p = est.p();
    let mut jac = DMatrix::zeros(p + p * p, p);
    for j in 0..p {
        for i in 0..p {
            jac[(i, j)] = est.cov[(i, j)] - if i == j { 1.0 } else { 0.0 };
        }
    }
    // mu kron I: d h_j / d Sigma_{rc} = delta_{jr} mu_c.
    for c in 0..p {
        for j in 0..p {
            jac[(p + c * p + j, j)] = est.mean[c];
        }
    }
    jac
}

/// Observed canonical statistic `T = (xbar, vec((1/n) sum x x'))`.
pub fn canonical_statistic(stats: &SufficientStats) -> DVector<f64> {
    let p = stats.mean.len();
    let mut second = stats.scatter.clone();
    for c in 0..p {
        for r in 0..p {
            second[(r, c)] += stats.mean[r] * stats.mean[c];
        }
    }
    stack_mean_and_matrix(&stats.mean, &second)
}

/// Expectation of the canonical statistic: `m = (mu, vec(Sigma + mu mu'))`.
pub fn expectation_vector(est: &EstimatePair) -> DVector<f64> {
    let p = est.p();
    let mut second = est.cov.clone();
    for c in 0..p {
        for r in 0..p {
            second[(r, c)] += est.mean[r] * est.mean[c];
        }
    }
    stack_mean_and_matrix(&est.mean, &second)
}

fn stack_mean_and_matrix(mean: &DVector<f64>, mat: &DMatrix<f64>) -> DVector<f64> {
    let p = mean.len();
    let mut out = DVector::zeros(p + p * p);
    out.rows_mut(0, p).copy_from(mean);
    out.rows_mut(p, p * p).copy_from(&vec_of(mat));
    out
}

/// Split a stacked statistic back into `(m1, unvec(m2))`.
pub fn split_statistic(v: &DVector<f64>, p: usize) -> (DVector<f64>, DMatrix<f64>) {
    let m1 = DVector::from(v.rows(0, p).clone_owned());
    let m2 = unvec(&v.rows(p, p * p).clone_owned(), p);
    (m1, m2)
}

/// Scalar form of the constraint:
/// `h(m) = [m2 - m1 kron m1 - vec(I)]' (1 kron m1)`, which contracts to
/// `Tr[(Sigma - I) R_mu]` when m comes from a parameter pair.
pub fn scalar_constraint(v: &DVector<f64>, p: usize) -> f64 {
    let mut h = 0.0;
    for j in 0..p {
        for r in 0..p {
            let m2 = v[p + j * p + r];
            let delta = if j == r { 1.0 } else { 0.0 };
            h += (m2 - v[j] * v[r] - delta) * v[r];
        }
    }
    h
}

/// Exact gradient of [`scalar_constraint`] in the stacked statistic.
pub fn scalar_constraint_gradient(v: &DVector<f64>, p: usize) -> DVector<f64> {
    let mut grad = DVector::zeros(p + p * p);
    let m1 = v.rows(0, p);
    let s1: f64 = m1.iter().sum();
    let sq: f64 = m1.iter().map(|x| x * x).sum();
    for i in 0..p {
        let mut block_sum = 0.0;
        for j in 0..p {
            let delta = if j == i { 1.0 } else { 0.0 };
            block_sum += v[p + j * p + i] - m1[j] * m1[i] - delta;
        }
        grad[i] = block_sum - s1 * m1[i] - sq;
    }
    for j in 0..p {
        for r in 0..p {
            grad[p + j * p + r] = m1[r];
        }
    }
    grad
}

/// Covariance of the canonical statistic at `(mu, Sigma)` for sample size n.
pub fn statistic_covariance(est: &EstimatePair, n: usize) -> DMatrix<f64> {
    let p = est.p();
    let dim = p + p * p;
    let nf = n as f64;
    let mut v = DMatrix::zeros(dim, dim);
    // V11 = Sigma / n
    for c in 0..p {
        for r in 0..p {
            v[(r, c)] = est.cov[(r, c)] / nf;
        }
    }
    // V12 = (Sigma kron mu' + mu' kron Sigma)/n, a p x p^2 block:
    // entry (i, c*p + j) = (Sigma_{ic} mu_j + mu_c Sigma_{ij}) / n.
    for c in 0..p {
        for j in 0..p {
            for i in 0..p {
                let val = (est.cov[(i, c)] * est.mean[j] + est.mean[c] * est.cov[(i, j)]) / nf;
                v[(i, p + c * p + j)] = val;
                v[(p + c * p + j, i)] = val;
            }
        }
    }
    // V22 = (I + K)(Sigma kron Sigma + Sigma kron mu mu' + mu mu' kron Sigma)/n.
    let mm = &est.mean * est.mean.transpose();
    let base = est.cov.kronecker(&est.cov) + est.cov.kronecker(&mm) + mm.kronecker(&est.cov);
    let k = commutation_matrix(p);
    let v22 = (&base + &k * &base) / nf;
    for c in 0..p * p {
        for r in 0..p * p {
            v[(p + r, p + c)] = v22[(r, c)];
        }
    }
    // Clean up rounding asymmetry.
    symmetrize(&v).expect("square by construction")
}

/// The exponential-family view of an estimate against a dataset: T, m, V and
/// the scalar constraint with its gradients at both m and T.
pub fn natural_param_maps(est: &EstimatePair, data: &Dataset) -> Result<NaturalParams> {
    check_dims(est, data)?;
    let stats = sufficient_stats(data)?;
    let p = est.p();
    let t = canonical_statistic(&stats);
    let m = expectation_vector(est);
    let v = statistic_covariance(est, stats.n);
    Ok(NaturalParams {
        h_m: scalar_constraint(&m, p),
        grad_h_m: scalar_constraint_gradient(&m, p),
        h_t: scalar_constraint(&t, p),
        grad_h_t: scalar_constraint_gradient(&t, p),
        state: NaturalParamState { t, m, v },
    })
}

fn check_dims(est: &EstimatePair, data: &Dataset) -> Result<()> {
    if est.p() != data.p() {
        return Err(Error::Dimension(format!(
            "estimate dimension {} vs data dimension {}",
            est.p(),
            data.p()
        )));
    }
    if symmetry_gap(&est.cov) > 1e-8 * est.cov.amax().max(1.0) {
        return Err(Error::Asymmetric {
            gap: symmetry_gap(&est.cov),
        });
    }
    Ok(())
}
