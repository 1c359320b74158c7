//! Constrained-MLE computation schemes: the closed-form shape-matrix MLE, the
//! four-parameter fixed-point iteration (SMLE), the intermediate-constraint
//! fixed-point iteration, the explicit-multiplier double iteration (S&C), and
//! the one-shot-inverse Newton-type iteration with ball projection (A&S),
//! plus the asymptotic covariance blocks of the latter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::{
    canonical_statistic, constraint_jacobian, constraint_residuals, scalar_constraint,
    scalar_constraint_gradient, split_statistic, statistic_covariance, sufficient_stats,
    ConstraintResiduals, Dataset, EstimatePair, SufficientStats,
};
use crate::linalg::{repair_positive_definite, symmetrize, symmetry_gap, unvec, vec_of};

/// Which mean update the SMLE iteration applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuUpdate {
    /// As printed: left-multiplied by the current covariance iterate.
    Printed,
    /// The stationarity form without the extra covariance factor.
    Stationarity,
}

/// Which multiplier-vector update the SMLE iteration applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alpha2Update {
    /// As printed: `[(n+2a1) Sigma - A(mu)] mu / 2`, exact only at unit mean
    /// norm.
    Printed,
    /// The rank-one identity solved for alpha2 exactly: divides by |mu|^2.
    MeanNormalized,
}

/// Which alpha1 value scales the covariance update's denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alpha1Denominator {
    /// As printed: the previous iteration's value (the first iteration uses
    /// the freshly computed one, matching the published bootstrap).
    Lagged,
    /// Always the freshly computed value; the covariance iterate then has
    /// unit determinant by construction.
    Current,
}

/// Which form of the intermediate-constraint update map to iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntermediateForm {
    /// The update map exactly as printed, including its divisor conventions.
    Printed,
    /// The same map re-derived from the stationarity system; its fixed point
    /// satisfies `Sigma(a2) b = mu(a2)` exactly.
    Derived,
}

/// Iteration controls shared by all solvers.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Outer-iteration cap for SMLE, A&S and the intermediate iteration.
    pub max_iter: usize,
    /// Relative parameter-change threshold `||new - old|| <= tol (1 + ||old||)`.
    pub tol: f64,
    /// Cap applied to both loops of the S&C double iteration.
    pub inner_max_iter: usize,
    /// Accuracy used by both S&C loops.
    pub epsilon: f64,
    pub mu_update: MuUpdate,
    pub alpha2_update: Alpha2Update,
    pub alpha1_denominator: Alpha1Denominator,
    pub intermediate_form: IntermediateForm,
    /// Recompute the A&S coefficient inverse every k iterations (default: never).
    pub as_refresh_every: Option<usize>,
    /// Record per-iteration change norms and constraint residuals.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
            inner_max_iter: 100,
            epsilon: 0.1,
            mu_update: MuUpdate::Printed,
            alpha2_update: Alpha2Update::Printed,
            alpha1_denominator: Alpha1Denominator::Lagged,
            intermediate_form: IntermediateForm::Printed,
            as_refresh_every: None,
            record_trace: true,
        }
    }
}

impl SolverConfig {
    /// The update-variant combination under which the four-parameter
    /// iteration contracts: fresh alpha1 in the denominators, the multiplier
    /// update solved exactly for alpha2, and the stationarity mean update.
    pub fn stabilized() -> Self {
        Self {
            mu_update: MuUpdate::Stationarity,
            alpha2_update: Alpha2Update::MeanNormalized,
            alpha1_denominator: Alpha1Denominator::Current,
            ..Self::default()
        }
    }
}

/// The multiplier attached to the mean-eigenvector constraint: a p-vector for
/// the four-parameter and A&S paths, a scalar for the S&C path.
#[derive(Debug, Clone)]
pub enum Alpha2 {
    Vector(DVector<f64>),
    Scalar(f64),
}

/// Lagrange multipliers carried through an iteration.
#[derive(Debug, Clone)]
pub struct LagrangeState {
    pub alpha1: f64,
    pub alpha2: Alpha2,
}

/// Per-iteration diagnostics: one change norm per parameter block plus the
/// constraint residual of the new iterate.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub step: usize,
    pub changes: Vec<f64>,
    pub constraint_residual: f64,
}

/// Converged estimates with the full audit trail of the run. The residuals
/// are always recomputed from the returned estimate.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub estimate: EstimatePair,
    pub multipliers: LagrangeState,
    pub iterations_used: usize,
    pub converged: bool,
    /// SMLE only: which of (alpha1, Sigma, alpha2, mu) met the tolerance at exit.
    pub converged_blocks: Option<[bool; 4]>,
    pub residuals: ConstraintResiduals,
    /// Residual of the relaxed constraint `Sigma b = mu` (intermediate solver).
    pub relaxed_residual: Option<f64>,
    pub pd: bool,
    pub symmetry_gap: f64,
    pub trace: Vec<IterationTrace>,
}

fn finish_report(
    estimate: EstimatePair,
    multipliers: LagrangeState,
    iterations_used: usize,
    converged: bool,
    converged_blocks: Option<[bool; 4]>,
    relaxed_residual: Option<f64>,
    raw_symmetry_gap: f64,
    trace: Vec<IterationTrace>,
) -> SolverReport {
    let residuals = constraint_residuals(&estimate);
    let pd = estimate.is_positive_definite();
    SolverReport {
        estimate,
        multipliers,
        iterations_used,
        converged,
        converged_blocks,
        residuals,
        relaxed_residual,
        pd,
        symmetry_gap: raw_symmetry_gap,
        trace,
    }
}

fn require_more_rows_than_cols(data: &Dataset) -> Result<SufficientStats> {
    if data.n() <= data.p() {
        return Err(Error::InsufficientData {
            need: data.p() + 1,
            got: data.n(),
        });
    }
    sufficient_stats(data)
}

fn ensure_finite(label: &str, iteration: usize, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite {label} at iteration {iteration}"
        )));
    }
    Ok(())
}

fn converged_rel(change: f64, old_norm: f64, tol: f64) -> bool {
    change <= tol * (1.0 + old_norm)
}

/// Closed-form MLE under the determinant constraint alone: the sample mean
/// and the scatter rescaled to unit determinant.
pub fn shape_mle(data: &Dataset) -> Result<SolverReport> {
    let stats = require_more_rows_than_cols(data)?;
    let p = data.p() as f64;
    let a = stats.scatter_about(&stats.mean);
    let sd = crate::linalg::spectral_decompose(&a)?;
    let smallest = sd.values[data.p() - 1];
    if smallest <= 1e-12 * sd.values[0].max(1.0) {
        return Err(Error::RankDeficient(format!(
            "scatter matrix A(xbar) is numerically singular (min eigenvalue {smallest:.3e})"
        )));
    }
    let logdet: f64 = sd.values.iter().map(|l| l.ln()).sum();
    let scale = (logdet / p).exp();
    let sigma = symmetrize(&(&a / scale))?;
    let alpha1 = 0.5 * (scale - stats.n as f64);
    let estimate = EstimatePair::new(stats.mean.clone(), sigma)?;
    Ok(finish_report(
        estimate,
        LagrangeState {
            alpha1,
            alpha2: Alpha2::Vector(DVector::zeros(data.p())),
        },
        0,
        true,
        None,
        None,
        0.0,
        Vec::new(),
    ))
}

/// One evaluation of the intermediate-constraint update map, exposed for
/// direct testing of its guard rails.
pub(crate) fn intermediate_step(
    alpha2: &DVector<f64>,
    stats: &SufficientStats,
    b: &DVector<f64>,
    form: IntermediateForm,
    iteration: usize,
) -> Result<(DVector<f64>, f64)> {
    let n = stats.n as f64;
    let p = stats.mean.len() as f64;
    let mu = &stats.mean - alpha2 / n;
    let mut u = stats.scatter_about(&mu);
    let two_a2_mut = alpha2 * mu.transpose() * 2.0;
    u += two_a2_mut;
    let det_u = u.determinant();
    if !(det_u > 0.0) {
        return Err(Error::Divergence {
            iteration,
            detail: format!("determinant of U(alpha2) is {det_u:.3e}"),
        });
    }
    let root_u = det_u.powf(1.0 / p);
    let sigma = &u / root_u;
    // |Sigma(a2)|^(1/p) is 1 analytically; evaluate it anyway, as the printed
    // map carries the factor.
    let s = sigma.determinant().abs().powf(1.0 / p);
    let xbar_b = stats.mean.dot(b);
    let a2_b = alpha2.dot(b);
    let (num, den) = match form {
        IntermediateForm::Printed => {
            let num = &stats.mean * s - &stats.scatter * b * (n - 1.0)
                - alpha2 * (a2_b / (n * n));
            let den = 2.0 * (xbar_b - a2_b / n) - s / n;
            (num, den)
        }
        IntermediateForm::Derived => {
            let num = &stats.mean * (root_u * s) - &stats.scatter * b * n;
            let den = 2.0 * xbar_b - a2_b / n + root_u * s / n;
            (num, den)
        }
    };
    if den.abs() < 1e-12 {
        return Err(Error::SingularStep {
            iteration,
            value: den,
        });
    }
    let next = num / den;
    let residual = (&sigma * b - &mu).norm();
    Ok((next, residual))
}

/// Fixed-point iteration for the relaxed constraint `Sigma b = mu`, driven by
/// the single multiplier vector alpha2 (started at the sample mean).
pub fn intermediate_mle(
    data: &Dataset,
    b: &DVector<f64>,
    config: &SolverConfig,
) -> Result<SolverReport> {
    if b.norm() == 0.0 {
        return Err(Error::Domain("direction b must be nonzero".into()));
    }
    let stats = require_more_rows_than_cols(data)?;
    if b.len() != data.p() {
        return Err(Error::Dimension(format!(
            "b has length {}, data dimension is {}",
            b.len(),
            data.p()
        )));
    }
    let n = stats.n as f64;
    let p = data.p() as f64;
    let mut alpha2 = stats.mean.clone();
    let mut converged = false;
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    for k in 0..config.max_iter {
        let (next, residual) =
            intermediate_step(&alpha2, &stats, b, config.intermediate_form, k)?;
        ensure_finite("multiplier", k, next.as_slice())?;
        let change = (&next - &alpha2).norm();
        if config.record_trace {
            trace.push(IterationTrace {
                step: k,
                changes: vec![change],
                constraint_residual: residual,
            });
        }
        let done = converged_rel(change, alpha2.norm(), config.tol);
        alpha2 = next;
        iterations = k + 1;
        if done {
            converged = true;
            break;
        }
    }
    let mu = &stats.mean - &alpha2 / n;
    let mut u = stats.scatter_about(&mu);
    u += &alpha2 * mu.transpose() * 2.0;
    let det_u = u.determinant();
    if !(det_u > 0.0) {
        return Err(Error::Divergence {
            iteration: iterations,
            detail: format!("determinant of U(alpha2) is {det_u:.3e} at exit"),
        });
    }
    let raw_sigma = &u / det_u.powf(1.0 / p);
    let gap = symmetry_gap(&raw_sigma);
    // The relaxed constraint is satisfied by the reconstruction as-is; the
    // reported estimate carries its symmetrized version.
    let relaxed = (&raw_sigma * b - &mu).norm();
    let sigma = symmetrize(&raw_sigma)?;
    let alpha1 = 0.5 * (det_u.powf(1.0 / p) - n);
    let estimate = EstimatePair::new(mu, sigma)?;
    Ok(finish_report(
        estimate,
        LagrangeState {
            alpha1,
            alpha2: Alpha2::Vector(alpha2),
        },
        iterations,
        converged,
        None,
        Some(relaxed),
        gap,
        trace,
    ))
}

/// Four-parameter fixed-point iteration for the full constraint set. Each
/// covariance iterate is symmetrized and, when needed, repaired to positive
/// definiteness; the loop stops once at least two of the four parameter
/// blocks meet the tolerance, or at the iteration cap.
///
/// The printed update map is numerically fragile: the multiplier inflates
/// with the squared mean norm and the lagged denominator lets the iterate
/// determinant drift, so runs frequently break down mid-iteration instead of
/// converging. A breakdown is not an error here: the solver then reports the
/// highest-likelihood iterate seen, flagged as non-converged, because the
/// simulation protocol treats whatever the loop last produced as the raw
/// estimator. The contracting update variants are available through
/// [`SolverConfig::stabilized`].
pub fn smle(data: &Dataset, config: &SolverConfig) -> Result<SolverReport> {
    let stats = require_more_rows_than_cols(data)?;
    let n = stats.n as f64;
    let p = data.p();
    let pf = p as f64;
    let xbar = stats.mean.clone();
    let identity = DMatrix::identity(p, p);

    let mut sigma = stats.scatter.clone();
    let mut mu = xbar.clone();
    let mut alpha2 = xbar.clone();
    let mut alpha1 = f64::NAN;

    let mut converged = false;
    let mut blocks = [false; 4];
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    let mut last_gap = 0.0;
    let mut best: Option<(f64, EstimatePair, f64, DVector<f64>)> = None;
    let mut breakdown: Option<Error> = None;

    if config.max_iter == 0 {
        let m0 = stats.scatter_about(&mu) + &alpha2 * mu.transpose() * 2.0;
        let d0 = m0.determinant();
        let a1 = if d0 > 0.0 {
            0.5 * (d0.powf(1.0 / pf) - n)
        } else {
            f64::NAN
        };
        let estimate = EstimatePair::new(mu, sigma)?;
        return Ok(finish_report(
            estimate,
            LagrangeState {
                alpha1: a1,
                alpha2: Alpha2::Vector(alpha2),
            },
            0,
            false,
            None,
            None,
            0.0,
            Vec::new(),
        ));
    }

    for k in 0..config.max_iter {
        let a_mu = stats.scatter_about(&mu);
        let m = &a_mu + &alpha2 * mu.transpose() * 2.0;
        let det_m = m.determinant();
        if !(det_m > 0.0) {
            breakdown = Some(Error::Divergence {
                iteration: k,
                detail: format!("determinant {det_m:.3e} where a p-th root is required"),
            });
            break;
        }
        let alpha1_next = 0.5 * (det_m.powf(1.0 / pf) - n);
        // The bootstrap sets alpha1^(0) = alpha1^(1) at the first iteration.
        let alpha1_cur = match config.alpha1_denominator {
            Alpha1Denominator::Lagged => {
                if k == 0 {
                    alpha1_next
                } else {
                    alpha1
                }
            }
            Alpha1Denominator::Current => alpha1_next,
        };
        let denom = n + 2.0 * alpha1_cur;
        if !(denom.abs() > 1e-300) {
            breakdown = Some(Error::SingularStep {
                iteration: k,
                value: denom,
            });
            break;
        }
        let raw_sigma = &m / denom;
        last_gap = symmetry_gap(&raw_sigma);
        let sigma_next = match symmetrize(&raw_sigma).and_then(|s| repair_positive_definite(&s)) {
            Ok(s) => s,
            Err(e) => {
                breakdown = Some(e);
                break;
            }
        };
        let alpha2_scale = match config.alpha2_update {
            Alpha2Update::Printed => 0.5,
            Alpha2Update::MeanNormalized => 0.5 / mu.norm_squared(),
        };
        let alpha2_next = (&sigma * denom - &a_mu) * &mu * alpha2_scale;
        let inner = &xbar - (&identity - &sigma) * &alpha2 / n;
        let mu_next = match config.mu_update {
            MuUpdate::Printed => &sigma * inner,
            MuUpdate::Stationarity => inner,
        };
        if sigma_next.iter().any(|v| !v.is_finite())
            || mu_next.iter().any(|v| !v.is_finite())
            || alpha2_next.iter().any(|v| !v.is_finite())
        {
            breakdown = Some(Error::Numeric(format!(
                "non-finite iterate at iteration {k}"
            )));
            break;
        }

        let changes = [
            (alpha1_next - alpha1_cur).abs(),
            (&sigma_next - &sigma).norm(),
            (&alpha2_next - &alpha2).norm(),
            (&mu_next - &mu).norm(),
        ];
        blocks = [
            converged_rel(changes[0], alpha1_cur.abs(), config.tol),
            converged_rel(changes[1], sigma.norm(), config.tol),
            converged_rel(changes[2], alpha2.norm(), config.tol),
            converged_rel(changes[3], mu.norm(), config.tol),
        ];
        alpha1 = alpha1_next;
        sigma = sigma_next;
        alpha2 = alpha2_next;
        mu = mu_next;
        iterations = k + 1;
        if config.record_trace {
            trace.push(IterationTrace {
                step: k,
                changes: changes.to_vec(),
                constraint_residual: (&sigma * &mu - &mu).norm(),
            });
        }
        let candidate = EstimatePair::new(mu.clone(), sigma.clone())?;
        if denom > 0.0 {
            if let Ok(ll) = crate::likelihood::log_likelihood_stats(&candidate, &stats) {
                if ll.is_finite()
                    && best.as_ref().map_or(true, |(b, _, _, _)| ll > *b)
                {
                    best = Some((ll, candidate, alpha1, alpha2.clone()));
                }
            }
        }
        // The first iteration's alpha1 change is zero by construction, so the
        // stopping rule only engages from the second iteration.
        if k >= 1 && blocks.iter().filter(|b| **b).count() >= 2 {
            converged = true;
            break;
        }
    }

    let (estimate, alpha1_out, alpha2_out) = if converged {
        (EstimatePair::new(mu, sigma)?, alpha1, alpha2)
    } else {
        match best {
            Some((_, est, a1, a2)) => (est, a1, a2),
            None => {
                return Err(breakdown.unwrap_or(Error::Numeric(
                    "no valid iterate produced".into(),
                )))
            }
        }
    };
    Ok(finish_report(
        estimate,
        LagrangeState {
            alpha1: alpha1_out,
            alpha2: Alpha2::Vector(alpha2_out),
        },
        iterations,
        converged,
        Some(blocks),
        None,
        last_gap,
        trace,
    ))
}

/// Explicit-multiplier double iteration: an outer loop re-anchors the
/// expectation vector m at the current statistic, an inner loop moves the
/// statistic along `V grad h(m)` with the multiplier computed in closed form.
/// Positive definiteness of the unpacked covariance is reported, never forced.
pub fn sc_mle(data: &Dataset, config: &SolverConfig) -> Result<SolverReport> {
    let stats = require_more_rows_than_cols(data)?;
    let p = data.p();
    let t0 = canonical_statistic(&stats);
    let mut t = t0.clone();
    let mut m = t0.clone();
    let mut alpha = 0.0f64;
    let mut converged = false;
    let mut outer_used = 0usize;
    let mut trace = Vec::new();

    for l in 0..config.inner_max_iter {
        m = t.clone();
        let (mu_m, second_m) = split_statistic(&m, p);
        let mut sigma_m = second_m;
        for c in 0..p {
            for r in 0..p {
                sigma_m[(r, c)] -= mu_m[r] * mu_m[c];
            }
        }
        let sigma_m = symmetrize(&sigma_m)?;
        let anchor = EstimatePair::new(mu_m, sigma_m)?;
        let grad_m = scalar_constraint_gradient(&m, p);
        let v = statistic_covariance(&anchor, stats.n);
        let direction = &v * &grad_m;

        let mut tk = t.clone();
        for k in 0..config.inner_max_iter {
            let h_t = scalar_constraint(&tk, p);
            let grad_t = scalar_constraint_gradient(&tk, p);
            let den = direction.dot(&grad_t);
            if den.abs() < 1e-12 {
                return Err(Error::SingularStep {
                    iteration: k,
                    value: den,
                });
            }
            alpha = -h_t / den;
            let t_next = &tk + &direction * alpha;
            ensure_finite("statistic", k, t_next.as_slice())?;
            let change = (&t_next - &tk).norm();
            tk = t_next;
            if change <= config.epsilon {
                break;
            }
        }
        t = tk;
        outer_used = l + 1;
        let outer_gap = (&t - &m).norm();
        if config.record_trace {
            trace.push(IterationTrace {
                step: l,
                changes: vec![outer_gap],
                constraint_residual: scalar_constraint(&m, p).abs(),
            });
        }
        if outer_gap <= config.epsilon {
            converged = true;
            break;
        }
    }

    let (mu_hat, second) = split_statistic(&m, p);
    let mut raw_sigma = second;
    for c in 0..p {
        for r in 0..p {
            raw_sigma[(r, c)] -= mu_hat[r] * mu_hat[c];
        }
    }
    let gap = symmetry_gap(&raw_sigma);
    let sigma_hat = symmetrize(&raw_sigma)?;
    let estimate = EstimatePair::new(mu_hat, sigma_hat)?;
    Ok(finish_report(
        estimate,
        LagrangeState {
            alpha1: 0.0,
            alpha2: Alpha2::Scalar(alpha),
        },
        outer_used,
        converged,
        None,
        None,
        gap,
        trace,
    ))
}

/// Pull `point` back to the surface of the closed ball around `center` along
/// the segment from the center.
pub fn ball_projection(
    center: &DVector<f64>,
    radius: f64,
    point: &DVector<f64>,
) -> DVector<f64> {
    let offset = point - center;
    let dist = offset.norm();
    if dist <= radius || dist == 0.0 {
        point.clone()
    } else {
        center + offset * (radius / dist)
    }
}

fn stack_theta(mean: &DVector<f64>, cov: &DMatrix<f64>) -> DVector<f64> {
    let p = mean.len();
    let mut theta = DVector::zeros(p + p * p);
    theta.rows_mut(0, p).copy_from(mean);
    theta.rows_mut(p, p * p).copy_from(&vec_of(cov));
    theta
}

fn big_b_matrix(sigma_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let p = sigma_inv.nrows();
    let dim = p + p * p;
    let mut b = DMatrix::zeros(dim, dim);
    b.view_mut((0, 0), (p, p)).copy_from(sigma_inv);
    let kron = sigma_inv.kronecker(sigma_inv);
    b.view_mut((p, p), (p * p, p * p)).copy_from(&kron);
    b
}

fn assemble_coefficient_inverse(
    est: &EstimatePair,
) -> Result<DMatrix<f64>> {
    let p = est.p();
    let dim = p + p * p;
    let sym = symmetrize(&est.cov)?;
    let chol = sym.cholesky().ok_or_else(|| {
        Error::RankDeficient("covariance block of the expansion point is not PD".into())
    })?;
    let sigma_inv = chol.inverse();
    let b = big_b_matrix(&sigma_inv);
    let h = constraint_jacobian(est);
    let total = dim + p;
    let mut e = DMatrix::zeros(total, total);
    e.view_mut((0, 0), (dim, dim)).copy_from(&b);
    e.view_mut((0, dim), (dim, p)).copy_from(&(-&h));
    e.view_mut((dim, 0), (p, dim)).copy_from(&(-h.transpose()));
    let e_norm = inf_norm(&e);
    let inv = e
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned("coefficient matrix is singular".into()))?;
    let cond = e_norm * inf_norm(&inv);
    if cond > 1e12 {
        return Err(Error::IllConditioned(format!(
            "coefficient matrix condition estimate {cond:.3e} exceeds 1e12"
        )));
    }
    Ok(inv)
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for r in 0..m.nrows() {
        let mut sum = 0.0;
        for c in 0..m.ncols() {
            sum += m[(r, c)].abs();
        }
        best = best.max(sum);
    }
    best
}

/// Newton-type iteration with the coefficient matrix inverted once at the
/// starting point `(xbar, vec(S))`, iterates confined to the closed ball of
/// radius `||theta0||` around that point, and the covariance block
/// symmetrized after every step.
pub fn as_mle(data: &Dataset, config: &SolverConfig) -> Result<SolverReport> {
    let stats = require_more_rows_than_cols(data)?;
    let n = stats.n as f64;
    let p = data.p();
    let dim = p + p * p;
    let start = EstimatePair::new(stats.mean.clone(), stats.scatter.clone())?;
    let theta0 = stack_theta(&start.mean, &start.cov);
    let radius = theta0.norm();
    let mut einv = assemble_coefficient_inverse(&start)?;

    let mut theta = theta0.clone();
    let mut beta = DVector::zeros(p);
    let mut converged = false;
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    let mut last_gap = 0.0;

    for j in 0..config.max_iter {
        if let Some(every) = config.as_refresh_every {
            if every > 0 && j > 0 && j % every == 0 {
                let mu_now = DVector::from(theta.rows(0, p).clone_owned());
                let sigma_now = symmetrize(&unvec(&theta.rows(p, p * p).clone_owned(), p))?;
                einv = assemble_coefficient_inverse(&EstimatePair::new(mu_now, sigma_now)?)?;
            }
        }
        let mu = DVector::from(theta.rows(0, p).clone_owned());
        let sigma = unvec(&theta.rows(p, p * p).clone_owned(), p);
        let sigma_inv = sigma.clone().try_inverse().ok_or_else(|| {
            Error::Numeric(format!("singular covariance block at iteration {j}"))
        })?;
        let a = stats.scatter_about(&mu);
        let g_mu = &sigma_inv * (&stats.mean - &mu) * n;
        let g_sigma = (&sigma_inv * &a * &sigma_inv - &sigma_inv * n) * 0.5;
        let est_now = EstimatePair::new(mu.clone(), sigma.clone())?;
        let h_jac = constraint_jacobian(&est_now);
        let mut grad = DVector::zeros(dim);
        grad.rows_mut(0, p).copy_from(&(&g_mu / n));
        grad.rows_mut(p, p * p).copy_from(&(vec_of(&g_sigma) / n));
        grad += &h_jac * &beta;
        let h_vec = &sigma * &mu - &mu;

        let mut rhs = DVector::zeros(dim + p);
        rhs.rows_mut(0, dim).copy_from(&grad);
        rhs.rows_mut(dim, p).copy_from(&h_vec);
        let step = &einv * rhs;
        ensure_finite("step", j, step.as_slice())?;

        let theta_prev = theta.clone();
        for i in 0..dim {
            theta[i] += step[i];
        }
        for i in 0..p {
            beta[i] += step[dim + i];
        }
        // Symmetrize the covariance block, then enforce the ball.
        let sigma_new = unvec(&theta.rows(p, p * p).clone_owned(), p);
        last_gap = symmetry_gap(&sigma_new);
        let sigma_sym = symmetrize(&sigma_new)?;
        theta.rows_mut(p, p * p).copy_from(&vec_of(&sigma_sym));
        theta = ball_projection(&theta0, radius, &theta);

        let change = (&theta - &theta_prev).norm();
        iterations = j + 1;
        if config.record_trace {
            let mu_now = theta.rows(0, p).clone_owned();
            let sig_now = unvec(&theta.rows(p, p * p).clone_owned(), p);
            trace.push(IterationTrace {
                step: j,
                changes: vec![change, (&theta - &theta0).norm()],
                constraint_residual: (&sig_now * &mu_now - &mu_now).norm(),
            });
        }
        if converged_rel(change, theta_prev.norm(), config.tol) {
            converged = true;
            break;
        }
    }

    let mu_hat = DVector::from(theta.rows(0, p).clone_owned());
    let sigma_hat = symmetrize(&unvec(&theta.rows(p, p * p).clone_owned(), p))?;
    let estimate = EstimatePair::new(mu_hat, sigma_hat)?;
    Ok(finish_report(
        estimate,
        LagrangeState {
            alpha1: 0.0,
            alpha2: Alpha2::Vector(beta * n),
        },
        iterations,
        converged,
        None,
        None,
        last_gap,
        trace,
    ))
}

/// Asymptotic covariance blocks of the A&S estimator: `P` for the parameter
/// vector and `R` for the scaled multiplier, with
/// `R = -[(Sigma-I) Sigma (Sigma-I) + (mu' Sigma mu) Sigma]^-1` and
/// `P = B^-1 [I - H Q']`, `Q = -B^-1 H R`.
pub fn as_asymptotic_covariance(est: &EstimatePair) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = est.p();
    let sym = symmetrize(&est.cov)?;
    if sym.clone().cholesky().is_none() {
        return Err(Error::Contract(
            "covariance must be positive definite".into(),
        ));
    }
    let identity = DMatrix::identity(p, p);
    let shifted = &sym - &identity;
    let quad = (est.mean.transpose() * &sym * &est.mean)[(0, 0)];
    let inner = &shifted * &sym * &shifted + &sym * quad;
    let inner_inv = inner.clone().try_inverse().ok_or_else(|| {
        Error::IllConditioned(
            "(Sigma - I) Sigma (Sigma - I) + (mu' Sigma mu) Sigma is singular".into(),
        )
    })?;
    let r = -inner_inv;
    // B^-1 = blockdiag(Sigma, Sigma kron Sigma).
    let dim = p + p * p;
    let mut b_inv = DMatrix::zeros(dim, dim);
    b_inv.view_mut((0, 0), (p, p)).copy_from(&sym);
    let kron = sym.kronecker(&sym);
    b_inv.view_mut((p, p), (p * p, p * p)).copy_from(&kron);
    let h = constraint_jacobian(est);
    let q = -(&b_inv * &h * &r);
    let p_block = &b_inv * (DMatrix::identity(dim, dim) - &h * q.transpose());
    Ok((p_block, r))
}
