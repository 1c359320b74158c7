//! Seeded generation of constrained ground truths, Gaussian sampling, loss
//! computation, and the replication grid that aggregates risks the way the
//! simulation study reports them: raw and modified estimators side by side,
//! with non-positive-definite S&C and A&S outcomes counted and excluded.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use eigenmean::enforce::{modify_m1, modify_m2, modify_m3, BasisStrategy, ModifiedEstimate};
use eigenmean::likelihood::{Dataset, EstimatePair};
use eigenmean::linalg::{spectral_decompose, symmetrize};
use eigenmean::solvers::{as_mle, sc_mle, smle, SolverConfig, SolverReport};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::{derive, STREAM_DATA, STREAM_TRUTH};

/// Estimation methods exposed by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Smle,
    Sc,
    As,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Smle => "SMLE",
            Method::Sc => "SC",
            Method::As => "AS",
        }
    }

    /// Raw outputs of the explicit-multiplier methods may be non-PD; those
    /// replications are counted and dropped from the averages.
    pub fn excludes_non_pd(&self) -> bool {
        matches!(self, Method::Sc | Method::As)
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SMLE" => Ok(Method::Smle),
            "SC" | "S&C" => Ok(Method::Sc),
            "AS" | "A&S" => Ok(Method::As),
            other => Err(format!("unknown method '{other}' (expected SMLE, SC or AS)")),
        }
    }
}

/// Post-processors applied to each raw estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modifier {
    None,
    M1,
    M2,
    M3Gap,
    M3Kmeans,
}

impl Modifier {
    pub fn label(&self) -> &'static str {
        match self {
            Modifier::None => "none",
            Modifier::M1 => "M1",
            Modifier::M2 => "M2",
            Modifier::M3Gap => "M3-gap",
            Modifier::M3Kmeans => "M3-kmeans",
        }
    }

    pub fn apply(&self, est: &EstimatePair) -> Option<eigenmean::Result<ModifiedEstimate>> {
        match self {
            Modifier::None => None,
            Modifier::M1 => Some(modify_m1(est)),
            Modifier::M2 => Some(modify_m2(est)),
            Modifier::M3Gap => Some(modify_m3(est, BasisStrategy::Gap)),
            Modifier::M3Kmeans => Some(modify_m3(est, BasisStrategy::Kmeans2)),
        }
    }
}

impl FromStr for Modifier {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "raw" => Ok(Modifier::None),
            "m1" => Ok(Modifier::M1),
            "m2" => Ok(Modifier::M2),
            "m3-gap" | "m3gap" => Ok(Modifier::M3Gap),
            "m3-kmeans" | "m3kmeans" | "m3" => Ok(Modifier::M3Kmeans),
            other => Err(format!(
                "unknown modifier '{other}' (expected none, M1, M2, M3-gap or M3-kmeans)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Frobenius,
    Stein,
}

impl FromStr for Loss {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frobenius" | "frob" => Ok(Loss::Frobenius),
            "stein" => Ok(Loss::Stein),
            other => Err(format!("unknown loss '{other}' (expected frobenius or stein)")),
        }
    }
}

/// Full description of a simulation run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub grid: Vec<(usize, usize)>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub modifiers: Vec<Modifier>,
    pub losses: Vec<Loss>,
    pub seed: u64,
    pub solver: SolverConfig,
    pub workers: usize,
    pub fixed_truth: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: vec![(50, 5), (50, 25), (100, 10), (300, 30)],
            reps: 100,
            methods: vec![Method::Smle, Method::Sc, Method::As],
            modifiers: vec![Modifier::None, Modifier::M3Kmeans],
            losses: vec![Loss::Frobenius, Loss::Stein],
            seed: 1,
            solver: SolverConfig::default(),
            workers: 0,
            fixed_truth: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.reps == 0 {
            return Err("reps must be at least 1".into());
        }
        if self.grid.is_empty() {
            return Err("grid must contain at least one (n, p) pair".into());
        }
        for &(n, p) in &self.grid {
            if n <= p || p < 2 {
                return Err(format!("grid entry {n}x{p} must satisfy n > p >= 2"));
            }
        }
        if self.methods.is_empty() {
            return Err("at least one method is required".into());
        }
        if self.modifiers.is_empty() {
            return Err("at least one modifier column is required".into());
        }
        Ok(())
    }
}

/// One aggregated row of the risk table.
#[derive(Debug, Clone, Serialize)]
pub struct RiskRow {
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub modifier: String,
    pub mu_risk: Option<f64>,
    pub sigma_frob_risk: Option<f64>,
    pub sigma_stein_risk: Option<f64>,
    pub pd_count: usize,
    pub converged_count: usize,
    pub used_reps: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskTable {
    pub seed: u64,
    pub reps: usize,
    pub workers_configured: usize,
    pub fixed_truth: bool,
    pub rows: Vec<RiskRow>,
}

impl RiskTable {
    /// Fixed-schema CSV with six significant digits; missing values print NA.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,n,p,modifier,mu_risk,sigma_frob_risk,sigma_stein_risk,pd_count,used_reps\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.method,
                r.n,
                r.p,
                r.modifier,
                fmt_sig(r.mu_risk),
                fmt_sig(r.sigma_frob_risk),
                fmt_sig(r.sigma_stein_risk),
                r.pd_count,
                r.used_reps
            ));
        }
        out
    }

    pub fn row(&self, method: Method, n: usize, p: usize, modifier: Modifier) -> Option<&RiskRow> {
        self.rows.iter().find(|r| {
            r.method == method.label() && r.n == n && r.p == p && r.modifier == modifier.label()
        })
    }
}

fn fmt_sig(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.6e}"),
        Some(_) => "NaN".into(),
        None => "NA".into(),
    }
}

/// Losses of one estimate against the truth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RiskValues {
    pub mu: f64,
    pub sigma_frob: f64,
    pub sigma_stein: Option<f64>,
}

/// Scaled squared losses: `|mu-hat - mu|^2 / p`, `|Sigma-hat - Sigma|_F^2 / p`
/// and the Stein loss `tr(Sigma-hat Sigma^-1) - log|Sigma-hat Sigma^-1| - p`
/// (undefined when the estimate is not PD).
pub fn risk_metrics(est: &EstimatePair, truth: &EstimatePair) -> RiskValues {
    let p = truth.p() as f64;
    let mu = (&est.mean - &truth.mean).norm_squared() / p;
    let sigma_frob = (&est.cov - &truth.cov).norm_squared() / p;
    let sigma_stein = stein_loss(est, truth);
    RiskValues {
        mu,
        sigma_frob,
        sigma_stein,
    }
}

fn stein_loss(est: &EstimatePair, truth: &EstimatePair) -> Option<f64> {
    let p = truth.p() as f64;
    let est_chol = symmetrize(&est.cov).ok()?.cholesky()?;
    let truth_chol = symmetrize(&truth.cov).ok()?.cholesky()?;
    let logdet_est: f64 = est_chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let logdet_truth: f64 = truth_chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let inv_truth = truth_chol.inverse();
    let mut trace = 0.0;
    for c in 0..truth.p() {
        for r in 0..truth.p() {
            trace += inv_truth[(r, c)] * est.cov[(c, r)];
        }
    }
    Some(trace - (logdet_est - logdet_truth) - p)
}

/// Mean vector and pre-modification covariance factor for a ground truth:
/// standard-normal mean entries and `Psi = L L'` with N(5,1) diagonal and
/// standard-normal sub-diagonal entries of L, drawn column by column.
pub fn generate_raw_truth(p: usize, seed: u64) -> (DVector<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
    let mut l = DMatrix::zeros(p, p);
    for j in 0..p {
        for i in j..p {
            let z: f64 = rng.sample(StandardNormal);
            l[(i, j)] = if i == j { 5.0 + z } else { z };
        }
    }
    let psi = symmetrize(&(&l * l.transpose())).expect("square");
    (mean, psi)
}

/// A constraint-satisfying ground truth: the raw pair passed through the
/// covariance re-alignment modifier.
pub fn generate_truth(p: usize, seed: u64) -> eigenmean::Result<EstimatePair> {
    let (mean, psi) = generate_raw_truth(p, seed);
    Ok(modify_m1(&EstimatePair::new(mean, psi)?)?.estimate)
}

/// n i.i.d. draws `x = mu + Sigma^(1/2) z` with the symmetric square root.
pub fn sample_dataset(truth: &EstimatePair, n: usize, seed: u64) -> eigenmean::Result<Dataset> {
    let p = truth.p();
    let sd = spectral_decompose(&truth.cov)?;
    if sd.values[p - 1] <= 0.0 {
        return Err(eigenmean::Error::Contract(
            "truth covariance must be positive definite".into(),
        ));
    }
    let root = &sd.vectors
        * DMatrix::from_diagonal(&sd.values.map(|v| v.sqrt()))
        * sd.vectors.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = DMatrix::zeros(n, p);
    for i in 0..n {
        let z = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
        let x = &truth.mean + &root * &z;
        for j in 0..p {
            rows[(i, j)] = x[j];
        }
    }
    Dataset::new(rows)
}

/// Per-modifier outcome inside one replication.
#[derive(Debug, Clone, Serialize)]
pub struct ModifierOutcome {
    pub losses: Option<RiskValues>,
    pub residual_h_norm: Option<f64>,
    pub det_gap: Option<f64>,
    pub error: Option<String>,
}

/// One replication's log entry.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub truth_seed: u64,
    pub data_seed: u64,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub pd: Option<bool>,
    pub residual_h_norm: Option<f64>,
    pub det_gap: Option<f64>,
    pub included: bool,
    pub error: Option<String>,
    pub outcomes: BTreeMap<String, ModifierOutcome>,
}

fn run_solver(method: Method, data: &Dataset, config: &SolverConfig) -> eigenmean::Result<SolverReport> {
    match method {
        Method::Smle => smle(data, config),
        Method::Sc => sc_mle(data, config),
        Method::As => as_mle(data, config),
    }
}

/// Tolerance at which a modified estimate is accepted into the table.
const MODIFIED_RESIDUAL_TOL: f64 = 1e-8;

fn replicate(
    config: &ExperimentConfig,
    method: Method,
    n: usize,
    p: usize,
    rep: usize,
) -> RunRecord {
    let truth_rep = if config.fixed_truth { 0 } else { rep as u64 };
    let truth_seed = derive(
        config.seed,
        &[STREAM_TRUTH, n as u64, p as u64, truth_rep],
    );
    let data_seed = derive(config.seed, &[STREAM_DATA, n as u64, p as u64, rep as u64]);
    let mut record = RunRecord {
        method: method.label().into(),
        n,
        p,
        rep,
        truth_seed,
        data_seed,
        converged: None,
        iterations: None,
        pd: None,
        residual_h_norm: None,
        det_gap: None,
        included: false,
        error: None,
        outcomes: BTreeMap::new(),
    };
    let truth = match generate_truth(p, truth_seed) {
        Ok(t) => t,
        Err(e) => {
            record.error = Some(format!("truth generation failed: {e}"));
            return record;
        }
    };
    let data = match sample_dataset(&truth, n, data_seed) {
        Ok(d) => d,
        Err(e) => {
            record.error = Some(format!("sampling failed: {e}"));
            return record;
        }
    };
    let report = match run_solver(method, &data, &config.solver) {
        Ok(r) => r,
        Err(e) => {
            record.error = Some(format!("solver failed: {e}"));
            return record;
        }
    };
    record.converged = Some(report.converged);
    record.iterations = Some(report.iterations_used);
    record.pd = Some(report.pd);
    record.residual_h_norm = Some(report.residuals.h_norm());
    record.det_gap = Some(report.residuals.det_gap);
    record.included = !(method.excludes_non_pd() && !report.pd);
    if !record.included {
        return record;
    }
    for modifier in &config.modifiers {
        let outcome = match modifier {
            Modifier::None => ModifierOutcome {
                losses: Some(risk_metrics(&report.estimate, &truth)),
                residual_h_norm: Some(report.residuals.h_norm()),
                det_gap: Some(report.residuals.det_gap),
                error: None,
            },
            other => match other.apply(&report.estimate).expect("non-none modifier") {
                Ok(modified) => {
                    let scale = modified.estimate.mean.norm().max(1.0);
                    let h = modified.residuals.h_norm();
                    let gap = modified.residuals.det_gap;
                    if h <= MODIFIED_RESIDUAL_TOL * scale && gap <= MODIFIED_RESIDUAL_TOL {
                        ModifierOutcome {
                            losses: Some(risk_metrics(&modified.estimate, &truth)),
                            residual_h_norm: Some(h),
                            det_gap: Some(gap),
                            error: None,
                        }
                    } else {
                        ModifierOutcome {
                            losses: None,
                            residual_h_norm: Some(h),
                            det_gap: Some(gap),
                            error: Some(format!(
                                "modified estimate violates constraints (h = {h:.3e}, det gap = {gap:.3e})"
                            )),
                        }
                    }
                }
                Err(e) => ModifierOutcome {
                    losses: None,
                    residual_h_norm: None,
                    det_gap: None,
                    error: Some(e.to_string()),
                },
            },
        };
        record.outcomes.insert(modifier.label().into(), outcome);
    }
    record
}

/// Run the full grid. Replications are distributed over a worker pool; the
/// per-replication results are folded in replication order, so the output is
/// bit-identical for any worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(RiskTable, Vec<RunRecord>), String> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| format!("worker pool: {e}"))?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &(n, p) in &config.grid {
        for &method in &config.methods {
            let cell: Vec<RunRecord> = pool.install(|| {
                (0..config.reps)
                    .into_par_iter()
                    .map(|rep| replicate(config, method, n, p, rep))
                    .collect()
            });
            let pd_count = cell.iter().filter(|r| r.pd == Some(true)).count();
            let converged_count = cell.iter().filter(|r| r.converged == Some(true)).count();
            for &modifier in &config.modifiers {
                let mut used = 0usize;
                let mut mu_sum = 0.0;
                let mut frob_sum = 0.0;
                let mut stein_sum = 0.0;
                let mut stein_n = 0usize;
                for rec in &cell {
                    let Some(out) = rec.outcomes.get(modifier.label()) else {
                        continue;
                    };
                    let Some(losses) = out.losses else { continue };
                    used += 1;
                    mu_sum += losses.mu;
                    frob_sum += losses.sigma_frob;
                    if let Some(s) = losses.sigma_stein {
                        stein_sum += s;
                        stein_n += 1;
                    }
                }
                let stein = if config.losses.contains(&Loss::Stein) && stein_n == used && used > 0
                {
                    Some(stein_sum / used as f64)
                } else {
                    None
                };
                rows.push(RiskRow {
                    method: method.label().into(),
                    n,
                    p,
                    modifier: modifier.label().into(),
                    mu_risk: (used > 0).then(|| mu_sum / used as f64),
                    sigma_frob_risk: (used > 0).then(|| frob_sum / used as f64),
                    sigma_stein_risk: stein,
                    pd_count,
                    converged_count,
                    used_reps: used,
                    excluded: config.reps - used,
                });
            }
            records.extend(cell);
        }
    }
    Ok((
        RiskTable {
            seed: config.seed,
            reps: config.reps,
            workers_configured: config.workers,
            fixed_truth: config.fixed_truth,
            rows,
        },
        records,
    ))
}

/// Render the per-run log as JSON lines.
pub fn runs_to_jsonl(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable record"));
        out.push('\n');
    }
    out
}

impl fmt::Display for RiskTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_csv())
    }
}
