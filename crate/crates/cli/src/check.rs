//! Quick invariant battery behind the `check` subcommand: a condensed version
//! of the library's property suites on freshly drawn random instances.

use eigenmean::diagnostics::{
    counterexample_direction, directional_curvature, wishart_coverage, CurvatureQuery,
};
use eigenmean::enforce::{modify_m1, modify_m2, modify_m3, BasisStrategy};
use eigenmean::likelihood::{log_likelihood, score, sufficient_stats, Dataset, EstimatePair};
use eigenmean::linalg::{
    gram_schmidt_from, rank_two_eigenvalues, spectral_decompose, symmetrize, RankTwoPair,
};
use eigenmean::solvers::{smle, SolverConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::experiment::{run_experiment, ExperimentConfig, Method, Modifier};

pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_vector(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample(StandardNormal))
}

fn random_pd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    symmetrize(&(&g * g.transpose() + DMatrix::identity(p, p) * (0.2 + rng.gen::<f64>()))).unwrap()
}

pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Modifier constraint exactness.
    {
        let mut worst: f64 = 0.0;
        let mut pass = true;
        for trial in 0..100 {
            let p = 2 + trial % 11;
            let pre =
                EstimatePair::new(random_vector(&mut rng, p), random_pd(&mut rng, p)).unwrap();
            for m in [
                modify_m1(&pre),
                modify_m2(&pre),
                modify_m3(&pre, BasisStrategy::Gap),
                modify_m3(&pre, BasisStrategy::Kmeans2),
            ] {
                match m {
                    Ok(m) => {
                        let scale = m.estimate.mean.norm().max(1.0);
                        let score = (m.residuals.h_norm() / scale).max(m.residuals.det_gap);
                        worst = worst.max(score);
                        pass &= score <= 1e-8 && m.estimate.is_positive_definite();
                    }
                    Err(_) => pass = false,
                }
            }
        }
        out.push(CheckOutcome {
            name: "modifier constraint exactness",
            passed: pass,
            detail: format!("worst scaled residual {worst:.3e}"),
        });
    }

    // Rank-two eigenvalue formula vs the dense eigensolver.
    {
        let mut worst: f64 = 0.0;
        for trial in 0..200 {
            let p = 2 + trial % 9;
            let a = random_vector(&mut rng, p);
            let b = random_vector(&mut rng, p);
            let m = symmetrize(&(&a * b.transpose() + &b * a.transpose())).unwrap();
            let sd = spectral_decompose(&m).unwrap();
            let (hi, lo) = rank_two_eigenvalues(&RankTwoPair { a, b }).unwrap();
            worst = worst
                .max((sd.values[0] - hi).abs())
                .max((sd.values[p - 1] - lo).abs());
        }
        out.push(CheckOutcome {
            name: "rank-two eigenvalues vs eigensolver",
            passed: worst <= 1e-10,
            detail: format!("worst gap {worst:.3e}"),
        });
    }

    // Pinned Gram-Schmidt orthonormality.
    {
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let p = 7;
            let first = random_vector(&mut rng, p);
            let rest: Vec<_> = (0..p - 1).map(|_| random_vector(&mut rng, p)).collect();
            let basis = gram_schmidt_from(&first, &rest).unwrap().basis;
            let gram = basis.transpose() * &basis;
            worst = worst.max((gram - DMatrix::identity(p, p)).amax());
        }
        out.push(CheckOutcome {
            name: "pinned Gram-Schmidt orthonormality",
            passed: worst <= 1e-10,
            detail: format!("worst Gram gap {worst:.3e}"),
        });
    }

    // Score vs finite differences.
    {
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let p = 3;
            let n = 12;
            let data = Dataset::new(DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal)))
                .unwrap();
            let est =
                EstimatePair::new(random_vector(&mut rng, p), random_pd(&mut rng, p)).unwrap();
            let (d_mu, _) = score(&est, &data).unwrap();
            for i in 0..p {
                let h = 1e-5 * (1.0 + est.mean[i].abs());
                let mut up = est.clone();
                up.mean[i] += h;
                let mut dn = est.clone();
                dn.mean[i] -= h;
                let fd = (log_likelihood(&up, &data).unwrap()
                    - log_likelihood(&dn, &data).unwrap())
                    / (2.0 * h);
                worst = worst.max((d_mu[i] - fd).abs() / fd.abs().max(1.0));
            }
        }
        out.push(CheckOutcome {
            name: "score vs finite differences",
            passed: worst <= 1e-5,
            detail: format!("worst relative error {worst:.3e}"),
        });
    }

    // Concavity inside the region, reversal outside.
    {
        let n = 20;
        let p = 4;
        let data = Dataset::new(DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))).unwrap();
        let s = sufficient_stats(&data).unwrap().scatter;
        let mut pass = true;
        for _ in 0..10 {
            let t: f64 = rng.gen();
            let sigma = &s * (0.05 + 1.85 * t);
            for _ in 0..10 {
                let d = symmetrize(&DMatrix::from_fn(p, p, |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                }))
                .unwrap();
                let q = CurvatureQuery {
                    sigma: sigma.clone(),
                    direction: d,
                    scatter: s.clone(),
                    mean_gap: DMatrix::zeros(p, p),
                    n,
                };
                pass &= directional_curvature(&q).unwrap() <= 1e-10;
            }
        }
        for _ in 0..10 {
            let sigma = &s * (2.2 + rng.gen::<f64>());
            let d = counterexample_direction(&sigma, &s).unwrap();
            let q = CurvatureQuery {
                sigma,
                direction: d,
                scatter: s.clone(),
                mean_gap: DMatrix::zeros(p, p),
                n,
            };
            pass &= directional_curvature(&q).unwrap() >= -1e-10;
        }
        out.push(CheckOutcome {
            name: "directional concavity",
            passed: pass,
            detail: "interior and counterexample directions".into(),
        });
    }

    // SMLE zero-iteration identity.
    {
        let data = Dataset::new(DMatrix::from_fn(30, 3, |_, _| rng.sample(StandardNormal)))
            .unwrap();
        let stats = sufficient_stats(&data).unwrap();
        let report = smle(
            &data,
            &SolverConfig {
                max_iter: 0,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        let pass = report.estimate.mean == stats.mean && report.estimate.cov == stats.scatter;
        out.push(CheckOutcome {
            name: "smle zero-iteration identity",
            passed: pass,
            detail: "initial state returned bit-exactly".into(),
        });
    }

    // Experiment determinism on a miniature grid.
    {
        let config = ExperimentConfig {
            grid: vec![(20, 3)],
            reps: 2,
            methods: vec![Method::Smle],
            modifiers: vec![Modifier::None, Modifier::M3Kmeans],
            seed: seed ^ 0xabcd,
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&config).map(|(t, _)| t.to_csv());
        let b = run_experiment(&config).map(|(t, _)| t.to_csv());
        let pass = matches!((&a, &b), (Ok(x), Ok(y)) if x == y);
        out.push(CheckOutcome {
            name: "experiment determinism",
            passed: pass,
            detail: "identical risks.csv for repeated runs".into(),
        });
    }

    // Wishart coverage determinism.
    {
        let a = wishart_coverage(20, 2, 200, seed).unwrap();
        let b = wishart_coverage(20, 2, 200, seed).unwrap();
        out.push(CheckOutcome {
            name: "wishart coverage determinism",
            passed: a.estimate == b.estimate,
            detail: format!("estimate {:.4}", a.estimate),
        });
    }

    out
}
