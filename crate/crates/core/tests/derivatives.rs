//! Finite-difference oracles for the analytic derivatives: the score against
//! central differences of the log-likelihood, the Hessian blocks against
//! differences of the score and second differences of the log-likelihood, the
//! constraint Jacobian against differences of the vector constraint, and the
//! scalar-constraint gradient against differences over the stacked statistic.

use eigenmean::likelihood::{
    constraint_jacobian, hessian_blocks, log_likelihood, scalar_constraint,
    scalar_constraint_gradient, score, Dataset, EstimatePair,
};
use eigenmean::linalg::{symmetrize, vec_of};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Dataset {
    Dataset::new(DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))).unwrap()
}

fn random_estimate(rng: &mut ChaCha8Rng, p: usize) -> EstimatePair {
    let mean = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov = &g * g.transpose() + DMatrix::identity(p, p) * (0.6 + rng.gen::<f64>());
    EstimatePair::new(mean, symmetrize(&cov).unwrap()).unwrap()
}

/// Symmetric perturbation directions spanning the covariance block: E_ii and
/// E_ij + E_ji. Covariance inputs must stay symmetric, so these are the only
/// admissible probes.
fn symmetric_directions(p: usize) -> Vec<DMatrix<f64>> {
    let mut dirs = Vec::new();
    for i in 0..p {
        for j in i..p {
            let mut d = DMatrix::zeros(p, p);
            d[(i, j)] = 1.0;
            d[(j, i)] = 1.0;
            dirs.push(d);
        }
    }
    dirs
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

#[test]
fn score_matches_loglik_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    for trial in 0..100 {
        let p = 1 + trial % 5;
        let n = (p + 2).max(4 + trial % 17);
        let data = random_dataset(&mut rng, n, p);
        let est = random_estimate(&mut rng, p);
        let (d_mu, d_sigma) = score(&est, &data).unwrap();
        for i in 0..p {
            let h = 1e-5 * (1.0 + est.mean[i].abs());
            let mut up = est.clone();
            up.mean[i] += h;
            let mut dn = est.clone();
            dn.mean[i] -= h;
            let fd = (log_likelihood(&up, &data).unwrap() - log_likelihood(&dn, &data).unwrap())
                / (2.0 * h);
            assert!(
                rel_err(d_mu[i], fd) <= 1e-5,
                "mu gradient off at trial {trial}: {} vs {fd}",
                d_mu[i]
            );
        }
        for dir in symmetric_directions(p) {
            let h = 1e-5 * (1.0 + est.cov.amax());
            let mut up = est.clone();
            up.cov += &dir * h;
            let mut dn = est.clone();
            dn.cov -= &dir * h;
            let fd = (log_likelihood(&up, &data).unwrap() - log_likelihood(&dn, &data).unwrap())
                / (2.0 * h);
            let analytic: f64 = d_sigma.iter().zip(dir.iter()).map(|(a, b)| a * b).sum();
            assert!(
                rel_err(analytic, fd) <= 1e-5,
                "sigma gradient off at trial {trial}: {analytic} vs {fd}"
            );
        }
    }
}

#[test]
fn hessian_blocks_match_score_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(409);
    for trial in 0..20 {
        let p = 3;
        let n = 10;
        let data = random_dataset(&mut rng, n, p);
        let est = random_estimate(&mut rng, p);
        let blocks = hessian_blocks(&est, &data).unwrap();
        let h = 1e-5;
        // mu-direction differences of both score components.
        for j in 0..p {
            let mut up = est.clone();
            up.mean[j] += h;
            let mut dn = est.clone();
            dn.mean[j] -= h;
            let (gu, su) = score(&up, &data).unwrap();
            let (gd, sd) = score(&dn, &data).unwrap();
            for i in 0..p {
                let fd = (gu[i] - gd[i]) / (2.0 * h);
                assert!(
                    rel_err(blocks.mu_mu[(i, j)], fd) <= 1e-4,
                    "mu-mu block off at trial {trial}"
                );
            }
            let fd_sigma = (vec_of(&su) - vec_of(&sd)) / (2.0 * h);
            for r in 0..p * p {
                assert!(
                    rel_err(blocks.sigma_mu[(r, j)], fd_sigma[r]) <= 1e-4,
                    "sigma-mu block off at trial {trial}: {} vs {}",
                    blocks.sigma_mu[(r, j)],
                    fd_sigma[r]
                );
            }
        }
        // Symmetric covariance directions probe the Sigma blocks.
        for dir in symmetric_directions(p) {
            let mut up = est.clone();
            up.cov += &dir * h;
            let mut dn = est.clone();
            dn.cov -= &dir * h;
            let (gu, su) = score(&up, &data).unwrap();
            let (gd, sd) = score(&dn, &data).unwrap();
            let want_mu = (gu - gd) / (2.0 * h);
            let got_mu = &blocks.mu_sigma * vec_of(&dir);
            for i in 0..p {
                assert!(
                    rel_err(got_mu[i], want_mu[i]) <= 1e-4,
                    "mu-sigma block off at trial {trial}: {} vs {}",
                    got_mu[i],
                    want_mu[i]
                );
            }
            let want_sigma = (vec_of(&su) - vec_of(&sd)) / (2.0 * h);
            let got_sigma = &blocks.sigma_sigma * vec_of(&dir);
            for r in 0..p * p {
                assert!(
                    rel_err(got_sigma[r], want_sigma[r]) <= 1e-4,
                    "sigma-sigma block off at trial {trial}"
                );
            }
        }
    }
}

#[test]
fn hessian_blocks_match_second_loglik_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(419);
    let p = 3;
    let n = 12;
    let data = random_dataset(&mut rng, n, p);
    let est = random_estimate(&mut rng, p);
    let blocks = hessian_blocks(&est, &data).unwrap();
    let h = 2e-4;
    let ll = |e: &EstimatePair| log_likelihood(e, &data).unwrap();
    // Cross second differences over (mu_i, symmetric direction D).
    for i in 0..p {
        for dir in symmetric_directions(p) {
            let mut pp = est.clone();
            pp.mean[i] += h;
            pp.cov += &dir * h;
            let mut pm = est.clone();
            pm.mean[i] += h;
            pm.cov -= &dir * h;
            let mut mp = est.clone();
            mp.mean[i] -= h;
            mp.cov += &dir * h;
            let mut mm = est.clone();
            mm.mean[i] -= h;
            mm.cov -= &dir * h;
            let fd = (ll(&pp) - ll(&pm) - ll(&mp) + ll(&mm)) / (4.0 * h * h);
            let got = (blocks.mu_sigma.row(i) * vec_of(&dir))[(0, 0)];
            assert!(
                (got - fd).abs() <= 2e-3 * got.abs().max(1.0),
                "cross second difference off: {got} vs {fd}"
            );
        }
    }
}

#[test]
fn constraint_jacobian_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(421);
    for _ in 0..20 {
        let p = 3;
        let est = random_estimate(&mut rng, p);
        let jac = constraint_jacobian(&est);
        let h = 1e-6;
        let constraint = |e: &EstimatePair| &e.cov * &e.mean - &e.mean;
        // Mean block.
        for i in 0..p {
            let mut up = est.clone();
            up.mean[i] += h;
            let mut dn = est.clone();
            dn.mean[i] -= h;
            let fd = (constraint(&up) - constraint(&dn)) / (2.0 * h);
            for j in 0..p {
                assert!((jac[(i, j)] - fd[j]).abs() <= 1e-6 * fd[j].abs().max(1.0));
            }
        }
        // Covariance block: h is linear in Sigma, so single-entry probes are
        // exact and need no symmetry restriction.
        for c in 0..p {
            for r in 0..p {
                let mut up = est.clone();
                up.cov[(r, c)] += h;
                let mut dn = est.clone();
                dn.cov[(r, c)] -= h;
                let fd = (constraint(&up) - constraint(&dn)) / (2.0 * h);
                for j in 0..p {
                    assert!(
                        (jac[(p + c * p + r, j)] - fd[j]).abs() <= 1e-6 * fd[j].abs().max(1.0)
                    );
                }
            }
        }
    }
}

#[test]
fn scalar_constraint_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(431);
    for _ in 0..20 {
        let p = 3;
        let dim = p + p * p;
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let grad = scalar_constraint_gradient(&v, p);
        let h = 1e-6;
        for i in 0..dim {
            let mut up = v.clone();
            up[i] += h;
            let mut dn = v.clone();
            dn[i] -= h;
            let fd = (scalar_constraint(&up, p) - scalar_constraint(&dn, p)) / (2.0 * h);
            assert!(
                (grad[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                "gradient entry {i}: {} vs {fd}",
                grad[i]
            );
        }
    }
}
