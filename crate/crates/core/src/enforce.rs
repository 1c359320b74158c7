//! Post-processors that modify an arbitrary mean-covariance estimate so it
//! satisfies `Sigma mu = mu` and `|Sigma| = 1` exactly: covariance-only
//! re-alignment (M1), single-eigenvector mean projection (M2), and the
//! regression-based multi-eigenvector re-alignment with basis selection (M3).
//!
//! Rank-one mean terms are realized as unit projectors so both constraints
//! hold for any mean scale; the mean direction is only identifiable up to a
//! constant anyway.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{constraint_residuals, ConstraintResiduals, EstimatePair};
use crate::linalg::{gram_schmidt_from, spectral_decompose, SpectralDecomposition};

/// How M3 splits the regression coefficients into a kept and discarded group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisStrategy {
    /// Largest gap between consecutive sorted absolute coefficients.
    Gap,
    /// Exact 1-d 2-means on the absolute coefficients.
    Kmeans2,
}

/// Which modifier produced a [`ModifiedEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModifierTag {
    M1,
    M2,
    M3Gap,
    M3Kmeans,
}

/// A constraint-satisfying estimate with the bookkeeping needed to audit how
/// it was produced.
#[derive(Debug, Clone)]
pub struct ModifiedEstimate {
    pub estimate: EstimatePair,
    pub method: ModifierTag,
    /// Selected eigenvector indices: the set S for M3, `[i0]` for M2, empty
    /// for M1.
    pub selected: Vec<usize>,
    pub residuals: ConstraintResiduals,
    /// Normalizer applied to the non-unit eigenvalues.
    pub lambda_pr: f64,
    /// M2 selection criterion value at the chosen index.
    pub criterion: Option<f64>,
    /// Re-aligned basis vectors b_k produced by M3's Gram-Schmidt step.
    pub realigned_basis: Vec<DVector<f64>>,
    /// Eigenvalue estimates `b_k' Sigma b_k` paired with `realigned_basis`.
    pub realigned_values: Vec<f64>,
}

/// Geometric mean of a positive multiset; 1 for an empty one (p = 1 edge).
fn geometric_mean(values: impl Iterator<Item = f64>) -> Result<f64> {
    let mut count = 0usize;
    let mut log_sum = 0.0;
    for v in values {
        if v <= 0.0 {
            return Err(Error::Numeric(format!(
                "non-positive eigenvalue {v:.3e} in normalizer"
            )));
        }
        log_sum += v.ln();
        count += 1;
    }
    if count == 0 {
        return Ok(1.0);
    }
    Ok((log_sum / count as f64).exp())
}

/// `sum_k w_k v_k v_k'`, assembled bitwise symmetric.
fn weighted_outer_sum(terms: &[(DVector<f64>, f64)], p: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(p, p);
    for (v, w) in terms {
        for c in 0..p {
            let wc = w * v[c];
            for r in c..p {
                out[(r, c)] += v[r] * wc;
            }
        }
    }
    for c in 0..p {
        for r in (c + 1)..p {
            out[(c, r)] = out[(r, c)];
        }
    }
    out
}

fn decompose_pd(cov: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let sd = spectral_decompose(cov)?;
    let p = sd.values.len();
    if sd.values[p - 1] <= 0.0 {
        return Err(Error::Contract(format!(
            "covariance must be positive definite (min eigenvalue {:.3e})",
            sd.values[p - 1]
        )));
    }
    Ok(sd)
}

/// M1: re-align the covariance's eigenvectors around the unchanged mean
/// direction and rescale so the determinant is one. The smallest original
/// eigenvalue is discarded; the mean direction takes eigenvalue 1.
pub fn modify_m1(pre: &EstimatePair) -> Result<ModifiedEstimate> {
    let p = pre.p();
    if pre.mean.norm() == 0.0 {
        return Err(Error::DegenerateMean(
            "constraint direction undefined for a zero mean".into(),
        ));
    }
    let sd = decompose_pd(&pre.cov)?;
    let rest: Vec<DVector<f64>> = (0..p.saturating_sub(1))
        .map(|k| sd.vectors.column(p - 2 - k).into_owned())
        .collect();
    let basis = gram_schmidt_from(&pre.mean, &rest)?.basis;
    let lambda_pr = geometric_mean(sd.values.iter().take(p - 1).copied())?;
    let mut terms = vec![(basis.column(0).into_owned(), 1.0)];
    for k in 1..p {
        // Output slot k realigns the eigenvector that carried lambda_{p-1-k}.
        terms.push((basis.column(k).into_owned(), sd.values[p - 1 - k] / lambda_pr));
    }
    let cov = weighted_outer_sum(&terms, p);
    let estimate = EstimatePair::new(pre.mean.clone(), cov)?;
    let residuals = constraint_residuals(&estimate);
    Ok(ModifiedEstimate {
        estimate,
        method: ModifierTag::M1,
        selected: Vec::new(),
        residuals,
        lambda_pr,
        criterion: None,
        realigned_basis: Vec::new(),
        realigned_values: Vec::new(),
    })
}

/// M2: project the mean onto the single eigenvector whose eigenvalue best
/// matches the squared projection coefficient, then rescale the rest.
pub fn modify_m2(pre: &EstimatePair) -> Result<ModifiedEstimate> {
    let p = pre.p();
    if pre.mean.norm() == 0.0 {
        return Err(Error::DegenerateMean(
            "every projection coefficient vanishes for a zero mean".into(),
        ));
    }
    let sd = decompose_pd(&pre.cov)?;
    let mut best: Option<(usize, f64)> = None;
    let mut coeffs = Vec::with_capacity(p);
    for i in 0..p {
        let c = sd.vectors.column(i).dot(&pre.mean);
        coeffs.push(c);
        if c == 0.0 {
            continue;
        }
        let crit = {
            let ratio = sd.values[i] / (c * c);
            (1.0 - ratio) * (1.0 - ratio)
        };
        match best {
            Some((_, cur)) if cur <= crit => {}
            _ => best = Some((i, crit)),
        }
    }
    let (i0, criterion) = best.ok_or_else(|| {
        Error::DegenerateMean("mean orthogonal to every eigenvector".into())
    })?;
    let mean = sd.vectors.column(i0).into_owned() * coeffs[i0];
    let lambda_pr = geometric_mean(
        sd.values
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != i0)
            .map(|(_, l)| *l),
    )?;
    let mut terms = vec![(sd.vectors.column(i0).into_owned(), 1.0)];
    for j in 0..p {
        if j != i0 {
            terms.push((sd.vectors.column(j).into_owned(), sd.values[j] / lambda_pr));
        }
    }
    let cov = weighted_outer_sum(&terms, p);
    let estimate = EstimatePair::new(mean, cov)?;
    let residuals = constraint_residuals(&estimate);
    Ok(ModifiedEstimate {
        estimate,
        method: ModifierTag::M2,
        selected: vec![i0],
        residuals,
        lambda_pr,
        criterion: Some(criterion),
        realigned_basis: Vec::new(),
        realigned_values: Vec::new(),
    })
}

/// Split the coefficient magnitudes into a dominant group and the rest.
/// Returns the indices of the dominant group, ascending; every index when all
/// magnitudes are equal.
pub fn select_basis(coeffs: &DVector<f64>, strategy: BasisStrategy) -> Result<Vec<usize>> {
    let p = coeffs.len();
    if p == 0 || coeffs.iter().all(|c| *c == 0.0) {
        return Err(Error::Domain("coefficient vector must be nonzero".into()));
    }
    let mags: Vec<f64> = coeffs.iter().map(|c| c.abs()).collect();
    let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mags.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok((0..p).collect());
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        mags[j]
            .partial_cmp(&mags[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let split = match strategy {
        BasisStrategy::Gap => {
            let mut best_k = 0usize;
            let mut best_gap = f64::NEG_INFINITY;
            for k in 0..p - 1 {
                let gap = mags[order[k]] - mags[order[k + 1]];
                if gap > best_gap {
                    best_gap = gap;
                    best_k = k;
                }
            }
            best_k + 1
        }
        BasisStrategy::Kmeans2 => {
            // Exact 1-d 2-means: scan every split of the sorted magnitudes,
            // minimizing the within-cluster sum of squares via prefix sums.
            let sorted: Vec<f64> = order.iter().map(|&i| mags[i]).collect();
            let mut prefix = vec![0.0; p + 1];
            let mut prefix_sq = vec![0.0; p + 1];
            for (i, v) in sorted.iter().enumerate() {
                prefix[i + 1] = prefix[i] + v;
                prefix_sq[i + 1] = prefix_sq[i] + v * v;
            }
            let wcss = |a: usize, b: usize| -> f64 {
                let len = (b - a) as f64;
                let s = prefix[b] - prefix[a];
                (prefix_sq[b] - prefix_sq[a]) - s * s / len
            };
            let mut best_k = 1usize;
            let mut best = f64::INFINITY;
            for k in 1..p {
                let total = wcss(0, k) + wcss(k, p);
                // Strict comparison keeps the smallest split on ties.
                if total < best {
                    best = total;
                    best_k = k;
                }
            }
            best_k
        }
    };
    let mut selected: Vec<usize> = order[..split].to_vec();
    selected.sort_unstable();
    Ok(selected)
}

/// M3: regress the mean on a selected eigenvector subset, re-orthogonalize
/// the subset around the projected mean, re-estimate the displaced
/// eigenvalues against the original covariance, and normalize to unit
/// determinant.
pub fn modify_m3(pre: &EstimatePair, strategy: BasisStrategy) -> Result<ModifiedEstimate> {
    let p = pre.p();
    if pre.mean.norm() == 0.0 {
        return Err(Error::DegenerateMean(
            "cannot re-align a zero mean".into(),
        ));
    }
    let sd = decompose_pd(&pre.cov)?;
    let coeffs = sd.vectors.transpose() * &pre.mean;
    let selected = select_basis(&coeffs, strategy)?;
    let j0 = selected.len();
    let mut mean = DVector::zeros(p);
    for &i in &selected {
        mean.axpy(coeffs[i], &sd.vectors.column(i).into_owned(), 1.0);
    }
    if mean.norm() == 0.0 {
        let other = match strategy {
            BasisStrategy::Gap => "kmeans2",
            BasisStrategy::Kmeans2 => "gap",
        };
        return Err(Error::DegenerateProjection(format!(
            "mean is orthogonal to the selected eigenvector span; try the {other} strategy"
        )));
    }
    // Pivot position: largest |beta| within the selection, smallest index on ties.
    let mut g = 0usize;
    for (k, &i) in selected.iter().enumerate() {
        if coeffs[i].abs() > coeffs[selected[g]].abs() {
            g = k;
        }
    }
    let gs_rest: Vec<DVector<f64>> = selected
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != g)
        .map(|(_, &i)| sd.vectors.column(i).into_owned())
        .collect();
    let pinned = gram_schmidt_from(&mean, &gs_rest)?;
    if pinned.kept < j0 {
        return Err(Error::Numeric(
            "selected eigenvectors became dependent during re-alignment".into(),
        ));
    }
    let realigned_basis: Vec<DVector<f64>> = (1..j0)
        .map(|k| pinned.basis.column(k).into_owned())
        .collect();
    let realigned_values: Vec<f64> = realigned_basis
        .iter()
        .map(|b| (b.transpose() * &pre.cov * b)[(0, 0)])
        .collect();
    let unselected: Vec<usize> = (0..p).filter(|i| !selected.contains(i)).collect();
    let lambda_pr = geometric_mean(
        unselected
            .iter()
            .map(|&j| sd.values[j])
            .chain(realigned_values.iter().copied()),
    )?;
    let mut terms = vec![(pinned.basis.column(0).into_owned(), 1.0)];
    for &j in &unselected {
        terms.push((sd.vectors.column(j).into_owned(), sd.values[j] / lambda_pr));
    }
    for (b, lam) in realigned_basis.iter().zip(&realigned_values) {
        terms.push((b.clone(), lam / lambda_pr));
    }
    let cov = weighted_outer_sum(&terms, p);
    let estimate = EstimatePair::new(mean, cov)?;
    let residuals = constraint_residuals(&estimate);
    Ok(ModifiedEstimate {
        estimate,
        method: match strategy {
            BasisStrategy::Gap => ModifierTag::M3Gap,
            BasisStrategy::Kmeans2 => ModifierTag::M3Kmeans,
        },
        selected,
        residuals,
        lambda_pr,
        criterion: None,
        realigned_basis,
        realigned_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn residuals_ok(m: &ModifiedEstimate) {
        let scale = m.estimate.mean.norm().max(1.0);
        assert!(
            m.residuals.h_norm() <= 1e-8 * scale,
            "constraint residual {:.3e}",
            m.residuals.h_norm()
        );
        assert!(m.residuals.det_gap <= 1e-8, "det gap {:.3e}", m.residuals.det_gap);
        assert!(m.estimate.is_positive_definite());
    }

    fn random_pair(rng: &mut ChaCha8Rng, p: usize) -> EstimatePair {
        let mean = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
        let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cov = &g * g.transpose() + DMatrix::identity(p, p) * (0.2 + rng.gen::<f64>());
        EstimatePair::new(mean, crate::linalg::symmetrize(&cov).unwrap()).unwrap()
    }

    #[test]
    fn m1_identity_cov_is_fixed_point() {
        let pre = EstimatePair::new(
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let m = modify_m1(&pre).unwrap();
        assert!((m.estimate.cov - DMatrix::identity(2, 2)).amax() <= 1e-12);
        assert!((m.lambda_pr - 1.0).abs() <= 1e-12);
        assert_eq!(m.estimate.mean, pre.mean);
    }

    #[test]
    fn m1_hand_example() {
        let pre = EstimatePair::new(
            DVector::from_vec(vec![0.0, 3.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])),
        )
        .unwrap();
        let m = modify_m1(&pre).unwrap();
        assert!((&m.estimate.cov - DMatrix::identity(2, 2)).amax() <= 1e-12);
        assert!((m.lambda_pr - 4.0).abs() <= 1e-12);
        residuals_ok(&m);
    }

    #[test]
    fn m1_keeps_mean_and_satisfies_constraints_randomly() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..100 {
            let p = rng.gen_range(2..=8);
            let pre = random_pair(&mut rng, p);
            let m = modify_m1(&pre).unwrap();
            assert_eq!(m.estimate.mean, pre.mean);
            residuals_ok(&m);
        }
    }

    #[test]
    fn m1_rejects_zero_mean() {
        let pre = EstimatePair::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(modify_m1(&pre), Err(Error::DegenerateMean(_))));
    }

    #[test]
    fn m2_keeps_matching_eigenvector() {
        // mean is the second eigenvector scaled so lambda = |mean|^2.
        let pre = EstimatePair::new(
            DVector::from_vec(vec![0.0, 2.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 4.0])),
        )
        .unwrap();
        let m = modify_m2(&pre).unwrap();
        assert_eq!(m.selected, vec![1]);
        assert!((&m.estimate.mean - &pre.mean).amax() <= 1e-12);
        assert_eq!(m.criterion, Some(0.0));
        residuals_ok(&m);
    }

    #[test]
    fn m2_hand_example() {
        let pre = EstimatePair::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])),
        )
        .unwrap();
        let m = modify_m2(&pre).unwrap();
        assert_eq!(m.selected, vec![1]);
        assert!((&m.estimate.mean - DVector::from_vec(vec![0.0, 2.0])).amax() <= 1e-12);
        let crit = m.criterion.unwrap();
        assert!((crit - 0.5625).abs() <= 1e-12);
        residuals_ok(&m);
    }

    #[test]
    fn m2_selection_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..100 {
            let p = rng.gen_range(2..=8);
            let pre = random_pair(&mut rng, p);
            let m = modify_m2(&pre).unwrap();
            residuals_ok(&m);
            // Oracle: recompute the criterion for every index.
            let sd = spectral_decompose(&pre.cov).unwrap();
            let mut best = f64::INFINITY;
            for i in 0..p {
                let c = sd.vectors.column(i).dot(&pre.mean);
                if c != 0.0 {
                    let crit = (1.0 - sd.values[i] / (c * c)).powi(2);
                    best = best.min(crit);
                }
            }
            assert!((m.criterion.unwrap() - best).abs() <= 1e-12 * best.max(1.0));
        }
    }

    #[test]
    fn m2_rejects_zero_mean() {
        let pre = EstimatePair::new(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(modify_m2(&pre), Err(Error::DegenerateMean(_))));
    }

    #[test]
    fn select_basis_clear_gap() {
        let c = DVector::from_vec(vec![10.0, 9.0, 0.1, 0.05]);
        assert_eq!(select_basis(&c, BasisStrategy::Gap).unwrap(), vec![0, 1]);
        assert_eq!(select_basis(&c, BasisStrategy::Kmeans2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn select_basis_all_equal() {
        let c = DVector::from_vec(vec![5.0, 5.0, 5.0]);
        assert_eq!(select_basis(&c, BasisStrategy::Gap).unwrap(), vec![0, 1, 2]);
        assert_eq!(
            select_basis(&c, BasisStrategy::Kmeans2).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn select_basis_rejects_zero() {
        let c = DVector::zeros(3);
        assert!(matches!(
            select_basis(&c, BasisStrategy::Gap),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn kmeans_matches_exhaustive_split_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        for _ in 0..200 {
            let p = rng.gen_range(3..=12);
            let split = rng.gen_range(1..p);
            // Planted two-cluster magnitudes around 10 and 0.5.
            let mut c: Vec<f64> = (0..p)
                .map(|i| {
                    let base = if i < split { 10.0 } else { 0.5 };
                    base + 0.3 * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            // Shuffle deterministically.
            for i in (1..p).rev() {
                let j = rng.gen_range(0..=i);
                c.swap(i, j);
            }
            let cv = DVector::from_vec(c.clone());
            let got = select_basis(&cv, BasisStrategy::Kmeans2).unwrap();
            // Oracle: naive scan of all splits of the sorted magnitudes.
            let mut mags: Vec<(usize, f64)> =
                c.iter().map(|v| v.abs()).enumerate().collect();
            mags.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let wcss = |xs: &[(usize, f64)]| {
                let mean = xs.iter().map(|x| x.1).sum::<f64>() / xs.len() as f64;
                xs.iter().map(|x| (x.1 - mean).powi(2)).sum::<f64>()
            };
            let mut best_k = 1;
            let mut best = f64::INFINITY;
            for k in 1..p {
                let total = wcss(&mags[..k]) + wcss(&mags[k..]);
                if total < best - 1e-12 {
                    best = total;
                    best_k = k;
                }
            }
            let mut expect: Vec<usize> = mags[..best_k].iter().map(|x| x.0).collect();
            expect.sort_unstable();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn m3_fixed_point_on_constrained_input() {
        // Sigma = diag(2, 1, 0.5) has det 1 and e2 as the unit eigenvector.
        let pre = EstimatePair::new(
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.5])),
        )
        .unwrap();
        for strategy in [BasisStrategy::Gap, BasisStrategy::Kmeans2] {
            let m = modify_m3(&pre, strategy).unwrap();
            assert!((&m.estimate.mean - &pre.mean).amax() <= 1e-8);
            assert!((&m.estimate.cov - &pre.cov).amax() <= 1e-8);
            residuals_ok(&m);
        }
    }

    #[test]
    fn m3_hand_example() {
        let s = 1.0 / 2.0f64.sqrt();
        let pre = EstimatePair::new(
            DVector::from_vec(vec![s, s, 0.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.5])),
        )
        .unwrap();
        let m = modify_m3(&pre, BasisStrategy::Gap).unwrap();
        assert_eq!(m.selected, vec![0, 1]);
        assert!((&m.estimate.mean - &pre.mean).amax() <= 1e-12);
        assert_eq!(m.realigned_values.len(), 1);
        assert!((m.realigned_values[0] - 1.5).abs() <= 1e-12);
        let b1 = &m.realigned_basis[0];
        assert!((b1[0].abs() - s).abs() <= 1e-12);
        assert!((b1[1].abs() - s).abs() <= 1e-12);
        assert!(b1[2].abs() <= 1e-12);
        assert!((b1[0] + b1[1]).abs() <= 1e-12, "b1 must be the anti-diagonal direction");
        residuals_ok(&m);
    }

    #[test]
    fn m3_random_pairs_both_strategies() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..100 {
            let p = rng.gen_range(2..=8);
            let pre = random_pair(&mut rng, p);
            for strategy in [BasisStrategy::Gap, BasisStrategy::Kmeans2] {
                let m = modify_m3(&pre, strategy).unwrap();
                residuals_ok(&m);
            }
        }
    }

    #[test]
    fn m3_rejects_zero_mean() {
        let pre = EstimatePair::new(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(
            modify_m3(&pre, BasisStrategy::Gap),
            Err(Error::DegenerateMean(_))
        ));
    }

    #[test]
    fn m3_eigenvalue_estimates_minimize_frobenius_objective() {
        // Perturbing any returned lambda' must increase || Sigma - Sigma* ||_F^2
        // with the step-5 (unnormalized) assembly held otherwise fixed.
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let mut exercised = 0;
        for _ in 0..50 {
            let p = rng.gen_range(3..=7);
            let pre = random_pair(&mut rng, p);
            let m = modify_m3(&pre, BasisStrategy::Kmeans2).unwrap();
            if m.realigned_values.is_empty() {
                continue;
            }
            exercised += 1;
            let sd = spectral_decompose(&pre.cov).unwrap();
            let unselected: Vec<usize> =
                (0..p).filter(|i| !m.selected.contains(i)).collect();
            let mean_unit = &m.estimate.mean / m.estimate.mean.norm();
            let objective = |values: &[f64]| {
                let mut terms = vec![(mean_unit.clone(), 1.0)];
                for &j in &unselected {
                    terms.push((sd.vectors.column(j).into_owned(), sd.values[j]));
                }
                for (b, lam) in m.realigned_basis.iter().zip(values) {
                    terms.push((b.clone(), *lam));
                }
                let built = weighted_outer_sum(&terms, p);
                (&pre.cov - built).norm_squared()
            };
            let at_optimum = objective(&m.realigned_values);
            for k in 0..m.realigned_values.len() {
                for bump in [0.99, 1.01] {
                    let mut perturbed = m.realigned_values.clone();
                    perturbed[k] *= bump;
                    assert!(
                        objective(&perturbed) > at_optimum,
                        "lambda' perturbation did not increase the objective"
                    );
                }
            }
        }
        assert!(exercised > 5, "too few multi-vector selections exercised");
    }
}
