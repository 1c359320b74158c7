//! Dense symmetric-matrix utilities: spectral decomposition with a fixed sign
//! convention, exact symmetrization, the rank-two eigenvalue formula, repair of
//! an almost-positive-definite matrix, and Gram-Schmidt with a pinned first
//! vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance below which a Gram-Schmidt residual is treated as
/// linearly dependent and dropped.
pub const GS_DROP_TOL: f64 = 1e-10;

/// Eigenvalues (descending) and matching orthonormal eigenvectors of a
/// symmetric matrix. Column `i` of `vectors` pairs with `values[i]`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    /// Rebuild `P diag(values) P'` from the stored factors.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let p = self.values.len();
        let mut out = DMatrix::zeros(p, p);
        for (i, col) in self.vectors.column_iter().enumerate() {
            let lam = self.values[i];
            for r in 0..p {
                for c in 0..p {
                    out[(r, c)] += lam * col[r] * col[c];
                }
            }
        }
        mirror_lower(&mut out);
        out
    }
}

/// A pair of vectors defining the rank-two perturbation `a b' + b a'`.
#[derive(Debug, Clone)]
pub struct RankTwoPair {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
}

/// Copy the strict lower triangle onto the upper one, making the matrix
/// bitwise symmetric.
fn mirror_lower(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for c in 0..p {
        for r in (c + 1)..p {
            m[(c, r)] = m[(r, c)];
        }
    }
}

/// `(M + M')/2`, bitwise symmetric on output.
pub fn symmetrize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let mut out = m.clone();
    let p = m.nrows();
    for c in 0..p {
        for r in (c + 1)..p {
            let avg = 0.5 * (m[(r, c)] + m[(c, r)]);
            out[(r, c)] = avg;
            out[(c, r)] = avg;
        }
    }
    Ok(out)
}

/// Largest asymmetry gap `max |M - M'|`.
pub fn symmetry_gap(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows().min(m.ncols());
    let mut gap = 0.0f64;
    for c in 0..p {
        for r in (c + 1)..p {
            gap = gap.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    gap
}

/// Spectral decomposition of a symmetric matrix with eigenvalues sorted
/// descending and each eigenvector's largest-magnitude entry made positive
/// (ties broken by the lowest index). Rejects inputs whose asymmetry exceeds
/// `1e-10 * max(1, max|entry|)`.
pub fn spectral_decompose(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let gap = symmetry_gap(m);
    if gap > 1e-10 * scale {
        return Err(Error::Asymmetric { gap });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in eigensolver input".into()));
    }
    let p = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut values = DVector::zeros(p);
    let mut vectors = DMatrix::zeros(p, p);
    for (slot, &src) in order.iter().enumerate() {
        values[slot] = eig.eigenvalues[src];
        let col = eig.eigenvectors.column(src);
        // Sign convention: largest-magnitude entry positive, first such entry
        // winning on ties.
        let mut best = 0usize;
        for r in 1..p {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        let flip = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..p {
            vectors[(r, slot)] = flip * col[r];
        }
    }
    Ok(SpectralDecomposition { values, vectors })
}

/// Nonzero eigenvalues `a'b +- |a||b|` of `a b' + b a'`.
pub fn rank_two_eigenvalues(pair: &RankTwoPair) -> Result<(f64, f64)> {
    let na = pair.a.norm();
    let nb = pair.b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("rank-two pair must be nonzero".into()));
    }
    if pair.a.len() != pair.b.len() {
        return Err(Error::Dimension(format!(
            "rank-two pair lengths {} vs {}",
            pair.a.len(),
            pair.b.len()
        )));
    }
    let dot = pair.a.dot(&pair.b);
    Ok((dot + na * nb, dot - na * nb))
}

/// Make a symmetric matrix with at most one non-positive eigenvalue strictly
/// positive definite by replacing its smallest eigenvalue with the reciprocal
/// of the product of the other eigenvalues. Already-PD inputs are returned
/// unchanged; two or more non-positive eigenvalues violate the contract.
pub fn repair_positive_definite(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // Cheap PD probe first; the full decomposition only runs on the repair path.
    if m.nrows() == m.ncols() && symmetry_gap(m) == 0.0 && m.clone().cholesky().is_some() {
        return Ok(m.clone());
    }
    let sd = spectral_decompose(m)?;
    let p = sd.values.len();
    if sd.values[p - 1] > 0.0 {
        return Ok(m.clone());
    }
    if p >= 2 && sd.values[p - 2] <= 0.0 {
        return Err(Error::Contract(format!(
            "two or more non-positive eigenvalues ({:.3e}, {:.3e})",
            sd.values[p - 2],
            sd.values[p - 1]
        )));
    }
    if p == 1 {
        return Err(Error::Contract(
            "cannot repair a 1x1 matrix with a non-positive entry".into(),
        ));
    }
    let log_prod: f64 = sd.values.iter().take(p - 1).map(|l| l.ln()).sum();
    let replacement = (-log_prod).exp();
    if !replacement.is_finite() || replacement <= 0.0 {
        return Err(Error::Numeric(format!(
            "replacement eigenvalue overflowed ({replacement:.3e})"
        )));
    }
    let mut values = sd.values.clone();
    values[p - 1] = replacement;
    let repaired = SpectralDecomposition {
        values,
        vectors: sd.vectors,
    };
    Ok(repaired.reconstruct())
}

/// Orthonormal basis produced by [`gram_schmidt_from`]: `basis` holds the
/// columns, the first `kept` of which derive from the inputs (in order); the
/// remainder were completed from unit axes.
#[derive(Debug, Clone)]
pub struct PinnedBasis {
    pub basis: DMatrix<f64>,
    pub kept: usize,
}

/// Gram-Schmidt with `first` pinned as the leading direction, processing
/// `rest` in the given order, dropping vectors whose residual falls below
/// `GS_DROP_TOL` times their norm and completing the basis from unit axes
/// (lowest index first). Always returns a full orthonormal basis of R^p.
pub fn gram_schmidt_from(first: &DVector<f64>, rest: &[DVector<f64>]) -> Result<PinnedBasis> {
    let p = first.len();
    let nf = first.norm();
    if nf == 0.0 {
        return Err(Error::Domain("pinned first vector must be nonzero".into()));
    }
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(p);
    cols.push(first / nf);
    let mut kept = 1usize;
    for v in rest {
        if v.len() != p {
            return Err(Error::Dimension(format!(
                "vector of length {} in a {p}-dimensional basis",
                v.len()
            )));
        }
        if cols.len() == p {
            break;
        }
        if let Some(u) = orthogonal_residual(v, &cols, GS_DROP_TOL * v.norm()) {
            cols.push(u);
            kept += 1;
        }
    }
    let mut axis = 0usize;
    while cols.len() < p && axis < p {
        let mut e = DVector::zeros(p);
        e[axis] = 1.0;
        if let Some(u) = orthogonal_residual(&e, &cols, GS_DROP_TOL) {
            cols.push(u);
        }
        axis += 1;
    }
    if cols.len() < p {
        return Err(Error::Numeric(
            "failed to complete an orthonormal basis".into(),
        ));
    }
    Ok(PinnedBasis {
        basis: DMatrix::from_columns(&cols),
        kept,
    })
}

/// Residual of `v` after projecting out `cols`, normalized; `None` when the
/// residual norm falls below `drop_tol`. Two projection sweeps keep the basis
/// orthonormal to machine precision.
fn orthogonal_residual(
    v: &DVector<f64>,
    cols: &[DVector<f64>],
    drop_tol: f64,
) -> Option<DVector<f64>> {
    let mut r = v.clone();
    for _ in 0..2 {
        for u in cols {
            let coef = u.dot(&r);
            r.axpy(-coef, u, 1.0);
        }
    }
    let nr = r.norm();
    if nr < drop_tol {
        None
    } else {
        Some(r / nr)
    }
}

/// Column-stacked vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`] for a `p x p` matrix.
pub fn unvec(v: &DVector<f64>, p: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(p, p, v.as_slice())
}

/// Commutation matrix: the permutation with `K vec(A) = vec(A')`.
pub fn commutation_matrix(p: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(p * p, p * p);
    for c in 0..p {
        for r in 0..p {
            k[(c * p + r, r * p + c)] = 1.0;
        }
    }
    k
}
