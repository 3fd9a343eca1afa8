//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Pivot threshold, relative to the matching diagonal entry, below which a
/// Cholesky factor is treated as rank deficient.
const PIVOT_TOLERANCE: f64 = 1e-11;

/// Relative eigenvalue cutoff for pseudo-inverses of PSD matrices.
const PINV_TOLERANCE: f64 = 1e-12;

/// Cholesky factorization that also rejects numerically rank-deficient
/// matrices: every pivot must keep a relative share of its diagonal entry.
pub(crate) fn cholesky_checked(m: DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let diag = m.diagonal();
    let chol = m.cholesky().ok_or(Error::Singular { context })?;
    let l = chol.l_dirty();
    for i in 0..diag.len() {
        let pivot = l[(i, i)] * l[(i, i)];
        if !(diag[i] > 0.0) || pivot <= PIVOT_TOLERANCE * diag[i] {
            return Err(Error::Singular { context });
        }
    }
    Ok(chol)
}

pub(crate) fn spd_inverse(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    Ok(cholesky_checked(m.clone(), context)?.inverse())
}

/// Moore–Penrose inverse of a symmetric positive semidefinite matrix.
/// Fails if the matrix has a clearly negative eigenvalue.
pub(crate) fn psd_pinv(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale.max(1.0)) {
        return Err(Error::Singular { context });
    }
    let inv = DVector::from_iterator(
        n,
        eig.eigenvalues
            .iter()
            .map(|&l| if l > PINV_TOLERANCE * scale { 1.0 / l } else { 0.0 }),
    );
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}

/// Submatrix with the given rows and columns.
pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub(crate) fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}


/// Serde adapters writing vectors as flat arrays and matrices as row lists.
pub(crate) mod serde_dense {
    use nalgebra::{DMatrix, DVector};
    use serde::{Deserialize, Deserializer, Serializer};

    pub(crate) fn vector<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub(crate) fn vector_de<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }

    pub(crate) fn matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()))
    }
}
