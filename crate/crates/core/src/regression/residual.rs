use log::warn;
use nalgebra::DMatrix;

use super::{center, column_means};
use crate::linalg::cholesky_checked;
use crate::error::Result;

/// Diagonal stabilizer added to the centered Gram of `A` when it is singular.
pub const GRAM_EPSILON: f64 = 1e-8;

/// Removes from `H` its linear projection on `A` using sample moments:
/// `H⊥ = H̄ − Ê[H̄Āᵀ] Ê[ĀĀᵀ]⁻¹ Ā`.
///
/// Falls back to adding [`GRAM_EPSILON`] to the diagonal of `Ê[ĀĀᵀ]` when it
/// is singular (logged).
pub fn residualize(h: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    residualize_with(h, a, Some(GRAM_EPSILON))
}

/// [`residualize`] with an explicit stabilizer; `None` turns a singular Gram
/// into an error.
pub fn residualize_with(h: &DMatrix<f64>, a: &DMatrix<f64>, epsilon: Option<f64>) -> Result<DMatrix<f64>> {
    if h.nrows() != a.nrows() {
        return Err(crate::Error::Dimension {
            context: "residualize rows",
            expected: a.nrows(),
            found: h.nrows(),
        });
    }
    let n = a.nrows() as f64;
    let ac = center(a, &column_means(a));
    let hc = center(h, &column_means(h));
    if a.ncols() == 0 {
        return Ok(hc);
    }
    let gram = ac.tr_mul(&ac) / n;
    let cross = ac.tr_mul(&hc) / n;
    let coef = match cholesky_checked(gram.clone(), "residualize Gram of A") {
        Ok(chol) => chol.solve(&cross),
        Err(err) => {
            let Some(eps) = epsilon else {
                return Err(err);
            };
            warn!("centered Gram of A is singular; stabilizing its diagonal with {eps:e}");
            let mut g = gram;
            for i in 0..g.nrows() {
                g[(i, i)] += eps;
            }
            cholesky_checked(g, "residualize Gram of A (stabilized)")?.solve(&cross)
        }
    };
    Ok(hc - ac * coef)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn sample_a() -> DMatrix<f64> {
        DMatrix::from_row_slice(6, 2, &[0.3, 1.2, -1.0, 0.4, 2.2, -0.7, 0.9, 0.1, -0.4, -1.3, 1.7, 2.0])
    }

    #[test]
    fn self_projection_vanishes() {
        let a = sample_a();
        let r = residualize(&a, &a).unwrap();
        assert!(r.amax() < 1e-8);
    }

    #[test]
    fn orthogonal_input_is_unchanged() {
        // Columns with zero mean and zero sample cross-moment.
        let a = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let h = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, -1.0, -1.0]);
        let r = residualize(&h, &a).unwrap();
        assert!((r - h).amax() < 1e-14);
    }

    #[test]
    fn four_row_case_matches_moment_formula() {
        let a = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 4.0, 7.0]);
        let h = DMatrix::from_row_slice(4, 1, &[2.0, 1.0, 5.0, 4.0]);
        // Oracle by hand: ā = 3.5, h̄ = 3, Ā = [-2.5,-1.5,0.5,3.5],
        // H̄ = [-1,-2,2,1]; E[H̄Ā] = (2.5+3+1+3.5)/4 = 2.5,
        // E[ĀĀ] = (6.25+2.25+0.25+12.25)/4 = 5.25; coefficient 2.5/5.25.
        let c = 2.5 / 5.25;
        let expected = [-1.0 + 2.5 * c, -2.0 + 1.5 * c, 2.0 - 0.5 * c, 1.0 - 3.5 * c];
        let r = residualize(&h, &a).unwrap();
        for i in 0..4 {
            assert_close!(r[(i, 0)], expected[i], 1e-12);
        }
    }

    #[test]
    fn output_is_centered_and_orthogonal() {
        let a = sample_a();
        let h = DMatrix::from_fn(6, 3, |i, j| ((i * 5 + j * 11) % 7) as f64 - 0.3 * j as f64);
        let r = residualize(&h, &a).unwrap();
        let ac = center(&a, &column_means(&a));
        for c in 0..3 {
            assert!(r.column(c).sum().abs() / 6.0 <= 1e-10);
        }
        assert!((ac.tr_mul(&r) / 6.0).amax() <= 1e-8);
    }

    #[test]
    fn underdetermined_without_stabilizer_errors() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, 1.0, 5.0]);
        let h = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(matches!(residualize_with(&h, &a, None), Err(Error::Singular { .. })));
        assert!(residualize(&h, &a).is_ok());
    }
}
