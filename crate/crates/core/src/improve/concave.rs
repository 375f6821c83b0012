use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::problem::ProblemSpec;
use crate::structure::detect_block_structure;

/// Eigenvalue threshold for treating `L` as negative semidefinite.
const NSD_TOL: f64 = 1e-12;
/// Added to `lambda_max(L)` when shifting.
const SHIFT_MARGIN: f64 = 1e-6;

/// Returns a problem whose terminal form is concave, plus the shift applied.
///
/// A negative semidefinite `L` is returned unchanged. Otherwise the norm
/// invariant of block-Hamiltonian systems allows replacing `L` by
/// `L - alpha I` with `alpha = lambda_max(L) + 1e-6`; the objective then moves
/// by the constant `-alpha |x0|^2`. Without that structure the global method
/// does not apply.
pub fn ensure_concave_terminal(p: &ProblemSpec) -> Result<(ProblemSpec, f64)> {
    let lambda_max =
        *p.l.symmetric_eigenvalues()?
            .last()
            .expect("non-empty spectrum");
    if lambda_max <= NSD_TOL {
        return Ok((p.clone(), 0.0));
    }
    if detect_block_structure(&p.a, &p.b).is_none() {
        return Err(Error::GlobalInapplicable(format!(
            "L has a positive eigenvalue {lambda_max} and (A, B) lacks the block-Hamiltonian \
             structure needed to shift it"
        )));
    }
    let alpha = lambda_max + SHIFT_MARGIN;
    let shifted = p.l.add_scaled(-alpha, &Matrix::identity(p.dim()))?;
    Ok((p.with_l(shifted), alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn negative_definite_is_unchanged() {
        let p = catalog::example_one();
        let (q, shift) = ensure_concave_terminal(&p).unwrap();
        assert_eq!(shift, 0.0);
        assert_eq!(q, p);
    }

    #[test]
    fn identity_is_shifted_with_structure() {
        let p = catalog::example_one().with_l(Matrix::identity(4));
        let (q, shift) = ensure_concave_terminal(&p).unwrap();
        assert!((shift - (1.0 + 1e-6)).abs() < 1e-12);
        for i in 0..4 {
            assert!((q.l[(i, i)] + 1e-6).abs() < 1e-12);
        }
        assert!(q
            .l
            .symmetric_eigenvalues()
            .unwrap()
            .iter()
            .all(|v| *v < 0.0));
    }

    #[test]
    fn identity_without_structure_fails() {
        let mut p = catalog::example_one().with_l(Matrix::identity(4));
        p.a[(0, 0)] = 1.0;
        assert!(matches!(
            ensure_concave_terminal(&p),
            Err(Error::GlobalInapplicable(_))
        ));
    }
}
