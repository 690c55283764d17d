use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::symmetrized;

/// Eigenvalue-floor repair of a symmetric matrix: the input is symmetrized,
/// eigenvalues below `eps * max(|lambda|_max, 1)` are clamped to that floor,
/// and the matrix is rebuilt. Already-SPD inputs pass through (up to the
/// symmetrization) unchanged.
pub fn nearest_spd(m: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "matrix for SPD repair".into(),
        });
    }
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let sym = symmetrized(m);
    let eig = sym.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let floor = eps * max_abs.max(1.0);
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return Ok(sym);
    }
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < floor {
            *v = floor;
        }
    }
    let vecs = &eig.eigenvectors;
    let rebuilt = vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
    Ok(symmetrized(&rebuilt))
}
