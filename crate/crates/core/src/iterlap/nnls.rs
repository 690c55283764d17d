use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Non-negative least squares `min_w ||A w - b||^2, w >= 0` by the
/// Lawson-Hanson active-set method. Inner unconstrained solves go through an
/// SVD of the passive-column submatrix.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: b.len(),
        });
    }
    if m == 0 || n == 0 {
        return Err(Error::Contract("empty NNLS system".into()));
    }

    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let atb_scale = (a.transpose() * b).amax().max(1e-300);
    let tol = 1e-10 * atb_scale;

    let solve_passive = |passive: &[bool]| -> (Vec<usize>, DVector<f64>) {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        if idx.is_empty() {
            return (idx, DVector::zeros(0));
        }
        let sub = DMatrix::from_fn(m, idx.len(), |i, k| a[(i, idx[k])]);
        let z = sub.svd(true, true).solve(b, 1e-12).expect("SVD solve");
        (idx, z)
    };

    for _outer in 0..(10 * n.max(3)) {
        // Dual vector w = A^T (b - A x); most positive entry enters.
        let resid = b - a * &x;
        let w = a.transpose() * &resid;
        let mut best = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol {
                if best.map_or(true, |(_, wv)| w[j] > wv) {
                    best = Some((j, w[j]));
                }
            }
        }
        let Some((enter, _)) = best else {
            break;
        };
        passive[enter] = true;

        // Inner loop: restore feasibility of the passive-set solution.
        for _inner in 0..(10 * n.max(3)) {
            let (idx, z) = solve_passive(&passive);
            if idx.is_empty() {
                break;
            }
            if z.iter().all(|&v| v > tol) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z[k];
                }
                break;
            }
            // Step toward z until the first passive coordinate hits zero.
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if z[k] <= tol {
                    let denom = x[j] - z[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            let alpha = alpha.min(1.0).max(0.0);
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z[k] - x[j]);
            }
            for &j in &idx {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    Ok(x)
}
