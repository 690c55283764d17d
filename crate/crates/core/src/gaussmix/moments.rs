use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::cholesky_with_jitter;

/// Self-normalized weighted mean and covariance of a point cloud (one row per
/// point). The covariance is the biased estimator and is repaired to SPD by
/// scale-aware jitter escalation; the jittered matrix is returned.
pub fn weighted_moments(
    points: &DMatrix<f64>,
    weights: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = points.nrows();
    let d = points.ncols();
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: weights.len(),
        });
    }
    if n < d + 1 {
        return Err(Error::Contract(format!(
            "need at least d+1 = {} points, got {n}",
            d + 1
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::NonFinite {
            what: "weights".into(),
        });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Contract("weights must have positive sum".into()));
    }

    let mut mean = DVector::zeros(d);
    for i in 0..n {
        mean += points.row(i).transpose() * (weights[i] / total);
    }
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let diff = points.row(i).transpose() - &mean;
        cov += &diff * diff.transpose() * (weights[i] / total);
    }
    let (repaired, _, _) = cholesky_with_jitter(&cov)?;
    Ok((mean, repaired))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn uniform_weights_give_sample_moments() {
        let pts = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let w = DVector::from_element(4, 1.0);
        let (mean, cov) = weighted_moments(&pts, &w).unwrap();
        assert_abs_diff_eq!(mean[0], 2.5, epsilon = 1e-12);
        // Biased (population) variance of {1,2,3,4} is 1.25.
        assert_abs_diff_eq!(cov[(0, 0)], 1.25, epsilon = 1e-9);
    }

    #[test]
    fn one_hot_weights_collapse_to_the_point() {
        let pts = DMatrix::from_row_slice(3, 2, &[5.0, -1.0, 0.0, 0.0, 9.0, 9.0]);
        let w = dvector![1.0, 0.0, 0.0];
        let (mean, cov) = weighted_moments(&pts, &w).unwrap();
        assert_abs_diff_eq!(mean[0], 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(mean[1], -1.0, epsilon = 1e-14);
        // Zero spread: the jitter repair returns jitter * I.
        assert!(cov[(0, 0)] > 0.0);
        assert_abs_diff_eq!(cov[(0, 0)], cov[(1, 1)], epsilon = 1e-300);
        assert_abs_diff_eq!(cov[(0, 1)], 0.0, epsilon = 1e-300);
    }

    #[test]
    fn self_normalized_is_recovers_target_moments() {
        // Importance weights from a wider proposal N(0, 2^2 I) targeting a
        // correlated Gaussian; 1e5 draws recover mean within 2 percent of the
        // proposal std and covariance within 5 percent.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 100_000;
        let t_mean = dvector![1.0, -1.0];
        let t_cov: DMatrix<f64> = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let t_prec = t_cov.clone().try_inverse().unwrap();
        let t_logdet: f64 = t_prec.determinant().ln();
        let mut pts = DMatrix::zeros(n, 2);
        let mut w = DVector::zeros(n);
        for i in 0..n {
            let x = dvector![
                2.0 * rng.sample::<f64, _>(StandardNormal),
                2.0 * rng.sample::<f64, _>(StandardNormal)
            ];
            let log_prop = -0.5 * (x[0] * x[0] + x[1] * x[1]) / 4.0 - (2.0_f64 * 2.0).ln();
            let diff = &x - &t_mean;
            let log_target = 0.5 * t_logdet - 0.5 * (&t_prec * &diff).dot(&diff);
            w[i] = (log_target - log_prop).exp();
            pts.row_mut(i).copy_from(&x.transpose());
        }
        let (mean, cov) = weighted_moments(&pts, &w).unwrap();
        assert!((mean[0] - 1.0).abs() < 0.04);
        assert!((mean[1] + 1.0).abs() < 0.04);
        for (i, j, v) in [(0, 0, 1.0), (0, 1, 0.3), (1, 1, 0.5)] {
            assert!((cov[(i, j)] - v).abs() < 0.05 * 1.0_f64.max(v.abs()));
        }
    }

    #[test]
    fn zero_weight_sum_is_an_error() {
        let pts = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let w = dvector![0.0, 0.0, 0.0];
        assert!(weighted_moments(&pts, &w).is_err());
    }
}
