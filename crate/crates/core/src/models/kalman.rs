use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::LN_2PI;

/// Exact filter for a linear-Gaussian state-space model with a scalar
/// observation `y_t = h . x_t + v_t`, `v_t ~ N(0, obs_var)`. Time starts with
/// an update of the `x_1` prior by `y_1`.
#[derive(Debug, Clone)]
pub struct ScalarObsKalman {
    pub transition: DMatrix<f64>,
    pub state_noise_cov: DMatrix<f64>,
    pub obs_row: DVector<f64>,
    pub obs_var: f64,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct KalmanTrace {
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    pub step_logliks: Vec<f64>,
    pub loglik: f64,
}

impl ScalarObsKalman {
    /// One-dimensional convenience constructor.
    pub fn univariate(a: f64, sigma_u2: f64, sigma_v2: f64, x1_mean: f64, x1_var: f64) -> Self {
        Self {
            transition: DMatrix::from_element(1, 1, a),
            state_noise_cov: DMatrix::from_element(1, 1, sigma_u2),
            obs_row: DVector::from_element(1, 1.0),
            obs_var: sigma_v2,
            init_mean: DVector::from_element(1, x1_mean),
            init_cov: DMatrix::from_element(1, 1, x1_var),
        }
    }

    /// Filter a series, producing per-step predicted/filtered moments and the
    /// prediction-error decomposition of the log-likelihood.
    pub fn filter(&self, y: &[f64]) -> Result<KalmanTrace> {
        if y.is_empty() {
            return Err(Error::Contract("empty series".into()));
        }
        let n = y.len();
        let mut trace = KalmanTrace {
            filtered_means: Vec::with_capacity(n),
            filtered_covs: Vec::with_capacity(n),
            predicted_means: Vec::with_capacity(n),
            predicted_covs: Vec::with_capacity(n),
            step_logliks: Vec::with_capacity(n),
            loglik: 0.0,
        };
        let mut mean = self.init_mean.clone();
        let mut cov = self.init_cov.clone();
        for (t, &yt) in y.iter().enumerate() {
            if t > 0 {
                mean = &self.transition * &mean;
                cov = &self.transition * &cov * self.transition.transpose()
                    + &self.state_noise_cov;
            }
            trace.predicted_means.push(mean.clone());
            trace.predicted_covs.push(cov.clone());

            let ph = &cov * &self.obs_row;
            let s = self.obs_row.dot(&ph) + self.obs_var;
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::NonFinite {
                    what: "innovation variance".into(),
                });
            }
            let innov = yt - self.obs_row.dot(&mean);
            let step_ll = -0.5 * (LN_2PI + s.ln() + innov * innov / s);
            trace.step_logliks.push(step_ll);
            trace.loglik += step_ll;

            let gain = &ph / s;
            mean += &gain * innov;
            cov -= &gain * ph.transpose();
            cov = crate::linalg::symmetrized(&cov);
            trace.filtered_means.push(mean.clone());
            trace.filtered_covs.push(cov.clone());
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_observation_reduces_to_closed_form() {
        // y_1 ~ N(mu_1, sigma_1^2 + sigma_v^2).
        let kf = ScalarObsKalman::univariate(0.9, 0.5, 2.0, 1.5, 3.0);
        let y = [2.2];
        let trace = kf.filter(&y).unwrap();
        let s: f64 = 3.0 + 2.0;
        let expect = -0.5 * (LN_2PI + s.ln() + (2.2 - 1.5_f64).powi(2) / s);
        assert!((trace.loglik - expect).abs() < 1e-12);
        // Posterior moments of the conjugate update.
        let k = 3.0 / s;
        assert!((trace.filtered_means[0][0] - (1.5 + k * (2.2 - 1.5))).abs() < 1e-12);
        assert!((trace.filtered_covs[0][(0, 0)] - (1.0 - k) * 3.0).abs() < 1e-12);
    }

    #[test]
    fn loglik_matches_dense_multivariate_normal() {
        // Local-level model: Cov(y_s, y_t) = x1_var + sigma_u^2 (min(s,t)-1)
        // + sigma_v^2 1{s=t}.
        let (x1_mean, x1_var, su2, sv2) = (0.3, 4.0, 0.6, 1.3);
        let kf = ScalarObsKalman::univariate(1.0, su2, sv2, x1_mean, x1_var);
        let n = 25;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let trace = kf.filter(&y).unwrap();

        let cov = DMatrix::from_fn(n, n, |s, t| {
            let base = x1_var + su2 * (s.min(t)) as f64;
            if s == t {
                base + sv2
            } else {
                base
            }
        });
        let mean = DVector::from_element(n, x1_mean);
        let chol = nalgebra::Cholesky::new(cov).unwrap();
        let log_det = crate::linalg::log_det_from_cholesky(&chol);
        let yv = DVector::from_row_slice(&y);
        let diff = &yv - &mean;
        let solved = chol.solve(&diff);
        let dense = -0.5 * (n as f64 * LN_2PI + log_det + diff.dot(&solved));
        assert!(
            (trace.loglik - dense).abs() < 1e-8,
            "kalman {} dense {}",
            trace.loglik,
            dense
        );
    }

    #[test]
    fn empty_series_is_rejected() {
        let kf = ScalarObsKalman::univariate(1.0, 1.0, 1.0, 0.0, 1.0);
        assert!(kf.filter(&[]).is_err());
    }
}
