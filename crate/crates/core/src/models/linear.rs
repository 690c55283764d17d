use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::gaussmix::GaussianComponent;
use crate::linalg::LN_2PI;
use crate::models::{ScalarObsKalman, StateSpaceModel};

/// Fully linear-Gaussian reference model `y_t = x_t + v_t`,
/// `x_t = a x_{t-1} + u_t` with all parameters known. The parameter block is
/// a single inert coordinate with a standard normal prior that nothing feeds
/// back into, so the state marginal of the joint filter must match the exact
/// Kalman filter.
#[derive(Debug, Clone)]
pub struct LinearGaussianSsm {
    a: f64,
    sigma_u2: f64,
    sigma_v2: f64,
    prior: GaussianComponent,
    x1_mean: f64,
    x1_var: f64,
}

impl LinearGaussianSsm {
    pub fn new(a: f64, sigma_u: f64, sigma_v: f64, x1_mean: f64, x1_var: f64) -> Result<Self> {
        let mean = DVector::from_row_slice(&[x1_mean, 0.0]);
        let prec = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0 / x1_var, 1.0]));
        Ok(Self {
            a,
            sigma_u2: sigma_u * sigma_u,
            sigma_v2: sigma_v * sigma_v,
            prior: GaussianComponent::new(mean, prec, 0.0)?,
            x1_mean,
            x1_var,
        })
    }

    /// Matching exact filter over the state coordinate.
    pub fn kalman(&self) -> ScalarObsKalman {
        ScalarObsKalman::univariate(self.a, self.sigma_u2, self.sigma_v2, self.x1_mean, self.x1_var)
    }
}

impl StateSpaceModel for LinearGaussianSsm {
    fn state_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn obs_loglik(&self, y: &[f64], x: &[f64], _phi: &[f64], _z: f64) -> f64 {
        let resid = y[0] - x[0];
        -0.5 * (LN_2PI + self.sigma_v2.ln()) - 0.5 * resid * resid / self.sigma_v2
    }

    fn obs_mean(&self, x: &[f64], _phi: &[f64], _z: f64) -> Vec<f64> {
        vec![x[0]]
    }

    fn transition(&self, _phi: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.a)
    }

    fn innovation_precision(&self, _phi: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0 / self.sigma_u2)
    }

    fn prior(&self) -> &GaussianComponent {
        &self.prior
    }

    fn param_names(&self) -> Vec<String> {
        vec!["nuisance".into()]
    }
}
