//! State-space model contract, shipped example models, and exact oracles.

mod dlm;
mod example;
mod kalman;
mod linear;
mod nid;

pub use dlm::{dlm_exact_log_posterior, dlm_loglik, dlm_simulate, DlmPosterior};
pub use example::{
    simulate, ExampleModel, ExampleSpec, NaturalParams, ObsKind, Param, SimOutput,
};
pub use kalman::{KalmanTrace, ScalarObsKalman};
pub use linear::LinearGaussianSsm;
pub use nid::{apply_nid, NidTransform};

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussmix::GaussianComponent;
use crate::linalg::LN_2PI;

/// A dynamic latent Gaussian model: Gaussian linear state equation
/// `x_t = A(phi) x_{t-1} + u_t` with `u_t ~ N(0, Q_u(phi)^{-1})`, an
/// arbitrary observation log-likelihood, and a joint Gaussian prior over
/// `(x_1, phi)`. Parameters live on unconstrained scales.
pub trait StateSpaceModel: Sync {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn obs_dim(&self) -> usize {
        1
    }
    fn joint_dim(&self) -> usize {
        self.state_dim() + self.param_dim()
    }

    /// `log p(y_t | x_t, phi, z_t)`.
    fn obs_loglik(&self, y: &[f64], x: &[f64], phi: &[f64], z: f64) -> f64;

    /// Noise-free observation mean at `(x, phi, z)`.
    fn obs_mean(&self, x: &[f64], phi: &[f64], z: f64) -> Vec<f64>;

    /// State transition matrix `A(phi)`.
    fn transition(&self, phi: &[f64]) -> DMatrix<f64>;

    /// State innovation precision `Q_u(phi)` (SPD).
    fn innovation_precision(&self, phi: &[f64]) -> DMatrix<f64>;

    /// Joint Gaussian prior over `(x_1, phi)`.
    fn prior(&self) -> &GaussianComponent;

    fn param_names(&self) -> Vec<String>;

    /// `log p(x_t | x_{t-1}, phi)` from the state equation.
    fn transition_loglik(&self, x_t: &[f64], x_prev: &[f64], phi: &[f64]) -> f64 {
        let a = self.transition(phi);
        let qu = self.innovation_precision(phi);
        let chol = match Cholesky::new(qu.clone()) {
            Some(c) => c,
            None => return f64::NEG_INFINITY,
        };
        let log_det = crate::linalg::log_det_from_cholesky(&chol);
        let xt = DVector::from_row_slice(x_t);
        let xp = DVector::from_row_slice(x_prev);
        let diff = xt - &a * xp;
        0.5 * log_det - 0.5 * self.state_dim() as f64 * LN_2PI - 0.5 * (&qu * &diff).dot(&diff)
    }
}

/// `log p(y_{1:t}, x_{1:t}, phi)`: joint prior on `(x_1, phi)` plus the
/// transition and observation terms. `x_path` holds one state column per
/// time; callers apply any `1/t` scaling themselves.
pub fn joint_log_density<M: StateSpaceModel>(
    model: &M,
    y: &[f64],
    z: &[f64],
    x_path: &DMatrix<f64>,
    phi: &DVector<f64>,
) -> Result<f64> {
    let t = y.len();
    if model.obs_dim() != 1 {
        return Err(Error::Contract(
            "joint_log_density expects scalar observations".into(),
        ));
    }
    if x_path.ncols() != t || z.len() < t || t == 0 {
        return Err(Error::DimensionMismatch {
            expected: t,
            actual: x_path.ncols(),
        });
    }
    let mut joint_point = DVector::zeros(model.joint_dim());
    joint_point
        .rows_mut(0, model.state_dim())
        .copy_from(&x_path.column(0));
    joint_point
        .rows_mut(model.state_dim(), model.param_dim())
        .copy_from(phi);
    let mut total = model.prior().log_density_at(&joint_point);
    let phi_s = phi.as_slice();
    for s in 0..t {
        let xs = x_path.column(s).clone_owned();
        if s > 0 {
            let prev = x_path.column(s - 1).clone_owned();
            total += model.transition_loglik(xs.as_slice(), prev.as_slice(), phi_s);
        }
        total += model.obs_loglik(&y[s..=s], xs.as_slice(), phi_s, z[s]);
    }
    Ok(total)
}
