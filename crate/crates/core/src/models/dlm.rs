use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::iterlap::TargetDensity;
use crate::models::ScalarObsKalman;

/// Default prior spread for `x_1` in the local-level demo model
/// `y_t = x_t + v_t`, `x_t = x_{t-1} + u_t` (nothing in the demo pins it, so
/// it is shared by simulation, the exact posterior, and the approximations).
pub const DLM_X1_MEAN: f64 = 0.0;
pub const DLM_X1_VAR: f64 = 100.0;

/// Marginal log-likelihood `log p(y | sigma_u^2, sigma_v^2)` of the
/// local-level model by Kalman prediction-error decomposition.
pub fn dlm_loglik(y: &[f64], sigma_u2: f64, sigma_v2: f64, x1_mean: f64, x1_var: f64) -> f64 {
    let kf = ScalarObsKalman::univariate(1.0, sigma_u2, sigma_v2, x1_mean, x1_var);
    match kf.filter(y) {
        Ok(trace) => trace.loglik,
        Err(_) => f64::NEG_INFINITY,
    }
}

fn log_prior_tau(tau: f64) -> f64 {
    // lambda = e^tau with lambda ~ Exponential(mean 2):
    // p(tau) = (1/2) exp(-e^tau / 2) e^tau.
    (0.5_f64).ln() - 0.5 * tau.exp() + tau
}

/// Unnormalized log posterior `log p(tau_u, tau_v | y)` of the local-level
/// model with Exponential(mean 2) priors on both precisions, evaluated on a
/// grid. Nodes where the filter overflows are marked `-inf`.
pub fn dlm_exact_log_posterior(
    y: &[f64],
    tau_u_grid: &[f64],
    tau_v_grid: &[f64],
    x1_mean: f64,
    x1_var: f64,
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(tau_u_grid.len(), tau_v_grid.len());
    for (i, &tu) in tau_u_grid.iter().enumerate() {
        for (j, &tv) in tau_v_grid.iter().enumerate() {
            let ll = dlm_loglik(y, (-tu).exp(), (-tv).exp(), x1_mean, x1_var);
            let v = ll + log_prior_tau(tu) + log_prior_tau(tv);
            out[(i, j)] = if v.is_finite() { v } else { f64::NEG_INFINITY };
        }
    }
    Ok(out)
}

/// Simulate the local-level model; returns `(x, y)`.
pub fn dlm_simulate(
    n: usize,
    sigma_u2: f64,
    sigma_v2: f64,
    x1_mean: f64,
    x1_var: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        let xt = if t == 0 {
            x1_mean + x1_var.sqrt() * rng.sample::<f64, _>(StandardNormal)
        } else {
            x[t - 1] + sigma_u2.sqrt() * rng.sample::<f64, _>(StandardNormal)
        };
        x.push(xt);
        y.push(xt + sigma_v2.sqrt() * rng.sample::<f64, _>(StandardNormal));
    }
    (x, y)
}

/// The demo posterior `p(tau_u, tau_v | y)` as an iterated-Laplace target.
pub struct DlmPosterior {
    pub y: Vec<f64>,
    pub x1_mean: f64,
    pub x1_var: f64,
}

impl DlmPosterior {
    pub fn new(y: Vec<f64>) -> Self {
        Self {
            y,
            x1_mean: DLM_X1_MEAN,
            x1_var: DLM_X1_VAR,
        }
    }
}

impl TargetDensity for DlmPosterior {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let (tu, tv) = (x[0], x[1]);
        let v = dlm_loglik(&self.y, (-tu).exp(), (-tv).exp(), self.x1_mean, self.x1_var)
            + log_prior_tau(tu)
            + log_prior_tau(tv);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }
}
