use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussmix::GaussianComponent;
use crate::linalg::LN_2PI;
use crate::models::StateSpaceModel;

/// Observation equation flavour: `y_t = alpha_t^2 + v_t` or
/// `y_t = exp(alpha_t) + v_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsKind {
    Square,
    Exp,
}

/// The five quantities of the example model, in canonical order. Precisions
/// enter the unknown-parameter vector on the log scale (`tau = log lambda`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    A,
    C1,
    C2,
    TauU,
    TauV,
}

impl Param {
    pub fn name(&self) -> &'static str {
        match self {
            Param::A => "a",
            Param::C1 => "c1",
            Param::C2 => "c2",
            Param::TauU => "tau_u",
            Param::TauV => "tau_v",
        }
    }
}

/// Natural-scale parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    pub a: f64,
    pub c1: f64,
    pub c2: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
}

impl NaturalParams {
    /// Reference values used throughout the experiments:
    /// a=0.8, c1=1.5, c2=-1, sigma_u=0.3, sigma_v=10.
    pub fn reference() -> Self {
        Self {
            a: 0.8,
            c1: 1.5,
            c2: -1.0,
            sigma_u: 0.3,
            sigma_v: 10.0,
        }
    }

    /// `tau_u = log lambda_u = -2 log sigma_u`.
    pub fn tau_u(&self) -> f64 {
        -2.0 * self.sigma_u.ln()
    }

    pub fn tau_v(&self) -> f64 {
        -2.0 * self.sigma_v.ln()
    }
}

/// Which quantities are inferred (the rest stay fixed), plus the observation
/// flavour and the exogenous-series scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleSpec {
    pub obs_kind: ObsKind,
    pub unknowns: Vec<Param>,
    pub fixed: NaturalParams,
    pub sigma_z: f64,
}

impl ExampleSpec {
    pub fn new(obs_kind: ObsKind, unknowns: Vec<Param>, fixed: NaturalParams) -> Self {
        Self {
            obs_kind,
            unknowns,
            fixed,
            sigma_z: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Resolved {
    a: f64,
    c1: f64,
    c2: f64,
    lambda_u: f64,
    lambda_v: f64,
}

/// The worked example: `y_t = alpha_t^2 + v_t` (or exp),
/// `alpha_t = 1(c1 x_t + c2 z_t + 5 >= 0)(c1 x_t + c2 z_t + 5)`,
/// `x_t = a x_{t-1} + u_t`, with a joint Gaussian prior over `(x_1, phi)`.
#[derive(Debug, Clone)]
pub struct ExampleModel {
    spec: ExampleSpec,
    prior: GaussianComponent,
}

impl ExampleModel {
    /// Prior given as mean and diagonal variances over `(x_1, phi)` in the
    /// unknowns' canonical order.
    pub fn new(spec: ExampleSpec, prior_mean: &[f64], prior_variances: &[f64]) -> Result<Self> {
        let d = 1 + spec.unknowns.len();
        if prior_mean.len() != d || prior_variances.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: prior_mean.len(),
            });
        }
        if prior_variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::Contract("prior variances must be positive".into()));
        }
        let mean = DVector::from_row_slice(prior_mean);
        let prec = DMatrix::from_diagonal(&DVector::from_iterator(
            d,
            prior_variances.iter().map(|v| 1.0 / v),
        ));
        let prior = GaussianComponent::new(mean, prec, 0.0)?;
        Ok(Self { spec, prior })
    }

    pub fn spec(&self) -> &ExampleSpec {
        &self.spec
    }

    fn resolve(&self, phi: &[f64]) -> Resolved {
        let f = &self.spec.fixed;
        let mut r = Resolved {
            a: f.a,
            c1: f.c1,
            c2: f.c2,
            lambda_u: 1.0 / (f.sigma_u * f.sigma_u),
            lambda_v: 1.0 / (f.sigma_v * f.sigma_v),
        };
        for (k, p) in self.spec.unknowns.iter().enumerate() {
            match p {
                Param::A => r.a = phi[k],
                Param::C1 => r.c1 = phi[k],
                Param::C2 => r.c2 = phi[k],
                Param::TauU => r.lambda_u = phi[k].exp(),
                Param::TauV => r.lambda_v = phi[k].exp(),
            }
        }
        r
    }

    pub fn alpha(c1: f64, c2: f64, x: f64, z: f64) -> f64 {
        let lin = c1 * x + c2 * z + 5.0;
        if lin >= 0.0 {
            lin
        } else {
            0.0
        }
    }

    fn signal(&self, alpha: f64) -> f64 {
        match self.spec.obs_kind {
            ObsKind::Square => alpha * alpha,
            ObsKind::Exp => alpha.exp(),
        }
    }
}

impl StateSpaceModel for ExampleModel {
    fn state_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        self.spec.unknowns.len()
    }

    fn obs_loglik(&self, y: &[f64], x: &[f64], phi: &[f64], z: f64) -> f64 {
        let r = self.resolve(phi);
        let alpha = Self::alpha(r.c1, r.c2, x[0], z);
        let mean = self.signal(alpha);
        if !mean.is_finite() {
            return f64::NEG_INFINITY;
        }
        let resid = y[0] - mean;
        0.5 * r.lambda_v.ln() - 0.5 * LN_2PI - 0.5 * r.lambda_v * resid * resid
    }

    fn obs_mean(&self, x: &[f64], phi: &[f64], z: f64) -> Vec<f64> {
        let r = self.resolve(phi);
        vec![self.signal(Self::alpha(r.c1, r.c2, x[0], z))]
    }

    fn transition(&self, phi: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.resolve(phi).a)
    }

    fn innovation_precision(&self, phi: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.resolve(phi).lambda_u)
    }

    fn prior(&self) -> &GaussianComponent {
        &self.prior
    }

    fn param_names(&self) -> Vec<String> {
        self.spec.unknowns.iter().map(|p| p.name().into()).collect()
    }
}

/// One simulated dataset with the latent path and exogenous series.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub true_params: NaturalParams,
    pub seed: u64,
}

/// Simulate the example model: `z_t ~ N(0, sigma_z^2)` i.i.d., `x_1` from the
/// stationary law `N(0, sigma_u^2 / (1 - a^2))` when `|a| < 1` (else
/// `N(0, sigma_u^2)`), then the state recursion and the chosen observation
/// equation.
pub fn simulate(spec: &ExampleSpec, n: usize, params: &NaturalParams, seed: u64) -> SimOutput {
    assert!(n >= 1, "need at least one observation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let x1_std = if params.a.abs() < 1.0 {
        params.sigma_u / (1.0 - params.a * params.a).sqrt()
    } else {
        params.sigma_u
    };
    for t in 0..n {
        let zt: f64 = spec.sigma_z * rng.sample::<f64, _>(StandardNormal);
        let xt = if t == 0 {
            x1_std * rng.sample::<f64, _>(StandardNormal)
        } else {
            params.a * x[t - 1] + params.sigma_u * rng.sample::<f64, _>(StandardNormal)
        };
        let alpha = ExampleModel::alpha(params.c1, params.c2, xt, zt);
        let signal = match spec.obs_kind {
            ObsKind::Square => alpha * alpha,
            ObsKind::Exp => alpha.exp(),
        };
        let yt = signal + params.sigma_v * rng.sample::<f64, _>(StandardNormal);
        z.push(zt);
        x.push(xt);
        y.push(yt);
    }
    SimOutput {
        y,
        x,
        z,
        true_params: *params,
        seed,
    }
}
