use nalgebra::{Cholesky, DVector};

use crate::error::{Error, Result};
use crate::gaussmix::{decompose_indexed, BlockIndex, ConditionalSpec, GaussianMixture};
use crate::linalg::{log_det_from_cholesky, logsumexp, symmetrized, LN_2PI};
use crate::models::StateSpaceModel;

/// Flattened per-component data for the `state_dim == 1` fast path.
struct ScalarPart {
    log_w: f64,
    q_c: f64,
    log_q_c: f64,
    base_mean: f64,
    gain: Vec<f64>,
    phi_mean: Vec<f64>,
    phi_prec: Vec<f64>,
    phi_log_det: f64,
    d_p: usize,
}

impl ScalarPart {
    fn from_spec(spec: &ConditionalSpec) -> Self {
        let d_p = spec.marginal_phi.dim();
        Self {
            log_w: spec.marginal_phi.log_weight(),
            q_c: spec.cond_precision[(0, 0)],
            log_q_c: spec.cond_log_det(),
            base_mean: spec.base_mean_x[0],
            gain: spec.cross_gain.iter().copied().collect(),
            phi_mean: spec.marginal_phi.mean().iter().copied().collect(),
            phi_prec: spec.marginal_phi.precision().iter().copied().collect(),
            phi_log_det: spec.marginal_phi.log_det_precision(),
            d_p,
        }
    }

    #[inline]
    fn phi_log_density(&self, phi: &[f64]) -> f64 {
        let d = self.d_p;
        let mut quad = 0.0;
        for j in 0..d {
            let dj = phi[j] - self.phi_mean[j];
            let col = &self.phi_prec[j * d..(j + 1) * d];
            let mut acc = 0.0;
            for i in 0..d {
                acc += col[i] * (phi[i] - self.phi_mean[i]);
            }
            quad += dj * acc;
        }
        0.5 * self.phi_log_det - 0.5 * d as f64 * LN_2PI - 0.5 * quad
    }

    #[inline]
    fn cond_mean(&self, phi: &[f64]) -> f64 {
        let mut m = self.base_mean;
        for (g, (p, pm)) in self
            .gain
            .iter()
            .zip(phi.iter().zip(self.phi_mean.iter()))
        {
            m -= g * (p - pm);
        }
        m
    }
}

/// The one-step prediction density `p~(x_t, phi | y_{1:t-1})` induced by a
/// Gaussian-mixture filtering approximation at `t-1` and the linear state
/// equation.
///
/// Each component of the previous mixture is decomposed into a parameter
/// marginal and a state conditional; the old state is then marginalised in
/// closed form. The result is a Gaussian mixture in `x_t` for fixed `phi`
/// (quadratic log-density), but not Gaussian in `phi` because of the
/// determinant terms.
pub struct PredictiveDensity<'a, M: StateSpaceModel> {
    parts: Vec<ConditionalSpec>,
    scalar_parts: Vec<ScalarPart>,
    model: &'a M,
    t: usize,
}

impl<'a, M: StateSpaceModel> PredictiveDensity<'a, M> {
    /// Decompose the time-`t-1` mixture over the `(x | phi)` block split.
    pub fn from_mixture(mix: &GaussianMixture, model: &'a M, t: usize) -> Result<Self> {
        let block = BlockIndex::contiguous(model.state_dim(), model.joint_dim())?;
        let parts = mix
            .components()
            .iter()
            .enumerate()
            .map(|(i, c)| decompose_indexed(c, &block, i))
            .collect::<Result<Vec<_>>>()?;
        let scalar_parts = if model.state_dim() == 1 {
            parts.iter().map(ScalarPart::from_spec).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            parts,
            scalar_parts,
            model,
            t,
        })
    }

    pub fn time_index(&self) -> usize {
        self.t
    }

    pub fn parts(&self) -> &[ConditionalSpec] {
        &self.parts
    }

    /// Evaluate `log p~(x_t, phi | y_{1:t-1})`:
    ///
    /// ```text
    /// (2pi)^{-dx/2} |Q_u|^{1/2} exp(-x_t' Q_u x_t / 2)
    ///   * sum_i w_i N(phi | mu_{i,phi}, Q_{i,phi}^{-1})
    ///       |Q_{i,x|phi}|^{1/2} |Qbar_i|^{-1/2}
    ///       exp(-(mu_c' Q_c mu_c - mubar' Qbar mubar) / 2)
    /// ```
    ///
    /// with `Qbar_i = Q_{i,x|phi} + A' Q_u A` and
    /// `mubar_i = Qbar_i^{-1} (Q_{i,x|phi} mu_{i,x|phi} + A' Q_u x_t)`,
    /// everything in precision form and the inner sum via log-sum-exp.
    pub fn log_density(&self, x_t: &DVector<f64>, phi: &DVector<f64>) -> Result<f64> {
        if self.model.state_dim() == 1 {
            return self.log_density_scalar(x_t[0], phi.as_slice());
        }
        self.log_density_general(x_t, phi)
    }

    fn log_density_scalar(&self, x_t: f64, phi: &[f64]) -> Result<f64> {
        let a = self.model.transition(phi)[(0, 0)];
        let qu = self.model.innovation_precision(phi)[(0, 0)];
        if !(qu.is_finite() && qu > 0.0) || !a.is_finite() {
            return Err(Error::NotSpd {
                context: "innovation precision".into(),
            });
        }
        let base = -0.5 * LN_2PI + 0.5 * qu.ln() - 0.5 * qu * x_t * x_t;
        let a_qu_a = a * qu * a;
        let a_qu_x = a * qu * x_t;
        let mut best = f64::NEG_INFINITY;
        let mut terms = [0.0_f64; 8];
        let mut heap_terms;
        let m = self.scalar_parts.len();
        let slots: &mut [f64] = if m <= 8 {
            &mut terms[..m]
        } else {
            heap_terms = vec![0.0; m];
            &mut heap_terms
        };
        for (slot, part) in slots.iter_mut().zip(self.scalar_parts.iter()) {
            let mu_c = part.cond_mean(phi);
            let q_bar = part.q_c + a_qu_a;
            let rhs = part.q_c * mu_c + a_qu_x;
            let mu_bar = rhs / q_bar;
            let term = part.log_w
                + part.phi_log_density(phi)
                + 0.5 * (part.log_q_c - q_bar.ln())
                - 0.5 * (part.q_c * mu_c * mu_c - rhs * mu_bar);
            *slot = term;
            if term > best {
                best = term;
            }
        }
        if !best.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let sum: f64 = slots.iter().map(|t| (t - best).exp()).sum();
        Ok(base + best + sum.ln())
    }

    fn log_density_general(&self, x_t: &DVector<f64>, phi: &DVector<f64>) -> Result<f64> {
        let phi_s = phi.as_slice();
        let a = self.model.transition(phi_s);
        let qu = self.model.innovation_precision(phi_s);
        let d_x = x_t.len() as f64;
        let qu_chol = Cholesky::new(qu.clone()).ok_or_else(|| Error::NotSpd {
            context: "innovation precision".into(),
        })?;
        let qu_log_det = log_det_from_cholesky(&qu_chol);
        let qu_x = &qu * x_t;
        let at_qu_a = a.transpose() * &qu * &a;
        let at_qu_x = a.transpose() * &qu_x;
        let base = -0.5 * d_x * LN_2PI + 0.5 * qu_log_det - 0.5 * x_t.dot(&qu_x);

        let mut terms = Vec::with_capacity(self.parts.len());
        for (i, part) in self.parts.iter().enumerate() {
            let mu_c = part.cond_mean(phi);
            let qbar = symmetrized(&(&part.cond_precision + &at_qu_a));
            let qbar_chol =
                Cholesky::new(qbar).ok_or(Error::PredictionNotSpd { component: i })?;
            let qbar_log_det = log_det_from_cholesky(&qbar_chol);
            let rhs = &part.cond_precision * &mu_c + &at_qu_x;
            let mu_bar = qbar_chol.solve(&rhs);
            let quad_c = (&part.cond_precision * &mu_c).dot(&mu_c);
            let quad_bar = rhs.dot(&mu_bar);
            terms.push(
                part.marginal_phi.weighted_log_density_at(phi) + 0.5 * part.cond_log_det()
                    - 0.5 * qbar_log_det
                    - 0.5 * (quad_c - quad_bar),
            );
        }
        Ok(base + logsumexp(&terms))
    }

    /// Evaluate at a stacked `(x_t, phi)` point.
    pub fn joint_log_density(&self, v: &DVector<f64>) -> Result<f64> {
        let d_x = self.model.state_dim();
        if d_x == 1 {
            return self.log_density_scalar(v[0], &v.as_slice()[1..]);
        }
        let x = v.rows(0, d_x).into_owned();
        let phi = v.rows(d_x, self.model.param_dim()).into_owned();
        self.log_density_general(&x, &phi)
    }
}
