//! The sequential core: prediction density, base filter (SIBS), and the
//! importance-sampling corrections (SIEM, SIG).

mod em;
mod predictive;

pub use em::em_refit;
pub use predictive::PredictiveDensity;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussmix::{weighted_moments, GaussianComponent, GaussianMixture};
use crate::iterlap::{build, IterLapConfig, StopReason, TargetDensity};
use crate::linalg::{logsumexp, multinomial_indices};
use crate::models::StateSpaceModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionAlgo {
    /// Base sequential iterated-Laplace filter.
    Sibs,
    /// SIBS + importance resampling + EM mixture refit.
    Siem,
    /// SIBS + importance weighting + single-Gaussian moment match.
    Sig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionConfig {
    pub algo: CorrectionAlgo,
    /// Importance-sample count (M).
    pub is_samples: usize,
    /// Resample count for the EM refit (M*).
    pub resample_count: usize,
    pub em_max_iter: usize,
    pub em_tol: f64,
    /// Covariance floor; `None` derives `1e-8 x` average marginal variance.
    pub em_cov_floor: Option<f64>,
    /// Corrections with an effective sample size below this keep the SIBS
    /// mixture instead (with a diagnostic flag): a filter state refitted from
    /// a handful of points can acquire explosive dynamics.
    pub min_ess: f64,
    /// Support half-width in prior marginal standard deviations. The step
    /// targets are `-inf` outside `prior mean +- radius * prior sd`, which
    /// keeps flat-ridge Laplace components from dragging the filter out of
    /// the region where the model is defined.
    pub support_radius: f64,
    pub iterlap: IterLapConfig,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        let resample_count = 2000;
        Self {
            algo: CorrectionAlgo::Sig,
            is_samples: 4000,
            resample_count,
            em_max_iter: 100,
            em_tol: 1e-6 * resample_count as f64,
            em_cov_floor: None,
            min_ess: 32.0,
            support_radius: 8.0,
            iterlap: IterLapConfig::modified().with_m_max(5),
        }
    }
}

/// Axis-aligned support region derived from the prior.
#[derive(Debug, Clone)]
pub(crate) struct SupportBox {
    center: DVector<f64>,
    half_width: DVector<f64>,
}

impl SupportBox {
    fn from_prior(prior: &GaussianComponent, radius: f64) -> Self {
        let cov = prior.covariance();
        let d = prior.dim();
        let half_width = DVector::from_fn(d, |j, _| radius * cov[(j, j)].max(0.0).sqrt());
        Self {
            center: prior.mean().clone(),
            half_width,
        }
    }

    fn contains(&self, v: &DVector<f64>) -> bool {
        v.iter()
            .zip(self.center.iter().zip(self.half_width.iter()))
            .all(|(x, (c, h))| (x - c).abs() <= *h)
    }

    fn clamp(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |j, _| {
            let lo = self.center[j] - 0.98 * self.half_width[j];
            let hi = self.center[j] + 0.98 * self.half_width[j];
            v[j].clamp(lo, hi)
        })
    }
}

/// Per-step diagnostics carried alongside the mixture.
#[derive(Debug, Clone)]
pub struct StepDiag {
    pub t: usize,
    pub ess: Option<f64>,
    pub components: usize,
    pub iterlap_stop: StopReason,
    /// Set when the correction failed and the SIBS mixture was kept.
    pub is_fallback: bool,
}

/// One run's state: the current mixture over `(x_t, phi)`, the time index,
/// and an owned RNG stream. Step operations are pure: they clone the stream,
/// advance it, and return a fresh state.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub t: usize,
    pub mix: GaussianMixture,
    pub rng: ChaCha8Rng,
    pub diag: StepDiag,
}

struct InitTarget<'a, M: StateSpaceModel> {
    model: &'a M,
    y: &'a [f64],
    z: f64,
    support: SupportBox,
}

impl<M: StateSpaceModel> TargetDensity for InitTarget<'_, M> {
    fn dim(&self) -> usize {
        self.model.joint_dim()
    }
    fn log_density(&self, v: &DVector<f64>) -> f64 {
        if !self.support.contains(v) {
            return f64::NEG_INFINITY;
        }
        let s = v.as_slice();
        let d_x = self.model.state_dim();
        self.model.prior().log_density_at(v)
            + self.model.obs_loglik(self.y, &s[..d_x], &s[d_x..], self.z)
    }
}

/// The unnormalized step target
/// `p(y_t | x_t, phi) p~(x_t, phi | y_{1:t-1})` that each correction aims at.
pub struct StepTarget<'a, M: StateSpaceModel> {
    pub pd: PredictiveDensity<'a, M>,
    model: &'a M,
    y: Vec<f64>,
    z: f64,
    support: SupportBox,
}

impl<M: StateSpaceModel> TargetDensity for StepTarget<'_, M> {
    fn dim(&self) -> usize {
        self.model.joint_dim()
    }
    fn log_density(&self, v: &DVector<f64>) -> f64 {
        if !self.support.contains(v) {
            return f64::NEG_INFINITY;
        }
        let pred = match self.pd.joint_log_density(v) {
            Ok(p) => p,
            // Overflowed dynamics for extreme phi count as zero density.
            Err(_) => return f64::NEG_INFINITY,
        };
        let s = v.as_slice();
        let d_x = self.model.state_dim();
        pred + self.model.obs_loglik(&self.y, &s[..d_x], &s[d_x..], self.z)
    }
}

/// Approximate `p(x_1, phi | y_1)` by an iterated-Laplace build on
/// `log p(y_1 | x_1, phi) + log p(x_1, phi)`, started from the prior mean
/// plus `n_starts` prior draws.
pub fn init_filter<M: StateSpaceModel>(
    model: &M,
    y1: &[f64],
    z1: f64,
    cfg: &CorrectionConfig,
    mut rng: ChaCha8Rng,
) -> Result<FilterState> {
    let support = SupportBox::from_prior(model.prior(), cfg.support_radius);
    let mut starts = vec![model.prior().mean().clone()];
    for _ in 0..cfg.iterlap.n_starts {
        starts.push(support.clamp(&model.prior().sample(&mut rng)));
    }
    let target = InitTarget {
        model,
        y: y1,
        z: z1,
        support,
    };
    let res = build(&target, &cfg.iterlap, &starts, &mut rng)?;
    Ok(FilterState {
        t: 1,
        diag: StepDiag {
            t: 1,
            ess: None,
            components: res.mixture.len(),
            iterlap_stop: res.stop_reason,
            is_fallback: false,
        },
        mix: res.mixture,
        rng,
    })
}

fn transition_map<M: StateSpaceModel>(model: &M, phi: &[f64], x: &DVector<f64>) -> DVector<f64> {
    &model.transition(phi) * x
}

/// SIBS plus the step target it approximated (for reuse by corrections).
fn sibs_inner<'a, M: StateSpaceModel>(
    state: &FilterState,
    model: &'a M,
    y_t: &[f64],
    z_t: f64,
    cfg: &CorrectionConfig,
) -> Result<(FilterState, StepTarget<'a, M>)> {
    let mut rng = state.rng.clone();
    let t_next = state.t + 1;
    let pd = PredictiveDensity::from_mixture(&state.mix, model, t_next)?;
    let support = SupportBox::from_prior(model.prior(), cfg.support_radius);

    // Warm starts: previous component means with the state block pushed
    // through A at the component's phi mean, clamped into the support box,
    // plus the unpropagated means and the prior mean as backstops.
    let d_x = model.state_dim();
    let mut starts: Vec<DVector<f64>> = state
        .mix
        .components()
        .iter()
        .map(|c| {
            let mean = c.mean();
            let phi = &mean.as_slice()[d_x..];
            let x = mean.rows(0, d_x).into_owned();
            let moved = transition_map(model, phi, &x);
            let mut s = mean.clone();
            s.rows_mut(0, d_x).copy_from(&moved);
            support.clamp(&s)
        })
        .collect();
    starts.extend(
        state
            .mix
            .components()
            .iter()
            .map(|c| support.clamp(c.mean())),
    );
    starts.push(model.prior().mean().clone());

    let target = StepTarget {
        pd,
        model,
        y: y_t.to_vec(),
        z: z_t,
        support,
    };

    let res = build(&target, &cfg.iterlap, &starts, &mut rng)?;
    let next = FilterState {
        t: t_next,
        diag: StepDiag {
            t: t_next,
            ess: None,
            components: res.mixture.len(),
            iterlap_stop: res.stop_reason,
            is_fallback: false,
        },
        mix: res.mixture,
        rng,
    };
    Ok((next, target))
}

/// One base-algorithm step: re-approximate
/// `p(y_t|x_t,phi) p~(x_t,phi|y_{1:t-1})` by iterated Laplace.
pub fn sibs_step<M: StateSpaceModel>(
    state: &FilterState,
    model: &M,
    y_t: &[f64],
    z_t: f64,
    cfg: &CorrectionConfig,
) -> Result<FilterState> {
    Ok(sibs_inner(state, model, y_t, z_t, cfg)?.0)
}

/// Self-normalized importance correction: `m` draws from the state's mixture
/// as proposal, log-weights against `target_log`, and the effective sample
/// size `(sum w)^2 / sum w^2`.
pub fn importance_correction<F: Fn(&DVector<f64>) -> f64>(
    state_il: &FilterState,
    target_log: F,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(DMatrix<f64>, Vec<f64>, f64)> {
    let points = state_il.mix.sample(m, rng)?;
    let mut log_w = Vec::with_capacity(m);
    for i in 0..m {
        let x = points.row(i).transpose();
        let lt = target_log(&x);
        let lp = state_il.mix.log_density(&x)?;
        let lw = lt - lp;
        log_w.push(if lw.is_finite() { lw } else { f64::NEG_INFINITY });
    }
    let lse = logsumexp(&log_w);
    if !lse.is_finite() {
        return Err(Error::ImportanceDegenerate);
    }
    for w in log_w.iter_mut() {
        *w -= lse;
    }
    let sum_sq: f64 = log_w.iter().map(|w| (2.0 * w).exp()).sum();
    let ess = 1.0 / sum_sq;
    Ok((points, log_w, ess))
}

/// SIEM: SIBS, importance correction against the step target, multinomial
/// resampling of `M*` points, then an EM refit initialized at (and keeping
/// the component count of) the SIBS mixture. An importance failure keeps the
/// SIBS mixture with a diagnostic flag; EM errors propagate.
pub fn siem_step<M: StateSpaceModel>(
    state: &FilterState,
    model: &M,
    y_t: &[f64],
    z_t: f64,
    cfg: &CorrectionConfig,
) -> Result<FilterState> {
    let (sibs, target) = sibs_inner(state, model, y_t, z_t, cfg)?;
    let mut rng = sibs.rng.clone();
    let correction = importance_correction(
        &sibs,
        |v| target.log_density(v),
        cfg.is_samples,
        &mut rng,
    );
    let (points, log_w, ess) = match correction {
        Ok(ok) if ok.2 >= cfg.min_ess => ok,
        _ => {
            let mut fallback = sibs.clone();
            fallback.rng = rng;
            fallback.diag.is_fallback = true;
            return Ok(fallback);
        }
    };
    let weights: Vec<f64> = log_w.iter().map(|w| w.exp()).collect();
    let idx = multinomial_indices(&weights, cfg.resample_count, &mut rng);
    let mut resampled = DMatrix::zeros(cfg.resample_count, points.ncols());
    for (r, &i) in idx.iter().enumerate() {
        resampled.row_mut(r).copy_from(&points.row(i));
    }
    let refit = em_refit(&resampled, &sibs.mix, cfg)?;
    Ok(FilterState {
        t: sibs.t,
        diag: StepDiag {
            t: sibs.t,
            ess: Some(ess),
            components: refit.len(),
            iterlap_stop: sibs.diag.iterlap_stop,
            is_fallback: false,
        },
        mix: refit,
        rng,
    })
}

/// SIG: SIBS, importance weighting, then a single Gaussian from the weighted
/// moments of the `M` samples (no resampling, no EM). Correction failures
/// keep the SIBS mixture with a diagnostic flag.
pub fn sig_step<M: StateSpaceModel>(
    state: &FilterState,
    model: &M,
    y_t: &[f64],
    z_t: f64,
    cfg: &CorrectionConfig,
) -> Result<FilterState> {
    let (sibs, target) = sibs_inner(state, model, y_t, z_t, cfg)?;
    let mut rng = sibs.rng.clone();
    let correction = importance_correction(
        &sibs,
        |v| target.log_density(v),
        cfg.is_samples,
        &mut rng,
    );
    let fallback = |mut s: FilterState, rng: ChaCha8Rng| {
        s.rng = rng;
        s.diag.is_fallback = true;
        s
    };
    let (points, log_w, ess) = match correction {
        Ok(ok) if ok.2 >= cfg.min_ess => ok,
        _ => return Ok(fallback(sibs, rng)),
    };
    let weights = DVector::from_iterator(log_w.len(), log_w.iter().map(|w| w.exp()));
    let (mean, cov) = match weighted_moments(&points, &weights) {
        Ok(ok) => ok,
        Err(_) => return Ok(fallback(sibs, rng)),
    };
    let comp = GaussianComponent::from_moments(mean, cov, 0.0)?;
    Ok(FilterState {
        t: sibs.t,
        diag: StepDiag {
            t: sibs.t,
            ess: Some(ess),
            components: 1,
            iterlap_stop: sibs.diag.iterlap_stop,
            is_fallback: false,
        },
        mix: GaussianMixture::single(comp),
        rng,
    })
}

/// Dispatch one step of the configured algorithm.
pub fn filter_step<M: StateSpaceModel>(
    state: &FilterState,
    model: &M,
    y_t: &[f64],
    z_t: f64,
    cfg: &CorrectionConfig,
) -> Result<FilterState> {
    match cfg.algo {
        CorrectionAlgo::Sibs => sibs_step(state, model, y_t, z_t, cfg),
        CorrectionAlgo::Siem => siem_step(state, model, y_t, z_t, cfg),
        CorrectionAlgo::Sig => sig_step(state, model, y_t, z_t, cfg),
    }
}
