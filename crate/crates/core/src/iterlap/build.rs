use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussmix::{GaussianComponent, GaussianMixture};
use crate::iterlap::{
    laplace_component, maximize, IterLapConfig, IterLapResult, IterationDiag, ResidualHessian,
    StopReason, TargetDensity, WeightMethod,
};
/// Result of a weight refit. `weights` are normalized with entries below the
/// weight floor zeroed and the rest rescaled to sum one; `prefloor` is the
/// normalized solution before flooring; `log_scale` is the log of the total
/// raw mass assigned to the kept components.
#[derive(Debug, Clone)]
pub struct WeightFit {
    pub weights: Vec<f64>,
    pub prefloor: Vec<f64>,
    pub log_scale: f64,
}

/// Refit component weights against target values on an evaluation grid:
/// `min_w || q(grid) - sum_i w_i N_i(grid) ||^2` with `w >= 0` (or clipped
/// unconstrained least squares). Densities and targets are rescaled by their
/// maxima before solving; the returned weights are normalized to sum one and
/// entries below `min_weight` are dropped.
pub fn fit_weights(
    components: &[GaussianComponent],
    points: &[DVector<f64>],
    target_log: &[f64],
    method: WeightMethod,
    min_weight: f64,
) -> Result<WeightFit> {
    let m = components.len();
    let n = points.len();
    if n < m {
        return Err(Error::Contract(format!(
            "need at least {m} evaluation points, got {n}"
        )));
    }
    if target_log.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: target_log.len(),
        });
    }
    let max_lq = target_log
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_lq.is_finite() {
        return Err(Error::NonFinite {
            what: "target values on the weight grid".into(),
        });
    }

    let log_dens = DMatrix::from_fn(n, m, |i, j| components[j].log_density_at(&points[i]));
    fit_weights_from_log_densities(&log_dens, target_log, method, min_weight)
}

/// Same solve, but with the component log-densities already tabulated
/// (one column per component).
fn fit_weights_from_log_densities(
    log_dens: &DMatrix<f64>,
    target_log: &[f64],
    method: WeightMethod,
    min_weight: f64,
) -> Result<WeightFit> {
    let n = log_dens.nrows();
    if target_log.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: target_log.len(),
        });
    }
    let max_lq = target_log
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_lq.is_finite() {
        return Err(Error::NonFinite {
            what: "target values on the weight grid".into(),
        });
    }
    // Shift so exp() cannot overflow.
    let shift = log_dens.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a = log_dens.map(|v| (v - shift).exp());
    let b = DVector::from_fn(n, |i, _| {
        let v = target_log[i];
        if v.is_finite() {
            (v - max_lq).exp()
        } else {
            0.0
        }
    });

    let raw = match method {
        WeightMethod::NonnegLeastSquares => super::nnls::nnls(&a, &b)?,
        WeightMethod::ClippedLeastSquares => {
            let sol = a
                .clone()
                .svd(true, true)
                .solve(&b, 1e-12)
                .map_err(|_| Error::AllWeightsZero)?;
            sol.map(|v| v.max(0.0))
        }
    };
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllWeightsZero);
    }
    let prefloor: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mut weights = prefloor.clone();
    for w in weights.iter_mut() {
        if *w < min_weight {
            *w = 0.0;
        }
    }
    let kept: f64 = weights.iter().sum();
    if kept <= 0.0 {
        return Err(Error::AllWeightsZero);
    }
    for w in weights.iter_mut() {
        *w /= kept;
    }
    // Raw solution units: q / e^{max_lq} = sum_j raw_j N_j / e^{shift}, so the
    // total mass in density units is sum(raw kept) * e^{max_lq - shift}.
    let kept_raw: f64 = raw
        .iter()
        .zip(weights.iter())
        .filter(|(_, &w)| w > 0.0)
        .map(|(r, _)| r)
        .sum();
    let log_scale = max_lq - shift + kept_raw.ln();
    Ok(WeightFit {
        weights,
        prefloor,
        log_scale,
    })
}

/// `log(q(x) - c p~(x))`, `-inf` where the residual is non-positive.
fn residual_log(log_q: f64, log_cp: f64) -> f64 {
    if !log_q.is_finite() || log_q <= log_cp {
        f64::NEG_INFINITY
    } else {
        log_q + (-(log_cp - log_q).exp()).ln_1p()
    }
}

struct ResidualTarget<'a> {
    target: &'a dyn TargetDensity,
    mix: &'a GaussianMixture,
    log_scale: f64,
}

impl TargetDensity for ResidualTarget<'_> {
    fn dim(&self) -> usize {
        self.target.dim()
    }
    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let lq = self.target.log_density(x);
        let lp = self
            .mix
            .log_density(x)
            .expect("residual target dimension mismatch");
        residual_log(lq, self.log_scale + lp)
    }
}

#[derive(Debug, Clone)]
pub enum ResidualOutcome {
    /// The residual was non-positive at every candidate.
    Converged,
    /// Located residual maximizer and the ascent iterations spent on it.
    Mode {
        point: DVector<f64>,
        iterations: usize,
    },
}

/// Locate the maximizer of the clamped residual `max(q - c p~, 0)`:
/// evaluate at the candidates, then ascend on `log(q - c p~)` from the best
/// one (steps are confined to the positive-residual region by the `-inf`
/// clamp). A failed ascent falls back to the best candidate.
pub fn residual_mode(
    target: &dyn TargetDensity,
    mix: &GaussianMixture,
    log_scale: f64,
    candidates: &[DVector<f64>],
    cfg: &IterLapConfig,
) -> Result<ResidualOutcome> {
    if candidates.is_empty() {
        return Err(Error::Contract("no residual candidates".into()));
    }
    let res = ResidualTarget {
        target,
        mix,
        log_scale,
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let v = res.log_density(c);
        if v.is_finite() && best.map_or(true, |(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    let Some((best_idx, best_val)) = best else {
        return Ok(ResidualOutcome::Converged);
    };
    match maximize(&res, &candidates[best_idx], &cfg.optimizer) {
        Ok(out) => Ok(ResidualOutcome::Mode {
            point: out.point,
            iterations: out.iterations,
        }),
        Err(Error::OptimizerFailed {
            best_value,
            best_point,
            iterations,
            ..
        }) if best_value >= best_val => Ok(ResidualOutcome::Mode {
            point: DVector::from_vec(best_point),
            iterations,
        }),
        Err(_) => Ok(ResidualOutcome::Mode {
            point: candidates[best_idx].clone(),
            iterations: 0,
        }),
    }
}

/// Max over the grid of `(q - c p~) / max q`, clamped below at zero, from
/// cached per-component log-density columns.
fn rel_residual_cached(
    grid_log_q: &[f64],
    dens_cols: &[Vec<f64>],
    log_weights: &[f64],
    log_scale: f64,
) -> f64 {
    let max_lq = grid_log_q
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_lq.is_finite() {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for (i, &lq) in grid_log_q.iter().enumerate() {
        let q = if lq.is_finite() {
            (lq - max_lq).exp()
        } else {
            0.0
        };
        let mut top = f64::NEG_INFINITY;
        for (col, lw) in dens_cols.iter().zip(log_weights.iter()) {
            let v = lw + col[i];
            if v > top {
                top = v;
            }
        }
        let approx = if top.is_finite() {
            let mut sum = 0.0;
            for (col, lw) in dens_cols.iter().zip(log_weights.iter()) {
                sum += (lw + col[i] - top).exp();
            }
            let lp = log_scale + top + sum.ln() - max_lq;
            if lp < 500.0 {
                lp.exp()
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        };
        worst = worst.max(q - approx);
    }
    worst
}

/// Axis probe points `mean +- 1.5 sigma_j e_j` for one component.
fn axis_offsets(comp: &GaussianComponent) -> Vec<DVector<f64>> {
    let cov = comp.covariance();
    let d = comp.dim();
    let mut out = Vec::with_capacity(2 * d);
    for j in 0..d {
        let s = cov[(j, j)].max(0.0).sqrt();
        let mut hi = comp.mean().clone();
        hi[j] += 1.5 * s;
        let mut lo = comp.mean().clone();
        lo[j] -= 1.5 * s;
        out.push(hi);
        out.push(lo);
    }
    out
}

fn sample_points<R: Rng>(mix: &GaussianMixture, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let m = mix.sample(n, rng).expect("mixture is normalized");
    (0..n).map(|i| m.row(i).transpose()).collect()
}

/// Build a Gaussian-mixture approximation of `target`.
///
/// The first component is a Laplace approximation from the best start; each
/// further iteration locates the residual mode, adds a component there, and
/// refits all weights on a growing evaluation grid (fresh mixture samples
/// plus component means and axis offsets). Stops on `m_max`, a small relative
/// residual, a negligible new weight, or a non-improving refit (which is
/// reverted). Deterministic given the RNG state.
pub fn build<R: Rng>(
    target: &dyn TargetDensity,
    cfg: &IterLapConfig,
    starts: &[DVector<f64>],
    rng: &mut R,
) -> Result<IterLapResult> {
    if starts.is_empty() {
        return Err(Error::NoFiniteStart);
    }
    let d = target.dim();
    // Fresh evaluation points added per refit; the cumulative grid stays
    // near the configured budget across a full m_max-component build.
    let fresh_budget = (cfg.grid_budget(d) / cfg.m_max.max(1)).max(30 * d);

    let best_start = starts
        .iter()
        .map(|s| (s, target.log_density(s)))
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::NoFiniteStart)?
        .0;

    let (first, first_iters) = laplace_component(target, best_start, cfg)?;
    let mode = first.mean().clone();
    let mut log_scale = target.log_density(&mode) - first.log_density_at(&mode);
    let mut mixture = GaussianMixture::single(first);

    let mut grid: Vec<DVector<f64>> = starts.to_vec();
    grid.extend(sample_points(&mixture, 2 * fresh_budget, rng));
    grid.extend(axis_offsets(&mixture.components()[0]));
    let mut grid_log_q: Vec<f64> = grid.iter().map(|p| target.log_density(p)).collect();
    // Per-component log-density columns over the grid, kept in lockstep with
    // the mixture so refits and residual scans avoid re-evaluation.
    let mut dens_cols: Vec<Vec<f64>> =
        vec![grid.iter().map(|p| mixture.components()[0].log_density_at(p)).collect()];
    let log_weights = |mix: &GaussianMixture| -> Vec<f64> {
        mix.components().iter().map(|c| c.log_weight()).collect()
    };

    let mut rel = rel_residual_cached(&grid_log_q, &dens_cols, &log_weights(&mixture), log_scale);
    let mut diagnostics = vec![IterationDiag {
        components: 1,
        max_rel_residual: rel,
        optimizer_iterations: first_iters,
    }];

    let stop_reason = loop {
        if rel < cfg.stop_rel_residual {
            break StopReason::RelResidual;
        }
        if mixture.len() >= cfg.m_max {
            break StopReason::MaxComponents;
        }

        let mut candidates = sample_points(&mixture, cfg.residual_candidates, rng);
        candidates.extend(starts.iter().cloned());
        let located = residual_mode(target, &mixture, log_scale, &candidates, cfg)?;
        let (point, iterations) = match located {
            ResidualOutcome::Converged => break StopReason::Converged,
            ResidualOutcome::Mode { point, iterations } => (point, iterations),
        };

        let residual = ResidualTarget {
            target,
            mix: &mixture,
            log_scale,
        };
        let lap = match cfg.residual_hessian {
            ResidualHessian::LogResidual => laplace_component(&residual, &point, cfg),
            ResidualHessian::LogTarget => {
                // Mode from the residual surface, curvature from the target.
                maximize(&residual, &point, &cfg.optimizer)
                    .map(|o| o.point)
                    .or_else(|e| match e {
                        Error::OptimizerFailed { best_point, .. } => {
                            Ok(DVector::from_vec(best_point))
                        }
                        other => Err(other),
                    })
                    .and_then(|m| {
                        let h = target
                            .hessian(&m)
                            .unwrap_or_else(|| super::fd_hessian(target, &m));
                        let prec =
                            crate::gaussmix::nearest_spd(&(-&h), super::SPD_EPS)?
                                * cfg.hessian_scale;
                        Ok((GaussianComponent::new(m, prec, 0.0)?, 0))
                    })
            }
        };
        let (new_comp, _) = match lap {
            Ok(c) => c,
            Err(_) => break StopReason::LaplaceFailed,
        };

        let mut fresh = sample_points(&mixture, fresh_budget, rng);
        fresh.extend(axis_offsets(&new_comp));
        grid_log_q.extend(fresh.iter().map(|p| target.log_density(p)));
        for (col, comp) in dens_cols.iter_mut().zip(mixture.components().iter()) {
            col.extend(fresh.iter().map(|p| comp.log_density_at(p)));
        }
        grid.extend(fresh);
        dens_cols.push(grid.iter().map(|p| new_comp.log_density_at(p)).collect());

        let mut comps: Vec<GaussianComponent> = mixture.components().to_vec();
        comps.push(new_comp);
        let n_pts = grid.len();
        let log_dens =
            DMatrix::from_fn(n_pts, comps.len(), |i, j| dens_cols[j][i]);
        let fit = match fit_weights_from_log_densities(
            &log_dens,
            &grid_log_q,
            cfg.weight_method,
            cfg.stop_min_weight,
        ) {
            Ok(f) => f,
            Err(_) => {
                dens_cols.pop();
                break StopReason::WeightFitFailed;
            }
        };
        if *fit.prefloor.last().unwrap() < cfg.stop_min_weight {
            dens_cols.pop();
            break StopReason::MinWeight;
        }

        let mut kept = Vec::with_capacity(comps.len());
        let mut kept_cols = Vec::with_capacity(comps.len());
        for ((c, col), &w) in comps.iter().zip(dens_cols.iter()).zip(fit.weights.iter()) {
            if w > 0.0 {
                kept.push(c.with_log_weight(w.ln()));
                kept_cols.push(col.clone());
            }
        }
        let new_mixture = GaussianMixture::new(kept)?;
        let new_rel = rel_residual_cached(
            &grid_log_q,
            &kept_cols,
            &log_weights(&new_mixture),
            fit.log_scale,
        );
        if new_rel > rel {
            dens_cols.pop();
            break StopReason::NoImprovement;
        }
        mixture = new_mixture;
        dens_cols = kept_cols;
        log_scale = fit.log_scale;
        rel = new_rel;
        diagnostics.push(IterationDiag {
            components: mixture.len(),
            max_rel_residual: rel,
            optimizer_iterations: iterations,
        });
    };

    Ok(IterLapResult {
        mixture,
        log_scale,
        diagnostics,
        stop_reason,
    })
}
