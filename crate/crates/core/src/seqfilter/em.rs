use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussmix::{GaussianComponent, GaussianMixture};
use crate::linalg::{cholesky_with_jitter, logsumexp};
use crate::seqfilter::CorrectionConfig;

/// Standard Gaussian-mixture EM on equally-weighted points, initialized at
/// `init` and keeping its component count. Stops on `em_max_iter` or a
/// log-likelihood gain below `em_tol`; covariances are floored by
/// `em_cov_floor * I` (default `1e-8` times the average marginal variance of
/// the points).
pub fn em_refit(
    points: &DMatrix<f64>,
    init: &GaussianMixture,
    cfg: &CorrectionConfig,
) -> Result<GaussianMixture> {
    let n = points.nrows();
    let d = points.ncols();
    let m = init.len();
    if d != init.dim() {
        return Err(Error::DimensionMismatch {
            expected: init.dim(),
            actual: d,
        });
    }
    if n < d + 1 {
        return Err(Error::Contract(format!(
            "EM needs at least d+1 = {} points, got {n}",
            d + 1
        )));
    }

    let floor = cfg.em_cov_floor.unwrap_or_else(|| {
        let mut avg_var = 0.0;
        for j in 0..d {
            let col = points.column(j);
            let mean = col.sum() / n as f64;
            avg_var += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        }
        1e-8 * (avg_var / d as f64).max(1e-300)
    });

    let mut comps: Vec<GaussianComponent> = init.components().to_vec();
    let mut prev_ll = f64::NEG_INFINITY;

    for _iter in 0..cfg.em_max_iter {
        // E step.
        let mut resp = DMatrix::zeros(n, m);
        let mut ll = 0.0;
        let mut row_terms = vec![0.0_f64; m];
        for i in 0..n {
            let x = points.row(i).transpose();
            for (k, c) in comps.iter().enumerate() {
                row_terms[k] = c.weighted_log_density_at(&x);
            }
            let lse = logsumexp(&row_terms);
            if !lse.is_finite() {
                return Err(Error::NonFinite {
                    what: "EM responsibilities".into(),
                });
            }
            ll += lse;
            for k in 0..m {
                resp[(i, k)] = (row_terms[k] - lse).exp();
            }
        }

        let done = ll - prev_ll < cfg.em_tol && prev_ll.is_finite();
        prev_ll = ll;
        if done {
            break;
        }

        // M step.
        let mut new_comps = Vec::with_capacity(m);
        for k in 0..m {
            let total = resp.column(k).sum();
            if total < 1e-12 * n as f64 {
                return Err(Error::ComponentCollapse { component: k });
            }
            let mut mean = DVector::zeros(d);
            for i in 0..n {
                mean += points.row(i).transpose() * (resp[(i, k)] / total);
            }
            let mut cov = DMatrix::zeros(d, d);
            for i in 0..n {
                let diff = points.row(i).transpose() - &mean;
                cov += &diff * diff.transpose() * (resp[(i, k)] / total);
            }
            for j in 0..d {
                cov[(j, j)] += floor;
            }
            let (cov, _, _) =
                cholesky_with_jitter(&cov).map_err(|_| Error::ComponentCollapse { component: k })?;
            let log_w = (total / n as f64).ln();
            new_comps.push(GaussianComponent::from_moments(mean, cov, log_w)?);
        }
        comps = new_comps;
    }

    Ok(GaussianMixture::new(comps)?.normalized())
}
