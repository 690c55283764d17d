//! Small dense linear-algebra helpers used throughout the crate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.8378770664093453;

/// `log(sum_i exp(v_i))` with the usual max shift. Returns `-inf` for an
/// empty slice or when every entry is `-inf`.
pub fn logsumexp(vals: &[f64]) -> f64 {
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = vals.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Relative symmetry check: `max|M - M^T| <= tol * max(1, max|M|)`.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.iter().fold(0.0_f64, |a, &v| a.max(v.abs())).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn log_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let mut s = 0.0;
    for i in 0..l.nrows() {
        s += l[(i, i)].ln();
    }
    2.0 * s
}

/// `v^T M v`.
pub fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (m * v).dot(v)
}

/// Cholesky with scale-aware jitter escalation: base jitter
/// `1e-10 * max(trace/d, 1)`, multiplied by 10 per retry, at most 6 retries.
/// Returns the (possibly jittered) matrix, its factor, and the jitter used.
pub fn cholesky_with_jitter(
    m: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>, f64)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "matrix for Cholesky".into(),
        });
    }
    let d = m.nrows() as f64;
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Ok((m.clone(), ch, 0.0));
    }
    let base = 1e-10 * (m.trace() / d).max(1.0);
    let mut jitter = base;
    for _ in 0..=6 {
        let mut jm = m.clone();
        for i in 0..m.nrows() {
            jm[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(jm.clone()) {
            return Ok((jm, ch, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::DegeneratePoints)
}

/// Draw one index from a normalized weight vector by inverse CDF in stored
/// order (ties broken toward the earlier index).
pub fn sample_index<R: rand::Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u <= acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Multinomial draw of `count` indices proportional to `weights`
/// (not necessarily normalized).
pub fn multinomial_indices<R: rand::Rng>(
    weights: &[f64],
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let norm: Vec<f64> = weights.iter().map(|w| w / total).collect();
    (0..count).map(|_| sample_index(&norm, rng)).collect()
}
