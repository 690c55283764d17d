use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, log_det_from_cholesky, symmetrized, LN_2PI};

/// One weighted Gaussian in precision form.
///
/// Immutable after construction; the Cholesky factor of `Q` and `log|Q|` are
/// computed once. "Mutating" operations return a new component.
#[derive(Debug, Clone)]
pub struct GaussianComponent {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    log_weight: f64,
    chol: Cholesky<f64, Dyn>,
    log_det_precision: f64,
}

impl GaussianComponent {
    /// Build from mean and SPD precision. The precision must be symmetric to
    /// a 1e-12 relative tolerance and admit a Cholesky factorization.
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>, log_weight: f64) -> Result<Self> {
        let d = mean.len();
        if precision.nrows() != d || precision.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: precision.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite())
            || precision.iter().any(|v| !v.is_finite())
            || !log_weight.is_finite()
        {
            return Err(Error::NonFinite {
                what: "Gaussian component".into(),
            });
        }
        if !is_symmetric(&precision, 1e-12) {
            return Err(Error::NotSymmetric);
        }
        let precision = symmetrized(&precision);
        let chol = Cholesky::new(precision.clone()).ok_or_else(|| Error::NotSpd {
            context: "component precision".into(),
        })?;
        let log_det_precision = log_det_from_cholesky(&chol);
        Ok(Self {
            mean,
            precision,
            log_weight,
            chol,
            log_det_precision,
        })
    }

    /// Build from mean and SPD covariance by inverting through Cholesky.
    pub fn from_moments(
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        log_weight: f64,
    ) -> Result<Self> {
        let chol = Cholesky::new(symmetrized(&covariance)).ok_or_else(|| Error::NotSpd {
            context: "covariance".into(),
        })?;
        let precision = symmetrized(&chol.inverse());
        Self::new(mean, precision, log_weight)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn log_det_precision(&self) -> f64 {
        self.log_det_precision
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Covariance `Q^{-1}`, derived on demand.
    pub fn covariance(&self) -> DMatrix<f64> {
        symmetrized(&self.chol.inverse())
    }

    pub fn with_log_weight(&self, log_weight: f64) -> Self {
        let mut c = self.clone();
        c.log_weight = log_weight;
        c
    }

    /// `log N(x | mean, Q^{-1})`, without the component weight.
    pub fn log_density_at(&self, x: &DVector<f64>) -> f64 {
        self.log_density_slice(x.as_slice())
    }

    /// Allocation-free evaluation used on the hot paths.
    pub fn log_density_slice(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        debug_assert_eq!(x.len(), d);
        let mean = self.mean.as_slice();
        let q = self.precision.as_slice(); // column-major d x d
        let mut quad = 0.0;
        for j in 0..d {
            let dj = x[j] - mean[j];
            let col = &q[j * d..(j + 1) * d];
            let mut acc = 0.0;
            for i in 0..d {
                acc += col[i] * (x[i] - mean[i]);
            }
            quad += dj * acc;
        }
        0.5 * self.log_det_precision - 0.5 * d as f64 * LN_2PI - 0.5 * quad
    }

    /// `log_weight + log N(x | mean, Q^{-1})`.
    pub fn weighted_log_density_at(&self, x: &DVector<f64>) -> f64 {
        self.log_weight + self.log_density_at(x)
    }

    /// One draw: `mean + L^{-T} z` where `Q = L L^T` and `z` is standard
    /// normal, i.e. a solve against the precision factor (manual
    /// back-substitution on the lower factor).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let mut w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let l = self.chol.l_dirty();
        let ls = l.as_slice();
        // Solve L^T w = z in place: L^T is upper with (L^T)_{ij} = L_{ji}.
        for i in (0..d).rev() {
            let mut acc = w[i];
            for j in (i + 1)..d {
                // (L^T)_{ij} = l[(j, i)] = ls[i * d + j].
                acc -= ls[i * d + j] * w[j];
            }
            w[i] = acc / ls[i * d + i];
        }
        for i in 0..d {
            w[i] += self.mean[i];
        }
        w
    }
}
