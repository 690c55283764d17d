use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussmix::GaussianComponent;
use crate::linalg::{logsumexp, sample_index, symmetrized};

/// An ordered list of equal-dimension weighted Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
    normalized: bool,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyMixture);
        }
        let d = components[0].dim();
        for c in &components {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: c.dim(),
                });
            }
        }
        let total: f64 = components.iter().map(|c| c.log_weight().exp()).sum();
        let normalized = (total - 1.0).abs() <= 1e-10;
        Ok(Self {
            components,
            normalized,
        })
    }

    /// Shift all log-weights so they sum to one.
    pub fn normalized(mut self) -> Self {
        let lse = logsumexp(
            &self
                .components
                .iter()
                .map(|c| c.log_weight())
                .collect::<Vec<_>>(),
        );
        self.components = self
            .components
            .into_iter()
            .map(|c| {
                let lw = c.log_weight() - lse;
                c.with_log_weight(lw)
            })
            .collect();
        self.normalized = true;
        self
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn single(component: GaussianComponent) -> Self {
        Self {
            components: vec![component.with_log_weight(0.0)],
            normalized: true,
        }
    }

    /// `log sum_i w_i N(x | mu_i, Q_i^{-1})` via log-sum-exp.
    pub fn log_density(&self, point: &DVector<f64>) -> Result<f64> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: point.len(),
            });
        }
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weighted_log_density_at(point))
            .collect();
        Ok(logsumexp(&terms))
    }

    /// `n` i.i.d. draws, one row per point. Component selection is inverse-CDF
    /// on the cumulative weights in stored order, so fixed seeds reproduce
    /// bit-identically.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        if !self.normalized {
            return Err(Error::UnnormalizedMixture);
        }
        if n == 0 {
            return Err(Error::Contract("sample count must be >= 1".into()));
        }
        let weights: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.log_weight().exp())
            .collect();
        let d = self.dim();
        let mut out = DMatrix::zeros(n, d);
        for r in 0..n {
            let k = sample_index(&weights, rng);
            let x = self.components[k].sample(rng);
            out.row_mut(r).copy_from(&x.transpose());
        }
        Ok(out)
    }

    /// Marginal mixture over a subset of coordinates: per component the mean
    /// is restricted and the covariance sub-block of `Q^{-1}` is re-inverted
    /// to precision form; weights are unchanged.
    pub fn marginal(&self, dims: &[usize]) -> Result<GaussianMixture> {
        if dims.is_empty() {
            return Err(Error::Contract("marginal over empty index set".into()));
        }
        for &i in dims {
            if i >= self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    actual: i,
                });
            }
        }
        let comps = self
            .components
            .iter()
            .map(|c| {
                let cov = c.covariance();
                let k = dims.len();
                let sub_mean = DVector::from_fn(k, |i, _| c.mean()[dims[i]]);
                let sub_cov = DMatrix::from_fn(k, k, |i, j| cov[(dims[i], dims[j])]);
                GaussianComponent::from_moments(sub_mean, symmetrized(&sub_cov), c.log_weight())
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(comps)
    }

    /// Mixture mean `sum_i w_i mu_i` (requires a normalized mixture).
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for c in &self.components {
            m += c.mean() * c.log_weight().exp();
        }
        m
    }

    /// Mixture covariance by the law of total variance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut cov = DMatrix::zeros(self.dim(), self.dim());
        for c in &self.components {
            let w = c.log_weight().exp();
            let dm = c.mean() - &m;
            cov += (c.covariance() + &dm * dm.transpose()) * w;
        }
        symmetrized(&cov)
    }

    /// Per-coordinate marginal standard deviations.
    pub fn marginal_stds(&self) -> DVector<f64> {
        let cov = self.covariance();
        DVector::from_fn(self.dim(), |i, _| cov[(i, i)].max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LN_2PI;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn comp(mean: f64, prec: f64, log_w: f64) -> GaussianComponent {
        GaussianComponent::new(dvector![mean], dmatrix![prec], log_w).unwrap()
    }

    #[test]
    fn symmetric_two_component_mixture_at_zero() {
        let half = (0.5_f64).ln();
        let mix = GaussianMixture::new(vec![comp(-1.0, 1.0, half), comp(1.0, 1.0, half)]).unwrap();
        // Both terms equal: log(exp(-1/2 - log(2pi)/2)).
        let expect = -0.5 - 0.5 * LN_2PI;
        assert_abs_diff_eq!(
            mix.log_density(&dvector![0.0]).unwrap(),
            expect,
            epsilon = 1e-12
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mix = GaussianMixture::new(vec![comp(0.0, 1.0, 0.0)]).unwrap();
        assert!(mix.log_density(&dvector![0.0, 0.0]).is_err());
    }

    #[test]
    fn sampling_requires_normalized_weights() {
        let mix = GaussianMixture::new(vec![comp(0.0, 1.0, 0.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mix.sample(10, &mut rng).is_err());
        let mix = mix.normalized();
        assert!(mix.sample(10, &mut rng).is_ok());
    }

    #[test]
    fn sample_moments_of_standard_normal() {
        let mix = GaussianMixture::new(vec![comp(0.0, 1.0, 0.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let pts = mix.sample(n, &mut rng).unwrap();
        let mean = pts.column(0).sum() / n as f64;
        let var = pts.column(0).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn component_selection_frequencies_follow_weights() {
        let mix = GaussianMixture::new(vec![
            comp(-100.0, 1.0, (0.3_f64).ln()),
            comp(100.0, 1.0, (0.7_f64).ln()),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let pts = mix.sample(n, &mut rng).unwrap();
        let frac_right = pts.column(0).iter().filter(|&&v| v > 0.0).count() as f64 / n as f64;
        // 3 sigma of Binomial(n, 0.7)/n.
        let sigma = (0.7 * 0.3 / n as f64).sqrt();
        assert!((frac_right - 0.7).abs() < 3.0 * sigma);
    }

    #[test]
    fn fixed_seed_reproduces_bit_identical_samples() {
        let mix = GaussianMixture::new(vec![
            comp(-1.0, 2.0, (0.4_f64).ln()),
            comp(2.0, 0.5, (0.6_f64).ln()),
        ])
        .unwrap();
        let a = mix.sample(64, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = mix.sample(64, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn marginal_of_full_index_set_is_identity() {
        let q = dmatrix![2.0, 0.4; 0.4, 1.0];
        let c = GaussianComponent::new(dvector![1.0, -1.0], q, 0.0).unwrap();
        let mix = GaussianMixture::new(vec![c]).unwrap();
        let marg = mix.marginal(&[0, 1]).unwrap();
        let p = dvector![0.3, 0.7];
        assert_abs_diff_eq!(
            marg.log_density(&p).unwrap(),
            mix.log_density(&p).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn marginal_of_product_form_keeps_diagonal_block() {
        let q = dmatrix![2.0, 0.0; 0.0, 5.0];
        let c = GaussianComponent::new(dvector![0.0, 0.0], q, 0.0).unwrap();
        let mix = GaussianMixture::new(vec![c]).unwrap();
        let marg = mix.marginal(&[1]).unwrap();
        assert_abs_diff_eq!(marg.components()[0].precision()[(0, 0)], 5.0, epsilon = 1e-9);
    }
}
