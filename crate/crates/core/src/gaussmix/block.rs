use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::gaussmix::GaussianComponent;
use crate::linalg::{log_det_from_cholesky, symmetrized};

/// A two-block partition of the coordinates of a joint Gaussian into a state
/// block and a parameter block.
#[derive(Debug, Clone)]
pub struct BlockIndex {
    state_dims: Vec<usize>,
    param_dims: Vec<usize>,
    dim: usize,
}

impl BlockIndex {
    /// The two index sets must be strictly increasing, disjoint, and cover
    /// `0..dim`.
    pub fn new(state_dims: Vec<usize>, param_dims: Vec<usize>, dim: usize) -> Result<Self> {
        if state_dims.is_empty() || param_dims.is_empty() {
            return Err(Error::InvalidBlockIndex("both blocks must be non-empty".into()));
        }
        for w in [&state_dims, &param_dims] {
            if w.windows(2).any(|p| p[0] >= p[1]) {
                return Err(Error::InvalidBlockIndex("indices must be strictly increasing".into()));
            }
        }
        let mut seen = vec![false; dim];
        for &i in state_dims.iter().chain(param_dims.iter()) {
            if i >= dim || seen[i] {
                return Err(Error::InvalidBlockIndex(format!(
                    "index {i} out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidBlockIndex("blocks must cover 0..dim".into()));
        }
        Ok(Self {
            state_dims,
            param_dims,
            dim,
        })
    }

    /// State coordinates `0..d_x`, parameter coordinates `d_x..dim`.
    pub fn contiguous(d_x: usize, dim: usize) -> Result<Self> {
        Self::new((0..d_x).collect(), (d_x..dim).collect(), dim)
    }

    pub fn state_dims(&self) -> &[usize] {
        &self.state_dims
    }

    pub fn param_dims(&self) -> &[usize] {
        &self.param_dims
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn gather_matrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn gather_vector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// The factorization `N(x, phi) = N(phi | mu_phi, Q_phi^{-1}) *
/// N(x | mu_x - G (phi - mu_phi), Q_xx^{-1})` of one joint component.
#[derive(Debug, Clone)]
pub struct ConditionalSpec {
    /// Gaussian marginal over the parameter block (carries the parent's
    /// log-weight).
    pub marginal_phi: GaussianComponent,
    /// Conditional precision of the state block: the `Q_xx` sub-block.
    pub cond_precision: DMatrix<f64>,
    /// Cross gain `G = Q_xx^{-1} Q_{x phi}`.
    pub cross_gain: DMatrix<f64>,
    /// State part of the joint mean.
    pub base_mean_x: DVector<f64>,
    cond_chol: Cholesky<f64, Dyn>,
    cond_log_det: f64,
}

impl ConditionalSpec {
    /// Conditional mean `mu_x - G (phi - mu_phi)`, affine in `phi`.
    pub fn cond_mean(&self, phi: &DVector<f64>) -> DVector<f64> {
        &self.base_mean_x - &self.cross_gain * (phi - self.marginal_phi.mean())
    }

    pub fn cond_log_det(&self) -> f64 {
        self.cond_log_det
    }

    pub fn cond_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.cond_chol
    }

    /// `log N(x | cond_mean(phi), Q_xx^{-1})`.
    pub fn cond_log_density(&self, x: &DVector<f64>, phi: &DVector<f64>) -> f64 {
        let diff = x - self.cond_mean(phi);
        0.5 * self.cond_log_det
            - 0.5 * x.len() as f64 * crate::linalg::LN_2PI
            - 0.5 * (&self.cond_precision * &diff).dot(&diff)
    }
}

/// Split one joint component into a parameter marginal and a state
/// conditional. The marginal precision is the Schur complement
/// `Q_phiphi - Q_phix Q_xx^{-1} Q_xphi`; `component_index` only labels errors.
pub fn decompose_indexed(
    comp: &GaussianComponent,
    block: &BlockIndex,
    component_index: usize,
) -> Result<ConditionalSpec> {
    if block.dim() != comp.dim() {
        return Err(Error::DimensionMismatch {
            expected: comp.dim(),
            actual: block.dim(),
        });
    }
    let q = comp.precision();
    let xs = block.state_dims();
    let ps = block.param_dims();
    let q_xx = gather_matrix(q, xs, xs);
    let q_xp = gather_matrix(q, xs, ps);
    let q_pp = gather_matrix(q, ps, ps);

    let cond_chol = Cholesky::new(symmetrized(&q_xx)).ok_or(Error::SingularBlock {
        component: component_index,
    })?;
    let cond_log_det = log_det_from_cholesky(&cond_chol);
    // G = Q_xx^{-1} Q_xphi, column by column through the factor.
    let cross_gain = cond_chol.solve(&q_xp);
    // Schur complement: marginal phi precision = Q_pp - Q_px Q_xx^{-1} Q_xp.
    let marg_prec = symmetrized(&(&q_pp - q_xp.transpose() * &cross_gain));
    let mu_phi = gather_vector(comp.mean(), ps);
    let base_mean_x = gather_vector(comp.mean(), xs);
    let marginal_phi = GaussianComponent::new(mu_phi, marg_prec, comp.log_weight())?;

    Ok(ConditionalSpec {
        marginal_phi,
        cond_precision: symmetrized(&q_xx),
        cross_gain,
        base_mean_x,
        cond_chol,
        cond_log_det,
    })
}

pub fn decompose(comp: &GaussianComponent, block: &BlockIndex) -> Result<ConditionalSpec> {
    decompose_indexed(comp, block, 0)
}
