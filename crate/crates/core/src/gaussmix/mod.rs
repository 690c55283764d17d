//! Gaussian and Gaussian-mixture algebra in precision form.
//!
//! Components store the precision matrix `Q` (not the covariance) together
//! with a cached Cholesky factor and `log|Q|`; evaluating the spread of a
//! mixture through the linear state equation is cheaper in this orientation.
//! All weights are kept in log space and mixture evaluation goes through
//! log-sum-exp, so long filtering runs do not underflow.

mod block;
mod component;
mod mixture;
mod moments;
mod spd;

pub use block::{decompose, decompose_indexed, BlockIndex, ConditionalSpec};
pub use component::GaussianComponent;
pub use mixture::GaussianMixture;
pub use moments::weighted_moments;
pub use spd::nearest_spd;
