use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::NaturalParams;

/// Transformations of `(phi, x_{1:n})` that leave the data likelihood of the
/// example model unchanged.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NidTransform {
    /// `c1' = c1 / beta`, `sigma_u' = beta sigma_u`, `x' = beta x`.
    C1SigmaU { beta: f64 },
    /// `c1' = -c1`, `x' = -x`.
    C1Sign,
}

/// Apply a non-identifiability transform; parameters outside the transformed
/// subset are untouched.
pub fn apply_nid(
    transform: &NidTransform,
    params: &NaturalParams,
    x: &[f64],
) -> Result<(NaturalParams, Vec<f64>)> {
    match *transform {
        NidTransform::C1SigmaU { beta } => {
            if beta <= 0.0 {
                return Err(Error::Contract("beta must be positive".into()));
            }
            let p = NaturalParams {
                c1: params.c1 / beta,
                sigma_u: beta * params.sigma_u,
                ..*params
            };
            Ok((p, x.iter().map(|v| beta * v).collect()))
        }
        NidTransform::C1Sign => {
            let p = NaturalParams {
                c1: -params.c1,
                ..*params
            };
            Ok((p, x.iter().map(|v| -v).collect()))
        }
    }
}
