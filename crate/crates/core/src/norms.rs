//! Per-example generator Jacobian norms, used as importance scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::nn::MlpNet;
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Frobenius,
    Nuclear,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::Frobenius => "frobenius",
            NormKind::Nuclear => "nuclear",
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frobenius" => Ok(NormKind::Frobenius),
            "nuclear" => Ok(NormKind::Nuclear),
            other => Err(Error::Argument(format!("unknown norm kind `{other}`"))),
        }
    }
}

pub fn jacobian_norm(j: &Tensor2, kind: NormKind) -> Result<f64> {
    if !j.is_finite() {
        return Err(Error::Numeric("Jacobian has non-finite entries".into()));
    }
    match kind {
        NormKind::Frobenius => Ok(j.frobenius_norm()),
        // singular values come from the cols x cols Gram matrix JᵀJ (d_z x d_z)
        NormKind::Nuclear => Ok(singular_values(j)?.iter().sum()),
    }
}

/// Norm of the input Jacobian of `net` at every row of `latents`, scaled by
/// `output_scale` (a fixed affine factor applied after the network).
pub fn batch_norms(net: &MlpNet, latents: &Tensor2, kind: NormKind, output_scale: f64) -> Result<Vec<f64>> {
    net.batch_jacobians(latents)?
        .iter()
        .map(|j| jacobian_norm(j, kind).map(|v| v * output_scale.abs()))
        .collect()
}
