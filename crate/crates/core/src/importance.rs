//! Importance weights from Jacobian norms and the conditional-Gaussian
//! dataset the latent flow is fitted on.
//!
//! Each latent `z_j` of the last batch receives weight `p_j = g_j / Σ g`,
//! an integer share `N_j` of the augmentation budget `N`, and contributes
//! `N_j` draws from a Gaussian centered on itself.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Covariance of the per-latent augmentation Gaussians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentCov {
    /// `N(z_j, I)`
    #[default]
    Identity,
    /// `N(z_j, n p_j I)`: trace proportional to the weight, equal to `d` when
    /// weights are uniform.
    TraceProportional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentBatch {
    pub latents: Tensor2,
    pub norms: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

impl LatentBatch {
    pub fn new(latents: Tensor2) -> Self {
        Self {
            latents,
            norms: None,
            weights: None,
        }
    }

    /// Records per-row norms and the weights they induce.
    pub fn set_norms(&mut self, norms: Vec<f64>) -> Result<()> {
        if norms.len() != self.latents.rows() {
            return Err(Error::Shape(format!(
                "{} norms for {} latents",
                norms.len(),
                self.latents.rows()
            )));
        }
        let weights = importance_weights(&norms)?;
        self.norms = Some(norms);
        self.weights = Some(weights);
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentationPlan {
    pub counts: Vec<usize>,
    pub total: usize,
}

/// `p_j = g_j / Σ g`
pub fn importance_weights(norms: &[f64]) -> Result<Vec<f64>> {
    if norms.is_empty() {
        return Err(Error::Argument("no norms given".into()));
    }
    if let Some(bad) = norms.iter().find(|&&g| !(g >= 0.0) || !g.is_finite()) {
        return Err(Error::Argument(format!("norm {bad} is not a finite nonnegative value")));
    }
    let total: f64 = norms.iter().sum();
    if total == 0.0 {
        return Err(Error::DegenerateBatch);
    }
    Ok(norms.iter().map(|g| g / total).collect())
}

/// Largest-remainder rounding of `total * weights`; ties go to the lower index.
pub fn allocate_counts(weights: &[f64], total: usize) -> Result<AugmentationPlan> {
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Argument("weights must be finite and nonnegative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return Err(Error::Argument("weights must have positive mass".into()));
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
    });
    let remaining = total.saturating_sub(assigned);
    for &j in order.iter().take(remaining) {
        counts[j] += 1;
    }
    Ok(AugmentationPlan { counts, total })
}

/// Augmentation with an explicit standard-normal source.
pub fn augment_with(
    latents: &Tensor2,
    plan: &AugmentationPlan,
    cov: AugmentCov,
    weights: Option<&[f64]>,
    mut noise: impl FnMut() -> f64,
) -> Result<Tensor2> {
    if plan.counts.len() != latents.rows() {
        return Err(Error::Shape(format!(
            "plan has {} entries for {} latents",
            plan.counts.len(),
            latents.rows()
        )));
    }
    let n = latents.rows() as f64;
    let d = latents.cols();
    let mut data = Vec::with_capacity(plan.total * d);
    for (j, &count) in plan.counts.iter().enumerate() {
        let std = match cov {
            AugmentCov::Identity => 1.0,
            AugmentCov::TraceProportional => {
                let w = weights.ok_or_else(|| {
                    Error::Argument("trace-proportional augmentation needs weights".into())
                })?;
                (n * w[j]).sqrt()
            }
        };
        let center = latents.row(j);
        for _ in 0..count {
            data.extend(center.iter().map(|&c| c + std * noise()));
        }
    }
    Tensor2::from_vec(data.len() / d.max(1), d, data)
}

/// Draws `N_j` points from `N(z_j, I)` for every source `j`, source-major.
pub fn augment<R: Rng + ?Sized>(latents: &Tensor2, plan: &AugmentationPlan, rng: &mut R) -> Result<Tensor2> {
    augment_with(latents, plan, AugmentCov::Identity, None, || rng.sample(StandardNormal))
}

/// Weights, allocation and augmentation in one go.
pub fn build_flow_dataset<R: Rng + ?Sized>(
    batch: &LatentBatch,
    total: usize,
    cov: AugmentCov,
    rng: &mut R,
) -> Result<Tensor2> {
    let weights = match &batch.weights {
        Some(w) => w.clone(),
        None => {
            let norms = batch
                .norms
                .as_ref()
                .ok_or_else(|| Error::State("latent batch has no norms".into()))?;
            importance_weights(norms)?
        }
    };
    let plan = allocate_counts(&weights, total)?;
    augment_with(&batch.latents, &plan, cov, Some(&weights), || rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weight_examples() {
        assert_eq!(importance_weights(&[1.0; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(importance_weights(&[2.0, 6.0]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(importance_weights(&[0.0, 5.0]).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(importance_weights(&[0.0, 0.0]), Err(Error::DegenerateBatch)));
        assert!(importance_weights(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_counts(&[0.25, 0.75], 100).unwrap().counts, vec![25, 75]);
        let third = 1.0 / 3.0;
        assert_eq!(
            allocate_counts(&[third, third, third], 100).unwrap().counts,
            vec![34, 33, 33]
        );
        assert_eq!(allocate_counts(&[1.0], 7).unwrap().counts, vec![7]);
    }

    #[test]
    fn zero_noise_reproduces_sources() {
        let latents = Tensor2::from_vec(2, 2, vec![1.0, 2.0, -3.0, 4.0]).unwrap();
        let plan = AugmentationPlan {
            counts: vec![2, 1],
            total: 3,
        };
        let out = augment_with(&latents, &plan, AugmentCov::Identity, None, || 0.0).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 1.0, 2.0, -3.0, 4.0]);
    }

    #[test]
    fn empty_plan_gives_empty_output() {
        let latents = Tensor2::zeros(3, 2);
        let plan = AugmentationPlan {
            counts: vec![0, 0, 0],
            total: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&latents, &plan, &mut rng).unwrap().rows(), 0);
    }

    #[test]
    fn single_source_block_centers_on_it() {
        let latents = Tensor2::from_vec(3, 2, vec![0.0, 0.0, 5.0, 5.0, -4.0, 2.0]).unwrap();
        let plan = AugmentationPlan {
            counts: vec![0, 0, 5],
            total: 5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = augment(&latents, &plan, &mut rng).unwrap();
        assert_eq!(out.rows(), 5);
        let mean = out.column_means();
        assert!((mean[0] + 4.0).abs() < 3.0 / 5f64.sqrt());
        assert!((mean[1] - 2.0).abs() < 3.0 / 5f64.sqrt());
    }

    #[test]
    fn trace_proportional_uses_weight() {
        let latents = Tensor2::zeros(2, 3);
        let plan = AugmentationPlan {
            counts: vec![1, 1],
            total: 2,
        };
        let out = augment_with(
            &latents,
            &plan,
            AugmentCov::TraceProportional,
            Some(&[0.125, 0.875]),
            || 1.0,
        )
        .unwrap();
        assert!((out.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((out.get(1, 0) - 1.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dataset_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut batch = LatentBatch::new(Tensor2::from_vec(2, 2, vec![-10.0, 0.0, 10.0, 0.0]).unwrap());
        batch.set_norms(vec![0.0, 1.0]).unwrap();
        let data = build_flow_dataset(&batch, 10, AugmentCov::Identity, &mut rng).unwrap();
        assert_eq!(data.rows(), 10);
        assert!(data.iter_rows().all(|r| r[0] > 0.0));

        let mut batch = LatentBatch::new(Tensor2::from_fn(4, 2, |r, _| r as f64 * 100.0));
        batch.set_norms(vec![3.0; 4]).unwrap();
        let data = build_flow_dataset(&batch, 4, AugmentCov::Identity, &mut rng).unwrap();
        for r in 0..4 {
            assert!((data.get(r, 0) - r as f64 * 100.0).abs() < 10.0);
        }
    }
}
