use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticKind {
    /// `m x m` grid of isotropic Gaussians centered on the origin.
    GaussianGrid { m: usize, spacing: f64, sigma: f64 },
    /// `k` isotropic Gaussians evenly spaced on a circle.
    Ring { k: usize, radius: f64, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub shape: SyntheticKind,
    pub count: usize,
}

impl SyntheticKind {
    pub fn centers(&self) -> Vec<[f64; 2]> {
        match *self {
            SyntheticKind::GaussianGrid { m, spacing, .. } => {
                let half = (m as f64 - 1.0) / 2.0;
                (0..m * m)
                    .map(|i| [((i / m) as f64 - half) * spacing, ((i % m) as f64 - half) * spacing])
                    .collect()
            }
            SyntheticKind::Ring { k, radius, .. } => (0..k)
                .map(|i| {
                    let a = TAU * i as f64 / k as f64;
                    [radius * a.cos(), radius * a.sin()]
                })
                .collect(),
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            SyntheticKind::GaussianGrid { sigma, .. } | SyntheticKind::Ring { sigma, .. } => sigma,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let sigma = self.shape.sigma();
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("synthetic sigma must be positive, got {sigma}")));
        }
        if self.count == 0 {
            return Err(Error::Config("synthetic count must be at least 1".into()));
        }
        let n = self.shape.centers().len();
        if n == 0 || n > 256 {
            return Err(Error::Config(format!("synthetic mixture needs 1..=256 components, got {n}")));
        }
        Ok(())
    }
}

/// Draws i.i.d. mixture samples; labels hold the component index.
pub fn make_synthetic<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    let centers = spec.shape.centers();
    let sigma = spec.shape.sigma();
    let mut data = Vec::with_capacity(spec.count * 2);
    let mut labels = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let k = rng.gen_range(0..centers.len());
        for c in centers[k] {
            let e: f64 = rng.sample(StandardNormal);
            data.push(c + sigma * e);
        }
        labels.push(k as u8);
    }
    let extent = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let half = if extent > 0.0 { 1.1 * extent } else { 1.0 };
    let samples = Tensor2::from_vec(spec.count, 2, data)?;
    Dataset::new(samples, Some(labels), (-half, half), None)
}
