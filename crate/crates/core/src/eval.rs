//! Proxy Fréchet distance: the closed-form Fréchet distance between Gaussian
//! fits of generated and real samples in a fixed feature space.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sqrtm_psd, sym_eig, SymMatrix};
use crate::nn::{Activation, MlpNet, LEAKY_ALPHA};
use crate::optim::AdamState;
use crate::tensor::Tensor2;

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExtractorKind {
    RawPixels,
    Pca {
        k: usize,
    },
    ProbeNet {
        #[serde(default = "default_probe_hidden")]
        hidden: usize,
        #[serde(default = "default_probe_features")]
        features: usize,
        #[serde(default = "default_probe_epochs")]
        epochs: usize,
    },
}

fn default_probe_hidden() -> usize {
    64
}
fn default_probe_features() -> usize {
    32
}
fn default_probe_epochs() -> usize {
    5
}

impl Default for ExtractorKind {
    fn default() -> Self {
        ExtractorKind::Pca { k: 32 }
    }
}

/// A frozen feature map, fitted once on real data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureExtractor {
    RawPixels { dim: usize },
    Pca { mean: Vec<f64>, projection: Tensor2 },
    ProbeNet { body: MlpNet, train_accuracy: f64 },
}

impl FeatureExtractor {
    pub fn feature_dim(&self) -> usize {
        match self {
            FeatureExtractor::RawPixels { dim } => *dim,
            FeatureExtractor::Pca { projection, .. } => projection.cols(),
            FeatureExtractor::ProbeNet { body, .. } => body.output_size(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureExtractor::RawPixels { dim } => *dim,
            FeatureExtractor::Pca { mean, .. } => mean.len(),
            FeatureExtractor::ProbeNet { body, .. } => body.input_size(),
        }
    }

    pub fn extract(&self, samples: &Tensor2) -> Result<Tensor2> {
        if samples.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "extractor expects {} columns, samples have {}",
                self.input_dim(),
                samples.cols()
            )));
        }
        match self {
            FeatureExtractor::RawPixels { .. } => Ok(samples.clone()),
            FeatureExtractor::Pca { mean, projection } => {
                let centered = Tensor2::from_fn(samples.rows(), samples.cols(), |r, c| {
                    samples.get(r, c) - mean[c]
                });
                centered.matmul(projection)
            }
            FeatureExtractor::ProbeNet { body, .. } => body.predict(samples),
        }
    }

    /// Maps PCA features back to data space.
    pub fn reconstruct(&self, features: &Tensor2) -> Result<Tensor2> {
        match self {
            FeatureExtractor::Pca { mean, projection } => {
                let mut x = features.matmul(&projection.transpose())?;
                for r in 0..x.rows() {
                    x.row_mut(r).iter_mut().zip(mean).for_each(|(v, m)| *v += m);
                }
                Ok(x)
            }
            FeatureExtractor::RawPixels { .. } => Ok(features.clone()),
            FeatureExtractor::ProbeNet { .. } => {
                Err(Error::Argument("probe features cannot be inverted".into()))
            }
        }
    }
}

pub fn fit_extractor<R: Rng + ?Sized>(
    kind: &ExtractorKind,
    real: &Tensor2,
    labels: Option<&[u8]>,
    rng: &mut R,
) -> Result<FeatureExtractor> {
    if real.rows() == 0 {
        return Err(Error::InsufficientSamples { needed: 1, rows: 0 });
    }
    match kind {
        ExtractorKind::RawPixels => Ok(FeatureExtractor::RawPixels { dim: real.cols() }),
        ExtractorKind::Pca { k } => fit_pca(real, *k),
        ExtractorKind::ProbeNet {
            hidden,
            features,
            epochs,
        } => {
            let labels = labels.ok_or_else(|| {
                Error::Argument("the probe_net extractor needs a labelled dataset".into())
            })?;
            fit_probe(real, labels, *hidden, *features, *epochs, rng)
        }
    }
}

fn fit_pca(real: &Tensor2, k: usize) -> Result<FeatureExtractor> {
    if k == 0 {
        return Err(Error::Argument("pca needs k >= 1".into()));
    }
    let mean = real.column_means();
    let centered = Tensor2::from_fn(real.rows(), real.cols(), |r, c| real.get(r, c) - mean[c]);
    let denom = (real.rows().max(2) - 1) as f64;
    let cov = SymMatrix::new(&centered.gram().map(|v| v / denom))?;
    let eig = sym_eig(&cov)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let rank = eig.values.iter().filter(|&&l| l > 1e-10 * top).count().max(1);
    let kept = if k > rank {
        warn!("pca({k}) requested but the data has rank {rank}; keeping {rank} components");
        rank
    } else {
        k
    };
    let projection = Tensor2::from_fn(real.cols(), kept, |r, c| eig.vectors.get(r, c));
    Ok(FeatureExtractor::Pca { mean, projection })
}

fn fit_probe<R: Rng + ?Sized>(
    real: &Tensor2,
    labels: &[u8],
    hidden: usize,
    features: usize,
    epochs: usize,
    rng: &mut R,
) -> Result<FeatureExtractor> {
    if labels.len() != real.rows() {
        return Err(Error::Shape("labels do not match samples".into()));
    }
    let classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let act = Activation::LeakyRelu(LEAKY_ALPHA);
    let mut body = MlpNet::glorot(&[real.cols(), hidden, features], act, act, rng)?;
    let mut head = MlpNet::glorot(&[features, classes], act, Activation::Identity, rng)?;
    let mut adam_body = AdamState::new(1e-3);
    let mut adam_head = AdamState::new(1e-3);
    let mut order: Vec<usize> = (0..real.rows()).collect();
    let batch = 32;
    let mut accuracy = 0.0;
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut correct = 0usize;
        for idx in order.chunks(batch) {
            let x = real.select_rows(idx);
            let (feat, body_cache) = body.forward(&x)?;
            let (logits, head_cache) = head.forward(&feat)?;
            let n = idx.len() as f64;
            let mut dlogits = Tensor2::zeros(idx.len(), classes);
            for (r, &i) in idx.iter().enumerate() {
                let row = logits.row(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
                let target = labels[i] as usize;
                let argmax = (0..classes).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
                if argmax == target {
                    correct += 1;
                }
                for c in 0..classes {
                    let p = (row[c] - max).exp() / z;
                    dlogits.set(r, c, (p - if c == target { 1.0 } else { 0.0 }) / n);
                }
            }
            let (head_grads, dfeat) = head.backward(&head_cache, &dlogits)?;
            let (body_grads, _) = body.backward(&body_cache, &dfeat)?;
            head.adam_step(&head_grads, &mut adam_head)?;
            body.adam_step(&body_grads, &mut adam_body)?;
        }
        accuracy = correct as f64 / real.rows() as f64;
    }
    if accuracy < 0.9 {
        warn!("probe classifier reached only {:.1}% training accuracy", accuracy * 100.0);
    }
    Ok(FeatureExtractor::ProbeNet {
        body,
        train_accuracy: accuracy,
    })
}

/// Accuracy of the probe on labelled data; `None` for other extractors.
pub fn probe_accuracy(extractor: &FeatureExtractor) -> Option<f64> {
    match extractor {
        FeatureExtractor::ProbeNet { train_accuracy, .. } => Some(*train_accuracy),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
}

/// Sample mean and unbiased covariance plus `ridge * I`.
pub fn fit_moments(features: &Tensor2, ridge: f64) -> Result<GaussianMoments> {
    if features.rows() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            rows: features.rows(),
        });
    }
    let mean = features.column_means();
    let centered = Tensor2::from_fn(features.rows(), features.cols(), |r, c| {
        features.get(r, c) - mean[c]
    });
    let denom = (features.rows() - 1) as f64;
    let mut cov = SymMatrix::new(&centered.gram().map(|v| v / denom))?;
    cov.add_ridge(ridge);
    Ok(GaussianMoments { mean, cov })
}

/// `‖μa − μb‖² + tr(Σa + Σb − 2 (Σa^½ Σb Σa^½)^½)`, clamped at zero.
pub fn frechet_distance(a: &GaussianMoments, b: &GaussianMoments) -> Result<f64> {
    if a.mean.len() != b.mean.len() || a.cov.dim() != b.cov.dim() || a.mean.len() != a.cov.dim() {
        return Err(Error::Shape("moment dimensions differ".into()));
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let root_a = sqrtm_psd(&a.cov)?.to_tensor();
    let middle = b.cov.congruence(&root_a)?;
    let cross = sqrtm_psd(&middle)?.trace();
    let d = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

pub fn proxy_fid(
    generated: &Tensor2,
    real: &Tensor2,
    extractor: &FeatureExtractor,
    ridge: f64,
) -> Result<f64> {
    let g = fit_moments(&extractor.extract(generated)?, ridge)?;
    let r = fit_moments(&extractor.extract(real)?, ridge)?;
    frechet_distance(&g, &r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::standard_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments_1d(mean: f64, var: f64) -> GaussianMoments {
        GaussianMoments {
            mean: vec![mean],
            cov: SymMatrix::diagonal(&[var]),
        }
    }

    #[test]
    fn closed_forms() {
        let a = moments_1d(0.0, 1.0);
        let b = moments_1d(3.0, 4.0);
        assert!((frechet_distance(&a, &b).unwrap() - 10.0).abs() < 1e-8);
        assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-8);
    }

    #[test]
    fn two_point_moments() {
        let f = Tensor2::from_vec(2, 2, vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        let m = fit_moments(&f, 1e-6).unwrap();
        assert_eq!(m.mean, vec![1.0, 0.0]);
        assert!((m.cov.get(0, 0) - (2.0 + 1e-6)).abs() < 1e-15);
        assert_eq!(m.cov.get(1, 1), 1e-6);
        assert_eq!(m.cov.get(0, 1), 0.0);
        assert!(matches!(
            fit_moments(&Tensor2::zeros(1, 2), 1e-6),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn constant_data_has_ridge_covariance() {
        let f = Tensor2::filled(10, 3, 4.0);
        let m = fit_moments(&f, 1e-6).unwrap();
        assert_eq!(m.cov, {
            let mut c = SymMatrix::diagonal(&[0.0; 3]);
            c.add_ridge(1e-6);
            c
        });
    }

    #[test]
    fn monte_carlo_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = standard_normal(100_000, 3, &mut rng);
        let m = fit_moments(&x, DEFAULT_RIDGE).unwrap();
        assert!(m.mean.iter().all(|v| v.abs() < 0.02));
        assert!(m.cov.to_tensor().max_abs_diff(&Tensor2::identity(3)) < 0.05);
    }

    #[test]
    fn raw_pixels_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = standard_normal(5, 8, &mut rng);
        let e = fit_extractor(&ExtractorKind::RawPixels, &x, None, &mut rng).unwrap();
        assert_eq!(e.feature_dim(), 8);
        assert_eq!(e.extract(&x).unwrap(), x);
    }

    #[test]
    fn pca_recovers_planted_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis = standard_normal(2, 10, &mut rng);
        let coeffs = standard_normal(200, 2, &mut rng);
        let offset: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let mut x = coeffs.matmul(&basis).unwrap();
        for r in 0..x.rows() {
            x.row_mut(r).iter_mut().zip(&offset).for_each(|(v, o)| *v += o);
        }
        let e = fit_extractor(&ExtractorKind::Pca { k: 2 }, &x, None, &mut rng).unwrap();
        let back = e.reconstruct(&e.extract(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-8);
        // asking for more components than the rank keeps only the rank
        let e = fit_extractor(&ExtractorKind::Pca { k: 5 }, &x, None, &mut rng).unwrap();
        assert_eq!(e.feature_dim(), 2);
    }

    #[test]
    fn shift_in_raw_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let real = standard_normal(500, 4, &mut rng);
        let c = 0.5;
        let shifted = real.map(|v| v + c);
        let e = FeatureExtractor::RawPixels { dim: 4 };
        let d = proxy_fid(&shifted, &real, &e, DEFAULT_RIDGE).unwrap();
        let want = 4.0 * c * c;
        assert!((d - want).abs() < 0.01 * want, "{d} vs {want}");
        assert!(proxy_fid(&real, &real, &e, DEFAULT_RIDGE).unwrap() < 1e-8);
    }
}
