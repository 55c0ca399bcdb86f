use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use fisgan_core::config::{Preset, TrainConfig};
use fisgan_core::data::{center_crop, downsample, load_idx, make_synthetic, Dataset, SyntheticKind, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Idx {
        images: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<PathBuf>,
        /// Center crop side, applied before pooling.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        crop: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        downsample: Option<usize>,
        /// Keep only the first rows.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
    Synthetic {
        shape: SyntheticKind,
        count: usize,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default)]
    pub train: TrainConfig,
    pub dataset: DatasetSource,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Samples per image grid.
    #[serde(default = "default_grid_samples")]
    pub grid_samples: usize,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_grid_samples() -> usize {
    64
}

/// Command-line values that beat the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<fisgan_core::config::Mode>,
    pub seed: Option<u64>,
    pub max_iters: Option<u64>,
    pub out: Option<PathBuf>,
    pub preset: Option<Preset>,
}

impl ExperimentFile {
    /// Parses a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read experiment file {}", path.display()))
            .map_err(CliError::config)?;
        let mut exp: ExperimentFile = serde_json::from_str(&text)
            .with_context(|| format!("invalid experiment file {}", path.display()))
            .map_err(CliError::config)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSource::Idx { images, labels, .. } = &mut exp.dataset {
            rebase(images);
            if let Some(l) = labels {
                rebase(l);
            }
        }
        rebase(&mut exp.out);
        Ok(exp)
    }

    /// Applies presets and overrides, then revalidates.
    pub fn resolve(mut self, ov: &Overrides) -> Result<Self, CliError> {
        if let Some(p) = self.preset.take() {
            p.apply(&mut self.train);
        }
        if let Some(p) = ov.preset {
            p.apply(&mut self.train);
        }
        if let Some(m) = ov.mode {
            self.train.mode = m;
        }
        if let Some(s) = ov.seed {
            self.train.seed = s;
        }
        if let Some(n) = ov.max_iters {
            self.train.max_iters = n;
        }
        if let Some(o) = &ov.out {
            self.out = o.clone();
        }
        self.train.validate().map_err(|e| CliError::config(anyhow!(e)))?;
        if let DatasetSource::Synthetic { shape, count, .. } = &self.dataset {
            SyntheticSpec { shape: shape.clone(), count: *count }
                .validate()
                .map_err(|e| CliError::config(anyhow!("dataset.synthetic: {e}")))?;
        }
        Ok(self)
    }

    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("experiment serializes")
    }

    /// Config-hash prefix naming the run directory.
    pub fn run_name(&self) -> String {
        let key = serde_json::to_string(&(&self.train, &self.dataset)).expect("experiment serializes");
        hex::encode(&Sha256::digest(key.as_bytes())[..6])
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        match &self.dataset {
            DatasetSource::Synthetic { shape, count, seed } => {
                let spec = SyntheticSpec { shape: shape.clone(), count: *count };
                make_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(*seed))
                    .map_err(|e| CliError::config(anyhow!("dataset.synthetic: {e}")))
            }
            DatasetSource::Idx { images, labels, crop, downsample: factor, limit } => {
                for (key, p) in [("dataset.idx.images", Some(images)), ("dataset.idx.labels", labels.as_ref())] {
                    if let Some(p) = p {
                        if !p.is_file() {
                            return Err(CliError::config(anyhow!("{key}: no such file {}", p.display())));
                        }
                    }
                }
                let fail = |e: fisgan_core::Error| CliError::config(anyhow!("dataset.idx: {e}"));
                let mut d = load_idx(images, labels.as_deref()).map_err(fail)?;
                if let Some(side) = crop {
                    d = center_crop(&d, *side).map_err(fail)?;
                }
                if let Some(f) = factor {
                    d = downsample(&d, *f).map_err(fail)?;
                }
                if let Some(n) = limit {
                    d = d.head(*n);
                }
                Ok(d)
            }
        }
    }
}
