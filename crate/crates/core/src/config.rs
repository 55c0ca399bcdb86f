use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ExtractorKind, DEFAULT_RIDGE};
use crate::flows::{FlowArch, FlowKind};
use crate::importance::AugmentCov;
use crate::nn::LEAKY_ALPHA;
use crate::norms::NormKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    #[default]
    Fis,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Fis => "fis",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "fis" => Ok(Mode::Fis),
            other => Err(Error::Argument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenLoss {
    /// `-log D(G(z))`
    #[default]
    Nonsaturating,
    /// `log(1 - D(G(z)))`
    Saturating,
}

/// Flow refresh schedules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Refit every 10 iterations for 5 epochs.
    FastRefresh,
    /// Refit every 50 iterations for 50 epochs.
    SlowRefresh,
}

impl Preset {
    pub fn apply(self, config: &mut TrainConfig) {
        let (t, epochs) = match self {
            Preset::FastRefresh => (10, 5),
            Preset::SlowRefresh => (50, 50),
        };
        config.refresh_t = t;
        config.flow_epochs = epochs;
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast-refresh" => Ok(Preset::FastRefresh),
            "slow-refresh" => Ok(Preset::SlowRefresh),
            other => Err(Error::Argument(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub seed: u64,
    pub max_iters: u64,
    pub batch_size: usize,
    pub latent_dim: usize,

    pub refresh_t: u64,
    pub flow_epochs: usize,
    pub flow_batch: usize,
    /// Augmentation budget N; defaults to 8 x batch_size.
    pub augment_n: Option<usize>,
    pub augment_cov: AugmentCov,
    pub norm_kind: NormKind,
    pub flow_kind: FlowKind,
    pub flow: FlowArch,
    pub flow_warm_start: bool,

    pub lr_g: f64,
    pub lr_d: f64,
    pub lr_flow: f64,
    /// First-moment decay for the generator and discriminator optimizers.
    pub gan_beta1: f64,
    pub gen_loss: GenLoss,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub leaky_alpha: f64,

    pub eval_interval: u64,
    pub eval_samples: usize,
    pub extractor: ExtractorKind,
    pub ridge: f64,
    /// Record elapsed wall-clock time in metric rows; when off the column is 0.
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Fis,
            seed: 0,
            max_iters: 2000,
            batch_size: 64,
            latent_dim: 64,
            refresh_t: 10,
            flow_epochs: 5,
            flow_batch: 64,
            augment_n: None,
            augment_cov: AugmentCov::Identity,
            norm_kind: NormKind::Frobenius,
            flow_kind: FlowKind::RealNvp,
            flow: FlowArch::default(),
            flow_warm_start: false,
            lr_g: 1e-3,
            lr_d: 1e-4,
            lr_flow: 1e-3,
            gan_beta1: 0.5,
            gen_loss: GenLoss::Nonsaturating,
            g_hidden: vec![128, 256],
            d_hidden: vec![256, 128],
            leaky_alpha: LEAKY_ALPHA,
            eval_interval: 100,
            eval_samples: 2048,
            extractor: ExtractorKind::default(),
            ridge: DEFAULT_RIDGE,
            wall_clock: true,
        }
    }
}

impl TrainConfig {
    pub fn augment_budget(&self) -> usize {
        self.augment_n.unwrap_or(8 * self.batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.refresh_t < 1 {
            return fail("refresh_t must be at least 1".into());
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d), ("lr_flow", self.lr_flow)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return fail(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.latent_dim < 2 {
            return fail("latent_dim must be at least 2".into());
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1".into());
        }
        if self.flow_batch < 1 || self.flow_batch > self.augment_budget() {
            return fail(format!(
                "flow_batch must be between 1 and augment_n ({})",
                self.augment_budget()
            ));
        }
        if self.eval_interval < 1 {
            return fail("eval_interval must be at least 1".into());
        }
        if self.eval_samples < 2 {
            return fail("eval_samples must be at least 2".into());
        }
        if !(self.leaky_alpha > 0.0 && self.leaky_alpha < 1.0) {
            return fail("leaky_alpha must lie in (0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.gan_beta1) {
            return fail("gan_beta1 must lie in [0, 1)".into());
        }
        if !(self.flow.scale_clamp > 0.0) {
            return fail("flow.scale_clamp must be positive".into());
        }
        if !(self.ridge >= 0.0) {
            return fail("ridge must be nonnegative".into());
        }
        Ok(())
    }
}
