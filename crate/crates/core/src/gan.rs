//! Adversarial training with flow-based latent importance sampling.

use std::time::Instant;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{GenLoss, Mode, TrainConfig};
use crate::data::{Dataset, MetricRow};
use crate::error::{Error, Result};
use crate::eval::{fit_extractor, fit_moments, frechet_distance, FeatureExtractor, GaussianMoments};
use crate::flows::{standard_normal, FlowModel};
use crate::importance::{build_flow_dataset, LatentBatch};
use crate::nn::{sigmoid, softplus, Activation, ForwardCache, MlpGrads, MlpNet};
use crate::norms::batch_norms;
use crate::optim::AdamState;
use crate::tensor::Tensor2;

const STREAM_INIT: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_FLOW: u64 = 3;
const STREAM_EVAL: u64 = 4;
/// Evaluation draws at iteration `i` use stream `EVAL_DRAW_BASE + i`.
const EVAL_DRAW_BASE: u64 = 1 << 32;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// MLP with a tanh output stretched onto the dataset's pixel range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub net: MlpNet,
    center: f64,
    half_width: f64,
}

impl Generator {
    pub fn new(net: MlpNet, pixel_range: (f64, f64)) -> Result<Self> {
        let (lo, hi) = pixel_range;
        if !(lo < hi) {
            return Err(Error::Argument(format!("empty pixel range ({lo}, {hi})")));
        }
        Ok(Self { net, center: (lo + hi) / 2.0, half_width: (hi - lo) / 2.0 })
    }

    /// Factor between the network's tanh output and generated samples.
    pub fn output_scale(&self) -> f64 {
        self.half_width
    }

    pub fn pixel_range(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn generate(&self, z: &Tensor2) -> Result<Tensor2> {
        Ok(self.rescale(self.net.predict(z)?))
    }

    fn rescale(&self, t: Tensor2) -> Tensor2 {
        t.map(|v| self.center + self.half_width * v)
    }

    fn forward(&self, z: &Tensor2) -> Result<(Tensor2, ForwardCache)> {
        let (t, cache) = self.net.forward(z)?;
        Ok((self.rescale(t), cache))
    }

    fn backward(&self, cache: &ForwardCache, upstream: &Tensor2) -> Result<MlpGrads> {
        let scaled = upstream.map(|g| g * self.half_width);
        Ok(self.net.backward(cache, &scaled)?.0)
    }
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub generator: Generator,
    pub discriminator: MlpNet,
    pub flow: Option<FlowModel>,
    /// Index of the next step; the warm start is step 0.
    pub iteration: u64,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    pub adam_flow: Option<AdamState>,
    pub last_batch: Option<LatentBatch>,
    pub last_losses: StepLosses,
    noise_rng: ChaCha8Rng,
    data_rng: ChaCha8Rng,
    flow_rng: ChaCha8Rng,
    data_order: Vec<usize>,
    data_cursor: usize,
}

impl TrainState {
    /// Fresh networks and rng streams for `config` on data of width `data_dim`.
    pub fn init(config: &TrainConfig, data_dim: usize, data_rows: usize, pixel_range: (f64, f64)) -> Result<Self> {
        config.validate()?;
        let mut init = stream(config.seed, STREAM_INIT);
        let hidden = Activation::LeakyRelu(config.leaky_alpha);

        let mut g_sizes = vec![config.latent_dim];
        g_sizes.extend(&config.g_hidden);
        g_sizes.push(data_dim);
        let g = MlpNet::glorot(&g_sizes, hidden, Activation::Tanh, &mut init)?;

        let mut d_sizes = vec![data_dim];
        d_sizes.extend(&config.d_hidden);
        d_sizes.push(1);
        let d = MlpNet::glorot(&d_sizes, hidden, Activation::Identity, &mut init)?;

        let mut data_rng = stream(config.seed, STREAM_DATA);
        let mut data_order: Vec<usize> = (0..data_rows).collect();
        data_order.shuffle(&mut data_rng);

        let adam = |lr| AdamState::with_betas(lr, config.gan_beta1, 0.999);
        Ok(Self {
            generator: Generator::new(g, pixel_range)?,
            discriminator: d,
            flow: None,
            iteration: 0,
            adam_g: adam(config.lr_g),
            adam_d: adam(config.lr_d),
            adam_flow: None,
            last_batch: None,
            last_losses: StepLosses::default(),
            noise_rng: stream(config.seed, STREAM_NOISE),
            data_rng,
            flow_rng: stream(config.seed, STREAM_FLOW),
            data_order,
            data_cursor: 0,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefreshRecord {
    pub iteration: u64,
    /// Time spent on Jacobian norms.
    pub norm_ms: f64,
    pub fit_ms: f64,
    /// Mean NLL of the last fitting epoch, when any epoch ran.
    pub final_nll: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub rows: Vec<MetricRow>,
    pub refreshes: Vec<RefreshRecord>,
    /// Refresh iterations skipped because every norm was zero.
    pub skipped_refreshes: Vec<u64>,
    pub final_iteration: u64,
}

/// Receives training artifacts as they are produced.
pub trait Observer {
    fn on_metric(&mut self, _row: &MetricRow, _samples: &Tensor2) -> Result<()> {
        Ok(())
    }

    fn on_refresh(&mut self, _record: &RefreshRecord) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

/// Frozen feature map plus real-data moments.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pub extractor: FeatureExtractor,
    pub real: GaussianMoments,
    ridge: f64,
}

impl Evaluator {
    pub fn new(config: &TrainConfig, data: &Dataset) -> Result<Self> {
        let mut rng = stream(config.seed, STREAM_EVAL);
        let extractor = fit_extractor(&config.extractor, &data.samples, data.labels.as_deref(), &mut rng)?;
        let real = if data.len() > config.eval_samples {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(config.eval_samples);
            idx.sort_unstable();
            data.samples.select_rows(&idx)
        } else {
            data.samples.clone()
        };
        let real = fit_moments(&extractor.extract(&real)?, config.ridge)?;
        Ok(Self { extractor, real, ridge: config.ridge })
    }

    pub fn score(&self, generated: &Tensor2) -> Result<f64> {
        let g = fit_moments(&self.extractor.extract(generated)?, self.ridge)?;
        frechet_distance(&g, &self.real)
    }
}

pub struct Trainer<'a> {
    config: TrainConfig,
    data: &'a Dataset,
    state: TrainState,
    evaluator: Evaluator,
    summary: RunSummary,
    started: Instant,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, data: &'a Dataset) -> Result<Self> {
        let state = TrainState::init(&config, data.dim(), data.len(), data.pixel_range)?;
        Self::resume(config, state, data)
    }

    /// Continues from a saved state; `config` may only differ in `max_iters`.
    pub fn resume(config: TrainConfig, state: TrainState, data: &'a Dataset) -> Result<Self> {
        config.validate()?;
        if data.len() < config.batch_size {
            return Err(Error::InsufficientSamples { needed: config.batch_size, rows: data.len() });
        }
        if state.generator.net.output_size() != data.dim() || state.discriminator.input_size() != data.dim() {
            return Err(Error::Shape(format!("networks do not match data of width {}", data.dim())));
        }
        if state.generator.net.input_size() != config.latent_dim {
            return Err(Error::Shape("generator input does not match latent_dim".into()));
        }
        if state.data_order.len() != data.len() {
            return Err(Error::State(format!(
                "state was built for {} data rows, got {}",
                state.data_order.len(),
                data.len()
            )));
        }
        let evaluator = Evaluator::new(&config, data)?;
        Ok(Self {
            config,
            data,
            state,
            evaluator,
            summary: RunSummary::default(),
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut TrainState {
        &mut self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    /// Next minibatch of real data, reshuffling after each pass.
    pub fn next_real_batch(&mut self) -> Tensor2 {
        let n = self.config.batch_size;
        let s = &mut self.state;
        if s.data_cursor + n > s.data_order.len() {
            s.data_order.shuffle(&mut s.data_rng);
            s.data_cursor = 0;
        }
        let idx = &s.data_order[s.data_cursor..s.data_cursor + n];
        s.data_cursor += n;
        self.data.samples.select_rows(idx)
    }

    /// Standard normal noise, or flow samples once a flow has been fitted.
    pub fn sample_noise(&mut self, n: usize) -> Result<Tensor2> {
        if n == 0 {
            return Err(Error::Argument("noise batch must have at least one row".into()));
        }
        let s = &mut self.state;
        match &s.flow {
            Some(flow) => flow.sample(n, &mut s.noise_rng),
            None => Ok(standard_normal(n, self.config.latent_dim, &mut s.noise_rng)),
        }
    }

    /// One discriminator update: real rows labelled 1, fake rows 0.
    pub fn discriminator_step(&mut self, real: &Tensor2, fake: &Tensor2) -> Result<f64> {
        let d = &self.state.discriminator;
        let (lr, cache_r) = d.forward(real)?;
        let (lf, cache_f) = d.forward(fake)?;
        let (nr, nf) = (real.rows() as f64, fake.rows() as f64);
        let loss = lr.data().iter().map(|&v| softplus(-v)).sum::<f64>() / nr
            + lf.data().iter().map(|&v| softplus(v)).sum::<f64>() / nf;
        self.check_loss(loss, "discriminator")?;
        let (mut grads, _) = d.backward(&cache_r, &lr.map(|v| (sigmoid(v) - 1.0) / nr))?;
        grads.add_assign(&d.backward(&cache_f, &lf.map(|v| sigmoid(v) / nf))?.0);
        self.state.discriminator.adam_step(&grads, &mut self.state.adam_d)?;
        Ok(loss)
    }

    /// One generator update on the latents `z` against the current discriminator.
    pub fn generator_step(&mut self, z: &Tensor2) -> Result<f64> {
        let (fake, cache_g) = self.state.generator.forward(z)?;
        let d = &self.state.discriminator;
        let (logits, cache_d) = d.forward(&fake)?;
        let n = z.rows() as f64;
        let (loss, upstream) = match self.config.gen_loss {
            GenLoss::Nonsaturating => (
                logits.data().iter().map(|&v| softplus(-v)).sum::<f64>() / n,
                logits.map(|v| (sigmoid(v) - 1.0) / n),
            ),
            GenLoss::Saturating => (
                -logits.data().iter().map(|&v| softplus(v)).sum::<f64>() / n,
                logits.map(|v| -sigmoid(v) / n),
            ),
        };
        self.check_loss(loss, "generator")?;
        let dfake = d.backward_input(&cache_d, &upstream)?;
        let grads = self.state.generator.backward(&cache_g, &dfake)?;
        self.state.generator.net.adam_step(&grads, &mut self.state.adam_g)?;
        Ok(loss)
    }

    fn check_loss(&self, loss: f64, which: &str) -> Result<()> {
        if loss.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!(
                "non-finite {which} loss ({loss}) at iteration {}",
                self.state.iteration
            )))
        }
    }

    fn gan_step(&mut self, real: &Tensor2, z: Tensor2) -> Result<StepLosses> {
        let fake = self.state.generator.generate(&z)?;
        let d_loss = self.discriminator_step(real, &fake)?;
        let g_loss = self.generator_step(&z)?;
        let losses = StepLosses { d_loss, g_loss };
        self.state.last_batch = Some(LatentBatch::new(z));
        self.state.last_losses = losses;
        self.state.iteration += 1;
        Ok(losses)
    }

    /// Step 0: one update pair on standard normal noise.
    pub fn warm_start_step(&mut self, real: &Tensor2) -> Result<StepLosses> {
        if self.state.iteration != 0 {
            return Err(Error::State(format!("warm start at iteration {}", self.state.iteration)));
        }
        let z = standard_normal(self.config.batch_size, self.config.latent_dim, &mut self.state.noise_rng);
        self.gan_step(real, z)
    }

    /// One update pair on noise from the current sampler. Does not refresh.
    pub fn adversarial_step(&mut self, real: &Tensor2) -> Result<StepLosses> {
        if self.state.iteration == 0 {
            return Err(Error::State("adversarial step before warm start".into()));
        }
        let z = self.sample_noise(self.config.batch_size)?;
        self.gan_step(real, z)
    }

    /// Whether the step just completed is a refresh point.
    pub fn refresh_due(&self) -> bool {
        let done = self.state.iteration.saturating_sub(1);
        self.config.mode == Mode::Fis && done > 0 && done % self.config.refresh_t == 0
    }

    /// Refits the latent flow to the importance-weighted last batch.
    /// Returns `None` when the batch was degenerate and the refresh skipped.
    pub fn flow_refresh(&mut self) -> Result<Option<RefreshRecord>> {
        if self.config.mode != Mode::Fis {
            return Err(Error::State("flow refresh in baseline mode".into()));
        }
        if !self.refresh_due() {
            return Err(Error::State(format!(
                "no refresh scheduled after step {}",
                self.state.iteration.saturating_sub(1)
            )));
        }
        let iteration = self.state.iteration - 1;
        let cfg = &self.config;
        let s = &mut self.state;
        let batch = s
            .last_batch
            .as_mut()
            .ok_or_else(|| Error::State("no latent batch recorded".into()))?;

        let t0 = Instant::now();
        let norms = batch_norms(&s.generator.net, &batch.latents, cfg.norm_kind, s.generator.output_scale())?;
        let norm_ms = t0.elapsed().as_secs_f64() * 1e3;
        match batch.set_norms(norms) {
            Err(Error::DegenerateBatch) => {
                warn!("all Jacobian norms vanished at iteration {iteration}; refresh skipped");
                self.summary.skipped_refreshes.push(iteration);
                return Ok(None);
            }
            other => other?,
        }

        let t1 = Instant::now();
        let dataset = build_flow_dataset(batch, cfg.augment_budget(), cfg.augment_cov, &mut s.flow_rng)?;
        let (mut flow, mut adam) = match (cfg.flow_warm_start, s.flow.take(), s.adam_flow.take()) {
            (true, Some(f), Some(a)) => (f, a),
            _ => (
                FlowModel::new(cfg.flow_kind, cfg.latent_dim, &cfg.flow, &mut s.flow_rng)?,
                AdamState::new(cfg.lr_flow),
            ),
        };
        let trace = flow
            .fit(&dataset, cfg.flow_epochs, cfg.flow_batch, &mut adam, &mut s.flow_rng)
            .map_err(|e| Error::Numeric(format!("flow refresh at iteration {iteration}: {e}")))?;
        s.flow = Some(flow);
        s.adam_flow = Some(adam);
        let record = RefreshRecord {
            iteration,
            norm_ms,
            fit_ms: t1.elapsed().as_secs_f64() * 1e3,
            final_nll: trace.last().copied(),
        };
        debug!("refresh at {iteration}: nll {:?}", record.final_nll);
        self.summary.refreshes.push(record.clone());
        Ok(Some(record))
    }

    /// Proxy Fréchet distance of fresh samples. The draw depends only on the
    /// seed and iteration, never on the training streams.
    pub fn evaluate(&self, iteration: u64) -> Result<(f64, Tensor2)> {
        let mut rng = stream(self.config.seed, EVAL_DRAW_BASE + iteration);
        let n = self.config.eval_samples;
        let z = match &self.state.flow {
            Some(flow) => flow.sample(n, &mut rng)?,
            None => standard_normal(n, self.config.latent_dim, &mut rng),
        };
        let samples = self.state.generator.generate(&z)?;
        Ok((self.evaluator.score(&samples)?, samples))
    }

    fn emit(&mut self, iteration: u64, observer: &mut dyn Observer) -> Result<()> {
        let (proxy_fid, samples) = self.evaluate(iteration)?;
        let wall_ms = if self.config.wall_clock { self.started.elapsed().as_millis() as u64 } else { 0 };
        let row = MetricRow {
            iteration,
            mode: self.config.mode,
            flow_kind: self.config.flow_kind,
            norm_kind: self.config.norm_kind,
            seed: self.config.seed,
            proxy_fid,
            d_loss: self.state.last_losses.d_loss,
            g_loss: self.state.last_losses.g_loss,
            wall_ms,
        };
        observer.on_metric(&row, &samples)?;
        self.summary.rows.push(row);
        Ok(())
    }

    /// Runs steps until `max_iters` adversarial steps have completed,
    /// starting with the warm start when the state is fresh.
    pub fn train(&mut self, observer: &mut dyn Observer) -> Result<RunSummary> {
        if self.state.iteration == 0 {
            let real = self.next_real_batch();
            self.warm_start_step(&real)?;
            self.emit(0, observer)?;
        }
        while self.state.iteration <= self.config.max_iters {
            let i = self.state.iteration;
            let real = self.next_real_batch();
            self.adversarial_step(&real)?;
            if self.refresh_due() {
                if let Some(record) = self.flow_refresh()? {
                    observer.on_refresh(&record)?;
                }
            }
            if i % self.config.eval_interval == 0 {
                self.emit(i, observer)?;
            }
        }
        self.summary.final_iteration = self.state.iteration - 1;
        Ok(std::mem::take(&mut self.summary))
    }
}

/// Trains from scratch and returns the summary with the final state.
pub fn train(config: TrainConfig, data: &Dataset, observer: &mut dyn Observer) -> Result<(RunSummary, TrainState)> {
    let mut trainer = Trainer::new(config, data)?;
    let summary = trainer.train(observer)?;
    Ok((summary, trainer.into_state()))
}
