//! Normalizing flows: an invertible stack `F = f_L ∘ … ∘ f_1` mapping latent
//! points to a standard normal, with exact log-densities
//!
//! ```text
//! log Q(z) = log N(F(z); 0, I) + Σ_i log|det ∂f_i/∂f_{i-1}|
//! ```
//!
//! fitted by maximum likelihood and sampled by pushing normal draws through
//! `F⁻¹`.

mod autoregressive;
mod coupling;

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use autoregressive::{ArDirection, AutoregressiveLayer};
pub use coupling::CouplingLayer;

use crate::error::{Error, Result};
use crate::nn::{Activation, MlpGrads, MlpNet};
use crate::optim::AdamState;
use crate::tensor::Tensor2;

/// Floor on each layer's |det| before taking the log.
pub const DET_FLOOR: f64 = 1e-9;
pub(crate) const LOG_DET_FLOOR: f64 = -20.723_265_836_946_41; // ln(1e-9)

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    RealNvp,
    Maf,
    Iaf,
}

impl FlowKind {
    pub const ALL: [FlowKind; 3] = [FlowKind::RealNvp, FlowKind::Maf, FlowKind::Iaf];

    pub fn as_str(self) -> &'static str {
        match self {
            FlowKind::RealNvp => "realnvp",
            FlowKind::Maf => "maf",
            FlowKind::Iaf => "iaf",
        }
    }
}

impl std::fmt::Display for FlowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FlowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "realnvp" => Ok(FlowKind::RealNvp),
            "maf" => Ok(FlowKind::Maf),
            "iaf" => Ok(FlowKind::Iaf),
            other => Err(Error::Argument(format!("unknown flow kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowArch {
    /// Number of transform layers (permutations not counted).
    pub depth: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub scale_clamp: f64,
}

impl Default for FlowArch {
    fn default() -> Self {
        Self {
            depth: 6,
            hidden: 64,
            hidden_layers: 2,
            scale_clamp: 3.0,
        }
    }
}

/// Fixed coordinate permutation: `y[i] = x[perm[i]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Permutation {
    perm: Vec<usize>,
}

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        if sorted != (0..perm.len()).collect::<Vec<_>>() {
            return Err(Error::Argument("not a permutation".into()));
        }
        Ok(Self { perm })
    }

    pub fn indices(&self) -> &[usize] {
        &self.perm
    }

    fn apply(&self, x: &Tensor2) -> Tensor2 {
        x.select_cols(&self.perm)
    }

    fn invert(&self, y: &Tensor2) -> Tensor2 {
        let mut x = Tensor2::zeros(y.rows(), y.cols());
        for r in 0..y.rows() {
            for (i, &p) in self.perm.iter().enumerate() {
                x.set(r, p, y.get(r, i));
            }
        }
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FlowLayer {
    Coupling(CouplingLayer),
    Autoregressive(AutoregressiveLayer),
    Permutation(Permutation),
}

enum LayerCache {
    Coupling(coupling::CouplingCache),
    Autoregressive(autoregressive::ArCache),
    Permutation,
}

impl FlowLayer {
    fn forward(&self, x: &Tensor2) -> Result<(Tensor2, Vec<f64>, LayerCache)> {
        Ok(match self {
            FlowLayer::Coupling(l) => {
                let (y, ld, c) = l.forward(x)?;
                (y, ld, LayerCache::Coupling(c))
            }
            FlowLayer::Autoregressive(l) => {
                let (y, ld, c) = l.forward(x)?;
                (y, ld, LayerCache::Autoregressive(c))
            }
            FlowLayer::Permutation(p) => (p.apply(x), vec![0.0; x.rows()], LayerCache::Permutation),
        })
    }

    fn inverse(&self, y: &Tensor2) -> Result<Tensor2> {
        match self {
            FlowLayer::Coupling(l) => l.inverse(y),
            FlowLayer::Autoregressive(l) => l.inverse(y),
            FlowLayer::Permutation(p) => Ok(p.invert(y)),
        }
    }

    fn backward(&self, cache: &LayerCache, dy: &Tensor2, dld: &[f64]) -> Result<(Tensor2, Vec<MlpGrads>)> {
        match (self, cache) {
            (FlowLayer::Coupling(l), LayerCache::Coupling(c)) => l.backward(c, dy, dld),
            (FlowLayer::Autoregressive(l), LayerCache::Autoregressive(c)) => l.backward(c, dy, dld),
            (FlowLayer::Permutation(p), LayerCache::Permutation) => Ok((p.invert(dy), Vec::new())),
            _ => Err(Error::State("flow cache does not match its layer".into())),
        }
    }

    fn nets(&self) -> Vec<&MlpNet> {
        match self {
            FlowLayer::Coupling(l) => l.nets(),
            FlowLayer::Autoregressive(l) => l.nets(),
            FlowLayer::Permutation(_) => Vec::new(),
        }
    }

    fn nets_mut(&mut self) -> Vec<&mut MlpNet> {
        match self {
            FlowLayer::Coupling(l) => l.nets_mut(),
            FlowLayer::Autoregressive(l) => l.nets_mut(),
            FlowLayer::Permutation(_) => Vec::new(),
        }
    }
}

/// Per-layer, per-subnet parameter gradients.
#[derive(Clone, Debug)]
pub struct FlowGrads(pub Vec<Vec<MlpGrads>>);

impl FlowGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.0.iter().flatten().flat_map(MlpGrads::slices).collect()
    }
}

pub(crate) fn subnet<R: Rng + ?Sized>(
    inputs: usize,
    outputs: usize,
    hidden: usize,
    hidden_layers: usize,
    rng: &mut R,
) -> Result<MlpNet> {
    let mut sizes = vec![inputs];
    sizes.extend(std::iter::repeat(hidden).take(hidden_layers));
    sizes.push(outputs);
    let mut net = MlpNet::glorot(&sizes, Activation::Tanh, Activation::Identity, rng)?;
    net.zero_output_layer();
    Ok(net)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    dim: usize,
    kind: FlowKind,
    layers: Vec<FlowLayer>,
}

impl FlowModel {
    /// A freshly initialized flow. Every subnet's output layer starts at zero,
    /// so the flow is the identity map (up to fixed permutations for Real-NVP).
    pub fn new<R: Rng + ?Sized>(kind: FlowKind, dim: usize, arch: &FlowArch, rng: &mut R) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Argument("flows need at least two dimensions".into()));
        }
        if !(arch.scale_clamp > 0.0) {
            return Err(Error::Argument("scale clamp must be positive".into()));
        }
        let mut layers = Vec::new();
        for l in 0..arch.depth {
            match kind {
                FlowKind::RealNvp => {
                    let mask = CouplingLayer::alternating_mask(dim, l);
                    layers.push(FlowLayer::Coupling(CouplingLayer::new(
                        mask,
                        arch.hidden,
                        arch.hidden_layers,
                        arch.scale_clamp,
                        rng,
                    )?));
                    if l % 2 == 1 && l + 1 < arch.depth {
                        let mut perm: Vec<usize> = (0..dim).collect();
                        perm.shuffle(rng);
                        layers.push(FlowLayer::Permutation(Permutation::new(perm)?));
                    }
                }
                FlowKind::Maf | FlowKind::Iaf => {
                    let degrees: Vec<usize> = if l % 2 == 0 {
                        (1..=dim).collect()
                    } else {
                        (1..=dim).rev().collect()
                    };
                    let direction = if kind == FlowKind::Maf {
                        ArDirection::Maf
                    } else {
                        ArDirection::Iaf
                    };
                    layers.push(FlowLayer::Autoregressive(AutoregressiveLayer::new(
                        direction,
                        degrees,
                        arch.hidden,
                        arch.hidden_layers,
                        arch.scale_clamp,
                        rng,
                    )?));
                }
            }
        }
        Ok(Self { dim, kind, layers })
    }

    /// Builds a flow from explicit layers, all of dimension `dim`.
    pub fn from_layers(kind: FlowKind, dim: usize, layers: Vec<FlowLayer>) -> Result<Self> {
        for (i, layer) in layers.iter().enumerate() {
            let ok = match layer {
                FlowLayer::Coupling(c) => c.mask().len() == dim,
                FlowLayer::Autoregressive(a) => a.degrees().len() == dim,
                FlowLayer::Permutation(p) => p.indices().len() == dim,
            };
            if !ok {
                return Err(Error::Shape(format!("flow layer {i} does not have dimension {dim}")));
            }
        }
        Ok(Self { dim, kind, layers })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    pub fn layers(&self) -> &[FlowLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [FlowLayer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.nets().iter().map(|n| n.num_params()).sum()
    }

    fn nets(&self) -> Vec<&MlpNet> {
        self.layers.iter().flat_map(FlowLayer::nets).collect()
    }

    fn nets_mut(&mut self) -> Vec<&mut MlpNet> {
        self.layers.iter_mut().flat_map(FlowLayer::nets_mut).collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.nets().into_iter().flat_map(MlpNet::param_slices).collect()
    }

    /// Raw parameter blocks. Writes to autoregressive masked positions are
    /// discarded on the next [`FlowModel::jitter_parameters`] or update.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.nets_mut().into_iter().flat_map(MlpNet::param_slices_mut).collect()
    }

    /// Adds uniform noise in `[-scale, scale]` to every parameter, respecting
    /// autoregressive masks. Used to move away from the identity in tests and
    /// benchmarks.
    pub fn jitter_parameters<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        for net in self.nets_mut() {
            for block in net.param_slices_mut() {
                block.iter_mut().for_each(|p| *p += rng.gen_range(-scale..=scale));
            }
            net.touch();
        }
    }

    /// Re-applies autoregressive connectivity masks after raw parameter writes.
    pub fn enforce_masks(&mut self) {
        self.nets_mut().into_iter().for_each(MlpNet::touch);
    }

    fn check_cols(&self, x: &Tensor2) -> Result<()> {
        if x.cols() != self.dim {
            return Err(Error::Shape(format!(
                "flow has dimension {}, input has {} columns",
                self.dim,
                x.cols()
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, z: &Tensor2) -> Result<(Tensor2, Vec<f64>, Vec<LayerCache>)> {
        self.check_cols(z)?;
        let mut x = z.clone();
        let mut log_det = vec![0.0; z.rows()];
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, ld, cache) = layer.forward(&x)?;
            if !y.is_finite() || ld.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite value in flow layer {i}")));
            }
            log_det.iter_mut().zip(&ld).for_each(|(a, b)| *a += b);
            caches.push(cache);
            x = y;
        }
        Ok((x, log_det, caches))
    }

    /// `h = F(z)` and the summed log-determinant per row.
    pub fn forward_map(&self, z: &Tensor2) -> Result<(Tensor2, Vec<f64>)> {
        self.forward_cached(z).map(|(h, ld, _)| (h, ld))
    }

    /// `z = F⁻¹(h)`
    pub fn inverse_map(&self, h: &Tensor2) -> Result<Tensor2> {
        self.check_cols(h)?;
        let mut x = h.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            x = layer.inverse(&x)?;
            if !x.is_finite() {
                return Err(Error::Numeric(format!("non-finite value inverting flow layer {i}")));
            }
        }
        Ok(x)
    }

    pub fn log_prob(&self, z: &Tensor2) -> Result<Vec<f64>> {
        let (h, log_det) = self.forward_map(z)?;
        Ok(h
            .iter_rows()
            .zip(log_det)
            .map(|(row, ld)| standard_normal_log_density(row) + ld)
            .collect())
    }

    /// Draws `n` points by transporting standard-normal noise through `F⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Tensor2> {
        if n == 0 {
            return Err(Error::Argument("sample count must be at least 1".into()));
        }
        let h = standard_normal(n, self.dim, rng);
        self.inverse_map(&h)
    }

    /// Mean negative log-likelihood over the rows of `z` and its parameter gradient.
    pub fn nll_and_grads(&self, z: &Tensor2) -> Result<(f64, FlowGrads)> {
        let (h, log_det, caches) = self.forward_cached(z)?;
        let n = z.rows() as f64;
        let nll = h
            .iter_rows()
            .zip(&log_det)
            .map(|(row, ld)| -(standard_normal_log_density(row) + ld))
            .sum::<f64>()
            / n;
        let mut dx = h.map(|v| v / n);
        let dld = vec![-1.0 / n; z.rows()];
        let mut grads = vec![Vec::new(); self.layers.len()];
        for (i, (layer, cache)) in self.layers.iter().zip(&caches).enumerate().rev() {
            let (prev, g) = layer.backward(cache, &dx, &dld)?;
            grads[i] = g;
            dx = prev;
        }
        Ok((nll, FlowGrads(grads)))
    }

    pub fn adam_step(&mut self, grads: &FlowGrads, adam: &mut AdamState) -> Result<()> {
        let g = grads.slices();
        let mut p = self.param_slices_mut();
        adam.step(&mut p, &g)
    }

    /// Maximum-likelihood fit by minibatch Adam. Returns the mean NLL of each
    /// epoch, accumulated over its minibatches before their updates.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        data: &Tensor2,
        epochs: usize,
        batch_size: usize,
        adam: &mut AdamState,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.check_cols(data)?;
        if batch_size == 0 || data.rows() < batch_size {
            return Err(Error::InsufficientSamples {
                needed: batch_size.max(1),
                rows: data.rows(),
            });
        }
        let mut trace = Vec::with_capacity(epochs);
        let mut order: Vec<usize> = (0..data.rows()).collect();
        for epoch in 0..epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for idx in order.chunks(batch_size) {
                let batch = data.select_rows(idx);
                let (nll, grads) = self
                    .nll_and_grads(&batch)
                    .map_err(|e| Error::Numeric(format!("flow fit epoch {epoch}: {e}")))?;
                if !nll.is_finite() {
                    return Err(Error::Numeric(format!("non-finite flow loss in epoch {epoch}")));
                }
                self.adam_step(&grads, adam)
                    .map_err(|e| Error::Numeric(format!("flow fit epoch {epoch}: {e}")))?;
                total += nll * idx.len() as f64;
            }
            trace.push(total / data.rows() as f64);
        }
        Ok(trace)
    }
}

pub fn standard_normal_log_density(h: &[f64]) -> f64 {
    let sq: f64 = h.iter().map(|v| v * v).sum();
    -0.5 * h.len() as f64 * (2.0 * PI).ln() - 0.5 * sq
}

/// `rows x cols` standard-normal draws, filled row-major.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor2::from_vec(rows, cols, data).expect("normal draws are finite")
}
