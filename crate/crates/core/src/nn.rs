//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Every trainable piece of the system (generator, discriminator, flow
//! subnets, the probe classifier) is an [`MlpNet`]. A forward pass returns a
//! [`ForwardCache`] which `backward` consumes; the cache remembers the
//! parameter generation it was produced under so that a cache taken before an
//! optimizer update cannot be replayed against the updated weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::AdamState;
use crate::tensor::{gemm, Tensor2};

/// Default negative slope for leaky-relu layers.
pub const LEAKY_ALPHA: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    z
                } else {
                    a * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative at the pre-activation `z`; kinks take the zero-side subgradient.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// out x in
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
    /// Optional 0/1 connectivity mask (out x in). Masked weights are kept at
    /// exactly zero and never receive gradient.
    pub mask: Option<Tensor2>,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Tensor2::from_fn(outputs, inputs, |_, _| rng.gen_range(-limit..=limit));
        Self {
            weights,
            bias: vec![0.0; outputs],
            activation,
            mask: None,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Tensor2::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            activation,
            mask: None,
        }
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn with_mask(mut self, mask: Tensor2) -> Result<Self> {
        if mask.shape() != self.weights.shape() {
            return Err(Error::Shape(format!(
                "mask {:?} does not match weights {:?}",
                mask.shape(),
                self.weights.shape()
            )));
        }
        self.mask = Some(mask);
        self.enforce_mask();
        Ok(self)
    }

    fn enforce_mask(&mut self) {
        if let Some(mask) = &self.mask {
            for (w, m) in self.weights.data_mut().iter_mut().zip(mask.data()) {
                *w *= m;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    layers: Vec<DenseLayer>,
    #[serde(default)]
    generation: u64,
}

/// Activation record of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    generation: u64,
    inputs: Vec<Tensor2>,
    preacts: Vec<Tensor2>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Tensor2::rows)
    }
}

/// Parameter gradients, shaped like the network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &MlpNet) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Tensor2::zeros(l.outputs(), l.inputs()))
                .collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.outputs()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// Gradient blocks in the same order as [`MlpNet::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.data(), b.as_slice()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

impl MlpNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    k + 1,
                    pair[1].inputs()
                )));
            }
        }
        for layer in &layers {
            if let Activation::LeakyRelu(a) = layer.activation {
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::Argument(format!("leaky-relu slope {a} outside (0, 1)")));
                }
            }
            if layer.bias.len() != layer.outputs() {
                return Err(Error::Shape("bias length does not match layer outputs".into()));
            }
        }
        Ok(Self {
            layers,
            generation: 0,
        })
    }

    /// Glorot-initialized network over `sizes` (input, hidden..., output).
    pub fn glorot<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape("need at least input and output sizes".into()));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last { output } else { hidden };
                DenseLayer::glorot(w[0], w[1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    #[inline]
    pub fn input_size(&self) -> usize {
        self.layers[0].inputs()
    }

    #[inline]
    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    /// Zeroes the final layer so the network outputs exactly zero everywhere.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weights.data_mut().fill(0.0);
        last.bias.fill(0.0);
        self.generation += 1;
    }

    /// Direct mutable access to a layer; masks are re-applied on the next
    /// call to [`MlpNet::touch`].
    pub fn layer_mut(&mut self, k: usize) -> &mut DenseLayer {
        self.generation += 1;
        &mut self.layers[k]
    }

    /// Re-applies connectivity masks and invalidates outstanding caches.
    pub fn touch(&mut self) {
        self.layers.iter_mut().for_each(DenseLayer::enforce_mask);
        self.generation += 1;
    }

    /// Parameter blocks: weights then bias, layer by layer.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn forward(&self, batch: &Tensor2) -> Result<(Tensor2, ForwardCache)> {
        if batch.cols() != self.input_size() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, batch has {} columns",
                self.input_size(),
                batch.cols()
            )));
        }
        let n = batch.rows();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for layer in &self.layers {
            let (fan_in, fan_out) = (layer.inputs(), layer.outputs());
            let mut z = Tensor2::zeros(n, fan_out);
            gemm(
                n,
                fan_in,
                fan_out,
                (current.data(), fan_in, 1),
                (layer.weights.data(), 1, fan_in),
                z.data_mut(),
                0.0,
            );
            for r in 0..n {
                z.row_mut(r)
                    .iter_mut()
                    .zip(&layer.bias)
                    .for_each(|(v, b)| *v += b);
            }
            let act = layer.activation;
            let out = z.map(|v| act.apply(v));
            inputs.push(current);
            preacts.push(z);
            current = out;
        }
        let cache = ForwardCache {
            generation: self.generation,
            inputs,
            preacts,
        };
        Ok((current, cache))
    }

    /// Forward pass without keeping the activation record.
    pub fn predict(&self, batch: &Tensor2) -> Result<Tensor2> {
        self.forward(batch).map(|(out, _)| out)
    }

    pub fn backward(&self, cache: &ForwardCache, upstream: &Tensor2) -> Result<(MlpGrads, Tensor2)> {
        let (grads, input_grads) = self.backward_impl(cache, upstream, true)?;
        Ok((grads.expect("requested"), input_grads))
    }

    /// Gradient with respect to the network input only.
    pub fn backward_input(&self, cache: &ForwardCache, upstream: &Tensor2) -> Result<Tensor2> {
        self.backward_impl(cache, upstream, false).map(|(_, g)| g)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        upstream: &Tensor2,
        want_params: bool,
    ) -> Result<(Option<MlpGrads>, Tensor2)> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return Err(Error::State(
                "forward cache is stale: parameters changed since the forward pass".into(),
            ));
        }
        let n = cache.batch_size();
        if upstream.shape() != (n, self.output_size()) {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                (n, self.output_size())
            )));
        }
        let mut grads = want_params.then(|| MlpGrads::zeros_like(self));
        let mut delta = upstream.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (fan_in, fan_out) = (layer.inputs(), layer.outputs());
            let z = &cache.preacts[k];
            let act = layer.activation;
            if act != Activation::Identity {
                for (d, &zv) in delta.data_mut().iter_mut().zip(z.data()) {
                    *d *= act.derivative(zv);
                }
            }
            if let Some(g) = grads.as_mut() {
                let x = &cache.inputs[k];
                let dw = &mut g.weights[k];
                gemm(
                    fan_out,
                    n,
                    fan_in,
                    (delta.data(), 1, fan_out),
                    (x.data(), fan_in, 1),
                    dw.data_mut(),
                    0.0,
                );
                if let Some(mask) = &layer.mask {
                    dw.data_mut()
                        .iter_mut()
                        .zip(mask.data())
                        .for_each(|(w, m)| *w *= m);
                }
                let db = &mut g.biases[k];
                for r in 0..n {
                    db.iter_mut().zip(delta.row(r)).for_each(|(b, d)| *b += d);
                }
            }
            let mut next = Tensor2::zeros(n, fan_in);
            gemm(
                n,
                fan_out,
                fan_in,
                (delta.data(), fan_out, 1),
                (layer.weights.data(), fan_in, 1),
                next.data_mut(),
                0.0,
            );
            delta = next;
        }
        Ok((grads, delta))
    }

    /// Jacobian of the output with respect to a single input point (d_out x d_in),
    /// one reverse pass per output coordinate.
    pub fn jacobian_wrt_input(&self, z: &[f64]) -> Result<Tensor2> {
        let point = Tensor2::from_vec(1, z.len(), z.to_vec())?;
        let mut jac = self.batch_jacobians(&point)?;
        Ok(jac.pop().expect("one point"))
    }

    /// Input Jacobians for every row of `points`.
    ///
    /// Each point is replicated `d_out` times and pushed back with an identity
    /// upstream, so row `m` of each Jacobian is exactly the input gradient for
    /// a one-hot upstream at output `m`.
    pub fn batch_jacobians(&self, points: &Tensor2) -> Result<Vec<Tensor2>> {
        if points.cols() != self.input_size() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_size(),
                points.cols()
            )));
        }
        let d_out = self.output_size();
        let d_in = self.input_size();
        // keep the replicated batch around 2^16 rows
        let chunk = (65_536 / d_out).max(1);
        let mut result = Vec::with_capacity(points.rows());
        let all: Vec<usize> = (0..points.rows()).collect();
        for idx in all.chunks(chunk) {
            let replicated: Vec<usize> = idx
                .iter()
                .flat_map(|&i| std::iter::repeat(i).take(d_out))
                .collect();
            let batch = points.select_rows(&replicated);
            let (_, cache) = self.forward(&batch)?;
            let upstream = Tensor2::from_fn(batch.rows(), d_out, |r, c| {
                if r % d_out == c {
                    1.0
                } else {
                    0.0
                }
            });
            let grads = self.backward_input(&cache, &upstream)?;
            for block in 0..idx.len() {
                let mut jac = Tensor2::zeros(d_out, d_in);
                jac.data_mut()
                    .copy_from_slice(&grads.data()[block * d_out * d_in..(block + 1) * d_out * d_in]);
                result.push(jac);
            }
        }
        Ok(result)
    }

    /// One Adam update of every parameter block.
    pub fn adam_step(&mut self, grads: &MlpGrads, state: &mut AdamState) -> Result<()> {
        let g = grads.slices();
        let mut p = self.param_slices_mut();
        state.step(&mut p, &g)
    }
}
