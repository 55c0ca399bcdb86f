use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LOG_DET_FLOOR;
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, ForwardCache, MlpGrads, MlpNet};
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArDirection {
    Maf,
    Iaf,
}

/// Autoregressive affine layer around one masked network.
///
/// The core map is `T(x) = (x - mu(x)) * exp(-alpha(x))` where `mu_d` and
/// `alpha_d` only see coordinates of lower degree. `T` costs one network pass;
/// `T⁻¹` costs one pass per degree. MAF uses `T` towards the base
/// distribution (cheap densities), IAF uses `T⁻¹` (cheap sampling).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoregressiveLayer {
    direction: ArDirection,
    pub masked_net: MlpNet,
    degrees: Vec<usize>,
    scale_clamp: f64,
}

/// Values of the masked network at one input.
struct ArParams {
    mu: Tensor2,
    tanh_raw: Tensor2,
    alpha: Tensor2,
    cache: ForwardCache,
}

pub(crate) struct ArCache {
    /// Input of the masked network (x for MAF, the layer output for IAF).
    point: Tensor2,
    /// T(point): the layer output for MAF, the layer input for IAF.
    image: Tensor2,
    params: ArParams,
    floored: Vec<bool>,
}

impl AutoregressiveLayer {
    /// `degrees` must be a permutation of `1..=dim`.
    pub fn new<R: Rng + ?Sized>(
        direction: ArDirection,
        degrees: Vec<usize>,
        hidden: usize,
        hidden_layers: usize,
        scale_clamp: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let d = degrees.len();
        let mut sorted = degrees.clone();
        sorted.sort_unstable();
        if d == 0 || sorted != (1..=d).collect::<Vec<_>>() {
            return Err(Error::Argument("degrees must be a permutation of 1..=dim".into()));
        }
        let width = hidden.max(1);
        let hidden_degree = |k: usize| k % (d - 1).max(1) + 1;
        let mut unit_degrees: Vec<Vec<usize>> = vec![degrees.clone()];
        for _ in 0..hidden_layers {
            unit_degrees.push((0..width).map(hidden_degree).collect());
        }
        let out_degrees: Vec<usize> = (0..2 * d).map(|j| degrees[j % d]).collect();

        let mut layers = Vec::with_capacity(hidden_layers + 1);
        for w in unit_degrees.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            let mask = Tensor2::from_fn(next.len(), prev.len(), |o, i| {
                if next[o] >= prev[i] {
                    1.0
                } else {
                    0.0
                }
            });
            layers.push(DenseLayer::glorot(prev.len(), next.len(), Activation::Tanh, rng).with_mask(mask)?);
        }
        let prev = unit_degrees.last().expect("input degrees");
        let mask = Tensor2::from_fn(2 * d, prev.len(), |o, i| {
            if out_degrees[o] > prev[i] {
                1.0
            } else {
                0.0
            }
        });
        layers.push(DenseLayer::zeros(prev.len(), 2 * d, Activation::Identity).with_mask(mask)?);
        Ok(Self {
            direction,
            masked_net: MlpNet::new(layers)?,
            degrees,
            scale_clamp,
        })
    }

    pub fn direction(&self) -> ArDirection {
        self.direction
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Same parameters, opposite orientation.
    pub fn with_direction(&self, direction: ArDirection) -> Self {
        Self {
            direction,
            ..self.clone()
        }
    }

    fn dim(&self) -> usize {
        self.degrees.len()
    }

    fn params(&self, point: &Tensor2) -> Result<ArParams> {
        let d = self.dim();
        let (out, cache) = self.masked_net.forward(point)?;
        let n = point.rows();
        let mu = Tensor2::from_fn(n, d, |r, k| out.get(r, k));
        let tanh_raw = Tensor2::from_fn(n, d, |r, k| out.get(r, d + k).tanh());
        let c = self.scale_clamp;
        let alpha = tanh_raw.map(|t| c * t);
        Ok(ArParams {
            mu,
            tanh_raw,
            alpha,
            cache,
        })
    }

    /// `T(x)` and `log|det ∂T/∂x| = -Σ alpha`.
    fn transform(&self, x: &Tensor2) -> Result<(Tensor2, Vec<f64>, ArParams)> {
        let p = self.params(x)?;
        let mut y = Tensor2::zeros(x.rows(), x.cols());
        let mut log_det = vec![0.0; x.rows()];
        for r in 0..x.rows() {
            for k in 0..x.cols() {
                let a = p.alpha.get(r, k);
                y.set(r, k, (x.get(r, k) - p.mu.get(r, k)) * (-a).exp());
                log_det[r] -= a;
            }
        }
        Ok((y, log_det, p))
    }

    /// `T⁻¹(y)` by one pass per degree, with `log|det ∂T⁻¹/∂y| = Σ alpha(x)`.
    fn untransform(&self, y: &Tensor2) -> Result<(Tensor2, Vec<f64>)> {
        let d = self.dim();
        let mut by_degree = vec![0; d];
        for (k, &deg) in self.degrees.iter().enumerate() {
            by_degree[deg - 1] = k;
        }
        let mut x = Tensor2::zeros(y.rows(), d);
        let mut alpha_final = Tensor2::zeros(y.rows(), d);
        for &k in &by_degree {
            // column k only depends on columns of lower degree, already final
            let p = self.params(&x)?;
            for r in 0..y.rows() {
                let a = p.alpha.get(r, k);
                x.set(r, k, y.get(r, k) * a.exp() + p.mu.get(r, k));
                alpha_final.set(r, k, a);
            }
        }
        let log_det = alpha_final.iter_rows().map(|row| row.iter().sum()).collect();
        Ok((x, log_det))
    }

    pub(crate) fn forward(&self, x: &Tensor2) -> Result<(Tensor2, Vec<f64>, ArCache)> {
        let (out, mut log_det, point, image, params) = match self.direction {
            ArDirection::Maf => {
                let (y, ld, p) = self.transform(x)?;
                (y.clone(), ld, x.clone(), y, p)
            }
            ArDirection::Iaf => {
                let (b, ld) = self.untransform(x)?;
                let p = self.params(&b)?;
                (b.clone(), ld, b, x.clone(), p)
            }
        };
        let floored: Vec<bool> = log_det.iter().map(|&v| v < LOG_DET_FLOOR).collect();
        for (v, &f) in log_det.iter_mut().zip(&floored) {
            if f {
                *v = LOG_DET_FLOOR;
            }
        }
        let cache = ArCache {
            point,
            image,
            params,
            floored,
        };
        Ok((out, log_det, cache))
    }

    pub(crate) fn inverse(&self, y: &Tensor2) -> Result<Tensor2> {
        match self.direction {
            ArDirection::Maf => self.untransform(y).map(|(x, _)| x),
            ArDirection::Iaf => self.transform(y).map(|(x, ..)| x),
        }
    }

    /// Upstream for the masked network: `[d/dmu | d/draw]`.
    fn net_upstream(&self, dmu: &Tensor2, dalpha: &Tensor2, tanh_raw: &Tensor2) -> Tensor2 {
        let d = self.dim();
        let c = self.scale_clamp;
        Tensor2::from_fn(dmu.rows(), 2 * d, |r, j| {
            if j < d {
                dmu.get(r, j)
            } else {
                let t = tanh_raw.get(r, j - d);
                dalpha.get(r, j - d) * c * (1.0 - t * t)
            }
        })
    }

    pub(crate) fn backward(
        &self,
        cache: &ArCache,
        dout: &Tensor2,
        dlog_det: &[f64],
    ) -> Result<(Tensor2, Vec<MlpGrads>)> {
        let n = dout.rows();
        let d = self.dim();
        let p = &cache.params;
        let dld: Vec<f64> = (0..n)
            .map(|r| if cache.floored[r] { 0.0 } else { dlog_det[r] })
            .collect();
        match self.direction {
            ArDirection::Maf => {
                // y = (x - mu) e^{-alpha}, log_det = -Σ alpha
                let y = &cache.image;
                let mut dx = Tensor2::zeros(n, d);
                let mut dmu = Tensor2::zeros(n, d);
                let mut dalpha = Tensor2::zeros(n, d);
                for r in 0..n {
                    for k in 0..d {
                        let g = dout.get(r, k);
                        let e = (-p.alpha.get(r, k)).exp();
                        dx.set(r, k, g * e);
                        dmu.set(r, k, -g * e);
                        dalpha.set(r, k, -g * y.get(r, k) - dld[r]);
                    }
                }
                let up = self.net_upstream(&dmu, &dalpha, &p.tanh_raw);
                let (grads, dnet) = self.masked_net.backward(&p.cache, &up)?;
                dx.data_mut()
                    .iter_mut()
                    .zip(dnet.data())
                    .for_each(|(a, b)| *a += b);
                Ok((dx, vec![grads]))
            }
            ArDirection::Iaf => {
                // b = T⁻¹(a) solves T(b; θ) = a. With g the total derivative
                // w.r.t. b, the input gradient is v = J_T(b)⁻ᵀ g and the
                // parameter gradient is -vᵀ ∂T/∂θ plus the direct log-det term.
                let a = &cache.image;
                let zeros = Tensor2::zeros(n, d);
                let dalpha_ld = Tensor2::from_fn(n, d, |r, _| dld[r]);
                let up = self.net_upstream(&zeros, &dalpha_ld, &p.tanh_raw);
                let mut g = self.masked_net.backward_input(&p.cache, &up)?;
                g.data_mut()
                    .iter_mut()
                    .zip(dout.data())
                    .for_each(|(x, y)| *x += y);

                // J_T is triangular in degree order: solve from the highest degree down.
                let mut by_degree = vec![0; d];
                for (k, &deg) in self.degrees.iter().enumerate() {
                    by_degree[deg - 1] = k;
                }
                let mut v = Tensor2::zeros(n, d);
                for &k in by_degree.iter().rev() {
                    let mut dmu = Tensor2::zeros(n, d);
                    let mut dalpha = Tensor2::zeros(n, d);
                    for r in 0..n {
                        for j in 0..d {
                            let vj = v.get(r, j);
                            dmu.set(r, j, -(-p.alpha.get(r, j)).exp() * vj);
                            dalpha.set(r, j, -a.get(r, j) * vj);
                        }
                    }
                    let up = self.net_upstream(&dmu, &dalpha, &p.tanh_raw);
                    let off = self.masked_net.backward_input(&p.cache, &up)?;
                    for r in 0..n {
                        let val = (g.get(r, k) - off.get(r, k)) * p.alpha.get(r, k).exp();
                        v.set(r, k, val);
                    }
                }

                let mut dmu = Tensor2::zeros(n, d);
                let mut dalpha = Tensor2::zeros(n, d);
                for r in 0..n {
                    for j in 0..d {
                        let vj = v.get(r, j);
                        dmu.set(r, j, vj * (-p.alpha.get(r, j)).exp());
                        dalpha.set(r, j, dld[r] + vj * a.get(r, j));
                    }
                }
                let up = self.net_upstream(&dmu, &dalpha, &p.tanh_raw);
                let (grads, _) = self.masked_net.backward(&p.cache, &up)?;
                debug_assert_eq!(cache.point.rows(), n);
                Ok((v, vec![grads]))
            }
        }
    }

    pub(crate) fn nets_mut(&mut self) -> Vec<&mut MlpNet> {
        vec![&mut self.masked_net]
    }

    pub(crate) fn nets(&self) -> Vec<&MlpNet> {
        vec![&self.masked_net]
    }
}
