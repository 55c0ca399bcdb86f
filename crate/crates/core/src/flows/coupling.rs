use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{subnet, LOG_DET_FLOOR};
use crate::error::{Error, Result};
use crate::nn::{ForwardCache, MlpGrads, MlpNet};
use crate::tensor::Tensor2;

/// Affine coupling: coordinates with `mask == true` pass through and
/// condition the scale and shift applied to the others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingLayer {
    mask: Vec<bool>,
    pub scale_net: MlpNet,
    pub shift_net: MlpNet,
    scale_clamp: f64,
    cond: Vec<usize>,
    free: Vec<usize>,
}

pub(crate) struct CouplingCache {
    free_in: Tensor2,
    tanh_u: Tensor2,
    scale: Tensor2,
    scale_cache: ForwardCache,
    shift_cache: ForwardCache,
    floored: Vec<bool>,
}

impl CouplingLayer {
    pub fn new<R: Rng + ?Sized>(
        mask: Vec<bool>,
        hidden: usize,
        hidden_layers: usize,
        scale_clamp: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let cond: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let free: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        if cond.is_empty() || free.is_empty() {
            return Err(Error::Argument(
                "coupling mask needs at least one conditioning and one transformed coordinate".into(),
            ));
        }
        let scale_net = subnet(cond.len(), free.len(), hidden, hidden_layers, rng)?;
        let shift_net = subnet(cond.len(), free.len(), hidden, hidden_layers, rng)?;
        Ok(Self {
            mask,
            scale_net,
            shift_net,
            scale_clamp,
            cond,
            free,
        })
    }

    /// Alternating even/odd mask; `parity` selects which half conditions.
    pub fn alternating_mask(dim: usize, parity: usize) -> Vec<bool> {
        (0..dim).map(|i| i % 2 == parity % 2).collect()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Indices of the coordinates that get scaled and shifted.
    pub fn transformed(&self) -> &[usize] {
        &self.free
    }

    fn scale_and_shift(
        &self,
        cond_in: &Tensor2,
    ) -> Result<(Tensor2, Tensor2, Tensor2, ForwardCache, ForwardCache)> {
        let (u, scale_cache) = self.scale_net.forward(cond_in)?;
        let (shift, shift_cache) = self.shift_net.forward(cond_in)?;
        let tanh_u = u.map(f64::tanh);
        let c = self.scale_clamp;
        let scale = tanh_u.map(|t| c * t);
        Ok((scale, shift, tanh_u, scale_cache, shift_cache))
    }

    pub(crate) fn forward(&self, x: &Tensor2) -> Result<(Tensor2, Vec<f64>, CouplingCache)> {
        let cond_in = x.select_cols(&self.cond);
        let free_in = x.select_cols(&self.free);
        let (scale, shift, tanh_u, scale_cache, shift_cache) = self.scale_and_shift(&cond_in)?;
        let mut y = x.clone();
        let mut log_det = vec![0.0; x.rows()];
        let mut floored = vec![false; x.rows()];
        for r in 0..x.rows() {
            let mut sum = 0.0;
            for (k, &j) in self.free.iter().enumerate() {
                let s = scale.get(r, k);
                y.set(r, j, free_in.get(r, k) * s.exp() + shift.get(r, k));
                sum += s;
            }
            if sum < LOG_DET_FLOOR {
                floored[r] = true;
                sum = LOG_DET_FLOOR;
            }
            log_det[r] = sum;
        }
        let cache = CouplingCache {
            free_in,
            tanh_u,
            scale,
            scale_cache,
            shift_cache,
            floored,
        };
        Ok((y, log_det, cache))
    }

    pub(crate) fn inverse(&self, y: &Tensor2) -> Result<Tensor2> {
        let cond_in = y.select_cols(&self.cond);
        let (scale, shift, ..) = self.scale_and_shift(&cond_in)?;
        let mut x = y.clone();
        for r in 0..y.rows() {
            for (k, &j) in self.free.iter().enumerate() {
                x.set(r, j, (y.get(r, j) - shift.get(r, k)) * (-scale.get(r, k)).exp());
            }
        }
        Ok(x)
    }

    pub(crate) fn backward(
        &self,
        cache: &CouplingCache,
        dy: &Tensor2,
        dlog_det: &[f64],
    ) -> Result<(Tensor2, Vec<MlpGrads>)> {
        let n = dy.rows();
        let m = self.free.len();
        let c = self.scale_clamp;
        let mut dx = dy.clone();
        let mut du = Tensor2::zeros(n, m);
        let mut dt = Tensor2::zeros(n, m);
        for r in 0..n {
            let dld = if cache.floored[r] { 0.0 } else { dlog_det[r] };
            for (k, &j) in self.free.iter().enumerate() {
                let g = dy.get(r, j);
                let es = cache.scale.get(r, k).exp();
                dx.set(r, j, g * es);
                let ds = g * cache.free_in.get(r, k) * es + dld;
                let th = cache.tanh_u.get(r, k);
                du.set(r, k, ds * c * (1.0 - th * th));
                dt.set(r, k, g);
            }
        }
        let (grads_s, dcond_s) = self.scale_net.backward(&cache.scale_cache, &du)?;
        let (grads_t, dcond_t) = self.shift_net.backward(&cache.shift_cache, &dt)?;
        for r in 0..n {
            for (k, &j) in self.cond.iter().enumerate() {
                let v = dx.get(r, j) + dcond_s.get(r, k) + dcond_t.get(r, k);
                dx.set(r, j, v);
            }
        }
        Ok((dx, vec![grads_s, grads_t]))
    }

    pub(crate) fn nets_mut(&mut self) -> Vec<&mut MlpNet> {
        vec![&mut self.scale_net, &mut self.shift_net]
    }

    pub(crate) fn nets(&self) -> Vec<&MlpNet> {
        vec![&self.scale_net, &self.shift_net]
    }
}
