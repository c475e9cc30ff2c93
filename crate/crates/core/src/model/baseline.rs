//! Fine-tuning baseline: trainable per-layer scale and shift inside the
//! encoder, the speedup operator, [`MfaParams`], and a linear head.

use rand::Rng;

use super::mfa::{MfaCache, MfaParams};
use crate::encoder::{speedup_backward, speedup_values, Cascade, CascadeOutput, LayerAffine};
use crate::error::{Error, Result};
use crate::nn::{Affine, Parameters, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    /// `L × F` scales applied after each encoder layer.
    pub gamma: Tensor,
    /// `L × F` shifts.
    pub beta: Tensor,
    pub mfa: MfaParams,
    /// `4F → 2`.
    pub head: Affine,
}

/// The frozen parts of the baseline.
#[derive(Debug, Clone)]
pub struct BaselineContext {
    pub cascade: Cascade,
    pub tau: usize,
}

#[derive(Debug, Clone)]
pub struct BaselineCache {
    frames: usize,
    encoder: CascadeOutput,
    mfa: MfaCache,
    r: Vec<f64>,
}

impl BaselineParams {
    /// Encoder affine starts at the identity.
    pub fn init(layers: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let id = LayerAffine::identity(layers, dim);
        Self {
            gamma: Tensor::from_vec(&[layers, dim], id.gamma).unwrap(),
            beta: Tensor::from_vec(&[layers, dim], id.beta).unwrap(),
            mfa: MfaParams::init(layers, dim, rng),
            head: Affine::init(4 * dim, 2, rng),
        }
    }

    pub fn layers(&self) -> usize {
        self.gamma.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.gamma.shape()[1]
    }

    /// The tuned encoder affine, for feature extraction after training.
    pub fn layer_affine(&self) -> LayerAffine {
        LayerAffine {
            layers: self.layers(),
            dim: self.dim(),
            gamma: self.gamma.data().to_vec(),
            beta: self.beta.data().to_vec(),
        }
    }

    /// Logits for one segment given its frame-major `T′ × F` layer-0 input.
    pub fn forward(&self, ctx: &BaselineContext, mel: &[f64]) -> Result<([f64; 2], BaselineCache)> {
        let (layers, dim) = (self.layers(), self.dim());
        if ctx.cascade.layers() != layers || ctx.cascade.dim() != dim {
            return Err(Error::Incompatible(format!(
                "encoder is {}x{}, model expects {layers}x{dim}",
                ctx.cascade.layers(),
                ctx.cascade.dim()
            )));
        }
        if ctx.tau == 0 {
            return Err(Error::Config("speedup factor must be at least 1".into()));
        }
        if mel.is_empty() || !mel.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!("layer-0 input of {} values is not T x {dim}", mel.len())));
        }
        let frames = mel.len() / dim;
        let encoder = ctx.cascade.forward(mel, frames, Some(&self.layer_affine()));
        let short = speedup_values(&encoder.values, layers, frames, dim, ctx.tau);
        let (r, mfa) = self.mfa.forward_one(&short)?;
        let z = self.head.forward(&r)?;
        Ok((
            [z[0], z[1]],
            BaselineCache {
                frames,
                encoder,
                mfa,
                r,
            },
        ))
    }

    pub fn backward(&self, ctx: &BaselineContext, cache: &BaselineCache, g_logits: &[f64; 2], grads: &mut BaselineParams) {
        let (layers, dim) = (self.layers(), self.dim());
        let g_r = self.head.backward(&cache.r, g_logits, &mut grads.head);
        let g_short = self.mfa.backward_one(&cache.mfa, &g_r, &mut grads.mfa);
        let g_long = speedup_backward(&g_short, layers, cache.frames, dim, ctx.tau);
        let g_aff = ctx.cascade.backward(&cache.encoder, &self.layer_affine(), &g_long);
        for (g, v) in grads.gamma.data_mut().iter_mut().zip(&g_aff.gamma) {
            *g += v;
        }
        for (g, v) in grads.beta.data_mut().iter_mut().zip(&g_aff.beta) {
            *g += v;
        }
    }
}

impl Parameters for BaselineParams {
    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut v = vec![("encoder.gamma".to_string(), &self.gamma), ("encoder.beta".to_string(), &self.beta)];
        v.extend(self.mfa.named("mfa."));
        v.extend(self.head.named("head"));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.gamma, &mut self.beta];
        v.extend(self.mfa.tensors_mut());
        v.extend(self.head.tensors_mut());
        v
    }
}
