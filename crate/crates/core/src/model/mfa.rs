//! Multi-fusion attentive pooling: per-layer pooling over time, a shared
//! projection at every layer position, then pooling over layers.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Affine, AspCache, AspParams, Parameters, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct MfaParams {
    /// One time-wise pooling per layer, `F → 2F`.
    pub asp_t: Vec<AspParams>,
    /// Shared `2F → 2F` projection.
    pub merge: Affine,
    /// Layer-wise pooling, `2F → 4F`.
    pub asp_l: AspParams,
}

#[derive(Debug, Clone)]
pub struct MfaCache {
    time: Vec<AspCache>,
    pooled: Vec<f64>,
    layer: AspCache,
}

impl MfaParams {
    pub fn init(layers: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let asp_t = (0..layers).map(|_| AspParams::init(dim, rng)).collect();
        let merge = Affine::init(2 * dim, 2 * dim, rng);
        let asp_l = AspParams::init(2 * dim, rng);
        Self { asp_t, merge, asp_l }
    }

    pub fn layers(&self) -> usize {
        self.asp_t.len()
    }

    pub fn dim(&self) -> usize {
        self.merge.d_in() / 2
    }

    pub fn out_dim(&self) -> usize {
        4 * self.dim()
    }

    fn frames_of(&self, len: usize) -> Result<usize> {
        let per_frame = self.layers() * self.dim();
        if len == 0 || !len.is_multiple_of(per_frame) {
            return Err(Error::InvalidInput(format!(
                "feature of {len} values is not {} x T x {}",
                self.layers(),
                self.dim()
            )));
        }
        Ok(len / per_frame)
    }

    /// One layer-major `L × T × F` feature to its `4F` representation.
    pub fn forward_one(&self, y: &[f64]) -> Result<(Vec<f64>, MfaCache)> {
        let frames = self.frames_of(y.len())?;
        let stride = frames * self.dim();
        let mut pooled = Vec::with_capacity(self.layers() * 2 * self.dim());
        let mut time = Vec::with_capacity(self.layers());
        for (l, asp) in self.asp_t.iter().enumerate() {
            let (out, cache) = asp.forward(&y[l * stride..(l + 1) * stride], frames)?;
            pooled.extend(out);
            time.push(cache);
        }
        let stacked = self.merge.forward(&pooled)?;
        let (r, layer) = self.asp_l.forward(&stacked, self.layers())?;
        Ok((
            r,
            MfaCache {
                time,
                pooled,
                layer,
            },
        ))
    }

    /// A batch of `B` features packed back to back; returns `B × 4F`.
    pub fn forward(&self, y: &[f64], batch: usize) -> Result<Vec<f64>> {
        if batch == 0 || !y.len().is_multiple_of(batch) {
            return Err(Error::InvalidInput(format!("{} values do not split into {batch} items", y.len())));
        }
        let per = y.len() / batch;
        let mut out = Vec::with_capacity(batch * self.out_dim());
        for item in y.chunks(per) {
            out.extend(self.forward_one(item)?.0);
        }
        Ok(out)
    }

    /// Accumulate parameter gradients; returns the gradient w.r.t. the input feature.
    pub fn backward_one(&self, cache: &MfaCache, g_r: &[f64], grads: &mut MfaParams) -> Vec<f64> {
        let g_stacked = self.asp_l.backward(&cache.layer, g_r, &mut grads.asp_l);
        let g_pooled = self.merge.backward(&cache.pooled, &g_stacked, &mut grads.merge);
        let two_f = 2 * self.dim();
        let mut g_y = Vec::new();
        for (l, asp) in self.asp_t.iter().enumerate() {
            let g = &g_pooled[l * two_f..(l + 1) * two_f];
            g_y.extend(asp.backward(&cache.time[l], g, &mut grads.asp_t[l]));
        }
        g_y
    }

    pub fn named<'a>(&'a self, prefix: &str) -> Vec<(String, &'a Tensor)> {
        let mut v = Vec::new();
        for (l, asp) in self.asp_t.iter().enumerate() {
            v.extend(asp.named(&format!("{prefix}asp_t.{l}")));
        }
        v.extend(self.merge.named(&format!("{prefix}merge")));
        v.extend(self.asp_l.named(&format!("{prefix}asp_l")));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::new();
        for asp in &mut self.asp_t {
            v.extend(asp.tensors_mut());
        }
        v.extend(self.merge.tensors_mut());
        v.extend(self.asp_l.tensors_mut());
        v
    }
}

impl Parameters for MfaParams {
    fn named(&self) -> Vec<(String, &Tensor)> {
        MfaParams::named(self, "")
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        MfaParams::tensors_mut(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DEFAULT_EPS;
    use crate::seed;

    fn feature(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn output_width_is_four_f() {
        let mut rng = seed::rng(1, &[]);
        let p = MfaParams::init(4, 16, &mut rng);
        let y = feature(2 * 4 * 20 * 16, &mut rng);
        let r = p.forward(&y, 2).unwrap();
        assert_eq!(r.len(), 2 * 64);
    }

    #[test]
    fn single_frame_sigma_is_sqrt_eps() {
        let mut rng = seed::rng(2, &[]);
        let p = MfaParams::init(3, 8, &mut rng);
        let y = feature(3 * 8, &mut rng);
        let (_, cache) = p.forward_one(&y).unwrap();
        for l in 0..3 {
            let sigma = &cache.pooled[l * 16 + 8..(l + 1) * 16];
            for s in sigma {
                assert!((s - DEFAULT_EPS.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_items_are_independent() {
        let mut rng = seed::rng(3, &[]);
        let p = MfaParams::init(3, 8, &mut rng);
        let a = feature(3 * 5 * 8, &mut rng);
        let b = feature(3 * 5 * 8, &mut rng);
        let both = p.forward(&[a.clone(), b.clone()].concat(), 2).unwrap();
        assert_eq!(&both[..32], p.forward_one(&a).unwrap().0.as_slice());
        assert_eq!(&both[32..], p.forward_one(&b).unwrap().0.as_slice());
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = seed::rng(4, &[]);
        let p = MfaParams::init(3, 8, &mut rng);
        assert!(p.forward_one(&[0.0; 25]).is_err());
        assert!(p.forward_one(&[]).is_err());
        assert!(p.forward(&[0.0; 48], 0).is_err());
    }
}
