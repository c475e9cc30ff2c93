//! Attentive statistics pooling.
//!
//! For rows `h_i` (`N × D`): a one-hidden-layer scorer gives
//! `e_i = w2ᵀ tanh(W1ᵀ h_i + b1) + b2`, `α = softmax(e)`, and the output is
//! the attention-weighted mean and standard deviation
//! `[μ, σ]` with `σ = sqrt(Σ α_i (h_i − μ)² + ε)`, so width `2D`.

use rand::Rng;

use super::{glorot_bound, uniform_vec, Tensor};
use crate::error::{Error, Result};

/// Dot product with four independent partial sums.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Variance floor inside the square root.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct AspParams {
    /// `D × A`
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub eps: f64,
}

/// Everything the reverse pass needs.
#[derive(Debug, Clone)]
pub struct AspCache {
    n: usize,
    h: Vec<f64>,
    /// `tanh` activations, `N × A`.
    act: Vec<f64>,
    alpha: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl AspCache {
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

impl AspParams {
    /// Hidden width defaults to half the input width.
    pub fn init(d_in: usize, rng: &mut impl Rng) -> Self {
        Self::init_with(d_in, (d_in / 2).max(1), rng)
    }

    pub fn init_with(d_in: usize, d_att: usize, rng: &mut impl Rng) -> Self {
        let b1 = glorot_bound(d_in, d_att);
        let b2 = glorot_bound(d_att, 1);
        Self {
            w1: Tensor::from_vec(&[d_in, d_att], uniform_vec(d_in * d_att, b1, rng)).unwrap(),
            b1: Tensor::zeros(&[d_att]),
            w2: Tensor::from_vec(&[d_att], uniform_vec(d_att, b2, rng)).unwrap(),
            b2: Tensor::zeros(&[1]),
            eps: DEFAULT_EPS,
        }
    }

    /// All-zero scorer: uniform attention.
    pub fn uniform(d_in: usize, d_att: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[d_in, d_att]),
            b1: Tensor::zeros(&[d_att]),
            w2: Tensor::zeros(&[d_att]),
            b2: Tensor::zeros(&[1]),
            eps: DEFAULT_EPS,
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn d_att(&self) -> usize {
        self.w1.shape()[1]
    }

    pub fn d_out(&self) -> usize {
        2 * self.d_in()
    }

    /// Pool `n` rows of width `D` packed in `h`.
    pub fn forward(&self, h: &[f64], n: usize) -> Result<(Vec<f64>, AspCache)> {
        let (d, a) = (self.d_in(), self.d_att());
        if n == 0 {
            return Err(Error::InvalidInput("attentive pooling over zero elements".into()));
        }
        if h.len() != n * d {
            return Err(Error::InvalidInput(format!(
                "pooling expects {n} x {d} values, got {}",
                h.len()
            )));
        }
        let w1 = self.w1.data();
        let w2 = self.w2.data();
        let mut act = vec![0.0; n * a];
        let mut scores = vec![0.0; n];
        for i in 0..n {
            let hi = &h[i * d..(i + 1) * d];
            let u = &mut act[i * a..(i + 1) * a];
            u.copy_from_slice(self.b1.data());
            for (k, &hv) in hi.iter().enumerate() {
                for (uj, wv) in u.iter_mut().zip(&w1[k * a..(k + 1) * a]) {
                    *uj += hv * wv;
                }
            }
            let mut e = self.b2.data()[0];
            for (uj, wv) in u.iter_mut().zip(w2) {
                *uj = uj.tanh();
                e += *uj * wv;
            }
            scores[i] = e;
        }
        let alpha = super::softmax(&scores);

        let mut mu = vec![0.0; d];
        for (i, &al) in alpha.iter().enumerate() {
            for (m, hv) in mu.iter_mut().zip(&h[i * d..(i + 1) * d]) {
                *m += al * hv;
            }
        }
        let mut var = vec![0.0; d];
        for (i, &al) in alpha.iter().enumerate() {
            for k in 0..d {
                let c = h[i * d + k] - mu[k];
                var[k] += al * c * c;
            }
        }
        let sigma: Vec<f64> = var.iter().map(|v| (v + self.eps).sqrt()).collect();
        let mut out = mu.clone();
        out.extend_from_slice(&sigma);
        Ok((
            out,
            AspCache {
                n,
                h: h.to_vec(),
                act,
                alpha,
                mu,
                sigma,
            },
        ))
    }

    /// Accumulate parameter gradients into `grads` and return the gradient w.r.t. the pooled rows.
    pub fn backward(&self, cache: &AspCache, g_out: &[f64], grads: &mut AspParams) -> Vec<f64> {
        let (d, a, n) = (self.d_in(), self.d_att(), cache.n);
        let (g_mu, g_sigma) = g_out.split_at(d);
        let h = &cache.h;
        let g_var: Vec<f64> = g_sigma
            .iter()
            .zip(&cache.sigma)
            .map(|(g, s)| g / (2.0 * s))
            .collect();

        let mut gh = vec![0.0; n * d];
        let mut g_alpha = vec![0.0; n];
        for i in 0..n {
            let al = cache.alpha[i];
            let mut ga = 0.0;
            for k in 0..d {
                let c = h[i * d + k] - cache.mu[k];
                gh[i * d + k] = al * (g_mu[k] + 2.0 * g_var[k] * c);
                ga += g_mu[k] * h[i * d + k] + g_var[k] * c * c;
            }
            g_alpha[i] = ga;
        }
        let mean_g: f64 = cache.alpha.iter().zip(&g_alpha).map(|(a, g)| a * g).sum();

        let w1 = self.w1.data();
        let w2 = self.w2.data();
        let mut gu = vec![0.0; a];
        for i in 0..n {
            let ge = cache.alpha[i] * (g_alpha[i] - mean_g);
            grads.b2.data_mut()[0] += ge;
            let act = &cache.act[i * a..(i + 1) * a];
            for j in 0..a {
                grads.w2.data_mut()[j] += ge * act[j];
                gu[j] = ge * w2[j] * (1.0 - act[j] * act[j]);
                grads.b1.data_mut()[j] += gu[j];
            }
            let hi = &h[i * d..(i + 1) * d];
            let gw1 = grads.w1.data_mut();
            for k in 0..d {
                let grow = &mut gw1[k * a..(k + 1) * a];
                for (g, u) in grow.iter_mut().zip(&gu) {
                    *g += hi[k] * u;
                }
                gh[i * d + k] += dot(&w1[k * a..(k + 1) * a], &gu);
            }
        }
        gh
    }

    pub fn named<'a>(&'a self, prefix: &str) -> Vec<(String, &'a Tensor)> {
        vec![
            (format!("{prefix}.w1"), &self.w1),
            (format!("{prefix}.b1"), &self.b1),
            (format!("{prefix}.w2"), &self.w2),
            (format!("{prefix}.b2"), &self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}
