//! Retrieval-augmented classifier: the query and its references go through
//! one shared [`MfaParams`], reference-minus-query differences are pooled over
//! the references, and a linear head reads the pooled difference (optionally
//! with the query representation).

use rand::Rng;

use super::mfa::{MfaCache, MfaParams};
use crate::error::{Error, Result};
use crate::nn::{Affine, AspCache, AspParams, Parameters, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct RadMfaParams {
    pub mfa: MfaParams,
    /// Sample-wise pooling over references, `4F → 8F`.
    pub asp_k: AspParams,
    /// `12F → 2` with the query representation, `8F → 2` without.
    pub head: Affine,
}

#[derive(Debug, Clone)]
pub struct RadCache {
    query: MfaCache,
    refs: Vec<MfaCache>,
    r_q: Vec<f64>,
    r_d: Vec<f64>,
    r_e: Vec<f64>,
    pool: AspCache,
    head_in: Vec<f64>,
}

impl RadCache {
    pub fn r_q(&self) -> &[f64] {
        &self.r_q
    }

    /// `K × 4F`, row `k` is `r_k − r_q`.
    pub fn r_d(&self) -> &[f64] {
        &self.r_d
    }

    pub fn r_e(&self) -> &[f64] {
        &self.r_e
    }
}

impl RadMfaParams {
    /// `with_query = false` gives the difference-only variant.
    pub fn init(layers: usize, dim: usize, with_query: bool, rng: &mut impl Rng) -> Self {
        let mfa = MfaParams::init(layers, dim, rng);
        let asp_k = AspParams::init(4 * dim, rng);
        let head_in = if with_query { 12 * dim } else { 8 * dim };
        let head = Affine::init(head_in, 2, rng);
        Self { mfa, asp_k, head }
    }

    pub fn with_query(&self) -> bool {
        self.head.d_in() == 12 * self.mfa.dim()
    }

    /// Logits for one query (`L × T × F`) and `k` references packed back to back.
    pub fn forward(&self, query: &[f64], refs: &[f64], k: usize) -> Result<([f64; 2], RadCache)> {
        if k == 0 {
            return Err(Error::RetrievalEmpty);
        }
        if refs.len() != k * query.len() {
            return Err(Error::InvalidInput(format!(
                "{} reference values for {k} references of {}",
                refs.len(),
                query.len()
            )));
        }
        let (r_q, query_cache) = self.mfa.forward_one(query)?;
        let width = r_q.len();
        let mut r_d = Vec::with_capacity(k * width);
        let mut ref_caches = Vec::with_capacity(k);
        for item in refs.chunks(query.len()) {
            let (r_k, c) = self.mfa.forward_one(item)?;
            r_d.extend(r_k.iter().zip(&r_q).map(|(a, b)| a - b));
            ref_caches.push(c);
        }
        let (r_e, pool) = self.asp_k.forward(&r_d, k)?;
        let mut head_in = r_e.clone();
        if self.with_query() {
            head_in.extend_from_slice(&r_q);
        }
        let z = self.head.forward(&head_in)?;
        Ok((
            [z[0], z[1]],
            RadCache {
                query: query_cache,
                refs: ref_caches,
                r_q,
                r_d,
                r_e,
                pool,
                head_in,
            },
        ))
    }

    pub fn logits(&self, query: &[f64], refs: &[f64], k: usize) -> Result<[f64; 2]> {
        Ok(self.forward(query, refs, k)?.0)
    }

    /// Accumulate parameter gradients; returns the gradients w.r.t. the query and the references.
    pub fn backward(&self, cache: &RadCache, g_logits: &[f64; 2], grads: &mut RadMfaParams) -> (Vec<f64>, Vec<f64>) {
        let g_in = self.head.backward(&cache.head_in, g_logits, &mut grads.head);
        let width = cache.r_q.len();
        let e_width = cache.r_e.len();
        let mut g_rq = if self.with_query() {
            g_in[e_width..].to_vec()
        } else {
            vec![0.0; width]
        };
        let g_rd = self.asp_k.backward(&cache.pool, &g_in[..e_width], &mut grads.asp_k);
        let mut g_refs = Vec::new();
        for (c, g) in cache.refs.iter().zip(g_rd.chunks(width)) {
            for (q, v) in g_rq.iter_mut().zip(g) {
                *q -= v;
            }
            g_refs.extend(self.mfa.backward_one(c, g, &mut grads.mfa));
        }
        let g_query = self.mfa.backward_one(&cache.query, &g_rq, &mut grads.mfa);
        (g_query, g_refs)
    }
}

impl Parameters for RadMfaParams {
    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut v = self.mfa.named("mfa.");
        v.extend(self.asp_k.named("asp_k"));
        v.extend(self.head.named("head"));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.mfa.tensors_mut();
        v.extend(self.asp_k.tensors_mut());
        v.extend(self.head.tensors_mut());
        v
    }
}
