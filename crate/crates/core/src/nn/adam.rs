use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments start at zero.
#[derive(Debug, Clone)]
pub struct Adam {
    pub hyper: AdamHyper,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new<P: Parameters>(params: &P, hyper: AdamHyper) -> Self {
        let n = params.num_values();
        Self {
            hyper,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.flatten();
        if g.len() != self.m.len() || params.num_values() != self.m.len() {
            return Err(Error::InvalidInput("gradient shape does not match parameters".into()));
        }
        self.step += 1;
        let AdamHyper { lr, beta1, beta2, eps } = self.hyper;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let mut off = 0;
        for t in params.tensors_mut() {
            for p in t.data_mut() {
                let gi = g[off];
                self.m[off] = beta1 * self.m[off] + (1.0 - beta1) * gi;
                self.v[off] = beta2 * self.v[off] + (1.0 - beta2) * gi * gi;
                let m_hat = self.m[off] / c1;
                let v_hat = self.v[off] / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
                off += 1;
            }
        }
        Ok(())
    }
}
