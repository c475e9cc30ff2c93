use rand::Rng;

use super::{glorot_bound, uniform_vec, Tensor};
use crate::error::{Error, Result};

/// `y = x W + b` over the last axis; `W` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Tensor,
    pub b: Tensor,
}

impl Affine {
    pub fn init(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let bound = glorot_bound(d_in, d_out);
        Self {
            w: Tensor::from_vec(&[d_in, d_out], uniform_vec(d_in * d_out, bound, rng)).unwrap(),
            b: Tensor::zeros(&[d_out]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.w.shape()[1]
    }

    /// Apply to `rows` row vectors packed in `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (din, dout) = (self.d_in(), self.d_out());
        if !x.len().is_multiple_of(din) {
            return Err(Error::InvalidInput(format!(
                "affine expects rows of {din}, got {} values",
                x.len()
            )));
        }
        let w = self.w.data();
        let mut y = Vec::with_capacity(x.len() / din * dout);
        for row in x.chunks(din) {
            let start = y.len();
            y.extend_from_slice(self.b.data());
            let out = &mut y[start..];
            for (i, &xi) in row.iter().enumerate() {
                let wr = &w[i * dout..(i + 1) * dout];
                for (o, wv) in out.iter_mut().zip(wr) {
                    *o += xi * wv;
                }
            }
        }
        Ok(y)
    }

    /// Accumulate parameter gradients into `grads` and return the input gradient.
    pub fn backward(&self, x: &[f64], gy: &[f64], grads: &mut Affine) -> Vec<f64> {
        let (din, dout) = (self.d_in(), self.d_out());
        let w = self.w.data();
        let mut gx = vec![0.0; x.len()];
        for ((row, g), gxr) in x.chunks(din).zip(gy.chunks(dout)).zip(gx.chunks_mut(din)) {
            for (gb, gv) in grads.b.data_mut().iter_mut().zip(g) {
                *gb += gv;
            }
            let gw = grads.w.data_mut();
            for i in 0..din {
                let gwr = &mut gw[i * dout..(i + 1) * dout];
                for (gwv, gv) in gwr.iter_mut().zip(g) {
                    *gwv += row[i] * gv;
                }
                gxr[i] = super::asp::dot(&w[i * dout..(i + 1) * dout], g);
            }
        }
        gx
    }

    pub fn named<'a>(&'a self, prefix: &str) -> Vec<(String, &'a Tensor)> {
        vec![(format!("{prefix}.w"), &self.w), (format!("{prefix}.b"), &self.b)]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let mut a = Affine {
            w: Tensor::zeros(&[3, 3]),
            b: Tensor::zeros(&[3]),
        };
        for i in 0..3 {
            a.w.data_mut()[i * 3 + i] = 1.0;
        }
        let x = vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0];
        assert_eq!(a.forward(&x).unwrap(), x);
    }

    #[test]
    fn small_arithmetic() {
        let a = Affine {
            w: Tensor::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap(),
            b: Tensor::from_vec(&[1], vec![0.5]).unwrap(),
        };
        assert_eq!(a.forward(&[1.0, 2.0]).unwrap(), vec![3.5]);
    }

    #[test]
    fn ragged_input_is_rejected() {
        let a = Affine::init(4, 2, &mut crate::seed::rng(0, &[]));
        assert!(a.forward(&[1.0; 5]).is_err());
    }
}
