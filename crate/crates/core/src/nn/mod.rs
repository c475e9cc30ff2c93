//! Differentiable primitives with hand-written reverse passes: attentive
//! statistics pooling, affine maps, softmax cross-entropy, Adam, and a
//! finite-difference gradient checker. All math is `f64`.

mod adam;
mod affine;
mod asp;
pub mod checkpoint;
mod gradcheck;
mod loss;
mod tensor;

pub use adam::{Adam, AdamHyper};
pub use affine::Affine;
pub use asp::{AspCache, AspParams, DEFAULT_EPS};
pub use gradcheck::{check_affine, check_asp, check_softmax_xent, grad_check, probe_op, GradCheckReport};
pub use loss::{softmax, softmax_xent};
pub use tensor::Tensor;

use rand::Rng;

/// A model's trainable tensors, visited in a fixed order.
pub trait Parameters: Clone {
    fn named(&self) -> Vec<(String, &Tensor)>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn add_assign(&mut self, other: &Self) {
        let src: Vec<&Tensor> = other.named().into_iter().map(|(_, t)| t).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            dst.add_assign(s);
        }
    }

    fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.scale(c);
        }
    }

    fn num_values(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.named().iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    fn unflatten(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len());
    }
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn uniform_vec(n: usize, bound: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}
