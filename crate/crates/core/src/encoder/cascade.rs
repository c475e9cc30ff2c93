//! Layers 1..L of the pseudo encoder: `h_l = tanh(A_l h_{l-1})` per frame,
//! with fixed seeded orthogonal `A_l`, plus the optional trainable
//! per-layer scale and bias used for fine-tuning.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::seed;

const TAG_ORTHO: u64 = 0x0a7e;

/// Per-layer elementwise `h ← γ ⊙ h + β`, stored layer-major (`L × F`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerAffine {
    pub layers: usize,
    pub dim: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerAffine {
    pub fn identity(layers: usize, dim: usize) -> Self {
        Self {
            layers,
            dim,
            gamma: vec![1.0; layers * dim],
            beta: vec![0.0; layers * dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers,
            dim: self.dim,
            gamma: vec![0.0; self.gamma.len()],
            beta: vec![0.0; self.beta.len()],
        }
    }

    fn apply(&self, layer: usize, frame: &mut [f64]) {
        let off = layer * self.dim;
        for (f, v) in frame.iter_mut().enumerate() {
            *v = self.gamma[off + f] * *v + self.beta[off + f];
        }
    }
}

/// Orthogonalize a square row-major matrix in place (modified Gram-Schmidt
/// over columns, two passes).
fn orthogonalize(m: &mut [f64], n: usize) {
    for _ in 0..2 {
        for j in 0..n {
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| m[i * n + j] * m[i * n + k]).sum();
                for i in 0..n {
                    m[i * n + j] -= dot * m[i * n + k];
                }
            }
            let norm = (0..n).map(|i| m[i * n + j].powi(2)).sum::<f64>().sqrt();
            for i in 0..n {
                m[i * n + j] /= norm;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cascade {
    layers: usize,
    dim: usize,
    /// `mats[l - 1]` is `A_l`, row-major `dim × dim`.
    mats: Vec<Vec<f64>>,
    /// Transposes of `mats`.
    mats_t: Vec<Vec<f64>>,
}

/// Activations kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct CascadeOutput {
    pub frames: usize,
    /// Layer outputs after the affine, layer-major `L × T × F`.
    pub values: Vec<f64>,
    /// Layer activations before the affine (`mel` for layer 0, `tanh(..)` above).
    raw: Vec<f64>,
}

impl Cascade {
    pub fn new(layers: usize, dim: usize, root_seed: u64) -> Self {
        let mats = (1..layers)
            .map(|l| {
                let mut rng = seed::rng(root_seed, &[TAG_ORTHO, l as u64]);
                let mut m: Vec<f64> = (0..dim * dim).map(|_| rng.sample(StandardNormal)).collect();
                orthogonalize(&mut m, dim);
                m
            })
            .collect::<Vec<_>>();
        let mats_t = mats
            .iter()
            .map(|m| (0..dim * dim).map(|i| m[(i % dim) * dim + i / dim]).collect())
            .collect();
        Self {
            layers,
            dim,
            mats,
            mats_t,
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `A_l` for `l` in `1..L`.
    pub fn matrix(&self, layer: usize) -> &[f64] {
        &self.mats[layer - 1]
    }

    /// Run all layers over a frame-major `frames × F` layer-0 input.
    pub fn forward(&self, mel: &[f64], frames: usize, affine: Option<&LayerAffine>) -> CascadeOutput {
        let (l_count, f) = (self.layers, self.dim);
        assert_eq!(mel.len(), frames * f);
        let stride = frames * f;
        let mut values = vec![0.0; l_count * stride];
        let mut raw = vec![0.0; l_count * stride];
        raw[..stride].copy_from_slice(mel);
        values[..stride].copy_from_slice(mel);
        if let Some(a) = affine {
            for frame in values[..stride].chunks_mut(f) {
                a.apply(0, frame);
            }
        }
        for l in 1..l_count {
            let a_t = &self.mats_t[l - 1];
            let (prev, rest) = values.split_at_mut(l * stride);
            let prev = &prev[(l - 1) * stride..];
            let cur = &mut rest[..stride];
            for t in 0..frames {
                let h = &prev[t * f..(t + 1) * f];
                let z = &mut cur[t * f..(t + 1) * f];
                z.fill(0.0);
                // z += h_k * (column k of A_l), unit stride over the output
                for (k, &x) in h.iter().enumerate() {
                    for (zi, a) in z.iter_mut().zip(&a_t[k * f..(k + 1) * f]) {
                        *zi += x * a;
                    }
                }
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            raw[l * stride..(l + 1) * stride].copy_from_slice(cur);
            if let Some(a) = affine {
                for frame in cur.chunks_mut(f) {
                    a.apply(l, frame);
                }
            }
        }
        CascadeOutput { frames, values, raw }
    }

    /// Gradient of a loss w.r.t. `γ` and `β`, given its gradient w.r.t. every layer output.
    pub fn backward(&self, out: &CascadeOutput, affine: &LayerAffine, grad: &[f64]) -> LayerAffine {
        let (l_count, f, frames) = (self.layers, self.dim, out.frames);
        let stride = frames * f;
        assert_eq!(grad.len(), l_count * stride);
        let mut g_affine = affine.zeros_like();
        let mut g_next = vec![0.0; stride];
        let mut gz = vec![0.0; f];
        for l in (0..l_count).rev() {
            let raw = &out.raw[l * stride..(l + 1) * stride];
            let g_out = &grad[l * stride..(l + 1) * stride];
            let off = l * f;
            let mut g_prev = vec![0.0; stride];
            for t in 0..frames {
                for i in 0..f {
                    let g = g_out[t * f + i] + g_next[t * f + i];
                    let h = raw[t * f + i];
                    g_affine.gamma[off + i] += g * h;
                    g_affine.beta[off + i] += g;
                    gz[i] = affine.gamma[off + i] * g * (1.0 - h * h);
                }
                if l > 0 {
                    let a_l = &self.mats[l - 1];
                    let gp = &mut g_prev[t * f..(t + 1) * f];
                    for i in 0..f {
                        let row = &a_l[i * f..(i + 1) * f];
                        for (dst, a) in gp.iter_mut().zip(row) {
                            *dst += a * gz[i];
                        }
                    }
                }
            }
            g_next = g_prev;
        }
        g_affine
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_are_orthogonal() {
        let c = Cascade::new(5, 32, 11);
        for l in 1..5 {
            let a = c.matrix(l);
            let mut worst = 0.0f64;
            for i in 0..32 {
                for j in 0..32 {
                    let dot: f64 = (0..32).map(|k| a[k * 32 + i] * a[k * 32 + j]).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((dot - target).abs());
                }
            }
            assert!(worst < 1e-5, "layer {l}: {worst}");
        }
    }

    #[test]
    fn seeds_give_different_matrices() {
        let a = Cascade::new(3, 8, 1);
        let b = Cascade::new(3, 8, 2);
        assert_ne!(a.matrix(1), b.matrix(1));
        assert_eq!(a.matrix(2), Cascade::new(3, 8, 1).matrix(2));
    }

    #[test]
    fn identity_affine_matches_plain_forward() {
        let c = Cascade::new(4, 8, 3);
        let mel: Vec<f64> = (0..5 * 8).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let plain = c.forward(&mel, 5, None);
        let ident = c.forward(&mel, 5, Some(&LayerAffine::identity(4, 8)));
        assert_eq!(plain.values, ident.values);
    }

    #[test]
    fn affine_gradient_matches_finite_differences() {
        let (layers, dim, frames) = (3, 8, 4);
        let c = Cascade::new(layers, dim, 9);
        let mut rng = seed::rng(1, &[]);
        let mel: Vec<f64> = (0..frames * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let weights: Vec<f64> = (0..layers * frames * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut affine = LayerAffine::identity(layers, dim);
        for (g, b) in affine.gamma.iter_mut().zip(affine.beta.iter_mut()) {
            *g += rng.gen_range(-0.3..0.3);
            *b += rng.gen_range(-0.3..0.3);
        }
        let loss = |a: &LayerAffine| -> f64 {
            let out = c.forward(&mel, frames, Some(a));
            out.values.iter().zip(&weights).map(|(v, w)| v * w).sum()
        };
        let out = c.forward(&mel, frames, Some(&affine));
        let grad = c.backward(&out, &affine, &weights);
        let h = 1e-6;
        for i in 0..affine.gamma.len() {
            for which in 0..2 {
                let mut plus = affine.clone();
                let mut minus = affine.clone();
                let (p, m, a) = if which == 0 {
                    (&mut plus.gamma[i], &mut minus.gamma[i], grad.gamma[i])
                } else {
                    (&mut plus.beta[i], &mut minus.beta[i], grad.beta[i])
                };
                *p += h;
                *m -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!((numeric - a).abs() < 1e-6 * (1.0 + a.abs()), "{i}/{which}: {numeric} vs {a}");
            }
        }
    }
}
