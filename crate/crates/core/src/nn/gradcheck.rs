//! Central-difference verification of reverse passes.

use rand::Rng;

use super::{softmax_xent, Affine, AspParams, Tensor};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Max over coordinates of `|a − n| / max(1, |a|, |n|)`.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub probes: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compare `analytic` with central differences of the scalar `loss` at `x`, every coordinate.
pub fn grad_check(loss: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], step: f64) -> Result<GradCheckReport> {
    if analytic.len() != x.len() {
        return Err(Error::GradCheck(format!(
            "{} analytic components for {} inputs",
            analytic.len(),
            x.len()
        )));
    }
    let mut probe = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        probes: x.len(),
    };
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = loss(&probe);
        probe[i] = x[i] - step;
        let minus = loss(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() || !analytic[i].is_finite() {
            return Err(Error::GradCheck(format!("non-finite value at coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Check a vector-valued op through a random cotangent `u`:
/// the loss is `u · forward(x)` and its gradient is `reverse(x, u)`.
pub fn probe_op(
    forward: impl Fn(&[f64]) -> Result<Vec<f64>>,
    reverse: impl Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
    x: &[f64],
    cotangent_seed: u64,
    step: f64,
) -> Result<GradCheckReport> {
    let y = forward(x)?;
    let mut rng = seed::rng(cotangent_seed, &[0xc07]);
    let u: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let analytic = reverse(x, &u)?;
    let loss = |p: &[f64]| match forward(p) {
        Ok(out) => out.iter().zip(&u).map(|(a, b)| a * b).sum(),
        Err(_) => f64::NAN,
    };
    grad_check(loss, x, &analytic, step)
}

fn random(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Affine map `4×8 → 4×3`, inputs and parameters perturbed together.
pub fn check_affine(seed: u64, step: f64) -> Result<GradCheckReport> {
    let mut rng = seed::rng(seed, &[0xaff]);
    let (rows, din, dout) = (4, 8, 3);
    let mut proto = Affine::init(din, dout, &mut rng);
    proto.b = Tensor::from_vec(&[dout], random(dout, &mut rng))?;
    let nx = rows * din;
    let mut x = random(nx, &mut rng);
    x.extend(proto.flatten_params());
    let split = |flat: &[f64]| {
        let mut a = proto.clone();
        a.load_params(&flat[nx..]);
        (flat[..nx].to_vec(), a)
    };
    probe_op(
        |flat| {
            let (inp, a) = split(flat);
            a.forward(&inp)
        },
        |flat, u| {
            let (inp, a) = split(flat);
            let mut g = a.clone();
            g.w.fill(0.0);
            g.b.fill(0.0);
            let mut out = a.backward(&inp, u, &mut g);
            out.extend(g.flatten_params());
            Ok(out)
        },
        &x,
        seed,
        step,
    )
}

/// Attentive pooling of a random `5×8` input.
pub fn check_asp(seed: u64, step: f64) -> Result<GradCheckReport> {
    let mut rng = seed::rng(seed, &[0xa5b]);
    let (n, d) = (5, 8);
    let mut proto = AspParams::init(d, &mut rng);
    proto.b1 = Tensor::from_vec(&[d / 2], random(d / 2, &mut rng))?;
    proto.b2 = Tensor::scalar(rng.gen_range(-1.0..1.0));
    let nx = n * d;
    let mut x: Vec<f64> = random(nx, &mut rng).iter().map(|v| v * 2.0).collect();
    x.extend(proto.flatten_params());
    let split = |flat: &[f64]| {
        let mut p = proto.clone();
        p.load_params(&flat[nx..]);
        (flat[..nx].to_vec(), p)
    };
    probe_op(
        |flat| {
            let (h, p) = split(flat);
            Ok(p.forward(&h, n)?.0)
        },
        |flat, u| {
            let (h, p) = split(flat);
            let (_, cache) = p.forward(&h, n)?;
            let mut g = p.zeroed();
            let mut out = p.backward(&cache, u, &mut g);
            out.extend(g.flatten_params());
            Ok(out)
        },
        &x,
        seed,
        step,
    )
}

/// Cross-entropy of random `6×2` logits.
pub fn check_softmax_xent(seed: u64, step: f64) -> Result<GradCheckReport> {
    let mut rng = seed::rng(seed, &[0x5e7]);
    let logits: Vec<f64> = random(12, &mut rng).iter().map(|v| v * 3.0).collect();
    let labels: Vec<usize> = (0..6).map(|_| rng.gen_range(0..2)).collect();
    let (_, grad) = softmax_xent(&logits, 2, &labels)?;
    grad_check(
        |z| softmax_xent(z, 2, &labels).map(|(l, _)| l).unwrap_or(f64::NAN),
        &logits,
        &grad,
        step,
    )
}

// flat views used by the checks above
impl Affine {
    fn flatten_params(&self) -> Vec<f64> {
        self.w.data().iter().chain(self.b.data()).copied().collect()
    }

    fn load_params(&mut self, flat: &[f64]) {
        let nw = self.w.len();
        self.w.data_mut().copy_from_slice(&flat[..nw]);
        self.b.data_mut().copy_from_slice(&flat[nw..]);
    }
}

impl AspParams {
    pub(crate) fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn flatten_params(&self) -> Vec<f64> {
        self.named("")
            .iter()
            .flat_map(|(_, t)| t.data().iter().copied())
            .collect()
    }

    fn load_params(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_pass_for_ten_seeds() {
        for seed in 0..10 {
            let a = check_affine(seed, 1e-5).unwrap();
            assert!(a.passes(1e-6), "affine seed {seed}: {a:?}");
            let s = check_asp(seed, 1e-5).unwrap();
            assert!(s.passes(1e-5), "asp seed {seed}: {s:?}");
            let x = check_softmax_xent(seed, 1e-5).unwrap();
            assert!(x.passes(1e-6), "xent seed {seed}: {x:?}");
        }
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let x = [0.3, -1.2, 2.0];
        let loss = |p: &[f64]| p[0] * p[0] * 3.0 + p[1] * p[2] * 2.0 + p[2].powi(3);
        let mut grad = vec![6.0 * x[0], 2.0 * x[2], 2.0 * x[1] + 3.0 * x[2] * x[2]];
        let clean = grad_check(loss, &x, &grad, 1e-5).unwrap();
        assert!(clean.passes(1e-6));
        let worst = (0..3).max_by(|&a, &b| grad[a].abs().total_cmp(&grad[b].abs())).unwrap();
        grad[worst] *= 1.1;
        let bad = grad_check(loss, &x, &grad, 1e-5).unwrap();
        assert!(bad.max_rel_error > 1e-2);
        assert_eq!(bad.worst_index, worst);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let err = grad_check(|p| (p[0]).ln(), &[0.0], &[1.0], 1e-5).unwrap_err();
        assert!(matches!(err, Error::GradCheck(msg) if msg.contains("coordinate 0")));
    }
}
