//! End-to-end gradient checks of the composed models.

use rand::Rng;

use super::baseline::{BaselineContext, BaselineParams};
use super::mfa::MfaParams;
use super::rad::RadMfaParams;
use crate::encoder::Cascade;
use crate::error::Result;
use crate::nn::{probe_op, GradCheckReport, Parameters, Tensor};
use crate::seed;

fn random(n: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Give every zero-initialized bias a random value so its gradient is exercised off the origin.
fn jitter<P: Parameters>(p: &mut P, rng: &mut impl Rng) {
    for t in p.tensors_mut() {
        if t.data().iter().all(|&v| v == 0.0) {
            let n = t.len();
            *t = Tensor::from_vec(t.shape(), random(n, 0.5, rng)).unwrap();
        }
    }
}

/// Batch of two `3 × 5 × 8` features; inputs and parameters perturbed together.
pub fn check_mfa(seed: u64, step: f64) -> Result<GradCheckReport> {
    let mut rng = seed::rng(seed, &[0x3fa]);
    let (b, l, t, f) = (2, 3, 5, 8);
    let mut proto = MfaParams::init(l, f, &mut rng);
    jitter(&mut proto, &mut rng);
    let nx = b * l * t * f;
    let mut x = random(nx, 1.5, &mut rng);
    x.extend(proto.flatten());
    let split = |flat: &[f64]| {
        let mut p = proto.clone();
        p.unflatten(&flat[nx..]);
        (flat[..nx].to_vec(), p)
    };
    probe_op(
        |flat| {
            let (y, p) = split(flat);
            p.forward(&y, b)
        },
        |flat, u| {
            let (y, p) = split(flat);
            let mut grads = p.zeros_like();
            let per = nx / b;
            let mut out = Vec::with_capacity(flat.len());
            for (i, item) in y.chunks(per).enumerate() {
                let (_, cache) = p.forward_one(item)?;
                let g_r = &u[i * p.out_dim()..(i + 1) * p.out_dim()];
                out.extend(p.backward_one(&cache, g_r, &mut grads));
            }
            out.extend(grads.flatten());
            Ok(out)
        },
        &x,
        seed,
        step,
    )
}

/// Query, three references and parameters at `L=3, T=4, F=8`.
pub fn check_radmfa(seed: u64, step: f64, with_query: bool) -> Result<GradCheckReport> {
    let mut rng = seed::rng(seed, &[0x4ad, with_query as u64]);
    let (k, l, t, f) = (3, 3, 4, 8);
    let mut proto = RadMfaParams::init(l, f, with_query, &mut rng);
    jitter(&mut proto, &mut rng);
    let n = l * t * f;
    let nx = (k + 1) * n;
    let mut x = random(nx, 1.5, &mut rng);
    x.extend(proto.flatten());
    let split = |flat: &[f64]| {
        let mut p = proto.clone();
        p.unflatten(&flat[nx..]);
        (flat[..n].to_vec(), flat[n..nx].to_vec(), p)
    };
    probe_op(
        |flat| {
            let (q, r, p) = split(flat);
            Ok(p.logits(&q, &r, k)?.to_vec())
        },
        |flat, u| {
            let (q, r, p) = split(flat);
            let (_, cache) = p.forward(&q, &r, k)?;
            let mut grads = p.zeros_like();
            let (mut out, g_refs) = p.backward(&cache, &[u[0], u[1]], &mut grads);
            out.extend(g_refs);
            out.extend(grads.flatten());
            Ok(out)
        },
        &x,
        seed,
        step,
    )
}

/// Baseline parameters including the encoder scale and shift, `L=3, T′=9, F=8, τ=4`.
pub fn check_baseline(seed: u64, step: f64) -> Result<GradCheckReport> {
    let mut rng = seed::rng(seed, &[0xba5]);
    let (l, frames, f) = (3, 9, 8);
    let mut proto = BaselineParams::init(l, f, &mut rng);
    jitter(&mut proto, &mut rng);
    proto.gamma = Tensor::from_vec(&[l, f], random(l * f, 1.0, &mut rng).iter().map(|v| 1.0 + 0.5 * v).collect())?;
    let ctx = BaselineContext {
        cascade: Cascade::new(l, f, seed),
        tau: 4,
    };
    let mel = random(frames * f, 2.0, &mut rng);
    let x = proto.flatten();
    let load = |flat: &[f64]| {
        let mut p = proto.clone();
        p.unflatten(flat);
        p
    };
    probe_op(
        |flat| Ok(load(flat).forward(&ctx, &mel)?.0.to_vec()),
        |flat, u| {
            let p = load(flat);
            let (_, cache) = p.forward(&ctx, &mel)?;
            let mut grads = p.zeros_like();
            p.backward(&ctx, &cache, &[u[0], u[1]], &mut grads);
            Ok(grads.flatten())
        },
        &x,
        seed,
        step,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composed_models_pass() {
        for s in 0..3 {
            let r = check_mfa(s, 1e-5).unwrap();
            assert!(r.passes(1e-4), "mfa seed {s}: {r:?}");
            for wq in [true, false] {
                let r = check_radmfa(s, 1e-5, wq).unwrap();
                assert!(r.passes(1e-4), "radmfa seed {s} {wq}: {r:?}");
            }
            let r = check_baseline(s, 1e-5).unwrap();
            assert!(r.passes(1e-4), "baseline seed {s}: {r:?}");
        }
    }
}
