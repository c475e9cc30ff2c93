//! Feature extraction.
//!
//! The encoder maps a 4 s segment to a *long feature* `L × T′ × F`: layer 0
//! is a log-mel spectrogram (25 ms Hann window, 20 ms hop), deeper layers
//! apply `tanh(A_l ·)` framewise with fixed orthogonal `A_l`. Two reductions
//! follow:
//!
//! * [`time_speedup`] averages consecutive blocks of `τ` frames, giving a
//!   *short feature* `L × ⌈T′/τ⌉ × F` that is cheap to cache and feed to
//!   the classifier.
//! * [`temporal_embed`] averages over all frames, giving the `L × F`
//!   retrieval key.
//!
//! An `external` encoder kind skips computation and loads precomputed long
//! features (e.g. dumps of a self-supervised speech model) from RADF files.

mod cache;
mod cascade;
mod mel;
pub mod radf;

pub use cache::{extract_and_cache, CacheEntry, CacheIndex, ExtractReport};
pub use cascade::{Cascade, CascadeOutput, LayerAffine};
pub use mel::{frame_count, mel_filterbank, MelFrontend, FFT_LEN, HOP, LOG_FLOOR, WINDOW};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::corpus::{AudioSegment, SEGMENT_LEN};
use crate::error::{Error, Result};
use radf::{RadfKind, RadfTensor};

/// Frames in the long feature of one segment.
pub const SEGMENT_FRAMES: usize = (SEGMENT_LEN - WINDOW) / HOP + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LongFeature {
    pub layers: usize,
    pub frames: usize,
    pub dim: usize,
    /// Layer-major `(l, t, f)`.
    pub values: Vec<f32>,
    pub segment_ref: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortFeature {
    pub layers: usize,
    pub frames: usize,
    pub dim: usize,
    pub values: Vec<f32>,
    /// Speedup factor, when known (RADF files do not record it).
    pub tau: Option<usize>,
    pub segment_ref: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerEmbedding {
    pub layers: usize,
    pub dim: usize,
    pub values: Vec<f32>,
    pub segment_ref: String,
}

impl LongFeature {
    pub fn new(layers: usize, frames: usize, dim: usize, values: Vec<f32>, segment_ref: impl Into<String>) -> Result<Self> {
        check_values(layers * frames * dim, &values)?;
        Ok(Self {
            layers,
            frames,
            dim,
            values,
            segment_ref: segment_ref.into(),
        })
    }

    pub fn layer(&self, l: usize) -> &[f32] {
        let stride = self.frames * self.dim;
        &self.values[l * stride..(l + 1) * stride]
    }

    pub fn to_radf(&self) -> RadfTensor {
        RadfTensor {
            kind: RadfKind::Long,
            dims: [self.layers, self.frames, self.dim],
            data: self.values.clone(),
        }
    }
}

impl ShortFeature {
    pub fn layer(&self, l: usize) -> &[f32] {
        let stride = self.frames * self.dim;
        &self.values[l * stride..(l + 1) * stride]
    }

    pub fn to_radf(&self) -> RadfTensor {
        RadfTensor {
            kind: RadfKind::Short,
            dims: [self.layers, self.frames, self.dim],
            data: self.values.clone(),
        }
    }
}

impl LayerEmbedding {
    pub fn row(&self, l: usize) -> &[f32] {
        &self.values[l * self.dim..(l + 1) * self.dim]
    }

    pub fn to_radf(&self) -> RadfTensor {
        RadfTensor {
            kind: RadfKind::Embedding,
            dims: [self.layers, 1, self.dim],
            data: self.values.clone(),
        }
    }
}

fn check_values(expected: usize, values: &[f32]) -> Result<()> {
    if values.len() != expected {
        return Err(Error::InvalidInput(format!(
            "expected {expected} values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    Ok(())
}

/// Any feature file the cache can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Feature {
    Long(LongFeature),
    Short(ShortFeature),
    Embedding(LayerEmbedding),
}

/// Read and validate a RADF feature file (magic, version, shape, checksum).
pub fn load_feature(path: &Path) -> Result<Feature> {
    let t = RadfTensor::read(path)?;
    let segment_ref = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let [l, t_, f] = t.dims;
    let bad = |msg: &str| Error::Format {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    if t.data.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value"));
    }
    Ok(match t.kind {
        RadfKind::Long => Feature::Long(LongFeature {
            layers: l,
            frames: t_,
            dim: f,
            values: t.data,
            segment_ref,
        }),
        RadfKind::Short => Feature::Short(ShortFeature {
            layers: l,
            frames: t_,
            dim: f,
            values: t.data,
            tau: None,
            segment_ref,
        }),
        RadfKind::Embedding => {
            if t_ != 1 {
                return Err(bad("embedding must have T = 1"));
            }
            Feature::Embedding(LayerEmbedding {
                layers: l,
                dim: f,
                values: t.data,
                segment_ref,
            })
        }
        other => return Err(bad(&format!("{other:?} is not a feature kind"))),
    })
}

/// Per-layer mean over frames: the retrieval key.
pub fn temporal_embed(long: &LongFeature) -> Result<LayerEmbedding> {
    if long.frames == 0 {
        return Err(Error::InvalidInput("long feature has no frames".into()));
    }
    let mut values = Vec::with_capacity(long.layers * long.dim);
    for l in 0..long.layers {
        let layer = long.layer(l);
        for f in 0..long.dim {
            let sum: f64 = (0..long.frames).map(|t| layer[t * long.dim + f] as f64).sum();
            values.push((sum / long.frames as f64) as f32);
        }
    }
    Ok(LayerEmbedding {
        layers: long.layers,
        dim: long.dim,
        values,
        segment_ref: long.segment_ref.clone(),
    })
}

/// Number of output frames of the speedup operator.
pub fn short_frames(frames: usize, tau: usize) -> usize {
    frames.div_ceil(tau)
}

/// Block means over the frame axis of a layer-major `L × T′ × F` array.
/// The last block may be shorter and is averaged over its own length.
pub fn speedup_values<T: Copy + Into<f64>>(
    values: &[T],
    layers: usize,
    frames: usize,
    dim: usize,
    tau: usize,
) -> Vec<f64> {
    let out_frames = short_frames(frames, tau);
    let mut out = vec![0.0; layers * out_frames * dim];
    for l in 0..layers {
        for j in 0..out_frames {
            let start = j * tau;
            let end = (start + tau).min(frames);
            let dst = &mut out[(l * out_frames + j) * dim..(l * out_frames + j + 1) * dim];
            for t in start..end {
                let src = &values[(l * frames + t) * dim..(l * frames + t + 1) * dim];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s.into();
                }
            }
            let n = (end - start) as f64;
            dst.iter_mut().for_each(|d| *d /= n);
        }
    }
    out
}

/// Reverse of [`speedup_values`]: spread each output gradient evenly over its block.
pub fn speedup_backward(grad: &[f64], layers: usize, frames: usize, dim: usize, tau: usize) -> Vec<f64> {
    let out_frames = short_frames(frames, tau);
    let mut g = vec![0.0; layers * frames * dim];
    for l in 0..layers {
        for t in 0..frames {
            let j = t / tau;
            let n = ((j * tau + tau).min(frames) - j * tau) as f64;
            let src = &grad[(l * out_frames + j) * dim..(l * out_frames + j + 1) * dim];
            let dst = &mut g[(l * frames + t) * dim..(l * frames + t + 1) * dim];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s / n;
            }
        }
    }
    g
}

/// The time-wise speedup operator.
pub fn time_speedup(long: &LongFeature, tau: usize) -> Result<ShortFeature> {
    if tau < 1 {
        return Err(Error::Config("speedup factor must be at least 1".into()));
    }
    let values = speedup_values(&long.values, long.layers, long.frames, long.dim, tau);
    Ok(ShortFeature {
        layers: long.layers,
        frames: short_frames(long.frames, tau),
        dim: long.dim,
        values: values.into_iter().map(|v| v as f32).collect(),
        tau: Some(tau),
        segment_ref: long.segment_ref.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Pseudo,
    PseudoTrainable,
    External,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Pseudo => "pseudo",
            EncoderKind::PseudoTrainable => "pseudo_trainable",
            EncoderKind::External => "external",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pseudo" => Ok(EncoderKind::Pseudo),
            "pseudo_trainable" => Ok(EncoderKind::PseudoTrainable),
            "external" => Ok(EncoderKind::External),
            _ => Err(Error::Config(format!("unknown encoder kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub layers: usize,
    pub dim: usize,
    pub seed: u64,
    /// Fine-tuned scale/bias; `None` means identity.
    pub trainable: Option<LayerAffine>,
    /// Directory of `<utt_id>.radf` long features for the external kind.
    pub external_dir: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Pseudo,
            layers: 5,
            dim: 32,
            seed: 0,
            trainable: None,
            external_dir: None,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::Config(format!("encoder needs L >= 2, got {}", self.layers)));
        }
        if self.dim < 8 {
            return Err(Error::Config(format!("encoder needs F >= 8, got {}", self.dim)));
        }
        if let Some(a) = &self.trainable {
            if self.kind != EncoderKind::PseudoTrainable {
                return Err(Error::Config("trainable parameters need the pseudo_trainable kind".into()));
            }
            if a.layers != self.layers || a.dim != self.dim {
                return Err(Error::Config("trainable parameter shape does not match L x F".into()));
            }
        }
        if self.kind == EncoderKind::External && self.external_dir.is_none() {
            return Err(Error::Config("external encoder needs a feature directory".into()));
        }
        Ok(())
    }

    /// Short hash identifying everything that changes the encoder's output.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}|{}|{}|{}|", self.kind, self.layers, self.dim, self.seed));
        if let Some(a) = &self.trainable {
            for v in a.gamma.iter().chain(&a.beta) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        if let Some(dir) = &self.external_dir {
            h.update(dir.display().to_string());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug)]
pub struct Encoder {
    cfg: EncoderConfig,
    mel: MelFrontend,
    cascade: Cascade,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            mel: MelFrontend::new(cfg.dim),
            cascade: Cascade::new(cfg.layers, cfg.dim, cfg.seed),
            cfg,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn cascade(&self) -> &Cascade {
        &self.cascade
    }

    /// Layer-0 input: frame-major log-mel energies.
    pub fn layer0(&self, segment: &AudioSegment) -> Vec<f64> {
        self.mel.compute(segment.samples())
    }

    pub fn encode_long(&self, segment: &AudioSegment) -> Result<LongFeature> {
        if self.cfg.kind == EncoderKind::External {
            return self.load_external(&segment.utt_id);
        }
        let mel = self.layer0(segment);
        let frames = frame_count(segment.samples().len());
        let affine = match self.cfg.kind {
            EncoderKind::PseudoTrainable => self.cfg.trainable.as_ref(),
            _ => None,
        };
        let out = self.cascade.forward(&mel, frames, affine);
        LongFeature::new(
            self.cfg.layers,
            frames,
            self.cfg.dim,
            out.values.into_iter().map(|v| v as f32).collect(),
            segment.utt_id.clone(),
        )
    }

    fn load_external(&self, utt_id: &str) -> Result<LongFeature> {
        let dir = self.cfg.external_dir.as_ref().expect("validated");
        let path = dir.join(format!("{utt_id}.radf"));
        let long = match load_feature(&path) {
            Ok(Feature::Long(f)) => f,
            Ok(_) => return Err(Error::FeatureLoad(format!("{}: not a long feature", path.display()))),
            Err(e) => return Err(Error::FeatureLoad(format!("{}: {e}", path.display()))),
        };
        if long.layers != self.cfg.layers || long.dim != self.cfg.dim || long.frames != SEGMENT_FRAMES {
            return Err(Error::FeatureLoad(format!(
                "{}: shape {}x{}x{} does not match {}x{}x{}",
                path.display(),
                long.layers,
                long.frames,
                long.dim,
                self.cfg.layers,
                SEGMENT_FRAMES,
                self.cfg.dim
            )));
        }
        Ok(LongFeature {
            segment_ref: utt_id.to_string(),
            ..long
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{segment_clip, AudioClip, Label};

    fn long_from(layers: usize, frames: usize, dim: usize, values: Vec<f32>) -> LongFeature {
        LongFeature::new(layers, frames, dim, values, "x").unwrap()
    }

    fn segment(samples: Vec<f32>) -> AudioSegment {
        segment_clip(&AudioClip::new("u", "s", Label::Bonafide, None, samples).unwrap()).unwrap()
    }

    #[test]
    fn embedding_is_the_frame_mean() {
        let long = long_from(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(temporal_embed(&long).unwrap().values, vec![2.0, 3.0]);
        let constant = long_from(2, 5, 3, vec![1.25; 30]);
        assert_eq!(temporal_embed(&constant).unwrap().values, vec![1.25; 6]);
    }

    #[test]
    fn speedup_block_means() {
        let long = long_from(1, 4, 1, vec![1.0, 3.0, 5.0, 7.0]);
        let short = time_speedup(&long, 2).unwrap();
        assert_eq!(short.values, vec![2.0, 6.0]);
        assert_eq!(short.tau, Some(2));
    }

    #[test]
    fn speedup_ragged_final_block() {
        let long = long_from(1, 7, 1, (0..7).map(|v| v as f32).collect());
        let short = time_speedup(&long, 3).unwrap();
        assert_eq!(short.frames, 3);
        assert_eq!(short.values, vec![1.0, 4.0, 6.0]);
    }

    #[test]
    fn speedup_tau_one_is_identity_and_tau_zero_is_rejected() {
        let long = long_from(2, 3, 2, (0..12).map(|v| v as f32 * 0.3).collect());
        assert_eq!(time_speedup(&long, 1).unwrap().values, long.values);
        assert!(matches!(time_speedup(&long, 0), Err(Error::Config(_))));
    }

    #[test]
    fn speedup_of_a_segment_at_tau_10_has_20_frames() {
        assert_eq!(short_frames(SEGMENT_FRAMES, 10), 20);
        assert_eq!(SEGMENT_FRAMES, 199);
    }

    #[test]
    fn speedup_backward_is_the_adjoint() {
        let (l, t, f, tau) = (2, 7, 3, 3);
        let x: Vec<f64> = (0..l * t * f).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..l * short_frames(t, tau) * f).map(|i| (i as f64 * 0.91).cos()).collect();
        let sx = speedup_values(&x, l, t, f, tau);
        let sty = speedup_backward(&y, l, t, f, tau);
        let lhs: f64 = sx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&sty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn encode_long_shape_and_determinism() {
        let samples: Vec<f32> = (0..64_000).map(|i| ((i as f32) * 0.05).sin() * 0.3).collect();
        let seg = segment(samples);
        let enc = Encoder::new(EncoderConfig { seed: 4, ..Default::default() }).unwrap();
        let a = enc.encode_long(&seg).unwrap();
        assert_eq!((a.layers, a.frames, a.dim), (5, 199, 32));
        assert_eq!(a, enc.encode_long(&seg).unwrap());
    }

    #[test]
    fn silent_segment_gives_constant_layers() {
        let seg = segment(vec![0.0; 64_000]);
        let enc = Encoder::new(EncoderConfig { layers: 3, dim: 8, ..Default::default() }).unwrap();
        let long = enc.encode_long(&seg).unwrap();
        assert!(long.layer(0).iter().all(|&v| v == (LOG_FLOOR.ln() as f32)));
        for l in 1..3 {
            let first = &long.layer(l)[..8];
            for frame in long.layer(l).chunks(8) {
                assert_eq!(frame, first);
            }
        }
    }

    #[test]
    fn trainable_identity_matches_pseudo() {
        let samples: Vec<f32> = (0..30_000).map(|i| ((i as f32) * 0.013).sin() * 0.5).collect();
        let seg = segment(samples);
        let base = EncoderConfig { seed: 2, ..Default::default() };
        let pseudo = Encoder::new(base.clone()).unwrap().encode_long(&seg).unwrap();
        let trainable = Encoder::new(EncoderConfig {
            kind: EncoderKind::PseudoTrainable,
            trainable: Some(LayerAffine::identity(5, 32)),
            ..base
        })
        .unwrap()
        .encode_long(&seg)
        .unwrap();
        assert_eq!(pseudo.values, trainable.values);
    }

    #[test]
    fn config_bounds() {
        let bad_l = EncoderConfig { layers: 1, ..Default::default() };
        assert!(Encoder::new(bad_l).is_err());
        let bad_f = EncoderConfig { dim: 4, ..Default::default() };
        assert!(Encoder::new(bad_f).is_err());
        let ext = EncoderConfig { kind: EncoderKind::External, ..Default::default() };
        assert!(Encoder::new(ext).is_err());
    }

    #[test]
    fn fingerprint_tracks_seed_and_tuning() {
        let a = EncoderConfig::default();
        let b = EncoderConfig { seed: 1, ..Default::default() };
        assert_ne!(a.fingerprint(), b.fingerprint());
        let mut tuned = LayerAffine::identity(5, 32);
        let c = EncoderConfig {
            kind: EncoderKind::PseudoTrainable,
            trainable: Some(tuned.clone()),
            ..Default::default()
        };
        tuned.beta[3] = 0.5;
        let d = EncoderConfig { trainable: Some(tuned), ..c.clone() };
        assert_ne!(c.fingerprint(), d.fingerprint());
        assert_eq!(a.fingerprint(), EncoderConfig::default().fingerprint());
    }

    #[test]
    fn external_features_load_and_shape_check() {
        let dir = tempfile::tempdir().unwrap();
        let good = LongFeature::new(3, SEGMENT_FRAMES, 8, vec![0.5; 3 * SEGMENT_FRAMES * 8], "a").unwrap();
        good.to_radf().write(&dir.path().join("a.radf")).unwrap();
        let bad = LongFeature::new(3, 10, 8, vec![0.5; 3 * 10 * 8], "b").unwrap();
        bad.to_radf().write(&dir.path().join("b.radf")).unwrap();
        let enc = Encoder::new(EncoderConfig {
            kind: EncoderKind::External,
            layers: 3,
            dim: 8,
            external_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        })
        .unwrap();
        let mk = |id: &str| {
            segment_clip(&AudioClip::new(id, "s", Label::Bonafide, None, vec![0.0; 10]).unwrap()).unwrap()
        };
        assert_eq!(enc.encode_long(&mk("a")).unwrap().values, good.values);
        assert!(matches!(enc.encode_long(&mk("b")), Err(Error::FeatureLoad(_))));
        assert!(matches!(enc.encode_long(&mk("c")), Err(Error::FeatureLoad(_))));
    }

    #[test]
    fn feature_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let long = long_from(2, 6, 3, (0..36).map(|v| v as f32 / 7.0).collect());
        let short = time_speedup(&long, 4).unwrap();
        let path = dir.path().join("u1.radf");
        short.to_radf().write(&path).unwrap();
        match load_feature(&path).unwrap() {
            Feature::Short(s) => {
                assert_eq!(s.values, short.values);
                assert_eq!((s.layers, s.frames, s.dim), (2, 2, 3));
                assert_eq!(s.segment_ref, "u1");
            }
            other => panic!("{other:?}"),
        }
        let emb = temporal_embed(&long).unwrap();
        emb.to_radf().write(&path).unwrap();
        assert!(matches!(load_feature(&path).unwrap(), Feature::Embedding(e) if e.values == emb.values));
    }
}
