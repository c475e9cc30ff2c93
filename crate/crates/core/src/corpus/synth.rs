//! Seeded synthetic corpus: per-speaker harmonic voices for bonafide speech,
//! the same voices passed through synthesis artifacts for spoofs.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{
    write_manifest, write_wav, AudioClip, Label, ManifestRecord, Split, SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::seed;

const SR: f64 = SAMPLE_RATE as f64;
/// 10 ms at 16 kHz.
const PHASE_RESET_PERIOD: usize = 160;
const STFT_LEN: usize = 512;
const STFT_HOP: usize = 256;

// stream tags for seed derivation
const TAG_PLAN: u64 = 1;
const TAG_SPEAKER_ORDER: u64 = 2;
const TAG_SPEAKER: u64 = 3;
const TAG_CLIP: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpoofMethod {
    /// Oscillator phase forced to zero every 10 ms (vocoder buzz).
    PhaseReset,
    /// Moving average over the magnitude spectrum (over-smoothed envelope).
    EnvelopeSmoothing,
    /// 256-level amplitude quantization.
    Quantize8,
}

impl SpoofMethod {
    pub const ALL: [SpoofMethod; 3] = [
        SpoofMethod::PhaseReset,
        SpoofMethod::EnvelopeSmoothing,
        SpoofMethod::Quantize8,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpoofMethod::PhaseReset => "phase_reset",
            SpoofMethod::EnvelopeSmoothing => "envelope_smoothing",
            SpoofMethod::Quantize8 => "quantize8",
        }
    }
}

impl FromStr for SpoofMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SpoofMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown spoof method `{s}`")))
    }
}

/// A run of consecutive clips assigned to one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBlock {
    pub split: Split,
    pub count: usize,
    /// Blocks such as `retrieval_extra` hold bonafide speech only.
    pub bonafide_only: bool,
}

/// Signal-level knobs of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub min_duration: f64,
    pub max_duration: f64,
    /// Range of per-speaker channel noise floors, in dB re full scale.
    pub noise_db_range: (f64, f64),
    /// Half width, in bins of a 512-point spectrum, of the envelope smoother.
    pub smoothing_half_width: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            min_duration: 1.5,
            max_duration: 6.0,
            noise_db_range: (-68.0, -46.0),
            smoothing_half_width: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub n_speakers: usize,
    pub blocks: Vec<SplitBlock>,
    pub spoof_fraction: f64,
    pub spoof_methods: Vec<String>,
    pub seed: u64,
    pub params: SynthParams,
}

impl CorpusConfig {
    /// `n_speakers * clips_per_speaker` clips, all in the train split.
    pub fn new(n_speakers: usize, clips_per_speaker: usize, spoof_fraction: f64, seed: u64) -> Self {
        Self {
            n_speakers,
            blocks: vec![SplitBlock {
                split: Split::Train,
                count: n_speakers * clips_per_speaker,
                bonafide_only: false,
            }],
            spoof_fraction,
            spoof_methods: SpoofMethod::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            seed,
            params: SynthParams::default(),
        }
    }

    /// Train/dev/eval clips with `spoof_fraction` spoofs each, plus
    /// `retrieval_extra` additional bonafide clips.
    pub fn with_splits(
        n_speakers: usize,
        train: usize,
        dev: usize,
        eval: usize,
        retrieval_extra: usize,
        spoof_fraction: f64,
        seed: u64,
    ) -> Self {
        let block = |split, count, bonafide_only| SplitBlock {
            split,
            count,
            bonafide_only,
        };
        Self {
            blocks: vec![
                block(Split::Train, train, false),
                block(Split::Dev, dev, false),
                block(Split::Eval, eval, false),
                block(Split::RetrievalExtra, retrieval_extra, true),
            ],
            ..Self::new(n_speakers, 0, spoof_fraction, seed)
        }
    }

    pub fn total_clips(&self) -> usize {
        self.blocks.iter().map(|b| b.count).sum()
    }

    fn validate(&self) -> Result<Vec<SpoofMethod>> {
        if self.n_speakers < 2 {
            return Err(Error::Config(format!(
                "need at least 2 speakers, got {}",
                self.n_speakers
            )));
        }
        if !(0.0..=1.0).contains(&self.spoof_fraction) {
            return Err(Error::Config(format!(
                "spoof_fraction {} outside [0, 1]",
                self.spoof_fraction
            )));
        }
        let p = &self.params;
        if !(p.min_duration > 0.0 && p.max_duration >= p.min_duration) {
            return Err(Error::Config("invalid clip duration range".into()));
        }
        let methods = self
            .spoof_methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<SpoofMethod>>>()?;
        if methods.is_empty() && self.spoof_fraction > 0.0 {
            return Err(Error::Config("spoofs requested but no spoof methods configured".into()));
        }
        Ok(methods)
    }
}

/// Generated clips and their manifest records (audio paths relative to the corpus directory).
#[derive(Debug, Clone)]
pub struct Corpus {
    pub clips: Vec<AudioClip>,
    pub records: Vec<ManifestRecord>,
}

#[derive(Debug, Clone)]
struct SpeakerProfile {
    f0: f64,
    formants: [f64; 3],
    bandwidths: [f64; 3],
    tilt: f64,
    noise_db: f64,
    breathiness: f64,
}

impl SpeakerProfile {
    fn draw(cfg: &CorpusConfig, speaker_id: &str, stratum: usize) -> Self {
        let mut rng = seed::rng(cfg.seed, &[TAG_SPEAKER, seed::hash_str(speaker_id)]);
        // F0 bands are stratified so that speakers stay well separated.
        let (lo, hi) = (85f64.ln(), 260f64.ln());
        let u: f64 = rng.gen_range(0.15..0.85);
        let f0 = (lo + (hi - lo) * (stratum as f64 + u) / cfg.n_speakers as f64).exp();
        let formants = [
            rng.gen_range(320.0..850.0),
            rng.gen_range(950.0..2300.0),
            rng.gen_range(2400.0..3600.0),
        ];
        let bandwidths = [
            rng.gen_range(60.0..120.0),
            rng.gen_range(80.0..160.0),
            rng.gen_range(120.0..250.0),
        ];
        let (nlo, nhi) = cfg.params.noise_db_range;
        Self {
            f0,
            formants,
            bandwidths,
            tilt: rng.gen_range(0.1..0.7),
            noise_db: rng.gen_range(nlo..=nhi),
            breathiness: rng.gen_range(0.02..0.15),
        }
    }
}

#[derive(Debug, Clone)]
struct ClipPlan {
    utt_id: String,
    speaker: usize,
    split: Split,
    spoof: Option<SpoofMethod>,
}

fn plan(cfg: &CorpusConfig, methods: &[SpoofMethod]) -> Vec<ClipPlan> {
    let mut plans = Vec::with_capacity(cfg.total_clips());
    let mut counter = 0usize;
    for (b, block) in cfg.blocks.iter().enumerate() {
        let mut rng = seed::rng(cfg.seed, &[TAG_PLAN, b as u64]);
        let n_spoof = if block.bonafide_only {
            0
        } else {
            (cfg.spoof_fraction * block.count as f64).round() as usize
        };
        let mut order: Vec<usize> = (0..block.count).collect();
        order.shuffle(&mut rng);
        let mut is_spoof = vec![false; block.count];
        for &i in &order[..n_spoof] {
            is_spoof[i] = true;
        }
        for spoofed in is_spoof {
            let spoof = spoofed.then(|| *methods.choose(&mut rng).expect("validated non-empty"));
            plans.push(ClipPlan {
                utt_id: format!("utt{counter:05}"),
                speaker: counter % cfg.n_speakers,
                split: block.split,
                spoof,
            });
            counter += 1;
        }
    }
    plans
}

pub fn speaker_name(index: usize) -> String {
    format!("spk{index:02}")
}

/// Generate the corpus. Output is a pure function of `cfg`.
pub fn synthesize_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    let methods = cfg.validate()?;

    let mut order: Vec<usize> = (0..cfg.n_speakers).collect();
    order.shuffle(&mut seed::rng(cfg.seed, &[TAG_SPEAKER_ORDER]));
    let profiles: Vec<SpeakerProfile> = (0..cfg.n_speakers)
        .map(|i| SpeakerProfile::draw(cfg, &speaker_name(i), order[i]))
        .collect();

    let plans = plan(cfg, &methods);
    let clips: Vec<AudioClip> = plans
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = seed::rng(cfg.seed, &[TAG_CLIP, i as u64]);
            let samples = render_clip(&profiles[p.speaker], &cfg.params, p.spoof, &mut rng);
            AudioClip {
                utt_id: p.utt_id.clone(),
                speaker_id: speaker_name(p.speaker),
                label: if p.spoof.is_some() { Label::Spoof } else { Label::Bonafide },
                spoof_method: p.spoof.map(|m| m.as_str().to_string()),
                samples,
            }
        })
        .collect();

    let records = clips
        .iter()
        .zip(&plans)
        .map(|(c, p)| ManifestRecord {
            utt_id: c.utt_id.clone(),
            speaker_id: c.speaker_id.clone(),
            label: c.label,
            spoof_method: c.spoof_method.clone(),
            audio_path: format!("wav/{}.wav", c.utt_id),
            split: p.split,
        })
        .collect();
    Ok(Corpus { clips, records })
}

/// Write `wav/<utt_id>.wav` files and `manifest.tsv` under `dir`; returns the manifest path.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir.join("wav"))?;
    corpus
        .clips
        .par_iter()
        .zip(&corpus.records)
        .try_for_each(|(clip, rec)| write_wav(&dir.join(&rec.audio_path), &clip.samples))?;
    let manifest = dir.join("manifest.tsv");
    write_manifest(&manifest, &corpus.records)?;
    Ok(manifest)
}

#[derive(Default, Clone, Copy)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64) -> f64 {
        let r = (-PI * bw / SR).exp();
        let theta = 2.0 * PI * freq / SR;
        let gain = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
        let y = gain * x + 2.0 * r * theta.cos() * self.y1 - r * r * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

struct Syllable {
    len: usize,
    voiced: bool,
    amp: f64,
    f0_scale: f64,
    formant_scale: [f64; 3],
}

fn render_clip(
    spk: &SpeakerProfile,
    params: &SynthParams,
    spoof: Option<SpoofMethod>,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let duration = rng.gen_range(params.min_duration..=params.max_duration);
    let n = (duration * SR).round() as usize;

    let mut syllables = Vec::new();
    let mut total = 0;
    while total < n {
        let voiced = rng.gen_bool(0.78);
        let secs = if voiced { rng.gen_range(0.12..0.35) } else { rng.gen_range(0.04..0.18) };
        let len = ((secs * SR) as usize).min(n - total).max(1);
        syllables.push(Syllable {
            len,
            voiced,
            amp: rng.gen_range(0.55..1.0),
            f0_scale: rng.gen_range(0.9..1.1),
            formant_scale: [
                rng.gen_range(0.85..1.15),
                rng.gen_range(0.85..1.15),
                rng.gen_range(0.9..1.1),
            ],
        });
        total += len;
    }

    let vibrato_rate = rng.gen_range(4.0..6.5);
    let vibrato_phase = rng.gen_range(0.0..2.0 * PI);
    let phase_reset = spoof == Some(SpoofMethod::PhaseReset);

    let mut out = Vec::with_capacity(n);
    let mut phase = rng.gen_range(0.0..1.0);
    let mut res = [Resonator::default(); 3];
    let mut tilt_state = 0.0;
    for syl in &syllables {
        for j in 0..syl.len {
            let i = out.len();
            let t = i as f64 / SR;
            let env = if syl.voiced {
                let x = (j as f64 + 0.5) / syl.len as f64;
                syl.amp * (PI * x).sin().powf(0.7)
            } else {
                0.0
            };
            let f0 = spk.f0
                * syl.f0_scale
                * (1.0 + 0.02 * (2.0 * PI * vibrato_rate * t + vibrato_phase).sin());
            if phase_reset && i % PHASE_RESET_PERIOD == 0 {
                phase = 0.0;
            }
            phase += f0 / SR;
            phase -= phase.floor();
            let breath: f64 = rng.sample(StandardNormal);
            let mut x = (2.0 * phase - 1.0) + spk.breathiness * breath;
            for k in 0..3 {
                x = res[k].step(x, spk.formants[k] * syl.formant_scale[k], spk.bandwidths[k]);
            }
            tilt_state = (1.0 - spk.tilt) * x + spk.tilt * tilt_state;
            out.push(env * tilt_state);
        }
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let level = rng.gen_range(0.3..0.75);
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= level / peak);
    }
    let noise_amp = 10f64.powf((spk.noise_db + rng.gen_range(-2.0..2.0)) / 20.0);
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += noise_amp * z;
    }

    match spoof {
        Some(SpoofMethod::EnvelopeSmoothing) => {
            out = smooth_envelope(&out, params.smoothing_half_width);
        }
        Some(SpoofMethod::Quantize8) => {
            out.iter_mut().for_each(|v| *v = quantize8(v.clamp(-1.0, 1.0)));
        }
        _ => {}
    }
    out.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect()
}

/// Map [-1, 1] onto 256 evenly spaced levels.
fn quantize8(x: f64) -> f64 {
    ((x + 1.0) * 127.5).round() / 127.5 - 1.0
}

/// Short-time magnitude smoothing with the original phase kept; weighted overlap-add.
fn smooth_envelope(x: &[f64], half_width: usize) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(STFT_LEN);
    let inv = planner.plan_fft_inverse(STFT_LEN);
    let window: Vec<f64> = (0..STFT_LEN)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / STFT_LEN as f64).cos())
        .collect();
    let half = STFT_LEN / 2;
    let mut acc = vec![0.0; n + STFT_LEN];
    let mut wsum = vec![0.0; n + STFT_LEN];
    let mut buf = vec![Complex::new(0.0, 0.0); STFT_LEN];
    let mut mag = vec![0.0; half + 1];
    let mut start = 0usize;
    // frames start half a window before the signal so the edges are covered
    let offset = STFT_LEN / 2;
    while start < n + offset {
        for (i, b) in buf.iter_mut().enumerate() {
            let idx = (start + i) as isize - offset as isize;
            let s = if idx >= 0 && (idx as usize) < n { x[idx as usize] } else { 0.0 };
            *b = Complex::new(s * window[i], 0.0);
        }
        fwd.process(&mut buf);
        for k in 0..=half {
            mag[k] = buf[k].norm();
        }
        for k in 0..=half {
            let lo = k.saturating_sub(half_width);
            let hi = (k + half_width).min(half);
            let avg = mag[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            let scale = if mag[k] > 1e-12 { avg / mag[k] } else { 0.0 };
            buf[k] *= scale;
        }
        for k in 1..half {
            buf[STFT_LEN - k] = buf[k].conj();
        }
        inv.process(&mut buf);
        for i in 0..STFT_LEN {
            let idx = (start + i) as isize - offset as isize;
            if idx >= 0 && (idx as usize) < n {
                acc[idx as usize] += buf[i].re / STFT_LEN as f64;
                wsum[idx as usize] += window[i];
            }
        }
        start += STFT_HOP;
    }
    (0..n)
        .map(|i| if wsum[i] > 1e-6 { acc[i] / wsum[i] } else { 0.0 })
        .collect()
}
