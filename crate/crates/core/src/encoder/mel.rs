//! Layer 0 of the pseudo encoder: a log-mel spectrogram.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::corpus::SAMPLE_RATE;

/// 25 ms analysis window.
pub const WINDOW: usize = 400;
/// 20 ms hop.
pub const HOP: usize = 320;
pub const FFT_LEN: usize = 512;
pub const LOG_FLOOR: f64 = 1e-6;

/// Number of frames for a signal of `n` samples.
pub fn frame_count(n: usize) -> usize {
    if n < WINDOW {
        0
    } else {
        (n - WINDOW) / HOP + 1
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, equally spaced on the mel scale
/// between 0 Hz and Nyquist. Returned as `n_mels` rows of `FFT_LEN / 2 + 1` weights.
pub fn mel_filterbank(n_mels: usize) -> Vec<Vec<f64>> {
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = FFT_LEN / 2 + 1;
    let bin_hz = SAMPLE_RATE as f64 / FFT_LEN as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

pub struct MelFrontend {
    n_mels: usize,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MelFrontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFrontend").field("n_mels", &self.n_mels).finish()
    }
}

impl MelFrontend {
    pub fn new(n_mels: usize) -> Self {
        // periodic Hann
        let window = (0..WINDOW)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / WINDOW as f64).cos())
            .collect();
        Self {
            n_mels,
            window,
            filters: mel_filterbank(n_mels),
            fft: FftPlanner::new().plan_fft_forward(FFT_LEN),
        }
    }

    /// Frame-major `frames × n_mels` log-mel energies.
    pub fn compute(&self, samples: &[f32]) -> Vec<f64> {
        let frames = frame_count(samples.len());
        let mut out = Vec::with_capacity(frames * self.n_mels);
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
        let mut power = vec![0.0; FFT_LEN / 2 + 1];
        for t in 0..frames {
            let start = t * HOP;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < WINDOW {
                    Complex::new(samples[start + i] as f64 * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for filt in &self.filters {
                let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
                out.push((e + LOG_FLOOR).ln());
            }
        }
        out
    }
}
