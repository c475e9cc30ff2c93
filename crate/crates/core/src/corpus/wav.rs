use std::path::Path;

use hound::{SampleFormat, WavSpec};

use super::SAMPLE_RATE;
use crate::error::{Error, Result};

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Write mono 16-bit PCM at 16 kHz.
pub fn write_wav(path: &Path, samples: &[f32]) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err(path))?;
    for &s in samples {
        let q = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
        writer.write_sample(q).map_err(wav_err(path))?;
    }
    writer.finalize().map_err(wav_err(path))
}

/// Read a mono 16 kHz WAV in 16-bit PCM or 32-bit float.
pub fn read_wav(path: &Path) -> Result<Vec<f32>> {
    let mut reader = hound::WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.sample_rate != SAMPLE_RATE {
        return Err(Error::InvalidInput(format!(
            "{}: expected mono {SAMPLE_RATE} Hz, got {} ch at {} Hz",
            path.display(),
            spec.channels,
            spec.sample_rate
        )));
    }
    match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / i16::MAX as f32))
            .map(|s| s.map(|v| v.max(-1.0)))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path)),
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(wav_err(path)),
        (fmt, bits) => Err(Error::InvalidInput(format!(
            "{}: unsupported sample format {fmt:?}/{bits} bit",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_roundtrip_is_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f32> = (0..1000).map(|i| ((i as f32) * 0.01).sin() * 0.9).collect();
        write_wav(&path, &samples).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert!((a - b).abs() <= 1.0 / i16::MAX as f32);
        }
    }
}
