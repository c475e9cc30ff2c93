use super::{AudioClip, AudioSegment, SEGMENT_LEN};
use crate::error::{Error, Result};

/// Cut a clip to 4 s, or pad it to 4 s by repeating it end to end.
///
/// No voice-activity trimming or other preprocessing happens here.
pub fn segment_clip(clip: &AudioClip) -> Result<AudioSegment> {
    if clip.samples.is_empty() {
        return Err(Error::InvalidInput(format!("{}: empty clip", clip.utt_id)));
    }
    let samples: Vec<f32> = clip
        .samples
        .iter()
        .copied()
        .cycle()
        .take(SEGMENT_LEN)
        .collect();
    Ok(AudioSegment {
        utt_id: clip.utt_id.clone(),
        speaker_id: clip.speaker_id.clone(),
        label: clip.label,
        spoof_method: clip.spoof_method.clone(),
        origin_utt: clip.utt_id.clone(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn clip(samples: Vec<f32>) -> AudioClip {
        AudioClip::new("u1", "s1", Label::Bonafide, None, samples).unwrap()
    }

    fn ramp(n: usize) -> Vec<f32> {
        (0..n).map(|i| (i % 1000) as f32 / 1000.0).collect()
    }

    #[test]
    fn long_clip_is_truncated() {
        let src = ramp(96_000);
        let seg = segment_clip(&clip(src.clone())).unwrap();
        assert_eq!(seg.samples(), &src[..SEGMENT_LEN]);
    }

    #[test]
    fn short_clip_is_repeated() {
        let src: Vec<f32> = (0..24_000).map(|i| i as f32 / 24_000.0).collect();
        let seg = segment_clip(&clip(src.clone())).unwrap();
        let mut expected = src.clone();
        expected.extend_from_slice(&src);
        expected.extend_from_slice(&src[..16_000]);
        assert_eq!(seg.samples(), expected.as_slice());
    }

    #[test]
    fn exact_length_is_unchanged() {
        let src = ramp(SEGMENT_LEN);
        let seg = segment_clip(&clip(src.clone())).unwrap();
        assert_eq!(seg.samples(), src.as_slice());
    }

    #[test]
    fn single_sample_fills_segment() {
        let seg = segment_clip(&clip(vec![0.25])).unwrap();
        assert!(seg.samples().iter().all(|&s| s == 0.25));
        assert_eq!(seg.samples().len(), SEGMENT_LEN);
    }

    #[test]
    fn empty_clip_is_rejected() {
        let err = segment_clip(&clip(vec![])).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn segmentation_is_idempotent() {
        let seg = segment_clip(&clip(ramp(7_777))).unwrap();
        let again = segment_clip(&seg.to_clip()).unwrap();
        assert_eq!(seg.samples(), again.samples());
    }
}
