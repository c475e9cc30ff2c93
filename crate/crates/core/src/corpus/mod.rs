//! Labeled audio clips, fixed-length segmentation, the synthetic corpus
//! generator and the tab-separated manifest format.

mod manifest;
mod segment;
mod synth;
mod wav;

pub use manifest::{read_manifest, resolve_audio_path, write_manifest, ManifestRecord};
pub use segment::segment_clip;
pub use synth::{
    synthesize_corpus, write_corpus, Corpus, CorpusConfig, SpoofMethod, SplitBlock, SynthParams,
};
pub use wav::{read_wav, write_wav};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Fixed sample rate of every clip.
pub const SAMPLE_RATE: u32 = 16_000;

/// Length of one segment: 4 s at 16 kHz.
pub const SEGMENT_LEN: usize = 64_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
        }
    }

    /// Class index used by the classifiers: bonafide = 0, spoof = 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::Bonafide => 0,
            Label::Spoof => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Eval,
    RetrievalExtra,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Dev, Split::Eval, Split::RetrievalExtra];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
            Split::RetrievalExtra => "retrieval_extra",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Split::ALL
            .into_iter()
            .find(|split| split.as_str() == s)
            .ok_or_else(|| format!("unknown split `{s}`"))
    }
}

/// A labeled mono clip at [`SAMPLE_RATE`].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub utt_id: String,
    pub speaker_id: String,
    pub label: Label,
    pub spoof_method: Option<String>,
    pub samples: Vec<f32>,
}

impl AudioClip {
    pub fn new(
        utt_id: impl Into<String>,
        speaker_id: impl Into<String>,
        label: Label,
        spoof_method: Option<String>,
        samples: Vec<f32>,
    ) -> Result<Self> {
        let clip = Self {
            utt_id: utt_id.into(),
            speaker_id: speaker_id.into(),
            label,
            spoof_method,
            samples,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.label == Label::Spoof) != self.spoof_method.is_some() {
            return Err(Error::InvalidInput(format!(
                "{}: spoof_method must be present exactly when label is spoof",
                self.utt_id
            )));
        }
        if let Some(i) = self
            .samples
            .iter()
            .position(|s| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(Error::InvalidInput(format!(
                "{}: sample {i} outside [-1, 1]",
                self.utt_id
            )));
        }
        Ok(())
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }
}

/// A clip cut or repeat-padded to exactly [`SEGMENT_LEN`] samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    pub utt_id: String,
    pub speaker_id: String,
    pub label: Label,
    pub spoof_method: Option<String>,
    pub origin_utt: String,
    samples: Vec<f32>,
}

impl AudioSegment {
    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    /// View the segment as a clip again (used to check idempotence of segmentation).
    pub fn to_clip(&self) -> AudioClip {
        AudioClip {
            utt_id: self.utt_id.clone(),
            speaker_id: self.speaker_id.clone(),
            label: self.label,
            spoof_method: self.spoof_method.clone(),
            samples: self.samples.clone(),
        }
    }
}
