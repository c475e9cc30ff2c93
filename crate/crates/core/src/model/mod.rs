//! Classifiers over short features: the fine-tuning baseline, the
//! retrieval-augmented model and its difference-only variant.

mod baseline;
mod check;
mod mfa;
mod rad;
mod train;

use std::fmt;
use std::str::FromStr;

pub use baseline::{BaselineCache, BaselineContext, BaselineParams};
pub use check::{check_baseline, check_mfa, check_radmfa};
pub use mfa::{MfaCache, MfaParams};
pub use rad::{RadCache, RadMfaParams};
pub use train::{
    evaluate, render_log, render_log_line, score_examples, score_of, train, Classifier, EpochStats, Example,
    RadInput, TrainHyper, Trained, LOG_HEADER,
};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Baseline,
    RadMfa,
    JustDifference,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::RadMfa => "radmfa",
            ModelKind::JustDifference => "just_difference",
        }
    }

    pub fn uses_retrieval(self) -> bool {
        self != ModelKind::Baseline
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "baseline" => Ok(ModelKind::Baseline),
            "radmfa" => Ok(ModelKind::RadMfa),
            "just_difference" => Ok(ModelKind::JustDifference),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}
