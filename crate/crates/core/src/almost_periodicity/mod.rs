//! Almost periodicity diagnostics for sampled functions, sequences and impulse times.
//!
//! Every check works on a finite window, so a verdict means "consistent with"
//! the property on that window, never a proof of it.

mod impulses;
mod sequence;
mod signal;

use serde::Serialize;
use thiserror::Error;

pub use impulses::{
    common_translates, fit_count_constant, impulse_count_bound, uniform_ap_sequence_check,
    worst_case_count_constant, CommonTranslateReport, CountBound, DifferenceSequenceReport,
    ImpulseTimes, Translate, TranslateOptions, UniformApReport,
};
pub use sequence::{
    interpolate_sequence, sequence_almost_periods, sequence_ergodic, SequenceSignal,
};
pub use signal::{
    eps_almost_periods, ergodic_mean, ergodic_report, relative_density, verify_pap_split,
    ErgodicReport, PapOptions, PapVerdict, SampledSignal,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApError {
    #[error("window {available:?} does not contain {needed:?}")]
    WindowTooSmall {
        needed: (f64, f64),
        available: (f64, f64),
    },
    #[error("shift {shift} leaves less than half of the window {window} for comparison")]
    InsufficientOverlap { shift: f64, window: f64 },
    #[error("f differs from f1 + f2 by {0:e}")]
    SplitMismatch(f64),
    #[error("signals are not sampled on the same grid")]
    GridMismatch,
    #[error("impulse times are not strictly increasing at index {index}")]
    SeparationViolated { index: usize },
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
}

/// Relative density of a set of translations in a search window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "gap", rename_all = "snake_case")]
pub enum Density {
    /// Every subinterval of this length contains a translation.
    Dense(f64),
    NotDense,
}

impl Density {
    pub fn gap(&self) -> Option<f64> {
        match self {
            Density::Dense(l) => Some(*l),
            Density::NotDense => None,
        }
    }
}

/// One line of a report: a measured value against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub criterion: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Criterion {
    pub fn new(criterion: impl Into<String>, value: f64, threshold: f64, pass: bool) -> Self {
        Criterion {
            criterion: criterion.into(),
            value,
            threshold,
            pass,
        }
    }
}
