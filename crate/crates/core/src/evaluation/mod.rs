//! Evaluation statistics and the ideation ablation runner. Everything here
//! except [`ablation`] is a pure function of its inputs.

pub mod ablation;
pub mod bibd;
pub mod diversity;
pub mod metrics;
pub mod survey;
pub mod wilcoxon;

use thiserror::Error;

use crate::session::SessionError;

pub use ablation::{run_ablation, AblationConfig, AblationReport};
pub use bibd::{bibd_condition, bibd_table, BibdCondition, System, Task, TaskPair};
pub use diversity::{diversity, DiversityReport};
pub use metrics::{behavioral_metrics, BehavioralMetrics};
pub use survey::{umux_lite_overall, CsiDimension, ScoreRecord};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("need at least 2 items, got {n}")]
    InsufficientItems { n: usize },
    #[error("vector {index} is not unit length (norm {norm})")]
    Normalization { index: usize, norm: f64 },
    #[error("vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("samples differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("every paired difference is zero")]
    DegenerateSample,
    #[error("{what} = {value} is out of range {min}..={max}")]
    Range {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("no prompt has results for both conditions")]
    InsufficientPairs,
    #[error(transparent)]
    Replay(#[from] SessionError),
}

pub(crate) fn check_range(what: &'static str, value: f64, min: f64, max: f64) -> Result<f64, EvalError> {
    if value.is_finite() && (min..=max).contains(&value) {
        Ok(value)
    } else {
        Err(EvalError::Range {
            what,
            value,
            min,
            max,
        })
    }
}

/// Mean and sample standard deviation (n − 1). `sd` is 0 for one value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Summary { n, mean, sd })
}
