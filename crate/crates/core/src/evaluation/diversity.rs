use serde::{Deserialize, Serialize};

use super::EvalError;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub n: usize,
    /// Mean pairwise cosine distance, in [0, 2].
    pub score: f64,
    pub pair_count: usize,
}

/// Mean pairwise cosine distance over unit vectors.
pub fn diversity(vectors: &[Vec<f64>]) -> Result<DiversityReport, EvalError> {
    let n = vectors.len();
    if n < 2 {
        return Err(EvalError::InsufficientItems { n });
    }
    let dim = vectors[0].len();
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(EvalError::DimensionMismatch {
                index,
                expected: dim,
                got: v.len(),
            });
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(EvalError::Normalization { index, norm });
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
            total += 1.0 - dot;
        }
    }
    let pair_count = n * (n - 1) / 2;
    Ok(DiversityReport {
        n,
        score: (total / pair_count as f64).clamp(0.0, 2.0),
        pair_count,
    })
}

/// Normalize each vector, then score. For raw embeddings of unknown scale.
pub fn diversity_of_raw(vectors: &[Vec<f64>]) -> Result<DiversityReport, EvalError> {
    let normalized = vectors
        .iter()
        .enumerate()
        .map(|(index, v)| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(EvalError::Normalization { index, norm });
            }
            Ok(v.iter().map(|x| x / norm).collect())
        })
        .collect::<Result<Vec<Vec<f64>>, _>>()?;
    diversity(&normalized)
}
