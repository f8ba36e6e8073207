use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

/// Dense embedding with its Euclidean norm cached at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, PipelineError> {
        if values.is_empty() {
            return Err(PipelineError::DimensionMismatch(0, 0));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self { values, norm })
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, PipelineError> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = PipelineError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

/// Cosine of the angle between two embeddings, clamped to [-1, 1].
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, PipelineError> {
    if a.dims() != b.dims() {
        return Err(PipelineError::DimensionMismatch(a.dims(), b.dims()));
    }
    if a.norm == 0.0 || b.norm == 0.0 {
        return Err(PipelineError::ZeroVector);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DuplicateVerdict {
    /// `max_similarity` is `None` when there was nothing to compare against.
    Unique { max_similarity: Option<f64> },
    Duplicate { max_similarity: f64 },
}

impl DuplicateVerdict {
    pub fn is_duplicate(&self) -> bool {
        matches!(self, DuplicateVerdict::Duplicate { .. })
    }

    pub fn max_similarity(&self) -> Option<f64> {
        match *self {
            DuplicateVerdict::Unique { max_similarity } => max_similarity,
            DuplicateVerdict::Duplicate { max_similarity } => Some(max_similarity),
        }
    }
}

/// A draft is a duplicate when its similarity to any earlier agent message is
/// at least `threshold`. An empty history is always unique.
pub fn check_duplicate(
    draft: &EmbeddingVector,
    history: &[EmbeddingVector],
    threshold: f64,
) -> Result<DuplicateVerdict, PipelineError> {
    let mut max: Option<f64> = None;
    for prior in history {
        let sim = cosine_similarity(draft, prior)?;
        max = Some(max.map_or(sim, |m: f64| m.max(sim)));
    }
    Ok(match max {
        Some(m) if m >= threshold => DuplicateVerdict::Duplicate { max_similarity: m },
        other => DuplicateVerdict::Unique { max_similarity: other },
    })
}
