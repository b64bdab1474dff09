//! Core domain types shared by the whole pipeline: embedding vectors,
//! timed stream elements, speaker labels, and the session configuration.

use std::fmt;

use thiserror::Error;

/// Errors raised while constructing or validating core types.
#[derive(Debug, Error, PartialEq)]
pub enum TypeError {
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("embedding component {index} is not finite")]
    NonFinite { index: usize },
    #[error("embedding is empty")]
    EmptyVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("segment end {end} must be greater than start {start}")]
    EmptyInterval { start: f64, end: f64 },
}

/// A unit-norm speaker embedding.
///
/// Construction normalizes the raw vector to unit L2 norm and rejects
/// zero-norm or non-finite input, so every `EmbeddingVector` in the system
/// can be compared with plain dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalize a raw vector into a unit-norm embedding.
    pub fn new(raw: Vec<f64>) -> Result<Self, TypeError> {
        if raw.is_empty() {
            return Err(TypeError::EmptyVector);
        }
        if let Some(index) = raw.iter().position(|x| !x.is_finite()) {
            return Err(TypeError::NonFinite { index });
        }
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(TypeError::ZeroNorm);
        }
        let values = raw.iter().map(|x| x / norm).collect();
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// One element of the input stream: an embedding plus the time interval
/// of the audio window it was extracted from.
#[derive(Debug, Clone)]
pub struct TimedEmbedding {
    pub embedding: EmbeddingVector,
    pub start: f64,
    pub end: f64,
}

impl TimedEmbedding {
    pub fn new(embedding: EmbeddingVector, start: f64, end: f64) -> Result<Self, TypeError> {
        if !(end > start) {
            return Err(TypeError::EmptyInterval { start, end });
        }
        Ok(Self { embedding, start, end })
    }
}

/// A global speaker label. Labels are dense non-negative integers assigned
/// in order of first emission and are never reused or retracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpeakerLabel(pub u32);

impl fmt::Display for SpeakerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "spk{}", self.0)
    }
}

/// A time interval with the speaker label the session emitted for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSegment {
    pub start: f64,
    pub end: f64,
    pub label: SpeakerLabel,
}

/// Session hyper-parameters. Validation is eager: a `DiarizerConfig` that
/// exists has already passed all invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DiarizerConfig {
    /// Number of embeddings to stack before the initial clustering runs.
    pub n_init: usize,
    /// Checkpoint buffer capacity.
    pub n_ckpt: usize,
    /// Cosine-distance threshold for clustering centroids during label mapping.
    pub centroid_link_threshold: f64,
    /// Cap on the speaker-count search during the initial clustering phase.
    pub max_initial_speakers: usize,
    /// Embedding dimension.
    pub dim: usize,
    /// Sliding window length in seconds.
    pub window_len: f64,
    /// Sliding window shift in seconds.
    pub window_shift: f64,
}

impl DiarizerConfig {
    pub fn new(
        n_init: usize,
        n_ckpt: usize,
        centroid_link_threshold: f64,
        max_initial_speakers: usize,
        dim: usize,
        window_len: f64,
        window_shift: f64,
    ) -> Result<Self, TypeError> {
        let config = Self {
            n_init,
            n_ckpt,
            centroid_link_threshold,
            max_initial_speakers,
            dim,
            window_len,
            window_shift,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        if self.n_init == 0 {
            return Err(TypeError::InvalidConfig("n_init must be positive".into()));
        }
        if self.n_ckpt == 0 {
            return Err(TypeError::InvalidConfig("n_ckpt must be positive".into()));
        }
        if self.n_init > self.n_ckpt {
            return Err(TypeError::InvalidConfig(format!(
                "n_init ({}) must not exceed n_ckpt ({})",
                self.n_init, self.n_ckpt
            )));
        }
        if !(self.centroid_link_threshold > 0.0 && self.centroid_link_threshold < 2.0) {
            return Err(TypeError::InvalidConfig(format!(
                "centroid_link_threshold ({}) must lie in (0, 2)",
                self.centroid_link_threshold
            )));
        }
        if self.max_initial_speakers == 0 {
            return Err(TypeError::InvalidConfig(
                "max_initial_speakers must be positive".into(),
            ));
        }
        if self.dim == 0 {
            return Err(TypeError::InvalidConfig("dim must be positive".into()));
        }
        if !(self.window_len > 0.0) || !(self.window_shift > 0.0) {
            return Err(TypeError::InvalidConfig(
                "window_len and window_shift must be positive".into(),
            ));
        }
        if self.window_shift > self.window_len {
            return Err(TypeError::InvalidConfig(format!(
                "window_shift ({}) must not exceed window_len ({})",
                self.window_shift, self.window_len
            )));
        }
        Ok(())
    }
}

impl Default for DiarizerConfig {
    fn default() -> Self {
        Self {
            n_init: 60,
            n_ckpt: 180,
            centroid_link_threshold: 0.25,
            max_initial_speakers: 5,
            dim: 256,
            window_len: 1.5,
            window_shift: 0.5,
        }
    }
}
