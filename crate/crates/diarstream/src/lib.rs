//! Streaming speaker diarisation.
//!
//! The pipeline assigns irrevocable global speaker labels to a time-ordered
//! stream of speaker embeddings. Sessions stack the first `n_init`
//! embeddings, pick the initial speaker count by maximising the silhouette
//! coefficient over agglomerative clusterings, then label every further
//! embedding online: a silhouette comparison over {k-1, k, k+1} decides
//! whether the embedding belongs to an unseen speaker, and label mapping
//! routes existing-speaker embeddings through a clustering of the candidate
//! centroids.
//!
//! Alongside the engine, the crate ships the scoring (DER/JER over RTTM) and
//! synthetic-stream tooling used to verify it, plus the `diarstream` CLI
//! wrapping diarize / score / simulate / bench.

pub mod buffers;
pub mod clustering;
pub mod diarizer;
pub mod geometry;
pub mod io;
pub mod scoring;
pub mod types;

pub use diarizer::{Decision, DiarizerSession, Phase, SessionError};
pub use types::{
    DiarizerConfig, EmbeddingVector, LabeledSegment, SpeakerLabel, TimedEmbedding,
};
