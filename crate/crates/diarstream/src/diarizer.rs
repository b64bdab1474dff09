//! The online diarisation state machine: a stacking phase that buffers the
//! first `n_init` embeddings, an initial clustering that seeds both buffers,
//! and a per-embedding online step that decides between k-1, k, and k+1
//! speakers before emitting an irrevocable label.

use std::io::Write;

use thiserror::Error;

use crate::buffers::{BufferError, CentroidStore, CheckpointBuffer};
use crate::clustering::{
    self, ahc_build, cut_threshold, score_candidate, ClusterError, SCORE_TIE_EPS,
};
use crate::geometry::{self, GeometryError};
use crate::types::{DiarizerConfig, EmbeddingVector, LabeledSegment, SpeakerLabel, TimedEmbedding, TypeError};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("stream is not time-ordered: start {got} before previous start {prev}")]
    OutOfOrder { prev: f64, got: f64 },
    #[error("embedding dimension {got} does not match configured {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("session already finished")]
    Finished,
    #[error("no live centroids")]
    NoCentroids,
    #[error(transparent)]
    Config(#[from] TypeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
}

/// Which half of the two-phase pipeline the session is in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Before `n_init` embeddings: inputs are stashed, nothing is emitted.
    Stacking,
    /// After the initial clustering: one label per input embedding.
    Online,
}

/// The speaker-number decision for one online step: the candidate counts
/// evaluated (a subset of {k-1, k, k+1}) with their silhouette scores, and
/// the count that won.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub chosen_k: usize,
    pub scores: Vec<(usize, f64)>,
}

/// One online diarisation session. Single-writer: owns its buffers and
/// emits an append-only sequence of labeled segments.
#[derive(Debug)]
pub struct DiarizerSession {
    config: DiarizerConfig,
    phase: Phase,
    stash: Vec<TimedEmbedding>,
    checkpoint: CheckpointBuffer,
    centroids: CentroidStore,
    current_k: usize,
    emitted: Vec<LabeledSegment>,
    decisions: Vec<Decision>,
    last_start: Option<f64>,
    finished: bool,
}

impl DiarizerSession {
    pub fn new(config: DiarizerConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let checkpoint = CheckpointBuffer::new(config.n_ckpt, config.dim);
        Ok(Self {
            config,
            phase: Phase::Stacking,
            stash: Vec::new(),
            checkpoint,
            centroids: CentroidStore::new(),
            current_k: 0,
            emitted: Vec::new(),
            decisions: Vec::new(),
            last_start: None,
            finished: false,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &DiarizerConfig {
        &self.config
    }

    /// Live-centroid count; this is the k the speaker-number decision works on.
    pub fn current_k(&self) -> usize {
        self.current_k
    }

    pub fn emitted(&self) -> &[LabeledSegment] {
        &self.emitted
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn checkpoint(&self) -> &CheckpointBuffer {
        &self.checkpoint
    }

    pub fn centroids(&self) -> &CentroidStore {
        &self.centroids
    }

    /// Feed one embedding. During stacking this returns no segments until the
    /// push that reaches `n_init`, which releases labels for everything
    /// stashed so far in one batch. Online, every push returns exactly one
    /// segment.
    pub fn push(&mut self, te: TimedEmbedding) -> Result<Vec<LabeledSegment>, SessionError> {
        if self.finished {
            return Err(SessionError::Finished);
        }
        if te.embedding.dim() != self.config.dim {
            return Err(SessionError::DimensionMismatch {
                expected: self.config.dim,
                got: te.embedding.dim(),
            });
        }
        if let Some(prev) = self.last_start {
            if te.start < prev {
                return Err(SessionError::OutOfOrder { prev, got: te.start });
            }
        }
        self.last_start = Some(te.start);

        match self.phase {
            Phase::Stacking => {
                self.stash.push(te);
                if self.stash.len() == self.config.n_init {
                    self.initial_cluster()
                } else {
                    Ok(Vec::new())
                }
            }
            Phase::Online => Ok(vec![self.online_step(te)?]),
        }
    }

    /// Flush a session whose stream ended while still stacking: the partial
    /// stash is clustered and labeled exactly as at the n_init transition.
    /// Idempotent; the session accepts no further input afterwards.
    pub fn finish(&mut self) -> Result<Vec<LabeledSegment>, SessionError> {
        if self.finished {
            return Ok(Vec::new());
        }
        self.finished = true;
        if self.phase == Phase::Stacking && !self.stash.is_empty() {
            return self.initial_cluster();
        }
        Ok(Vec::new())
    }

    /// Cluster the stashed embeddings, pick the speaker count by silhouette
    /// over [1, max_initial_speakers], seed both buffers, and release labels
    /// for the whole stash.
    fn initial_cluster(&mut self) -> Result<Vec<LabeledSegment>, SessionError> {
        let stash = std::mem::take(&mut self.stash);
        let embs: Vec<EmbeddingVector> = stash.iter().map(|te| te.embedding.clone()).collect();
        let n = embs.len();
        let dist = geometry::pairwise_distances(&embs)?;
        let dend = ahc_build(&dist);
        let k_max = self.config.max_initial_speakers.min(n);
        let (k_star, labeling) = clustering::estimate_count(&dist, &dend, 1, k_max)?;

        // One centroid per cluster, averaged over its members. Cluster ids
        // are dense in order of first appearance, so fresh labels 0..k map
        // onto them directly.
        for cluster in 0..k_star {
            let members: Vec<&[f64]> = labeling
                .assignments()
                .iter()
                .zip(&embs)
                .filter(|(&a, _)| a == cluster)
                .map(|(_, e)| e.values())
                .collect();
            let weights = vec![1.0; members.len()];
            let mean = geometry::weighted_mean(&members, &weights)?;
            let label = self.centroids.new_centroid_from_cluster(mean, members.len() as u64);
            debug_assert_eq!(label.0 as usize, cluster);
        }

        for e in &embs {
            self.checkpoint.add(e)?;
        }

        self.current_k = k_star;
        self.phase = Phase::Online;

        let released: Vec<LabeledSegment> = stash
            .iter()
            .zip(labeling.assignments())
            .map(|(te, &a)| LabeledSegment {
                start: te.start,
                end: te.end,
                label: SpeakerLabel(a as u32),
            })
            .collect();
        self.emitted.extend_from_slice(&released);
        Ok(released)
    }

    /// Score the candidate speaker counts {k-1, k, k+1} on the checkpoint
    /// snapshot plus the new embedding. Candidates outside [1, working-set
    /// size] are dropped; ties resolve toward the smaller count.
    pub fn decide_k(&mut self, e: &EmbeddingVector) -> Result<Decision, SessionError> {
        let mut working = self.checkpoint.snapshot();
        working.push(e.clone());
        let n = working.len();
        let dist = geometry::pairwise_distances(&working)?;
        let dend = ahc_build(&dist);

        let k = self.current_k;
        let mut scores: Vec<(usize, f64)> = Vec::with_capacity(3);
        for candidate in [k.saturating_sub(1), k, k + 1] {
            if candidate < 1 || candidate > n || scores.iter().any(|&(c, _)| c == candidate) {
                continue;
            }
            let (score, _) = score_candidate(&dist, &dend, candidate)?;
            scores.push((candidate, score));
        }
        debug_assert!(!scores.is_empty(), "at least one candidate count is always valid");

        let mut chosen = scores[0];
        for &(candidate, score) in &scores[1..] {
            if score > chosen.1 + SCORE_TIE_EPS {
                chosen = (candidate, score);
            }
        }
        Ok(Decision { chosen_k: chosen.0, scores })
    }

    /// Route one online embedding to a global label and update both buffers.
    fn online_step(&mut self, te: TimedEmbedding) -> Result<LabeledSegment, SessionError> {
        let e = te.embedding.clone();
        let decision = self.decide_k(&e)?;
        let chosen = decision.chosen_k;
        self.decisions.push(decision);

        let label = if chosen > self.current_k {
            // Unseen speaker: fresh global label, centroid directly from the
            // input embedding.
            let label = self.centroids.new_centroid(&e);
            self.current_k += 1;
            label
        } else {
            if chosen < self.current_k {
                // A past increase is judged faulty: merge the two closest
                // live centroids, then treat the embedding as an existing
                // speaker.
                let (a, b) = self.closest_live_pair()?;
                self.centroids.merge(a, b)?;
                self.current_k -= 1;
            }
            let label = self.map_label(&e)?;
            self.centroids.assign(label, &e)?;
            label
        };
        self.checkpoint.add(&e)?;

        let segment = LabeledSegment { start: te.start, end: te.end, label };
        self.emitted.push(segment);
        Ok(segment)
    }

    /// Label an existing-speaker embedding: cluster the live centroids with a
    /// threshold cut, find the centroid closest to the embedding by cosine
    /// similarity, and return the label of the most-used centroid within that
    /// centroid's cluster. The result can differ from the closest centroid's
    /// own label.
    pub fn map_label(&self, e: &EmbeddingVector) -> Result<SpeakerLabel, SessionError> {
        let (labels, vectors) = self.centroids.live_vectors();
        if labels.is_empty() {
            return Err(SessionError::NoCentroids);
        }
        if labels.len() == 1 {
            return Ok(labels[0]);
        }

        let dist = geometry::pairwise_distances(&vectors)?;
        let dend = ahc_build(&dist);
        let labeling = cut_threshold(&dend, self.config.centroid_link_threshold);

        let mut closest = 0usize;
        let mut best_sim = f64::NEG_INFINITY;
        for (i, v) in vectors.iter().enumerate() {
            let sim = geometry::cosine_similarity(e.values(), v.values())?;
            if sim > best_sim {
                best_sim = sim;
                closest = i;
            }
        }

        let cluster = labeling.assignments()[closest];
        let mut out = labels[closest];
        let mut best_usage = 0u64;
        for (i, &label) in labels.iter().enumerate() {
            if labeling.assignments()[i] != cluster {
                continue;
            }
            let usage = self.centroids.usage_of(label).unwrap_or(0);
            if usage > best_usage || (usage == best_usage && label < out) {
                best_usage = usage;
                out = label;
            }
        }
        Ok(out)
    }

    fn closest_live_pair(&self) -> Result<(SpeakerLabel, SpeakerLabel), SessionError> {
        let (labels, vectors) = self.centroids.live_vectors();
        if labels.len() < 2 {
            return Err(SessionError::NoCentroids);
        }
        let mut best = f64::INFINITY;
        let mut pair = (labels[0], labels[1]);
        for i in 0..vectors.len() {
            for j in (i + 1)..vectors.len() {
                let d = geometry::cosine_distance(vectors[i].values(), vectors[j].values())?;
                if d < best {
                    best = d;
                    pair = (labels[i], labels[j]);
                }
            }
        }
        Ok(pair)
    }

    /// Diagnostic dump of the full session state. Text format, not
    /// bit-critical: config, phase, checkpoint entries, centroid table.
    pub fn dump_state(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "config n_init={} n_ckpt={} centroid_link_threshold={} max_initial_speakers={} dim={}",
            self.config.n_init,
            self.config.n_ckpt,
            self.config.centroid_link_threshold,
            self.config.max_initial_speakers,
            self.config.dim
        )?;
        writeln!(w, "phase {:?} current_k={} emitted={}", self.phase, self.current_k, self.emitted.len())?;
        writeln!(w, "checkpoint entries={} capacity={}", self.checkpoint.len(), self.checkpoint.capacity())?;
        for (i, entry) in self.checkpoint.entries().iter().enumerate() {
            let norm: f64 = entry.mean().iter().map(|x| x * x).sum::<f64>().sqrt();
            writeln!(w, "  entry {i} weight={} norm={:.6}", entry.weight(), norm)?;
        }
        writeln!(w, "centroids")?;
        for c in self.centroids.centroids() {
            writeln!(
                w,
                "  {} usage={} weight={} live={}",
                c.label(),
                c.usage(),
                c.weight(),
                c.is_live()
            )?;
        }
        Ok(())
    }
}
