//! The dual buffers of the online phase: a fixed-capacity checkpoint buffer
//! of weighted running-mean embeddings compactly representing all past input,
//! and a centroid store of candidate speakers.

use std::collections::HashMap;

use thiserror::Error;

use crate::geometry::{self, GeometryError};
use crate::types::{EmbeddingVector, SpeakerLabel};

#[derive(Debug, Error, PartialEq)]
pub enum BufferError {
    #[error("dimension mismatch: buffer holds {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {0} does not resolve to a live centroid")]
    UnknownLabel(SpeakerLabel),
    #[error("cannot merge a centroid with itself ({0})")]
    SelfMerge(SpeakerLabel),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A weighted running mean absorbing one or more original embeddings.
#[derive(Debug, Clone)]
pub struct CheckpointEntry {
    mean: Vec<f64>,
    weight: u64,
}

impl CheckpointEntry {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn weight(&self) -> u64 {
        self.weight
    }
}

/// Fixed-capacity buffer of checkpoint entries. When full, the two most
/// similar entries merge into one weighted mean before the new embedding is
/// appended, so the buffer never exceeds its capacity.
#[derive(Debug, Clone)]
pub struct CheckpointBuffer {
    entries: Vec<CheckpointEntry>,
    capacity: usize,
    dim: usize,
    degenerate_skips: u64,
}

impl CheckpointBuffer {
    pub fn new(capacity: usize, dim: usize) -> Self {
        assert!(capacity >= 1, "checkpoint capacity must be positive");
        Self { entries: Vec::with_capacity(capacity), capacity, dim, degenerate_skips: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[CheckpointEntry] {
        &self.entries
    }

    /// Total number of original embeddings absorbed across all entries.
    pub fn total_weight(&self) -> u64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// Count of degenerate (zero-norm) entry means skipped by snapshots.
    pub fn degenerate_skips(&self) -> u64 {
        self.degenerate_skips
    }

    /// Add one embedding. At capacity, the pair of entries with minimal
    /// cosine distance is merged first, then the new entry is appended.
    pub fn add(&mut self, e: &EmbeddingVector) -> Result<(), BufferError> {
        if e.dim() != self.dim {
            return Err(BufferError::DimensionMismatch { expected: self.dim, got: e.dim() });
        }
        if self.entries.len() == self.capacity {
            if self.capacity == 1 {
                // Only one entry and the newcomer exist; fold the newcomer in.
                let w = self.entries[0].weight;
                let merged = geometry::weighted_mean(
                    &[&self.entries[0].mean, e.values()],
                    &[w as f64, 1.0],
                )?;
                let merged = if merged.iter().map(|x| x * x).sum::<f64>().sqrt() == 0.0 {
                    self.entries[0].mean.clone()
                } else {
                    merged
                };
                self.entries[0] = CheckpointEntry { mean: merged, weight: w + 1 };
                return Ok(());
            }
            self.merge_closest_pair()?;
        }
        self.entries.push(CheckpointEntry { mean: e.values().to_vec(), weight: 1 });
        Ok(())
    }

    fn merge_closest_pair(&mut self) -> Result<(), BufferError> {
        let n = self.entries.len();
        let norms: Vec<f64> =
            self.entries.iter().map(|e| e.mean.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let mut best = f64::INFINITY;
        let mut pair = (0usize, 1usize);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = if norms[i] == 0.0 || norms[j] == 0.0 {
                    // A degenerate mean is indistinguishable by cosine;
                    // treat it as maximally distant so it is never chosen.
                    f64::INFINITY
                } else {
                    let dot: f64 =
                        self.entries[i].mean.iter().zip(&self.entries[j].mean).map(|(a, b)| a * b).sum();
                    1.0 - (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                };
                if d < best {
                    best = d;
                    pair = (i, j);
                }
            }
        }
        let (i, j) = pair;
        let (wi, wj) = (self.entries[i].weight, self.entries[j].weight);
        let merged = geometry::weighted_mean(
            &[&self.entries[i].mean, &self.entries[j].mean],
            &[wi as f64, wj as f64],
        )?;
        // Antipodal degenerate case: keep the first member's direction so the
        // entry stays usable under cosine distance.
        let merged = if merged.iter().map(|x| x * x).sum::<f64>().sqrt() == 0.0 {
            self.entries[i].mean.clone()
        } else {
            merged
        };
        self.entries[i] = CheckpointEntry { mean: merged, weight: wi + wj };
        self.entries.remove(j);
        Ok(())
    }

    /// Normalized copies of the entry means, order-stable. Entries whose mean
    /// degenerated to zero norm are skipped and counted.
    pub fn snapshot(&mut self) -> Vec<EmbeddingVector> {
        let mut out = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            match EmbeddingVector::new(e.mean.clone()) {
                Ok(v) => out.push(v),
                Err(_) => self.degenerate_skips += 1,
            }
        }
        out
    }
}

/// A candidate speaker: running-mean vector, global label, and how often the
/// label has been used. More than one centroid may represent one speaker.
#[derive(Debug, Clone)]
pub struct Centroid {
    label: SpeakerLabel,
    mean: Vec<f64>,
    usage: u64,
    weight: u64,
    live: bool,
}

impl Centroid {
    pub fn label(&self) -> SpeakerLabel {
        self.label
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn usage(&self) -> u64 {
        self.usage
    }

    pub fn weight(&self) -> u64 {
        self.weight
    }

    pub fn is_live(&self) -> bool {
        self.live
    }
}

/// Store of candidate-speaker centroids. Labels are never reused; when two
/// centroids merge, the retired label is aliased to the survivor so past
/// emissions keep resolving.
#[derive(Debug, Clone, Default)]
pub struct CentroidStore {
    centroids: Vec<Centroid>,
    alias: HashMap<u32, u32>,
    next_label: u32,
}

impl CentroidStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of live centroids.
    pub fn live_count(&self) -> usize {
        self.centroids.iter().filter(|c| c.live).count()
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn total_usage(&self) -> u64 {
        self.centroids.iter().filter(|c| c.live).map(|c| c.usage).sum()
    }

    /// Follow the alias map to the live label, if any. Aliases are kept
    /// one-hop by construction.
    pub fn resolve(&self, label: SpeakerLabel) -> Result<SpeakerLabel, BufferError> {
        let target = SpeakerLabel(*self.alias.get(&label.0).unwrap_or(&label.0));
        match self.find_live(target) {
            Some(_) => Ok(target),
            None => Err(BufferError::UnknownLabel(label)),
        }
    }

    fn find_live(&self, label: SpeakerLabel) -> Option<usize> {
        self.centroids.iter().position(|c| c.live && c.label == label)
    }

    /// Initialise a new centroid directly from one embedding; returns the
    /// fresh label.
    pub fn new_centroid(&mut self, e: &EmbeddingVector) -> SpeakerLabel {
        self.push_centroid(e.values().to_vec(), 1, 1)
    }

    /// Initialise a centroid from an already-averaged cluster of `count`
    /// embeddings (initial clustering phase).
    pub fn new_centroid_from_cluster(&mut self, mean: Vec<f64>, count: u64) -> SpeakerLabel {
        self.push_centroid(mean, count, count)
    }

    fn push_centroid(&mut self, mean: Vec<f64>, usage: u64, weight: u64) -> SpeakerLabel {
        let label = SpeakerLabel(self.next_label);
        self.next_label += 1;
        self.centroids.push(Centroid { label, mean, usage, weight, live: true });
        label
    }

    /// Fold one embedding into the centroid's running mean and bump usage.
    pub fn assign(&mut self, label: SpeakerLabel, e: &EmbeddingVector) -> Result<(), BufferError> {
        let live = self.resolve(label)?;
        let idx = self.find_live(live).expect("resolved label is live");
        let c = &self.centroids[idx];
        if c.mean.len() != e.dim() {
            return Err(BufferError::DimensionMismatch { expected: c.mean.len(), got: e.dim() });
        }
        let merged =
            geometry::weighted_mean(&[&c.mean, e.values()], &[c.weight as f64, 1.0])?;
        let c = &mut self.centroids[idx];
        c.mean = merged;
        c.weight += 1;
        c.usage += 1;
        Ok(())
    }

    /// Merge two live centroids. The survivor is the one with larger usage
    /// (ties to the smaller label); the loser's label is retired into the
    /// alias map. Returns the surviving label.
    pub fn merge(&mut self, a: SpeakerLabel, b: SpeakerLabel) -> Result<SpeakerLabel, BufferError> {
        if a == b {
            return Err(BufferError::SelfMerge(a));
        }
        let ia = self.find_live(a).ok_or(BufferError::UnknownLabel(a))?;
        let ib = self.find_live(b).ok_or(BufferError::UnknownLabel(b))?;
        let (win, lose) = {
            let (ca, cb) = (&self.centroids[ia], &self.centroids[ib]);
            if ca.usage > cb.usage || (ca.usage == cb.usage && ca.label < cb.label) {
                (ia, ib)
            } else {
                (ib, ia)
            }
        };
        let merged = geometry::weighted_mean(
            &[&self.centroids[win].mean, &self.centroids[lose].mean],
            &[self.centroids[win].weight as f64, self.centroids[lose].weight as f64],
        )?;
        let merged = if merged.iter().map(|x| x * x).sum::<f64>().sqrt() == 0.0 {
            self.centroids[win].mean.clone()
        } else {
            merged
        };
        let survivor = self.centroids[win].label;
        let loser = self.centroids[lose].label;
        let (lose_usage, lose_weight) = (self.centroids[lose].usage, self.centroids[lose].weight);
        {
            let c = &mut self.centroids[win];
            c.mean = merged;
            c.usage += lose_usage;
            c.weight += lose_weight;
        }
        self.centroids[lose].live = false;
        // Re-point existing aliases of the loser so resolution stays one-hop.
        for target in self.alias.values_mut() {
            if *target == loser.0 {
                *target = survivor.0;
            }
        }
        self.alias.insert(loser.0, survivor.0);
        Ok(survivor)
    }

    /// Live centroid labels and unit-norm mean vectors, ordered by label.
    pub fn live_vectors(&self) -> (Vec<SpeakerLabel>, Vec<EmbeddingVector>) {
        let mut live: Vec<&Centroid> = self.centroids.iter().filter(|c| c.live).collect();
        live.sort_by_key(|c| c.label);
        let mut labels = Vec::with_capacity(live.len());
        let mut vectors = Vec::with_capacity(live.len());
        for c in live {
            if let Ok(v) = EmbeddingVector::new(c.mean.clone()) {
                labels.push(c.label);
                vectors.push(v);
            }
        }
        (labels, vectors)
    }

    pub fn usage_of(&self, label: SpeakerLabel) -> Option<u64> {
        self.find_live(label).map(|i| self.centroids[i].usage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(raw: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(raw.to_vec()).unwrap()
    }

    #[test]
    fn add_below_capacity_is_plain_append() {
        let mut buf = CheckpointBuffer::new(3, 2);
        buf.add(&ev(&[1.0, 0.0])).unwrap();
        buf.add(&ev(&[0.0, 1.0])).unwrap();
        assert_eq!(buf.len(), 2);
        assert_eq!(buf.entries()[0].weight(), 1);
    }

    #[test]
    fn add_at_capacity_merges_closest_pair() {
        // {A, A', B} with the two A's closest: they merge to weight 2, then
        // the new embedding appends, size stays 3.
        let mut buf = CheckpointBuffer::new(3, 2);
        let a = ev(&[1.0, 0.0]);
        let a2 = ev(&[0.999, 0.0447]);
        let b = ev(&[0.0, 1.0]);
        buf.add(&a).unwrap();
        buf.add(&a2).unwrap();
        buf.add(&b).unwrap();
        buf.add(&ev(&[0.5, 0.5])).unwrap();
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.entries()[0].weight(), 2);
        assert_eq!(buf.total_weight(), 4);
        // Merged mean is the average of the two A's.
        let m = buf.entries()[0].mean();
        assert!((m[0] - (1.0 + 0.999) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_identical_adds_accumulate_weight() {
        let mut buf = CheckpointBuffer::new(2, 2);
        let v = ev(&[0.6, 0.8]);
        for _ in 0..5 {
            buf.add(&v).unwrap();
        }
        assert_eq!(buf.len(), 2);
        assert_eq!(buf.total_weight(), 5);
        for e in buf.entries() {
            assert!((e.mean()[0] - 0.6).abs() < 1e-12);
            assert!((e.mean()[1] - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn add_rejects_dimension_mismatch() {
        let mut buf = CheckpointBuffer::new(2, 3);
        assert!(matches!(
            buf.add(&ev(&[1.0, 0.0])),
            Err(BufferError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn snapshot_contract() {
        let mut buf = CheckpointBuffer::new(4, 2);
        assert!(buf.snapshot().is_empty());
        buf.add(&ev(&[3.0, 4.0])).unwrap();
        let snap = buf.snapshot();
        assert_eq!(snap.len(), 1);
        assert!((snap[0].values()[0] - 0.6).abs() < 1e-12);
        // Weighted entries project to plain unit vectors.
        buf.add(&ev(&[0.0, 1.0])).unwrap();
        buf.add(&ev(&[0.0, 1.0])).unwrap();
        let snap = buf.snapshot();
        assert_eq!(snap.len(), 3);
        assert_eq!(buf.degenerate_skips(), 0);
    }

    #[test]
    fn new_centroid_labels_are_sequential() {
        let mut store = CentroidStore::new();
        assert_eq!(store.new_centroid(&ev(&[1.0, 0.0])), SpeakerLabel(0));
        assert_eq!(store.new_centroid(&ev(&[0.0, 1.0])), SpeakerLabel(1));
        assert_eq!(store.new_centroid(&ev(&[0.5, 0.5])), SpeakerLabel(2));
    }

    #[test]
    fn labels_never_reused_after_merge() {
        let mut store = CentroidStore::new();
        let a = store.new_centroid(&ev(&[1.0, 0.0]));
        let b = store.new_centroid(&ev(&[0.9, 0.1]));
        store.merge(a, b).unwrap();
        assert_eq!(store.live_count(), 1);
        // Next fresh label is still max+1, never a recycled 1.
        assert_eq!(store.new_centroid(&ev(&[0.0, 1.0])), SpeakerLabel(2));
    }

    #[test]
    fn assign_updates_running_mean_and_usage() {
        let mut store = CentroidStore::new();
        let l = store.new_centroid(&ev(&[1.0, 0.0]));
        store.assign(l, &ev(&[0.0, 1.0])).unwrap();
        let c = &store.centroids()[0];
        assert_eq!(c.usage(), 2);
        assert!((c.mean()[0] - 0.5).abs() < 1e-12);
        assert!((c.mean()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn assign_via_retired_alias_updates_survivor() {
        let mut store = CentroidStore::new();
        let a = store.new_centroid(&ev(&[1.0, 0.0]));
        let b = store.new_centroid(&ev(&[0.9, 0.1]));
        store.assign(a, &ev(&[1.0, 0.0])).unwrap(); // usage(a)=2 > usage(b)=1
        let survivor = store.merge(a, b).unwrap();
        assert_eq!(survivor, a);
        store.assign(b, &ev(&[0.0, 1.0])).unwrap();
        assert_eq!(store.usage_of(a), Some(4));
    }

    #[test]
    fn merge_survivor_rules() {
        // Usage dominance.
        let mut store = CentroidStore::new();
        let a = store.new_centroid(&ev(&[1.0, 0.0]));
        let b = store.new_centroid(&ev(&[0.0, 1.0]));
        for _ in 0..9 {
            store.assign(a, &ev(&[1.0, 0.0])).unwrap();
        }
        store.assign(b, &ev(&[0.0, 1.0])).unwrap();
        assert_eq!(store.merge(b, a).unwrap(), a);
        assert_eq!(store.usage_of(a), Some(12));

        // Equal usage ties to the smaller label.
        let mut store = CentroidStore::new();
        let _ = store.new_centroid(&ev(&[1.0, 0.0]));
        let l1 = store.new_centroid(&ev(&[0.5, 0.5]));
        let _ = store.new_centroid(&ev(&[0.2, 0.8]));
        let l3 = store.new_centroid(&ev(&[0.0, 1.0]));
        assert_eq!(store.merge(l3, l1).unwrap(), l1);
    }

    #[test]
    fn merge_mean_of_equal_weights_is_midpoint() {
        let mut store = CentroidStore::new();
        let a = store.new_centroid(&ev(&[1.0, 0.0]));
        let b = store.new_centroid(&ev(&[0.0, 1.0]));
        let s = store.merge(a, b).unwrap();
        let idx = store.centroids().iter().position(|c| c.label() == s).unwrap();
        assert_eq!(store.centroids()[idx].mean(), &[0.5, 0.5]);
    }

    #[test]
    fn merge_rejects_self_and_dead_labels() {
        let mut store = CentroidStore::new();
        let a = store.new_centroid(&ev(&[1.0, 0.0]));
        let b = store.new_centroid(&ev(&[0.0, 1.0]));
        assert!(matches!(store.merge(a, a), Err(BufferError::SelfMerge(_))));
        store.merge(a, b).unwrap();
        assert!(matches!(store.merge(a, b), Err(BufferError::UnknownLabel(_))));
    }

    #[test]
    fn live_vectors_excludes_retired_and_normalizes() {
        let mut store = CentroidStore::new();
        let a = store.new_centroid(&ev(&[1.0, 0.0]));
        let b = store.new_centroid(&ev(&[0.8, 0.6]));
        let c = store.new_centroid(&ev(&[0.0, 1.0]));
        store.assign(a, &ev(&[1.0, 0.0])).unwrap();
        store.merge(a, b).unwrap();
        let (labels, vectors) = store.live_vectors();
        assert_eq!(labels, vec![a, c]);
        for v in &vectors {
            let n: f64 = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_store_has_no_live_vectors() {
        let store = CentroidStore::new();
        let (labels, vectors) = store.live_vectors();
        assert!(labels.is_empty() && vectors.is_empty());
    }
}
