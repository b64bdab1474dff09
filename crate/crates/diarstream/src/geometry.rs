//! Dense vector operations over cosine geometry: similarity, distance,
//! pairwise distance matrices, and weighted means.
//!
//! All functions accept raw slices so callers can pass both unit-norm
//! embeddings and the unnormalized running means kept by the buffers;
//! cosine operations tolerate any nonzero scale.

use thiserror::Error;

use crate::types::EmbeddingVector;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("empty input")]
    EmptyInput,
    #[error("weight {value} at index {index} is not positive")]
    InvalidWeight { index: usize, value: f64 },
    #[error("matrix is not a valid distance matrix: {0}")]
    InvalidMatrix(String),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity in [-1, 1], clamped against floating-point overshoot.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
    if a.len() != b.len() {
        return Err(GeometryError::DimensionMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(GeometryError::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine distance in [0, 2].
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

/// A symmetric matrix of pairwise cosine distances with zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    const SYMMETRY_TOL: f64 = 1e-9;

    /// Validate and wrap a dense row-major n x n matrix.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self, GeometryError> {
        if n == 0 {
            return Err(GeometryError::EmptyInput);
        }
        if entries.len() != n * n {
            return Err(GeometryError::InvalidMatrix(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        for i in 0..n {
            let d = entries[i * n + i];
            if d != 0.0 {
                return Err(GeometryError::InvalidMatrix(format!(
                    "diagonal entry ({i},{i}) is {d}, expected 0"
                )));
            }
            for j in (i + 1)..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if (a - b).abs() > Self::SYMMETRY_TOL {
                    return Err(GeometryError::InvalidMatrix(format!(
                        "asymmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                if !(0.0..=2.0).contains(&a) {
                    return Err(GeometryError::InvalidMatrix(format!(
                        "entry ({i},{j}) = {a} outside [0, 2]"
                    )));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }
}

/// Pairwise cosine distances for a sequence of embeddings.
pub fn pairwise_distances(embs: &[EmbeddingVector]) -> Result<DistanceMatrix, GeometryError> {
    if embs.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let n = embs.len();
    let dim = embs[0].dim();
    for e in embs {
        if e.dim() != dim {
            return Err(GeometryError::DimensionMismatch { left: dim, right: e.dim() });
        }
    }
    // Embeddings are unit-norm by construction, but norms are still folded in
    // so entries stay exact for near-unit inputs.
    let norms: Vec<f64> = embs.iter().map(|e| norm(e.values())).collect();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let sim =
                (dot(embs[i].values(), embs[j].values()) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            let d = 1.0 - sim;
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, entries })
}

/// Weighted componentwise mean. The result is intentionally not renormalized:
/// cosine distance is scale-invariant and the buffers rely on exact
/// running-mean semantics under repeated merging.
pub fn weighted_mean(vectors: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>, GeometryError> {
    if vectors.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    if vectors.len() != weights.len() {
        return Err(GeometryError::DimensionMismatch {
            left: vectors.len(),
            right: weights.len(),
        });
    }
    let dim = vectors[0].len();
    for v in vectors {
        if v.len() != dim {
            return Err(GeometryError::DimensionMismatch { left: dim, right: v.len() });
        }
    }
    for (index, &w) in weights.iter().enumerate() {
        if !(w > 0.0) || !w.is_finite() {
            return Err(GeometryError::InvalidWeight { index, value: w });
        }
    }
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; dim];
    for (v, &w) in vectors.iter().zip(weights) {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += w * x;
        }
    }
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}
