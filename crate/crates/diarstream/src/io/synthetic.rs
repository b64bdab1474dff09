//! Deterministic synthetic session generator: speaker directions on the
//! unit sphere, an exponential turn sequence, and per-window noisy
//! embeddings, plus the matching reference annotation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use thiserror::Error;

use crate::io::stream::{EmbeddingStream, StreamRecord};
use crate::io::windows::plan_windows;
use crate::scoring::Annotation;

const DIRECTION_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
    #[error(
        "could not sample {n_speakers} directions with pairwise similarity <= {max_sim} \
         in {DIRECTION_ATTEMPTS} attempts"
    )]
    Infeasible { n_speakers: usize, max_sim: f64 },
    #[error("unknown key '{0}' in spec file")]
    UnknownKey(String),
    #[error("cannot parse value for key '{key}': '{value}'")]
    BadValue { key: String, value: String },
}

/// Parameters of a synthetic session.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_speakers: usize,
    /// Session length in seconds.
    pub duration: f64,
    pub dim: usize,
    /// Per-component Gaussian noise added to the speaker direction.
    pub noise_sigma: f64,
    /// Maximum allowed pairwise cosine similarity between speaker directions.
    pub max_speaker_sim: f64,
    /// Mean turn length in seconds (exponential).
    pub turn_mean: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_speakers: 3,
            duration: 600.0,
            dim: 256,
            noise_sigma: 0.05,
            max_speaker_sim: 0.3,
            turn_mean: 4.0,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_speakers < 1 {
            return Err(SynthError::Invalid("n_speakers must be at least 1".into()));
        }
        if !(self.duration > 0.0) {
            return Err(SynthError::Invalid("duration must be positive".into()));
        }
        if self.dim < 1 {
            return Err(SynthError::Invalid("dim must be positive".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(SynthError::Invalid("noise_sigma must be non-negative".into()));
        }
        if !(-1.0..=1.0).contains(&self.max_speaker_sim) {
            return Err(SynthError::Invalid("max_speaker_sim must lie in [-1, 1]".into()));
        }
        if !(self.turn_mean > 0.0) {
            return Err(SynthError::Invalid("turn_mean must be positive".into()));
        }
        Ok(())
    }

    /// Apply `key=value` lines (as accepted in a spec file) on top of the
    /// current values. Blank lines and lines starting with '#' are skipped.
    pub fn apply_key_values(&mut self, text: &str) -> Result<(), SynthError> {
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SynthError::BadValue { key: line.to_string(), value: String::new() }
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || SynthError::BadValue { key: key.to_string(), value: value.to_string() };
            match key {
                "speakers" => self.n_speakers = value.parse().map_err(|_| bad())?,
                "duration" => self.duration = value.parse().map_err(|_| bad())?,
                "dim" => self.dim = value.parse().map_err(|_| bad())?,
                "noise_sigma" => self.noise_sigma = value.parse().map_err(|_| bad())?,
                "max_speaker_sim" => self.max_speaker_sim = value.parse().map_err(|_| bad())?,
                "turn_mean" => self.turn_mean = value.parse().map_err(|_| bad())?,
                "seed" => self.seed = value.parse().map_err(|_| bad())?,
                other => return Err(SynthError::UnknownKey(other.to_string())),
            }
        }
        Ok(())
    }
}

/// A generated session: the embedding stream and its reference annotation.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub stream: EmbeddingStream,
    pub reference: Annotation,
    /// The sampled unit speaker directions, for tests and diagnostics.
    pub directions: Vec<Vec<f64>>,
}

fn sample_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn sample_directions(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
) -> Result<Vec<Vec<f64>>, SynthError> {
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(spec.n_speakers);
    let mut attempts = 0usize;
    while directions.len() < spec.n_speakers {
        attempts += 1;
        if attempts > DIRECTION_ATTEMPTS {
            return Err(SynthError::Infeasible {
                n_speakers: spec.n_speakers,
                max_sim: spec.max_speaker_sim,
            });
        }
        let candidate = sample_unit(rng, spec.dim);
        let ok = directions.iter().all(|d| {
            let sim: f64 = d.iter().zip(&candidate).map(|(a, b)| a * b).sum();
            sim <= spec.max_speaker_sim
        });
        if ok {
            directions.push(candidate);
        }
    }
    Ok(directions)
}

/// Generate a synthetic session. Fully deterministic given the spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let directions = sample_directions(&mut rng, spec)?;

    // Turn sequence: exponential lengths, uniformly random next speaker
    // different from the current one.
    let exp = Exp::new(1.0 / spec.turn_mean).expect("positive turn mean");
    let mut turns: Vec<(f64, f64, usize)> = Vec::new();
    let mut t = 0.0f64;
    let mut speaker = rng.random_range(0..spec.n_speakers);
    while t < spec.duration {
        let len: f64 = rng.sample(exp);
        let end = (t + len).min(spec.duration);
        if end > t {
            turns.push((t, end, speaker));
        }
        t = end;
        if spec.n_speakers > 1 {
            let step = rng.random_range(1..spec.n_speakers);
            speaker = (speaker + step) % spec.n_speakers;
        }
    }

    let mut reference = Annotation::new("synthetic");
    let mut records = Vec::new();
    for &(start, end, spk) in &turns {
        reference.push(start, end - start, format!("spk{spk}")).expect("positive turn");
        let mut region = Annotation::new("turn");
        region.push(start, end - start, "speech").expect("positive turn");
        for (ws, we) in plan_windows(&region, 1.5, 0.5) {
            let raw: Vec<f64> = directions[spk]
                .iter()
                .map(|&d| d + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let values: Vec<f32> = if norm > 0.0 {
                raw.iter().map(|&x| (x / norm) as f32).collect()
            } else {
                directions[spk].iter().map(|&x| x as f32).collect()
            };
            records.push(StreamRecord { start: ws, end: we, values });
        }
    }

    Ok(Synthetic {
        stream: EmbeddingStream { dim: spec.dim, records },
        reference,
        directions,
    })
}
