//! Diarisation metrics: DER decomposed into false alarm, missed speech, and
//! speaker confusion, with an optional no-score collar around reference
//! boundaries, plus the Jaccard error rate and the optimal reference-to-
//! hypothesis speaker mapping both metrics depend on.
//!
//! All times are carried as integer microseconds internally so region
//! partitioning is exact.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("reference annotation contains no speech")]
    EmptyReference,
    #[error("collar must be non-negative, got {0}")]
    NegativeCollar(f64),
    #[error("segment duration must be positive, got {0}")]
    InvalidDuration(f64),
}

/// One speech segment attributed to a named speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub duration: f64,
    pub speaker: String,
}

/// A set of attributed speech segments; the in-memory form of an RTTM file.
/// Overlapping segments are permitted, including for the same speaker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotation {
    pub recording_id: String,
    segments: Vec<Segment>,
}

impl Annotation {
    pub fn new(recording_id: impl Into<String>) -> Self {
        Self { recording_id: recording_id.into(), segments: Vec::new() }
    }

    pub fn push(
        &mut self,
        start: f64,
        duration: f64,
        speaker: impl Into<String>,
    ) -> Result<(), ScoreError> {
        if !(duration > 0.0) || !duration.is_finite() || !start.is_finite() {
            return Err(ScoreError::InvalidDuration(duration));
        }
        self.segments.push(Segment { start, duration, speaker: speaker.into() });
        Ok(())
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Sorted, deduplicated speaker names.
    pub fn speakers(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.segments.iter().map(|s| s.speaker.as_str()).collect();
        set.into_iter().collect()
    }
}

/// DER and its additive components, as fractions of total reference speaker
/// time. `scored_time` reports the reference speaker time that remained in
/// scope after collar excision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerBreakdown {
    pub der: f64,
    pub fa: f64,
    pub ms: f64,
    pub sc: f64,
    pub scored_time: f64,
}

const US: f64 = 1e6;

fn to_us(seconds: f64) -> i64 {
    (seconds * US).round() as i64
}

/// (start, end, speaker index) in microseconds.
struct IndexedSegments {
    spans: Vec<(i64, i64, usize)>,
    n_speakers: usize,
}

fn index_segments(ann: &Annotation, speakers: &[&str]) -> IndexedSegments {
    let spans = ann
        .segments()
        .iter()
        .map(|s| {
            let idx = speakers.binary_search(&s.speaker.as_str()).expect("indexed speaker");
            (to_us(s.start), to_us(s.start + s.duration), idx)
        })
        .collect();
    IndexedSegments { spans, n_speakers: speakers.len() }
}

/// Sort and merge into disjoint intervals.
fn merge_intervals(mut spans: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    spans.retain(|&(s, e)| e > s);
    spans.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn total_duration(merged: &[(i64, i64)]) -> i64 {
    merged.iter().map(|&(s, e)| e - s).sum()
}

fn intersection_duration(a: &[(i64, i64)], b: &[(i64, i64)]) -> i64 {
    let mut total = 0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

fn contains(merged: &[(i64, i64)], t: i64) -> bool {
    merged
        .binary_search_by(|&(s, e)| {
            if t < s {
                std::cmp::Ordering::Greater
            } else if t >= e {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Equal
            }
        })
        .is_ok()
}

/// Atomic time regions induced by all segment boundaries plus collar edges,
/// each carrying the active reference and hypothesis speaker sets.
struct Region {
    dur: i64,
    excluded: bool,
    ref_active: Vec<bool>,
    hyp_active: Vec<bool>,
}

fn sweep_regions(
    reference: &IndexedSegments,
    hypothesis: &IndexedSegments,
    collar_zones: &[(i64, i64)],
) -> Vec<Region> {
    let mut cuts: BTreeSet<i64> = BTreeSet::new();
    for &(s, e, _) in reference.spans.iter().chain(&hypothesis.spans) {
        cuts.insert(s);
        cuts.insert(e);
    }
    for &(s, e) in collar_zones {
        cuts.insert(s);
        cuts.insert(e);
    }
    let cuts: Vec<i64> = cuts.into_iter().collect();
    let mut regions = Vec::with_capacity(cuts.len().saturating_sub(1));
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = lo + (hi - lo) / 2;
        let mut ref_active = vec![false; reference.n_speakers];
        for &(s, e, idx) in &reference.spans {
            if s <= lo && e >= hi {
                ref_active[idx] = true;
            }
        }
        let mut hyp_active = vec![false; hypothesis.n_speakers];
        for &(s, e, idx) in &hypothesis.spans {
            if s <= lo && e >= hi {
                hyp_active[idx] = true;
            }
        }
        regions.push(Region {
            dur: hi - lo,
            excluded: contains(collar_zones, mid),
            ref_active,
            hyp_active,
        });
    }
    regions
}

/// Overlap duration between each (reference speaker, hypothesis speaker)
/// pair, computed over the whole timeline.
fn overlap_matrix(
    reference: &IndexedSegments,
    hypothesis: &IndexedSegments,
) -> Vec<Vec<i64>> {
    let mut ref_times: Vec<Vec<(i64, i64)>> = vec![Vec::new(); reference.n_speakers];
    for &(s, e, idx) in &reference.spans {
        ref_times[idx].push((s, e));
    }
    let mut hyp_times: Vec<Vec<(i64, i64)>> = vec![Vec::new(); hypothesis.n_speakers];
    for &(s, e, idx) in &hypothesis.spans {
        hyp_times[idx].push((s, e));
    }
    let ref_merged: Vec<_> = ref_times.into_iter().map(merge_intervals).collect();
    let hyp_merged: Vec<_> = hyp_times.into_iter().map(merge_intervals).collect();
    ref_merged
        .iter()
        .map(|r| hyp_merged.iter().map(|h| intersection_duration(r, h)).collect())
        .collect()
}

/// Minimum-cost assignment on a square matrix via the potentials form of the
/// Hungarian algorithm. Returns, for each row, the assigned column.
fn hungarian_min(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    // 1-based arrays with column 0 as the virtual source.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if matched[j] != 0 {
            assignment[matched[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximum-overlap one-to-one assignment on a (possibly rectangular) matrix;
/// returns (row, col) pairs with strictly positive overlap.
fn assign_max_overlap(overlap: &[Vec<i64>]) -> Vec<(usize, usize)> {
    let nr = overlap.len();
    let nh = overlap.first().map_or(0, |r| r.len());
    if nr == 0 || nh == 0 {
        return Vec::new();
    }
    let n = nr.max(nh);
    let cost: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i < nr && j < nh { -overlap[i][j] } else { 0 })
                .collect()
        })
        .collect();
    let assignment = hungarian_min(&cost);
    (0..nr)
        .filter_map(|i| {
            let j = assignment[i];
            (j < nh && overlap[i][j] > 0).then_some((i, j))
        })
        .collect()
}

/// The one-to-one speaker mapping that maximizes total attributed overlap
/// duration. Pairs with zero overlap are left unmapped.
pub fn optimal_mapping(
    reference: &Annotation,
    hypothesis: &Annotation,
) -> Vec<(String, String)> {
    let ref_speakers = reference.speakers();
    let hyp_speakers = hypothesis.speakers();
    let ref_idx = index_segments(reference, &ref_speakers);
    let hyp_idx = index_segments(hypothesis, &hyp_speakers);
    let overlap = overlap_matrix(&ref_idx, &hyp_idx);
    assign_max_overlap(&overlap)
        .into_iter()
        .map(|(i, j)| (ref_speakers[i].to_string(), hyp_speakers[j].to_string()))
        .collect()
}

/// Diarisation error rate with a no-score collar of `collar` seconds total
/// width (collar/2 excised on each side of every reference boundary).
///
/// Per uniform region: MS = max(0, #ref - #hyp), FA = max(0, #hyp - #ref),
/// SC = min(#ref, #hyp) - #correct, each weighted by region duration. The
/// speaker mapping maximizing correctly-attributed time is computed on the
/// full overlap matrix, so components are monotone in the collar. All
/// components are fractions of the total reference speaker time.
pub fn der(
    reference: &Annotation,
    hypothesis: &Annotation,
    collar: f64,
) -> Result<DerBreakdown, ScoreError> {
    if collar < 0.0 || !collar.is_finite() {
        return Err(ScoreError::NegativeCollar(collar));
    }
    if reference.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    let ref_speakers = reference.speakers();
    let hyp_speakers = hypothesis.speakers();
    let ref_idx = index_segments(reference, &ref_speakers);
    let hyp_idx = index_segments(hypothesis, &hyp_speakers);

    let half = to_us(collar / 2.0);
    let collar_zones = if half > 0 {
        let mut zones = Vec::with_capacity(ref_idx.spans.len() * 2);
        for &(s, e, _) in &ref_idx.spans {
            zones.push((s - half, s + half));
            zones.push((e - half, e + half));
        }
        merge_intervals(zones)
    } else {
        Vec::new()
    };

    let mapping = assign_max_overlap(&overlap_matrix(&ref_idx, &hyp_idx));
    let regions = sweep_regions(&ref_idx, &hyp_idx, &collar_zones);

    let mut fa_us = 0i64;
    let mut ms_us = 0i64;
    let mut sc_us = 0i64;
    let mut total_ref_us = 0i64;
    let mut scored_us = 0i64;
    for region in &regions {
        let n_ref = region.ref_active.iter().filter(|&&a| a).count() as i64;
        total_ref_us += n_ref * region.dur;
        if region.excluded {
            continue;
        }
        scored_us += n_ref * region.dur;
        let n_hyp = region.hyp_active.iter().filter(|&&a| a).count() as i64;
        if n_ref == 0 && n_hyp == 0 {
            continue;
        }
        let correct = mapping
            .iter()
            .filter(|&&(r, h)| region.ref_active[r] && region.hyp_active[h])
            .count() as i64;
        ms_us += (n_ref - n_hyp).max(0) * region.dur;
        fa_us += (n_hyp - n_ref).max(0) * region.dur;
        sc_us += (n_ref.min(n_hyp) - correct) * region.dur;
    }
    if total_ref_us == 0 {
        return Err(ScoreError::EmptyReference);
    }
    let denom = total_ref_us as f64;
    let fa = fa_us as f64 / denom;
    let ms = ms_us as f64 / denom;
    let sc = sc_us as f64 / denom;
    Ok(DerBreakdown { der: fa + ms + sc, fa, ms, sc, scored_time: scored_us as f64 / US })
}

/// Jaccard error rate: per reference speaker, 1 - |intersection| / |union|
/// of speaking time against the optimally mapped hypothesis speaker,
/// averaged over reference speakers. Unmapped reference speakers score 1.
pub fn jer(reference: &Annotation, hypothesis: &Annotation) -> Result<f64, ScoreError> {
    if reference.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    let ref_speakers = reference.speakers();
    let hyp_speakers = hypothesis.speakers();
    let ref_idx = index_segments(reference, &ref_speakers);
    let hyp_idx = index_segments(hypothesis, &hyp_speakers);

    let mut ref_times: Vec<Vec<(i64, i64)>> = vec![Vec::new(); ref_speakers.len()];
    for &(s, e, idx) in &ref_idx.spans {
        ref_times[idx].push((s, e));
    }
    let ref_merged: Vec<_> = ref_times.into_iter().map(merge_intervals).collect();
    let mut hyp_times: Vec<Vec<(i64, i64)>> = vec![Vec::new(); hyp_speakers.len()];
    for &(s, e, idx) in &hyp_idx.spans {
        hyp_times[idx].push((s, e));
    }
    let hyp_merged: Vec<_> = hyp_times.into_iter().map(merge_intervals).collect();

    let mapping = assign_max_overlap(&overlap_matrix(&ref_idx, &hyp_idx));
    let mut total = 0.0;
    for (r, merged) in ref_merged.iter().enumerate() {
        let err = match mapping.iter().find(|&&(mr, _)| mr == r) {
            Some(&(_, h)) => {
                let inter = intersection_duration(merged, &hyp_merged[h]);
                let union = total_duration(merged) + total_duration(&hyp_merged[h]) - inter;
                1.0 - inter as f64 / union as f64
            }
            None => 1.0,
        };
        total += err;
    }
    Ok(total / ref_speakers.len() as f64)
}
