//! Oracle-endpoint window planning and the inverse mapping from labeled
//! windows back to a segment timeline.

use crate::scoring::Annotation;
use crate::types::LabeledSegment;

const US: f64 = 1e6;

fn to_us(seconds: f64) -> i64 {
    (seconds * US).round() as i64
}

fn to_s(us: i64) -> f64 {
    us as f64 / US
}

/// Sliding windows over the speech regions of a speaker-agnostic annotation.
///
/// Windows never cross region boundaries. Within a region of duration above
/// `window_len`, windows start every `shift` seconds while the start lies in
/// the region, clipped to the region end; shorter regions yield one window
/// covering the whole region.
pub fn plan_windows(speech: &Annotation, window_len: f64, shift: f64) -> Vec<(f64, f64)> {
    assert!(shift > 0.0 && window_len >= shift, "need window_len >= shift > 0");
    let mut spans: Vec<(i64, i64)> = speech
        .segments()
        .iter()
        .map(|s| (to_us(s.start), to_us(s.start + s.duration)))
        .collect();
    spans.retain(|&(s, e)| e > s);
    spans.sort_unstable();
    let mut regions: Vec<(i64, i64)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match regions.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => regions.push((s, e)),
        }
    }

    let len = to_us(window_len);
    let shift = to_us(shift);
    let mut windows = Vec::new();
    for (s, e) in regions {
        if e - s <= len {
            windows.push((to_s(s), to_s(e)));
            continue;
        }
        let mut start = s;
        while start < e {
            windows.push((to_s(start), to_s((start + len).min(e))));
            start += shift;
        }
    }
    windows
}

/// Fold labeled windows into an annotation. Adjacent or overlapping windows
/// with the same label merge; where consecutive windows with different
/// labels overlap, the boundary lands at the midpoint of the overlap, so no
/// instant is attributed to two labels.
pub fn segments_from_labels(emitted: &[LabeledSegment], recording_id: &str) -> Annotation {
    let mut ann = Annotation::new(recording_id);
    let mut current: Option<(i64, i64, String)> = None;
    let mut flush = |ann: &mut Annotation, seg: (i64, i64, String)| {
        if seg.1 > seg.0 {
            ann.push(to_s(seg.0), to_s(seg.1 - seg.0), seg.2).expect("positive duration");
        }
    };
    for window in emitted {
        let (s, e) = (to_us(window.start), to_us(window.end));
        let label = window.label.to_string();
        match current.take() {
            None => current = Some((s, e, label)),
            Some((cs, ce, cl)) if cl == label && s <= ce => {
                current = Some((cs, ce.max(e), cl));
            }
            Some(prev) if s >= prev.1 => {
                flush(&mut ann, prev);
                current = Some((s, e, label));
            }
            Some((cs, ce, cl)) => {
                // Different labels overlapping on [s, min(ce, e)).
                let mid = (s + ce.min(e)) / 2;
                flush(&mut ann, (cs, mid, cl));
                current = Some((mid, e.max(ce), label));
            }
        }
    }
    if let Some(last) = current {
        flush(&mut ann, last);
    }
    ann
}
