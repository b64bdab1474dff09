//! RTTM read/write. Only 10-field SPEAKER lines are interpreted; other
//! lines are skipped. Times are written with 3 decimal places.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::scoring::Annotation;

#[derive(Debug, Error)]
pub enum RttmError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: expected 10 fields, got {got}")]
    FieldCount { line: usize, got: usize },
    #[error("line {line}: cannot parse {field} value '{value}'")]
    BadNumber { line: usize, field: &'static str, value: String },
    #[error("line {line}: duration {value} must be positive")]
    BadDuration { line: usize, value: f64 },
    #[error("line {line}: recording id '{got}' differs from '{first}'")]
    MixedRecordings { line: usize, first: String, got: String },
}

pub fn read_rttm_from(r: impl BufRead) -> Result<Annotation, RttmError> {
    let mut ann: Option<Annotation> = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0] != "SPEAKER" {
            continue;
        }
        if fields.len() != 10 {
            return Err(RttmError::FieldCount { line: number, got: fields.len() });
        }
        let recording = fields[1];
        let start: f64 = fields[3].parse().map_err(|_| RttmError::BadNumber {
            line: number,
            field: "start",
            value: fields[3].into(),
        })?;
        let duration: f64 = fields[4].parse().map_err(|_| RttmError::BadNumber {
            line: number,
            field: "duration",
            value: fields[4].into(),
        })?;
        if !(duration > 0.0) {
            return Err(RttmError::BadDuration { line: number, value: duration });
        }
        let ann = ann.get_or_insert_with(|| Annotation::new(recording));
        if ann.recording_id != recording {
            return Err(RttmError::MixedRecordings {
                line: number,
                first: ann.recording_id.clone(),
                got: recording.into(),
            });
        }
        ann.push(start, duration, fields[7])
            .map_err(|_| RttmError::BadDuration { line: number, value: duration })?;
    }
    Ok(ann.unwrap_or_else(|| Annotation::new("rec")))
}

pub fn read_rttm(path: impl AsRef<Path>) -> Result<Annotation, RttmError> {
    read_rttm_from(BufReader::new(File::open(path)?))
}

pub fn write_rttm_to(mut w: impl Write, ann: &Annotation) -> Result<(), RttmError> {
    let recording = if ann.recording_id.is_empty() { "rec" } else { &ann.recording_id };
    for seg in ann.segments() {
        writeln!(
            w,
            "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            recording, seg.start, seg.duration, seg.speaker
        )?;
    }
    Ok(())
}

pub fn write_rttm(path: impl AsRef<Path>, ann: &Annotation) -> Result<(), RttmError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_rttm_to(&mut w, ann)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_speaker_line() {
        let ann =
            read_rttm_from("SPEAKER f 1 0.000 10.000 <NA> <NA> spk0 <NA> <NA>\n".as_bytes())
                .unwrap();
        assert_eq!(ann.recording_id, "f");
        assert_eq!(ann.segments().len(), 1);
        assert_eq!(ann.segments()[0].start, 0.0);
        assert_eq!(ann.segments()[0].duration, 10.0);
        assert_eq!(ann.segments()[0].speaker, "spk0");
    }

    #[test]
    fn skips_non_speaker_lines_and_tolerates_whitespace() {
        let text = "\
;; some comment
SPKR-INFO f 1 <NA> <NA> <NA> unknown spk0 <NA>

  SPEAKER   f  1   1.500    2.250  <NA> <NA> alice <NA> <NA>
";
        let ann = read_rttm_from(text.as_bytes()).unwrap();
        assert_eq!(ann.segments().len(), 1);
        assert_eq!(ann.segments()[0].speaker, "alice");
    }

    #[test]
    fn rejects_wrong_field_count_with_line_number() {
        let text = "SPEAKER f 1 0.000 10.000 <NA> <NA> spk0 <NA>\n";
        match read_rttm_from(text.as_bytes()) {
            Err(RttmError::FieldCount { line: 1, got: 9 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_duration_with_line_number() {
        let text = "\
SPEAKER f 1 0.000 1.000 <NA> <NA> a <NA> <NA>
SPEAKER f 1 2.000 -1.000 <NA> <NA> a <NA> <NA>
";
        match read_rttm_from(text.as_bytes()) {
            Err(RttmError::BadDuration { line: 2, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn rejects_mixed_recordings() {
        let text = "\
SPEAKER f 1 0.000 1.000 <NA> <NA> a <NA> <NA>
SPEAKER g 1 2.000 1.000 <NA> <NA> a <NA> <NA>
";
        assert!(matches!(
            read_rttm_from(text.as_bytes()),
            Err(RttmError::MixedRecordings { line: 2, .. })
        ));
    }

    #[test]
    fn write_then_read_reproduces_segments() {
        let mut ann = Annotation::new("session");
        ann.push(0.0, 10.0, "spk0").unwrap();
        ann.push(10.5, 2.25, "spk1").unwrap();
        ann.push(12.75, 0.5, "spk0").unwrap();
        let mut bytes = Vec::new();
        write_rttm_to(&mut bytes, &ann).unwrap();
        let back = read_rttm_from(bytes.as_slice()).unwrap();
        assert_eq!(back, ann);
    }

    #[test]
    fn empty_annotation_writes_empty_file() {
        let ann = Annotation::new("session");
        let mut bytes = Vec::new();
        write_rttm_to(&mut bytes, &ann).unwrap();
        assert!(bytes.is_empty());
    }
}
