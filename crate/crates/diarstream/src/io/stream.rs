//! The embedding-stream file format: a human-inspectable text header
//! followed by a compact binary body.
//!
//! Layout:
//!   magic      b"SDEB1\n"
//!   dimension  decimal text line
//!   count      decimal text line
//!   records    count x (start: f64 LE, end: f64 LE, dimension x f32 LE)
//!
//! Records must be time-ordered by start. Files round-trip bit-exactly.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::types::{EmbeddingVector, TimedEmbedding, TypeError};

const MAGIC: &[u8; 6] = b"SDEB1\n";

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes; not an embedding stream file")]
    BadMagic,
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("record {index}: truncated body")]
    Truncated { index: usize },
    #[error("record {index}: start {got} precedes previous start {prev}")]
    OutOfOrder { index: usize, prev: f64, got: f64 },
    #[error("record {index}: {source}")]
    BadRecord { index: usize, source: TypeError },
    #[error("trailing bytes after {count} records")]
    TrailingBytes { count: usize },
}

/// One stream record exactly as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamRecord {
    pub start: f64,
    pub end: f64,
    pub values: Vec<f32>,
}

/// An in-memory embedding stream file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStream {
    pub dim: usize,
    pub records: Vec<StreamRecord>,
}

impl EmbeddingStream {
    pub fn new(dim: usize) -> Self {
        Self { dim, records: Vec::new() }
    }

    /// Total audio span covered by the stream (last end minus first start).
    pub fn audio_span(&self) -> f64 {
        match (self.records.first(), self.records.last()) {
            (Some(first), Some(last)) => last.end - first.start,
            _ => 0.0,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), StreamError> {
        w.write_all(MAGIC)?;
        writeln!(w, "{}", self.dim)?;
        writeln!(w, "{}", self.records.len())?;
        for r in &self.records {
            w.write_all(&r.start.to_le_bytes())?;
            w.write_all(&r.end.to_le_bytes())?;
            for v in &r.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<(), StreamError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, StreamError> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(|_| StreamError::BadMagic)?;
        if &magic != MAGIC {
            return Err(StreamError::BadMagic);
        }
        let dim = read_decimal_line(&mut r, "dimension")?;
        let count = read_decimal_line(&mut r, "count")?;
        if dim == 0 {
            return Err(StreamError::BadHeader("dimension must be positive".into()));
        }
        let mut records = Vec::with_capacity(count);
        let mut body = vec![0u8; 16 + 4 * dim];
        let mut prev_start = f64::NEG_INFINITY;
        for index in 0..count {
            if let Err(e) = r.read_exact(&mut body) {
                return if e.kind() == io::ErrorKind::UnexpectedEof {
                    Err(StreamError::Truncated { index })
                } else {
                    Err(StreamError::Io(e))
                };
            }
            let start = f64::from_le_bytes(body[0..8].try_into().unwrap());
            let end = f64::from_le_bytes(body[8..16].try_into().unwrap());
            if start < prev_start {
                return Err(StreamError::OutOfOrder { index, prev: prev_start, got: start });
            }
            prev_start = start;
            let values: Vec<f32> = body[16..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            records.push(StreamRecord { start, end, values });
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(StreamError::TrailingBytes { count });
        }
        Ok(Self { dim, records })
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self, StreamError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Convert records into normalized timed embeddings, reporting the
    /// offending record index on failure.
    pub fn timed_embeddings(&self) -> Result<Vec<TimedEmbedding>, StreamError> {
        self.records
            .iter()
            .enumerate()
            .map(|(index, r)| {
                let raw: Vec<f64> = r.values.iter().map(|&v| v as f64).collect();
                let embedding = EmbeddingVector::new(raw)
                    .map_err(|source| StreamError::BadRecord { index, source })?;
                TimedEmbedding::new(embedding, r.start, r.end)
                    .map_err(|source| StreamError::BadRecord { index, source })
            })
            .collect()
    }
}

fn read_decimal_line(r: &mut impl Read, what: &str) -> Result<usize, StreamError> {
    let mut line = Vec::with_capacity(16);
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(StreamError::BadHeader(format!("unexpected end of file in {what} line")));
        }
        if byte[0] == b'\n' {
            break;
        }
        if line.len() > 20 {
            return Err(StreamError::BadHeader(format!("{what} line too long")));
        }
        line.push(byte[0]);
    }
    std::str::from_utf8(&line)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .ok_or_else(|| StreamError::BadHeader(format!("{what} line is not a decimal integer")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingStream {
        EmbeddingStream {
            dim: 3,
            records: vec![
                StreamRecord { start: 0.0, end: 1.5, values: vec![1.0, 0.0, 0.0] },
                StreamRecord { start: 0.5, end: 2.0, values: vec![0.0, 0.70710678, 0.70710678] },
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let stream = sample();
        let mut bytes = Vec::new();
        stream.write_to(&mut bytes).unwrap();
        let back = EmbeddingStream::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, stream);
        let mut bytes2 = Vec::new();
        back.write_to(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn header_is_text() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        assert!(bytes.starts_with(b"SDEB1\n3\n2\n"));
    }

    #[test]
    fn empty_stream_round_trips() {
        let stream = EmbeddingStream::new(8);
        let mut bytes = Vec::new();
        stream.write_to(&mut bytes).unwrap();
        let back = EmbeddingStream::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.records.len(), 0);
        assert_eq!(back.dim, 8);
        assert_eq!(back.audio_span(), 0.0);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(
            EmbeddingStream::read_from(&b"NOPE1\n3\n0\n"[..]),
            Err(StreamError::BadMagic)
        ));
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            EmbeddingStream::read_from(bytes.as_slice()),
            Err(StreamError::Truncated { index: 1 })
        ));
    }

    #[test]
    fn rejects_out_of_order_records() {
        let stream = EmbeddingStream {
            dim: 1,
            records: vec![
                StreamRecord { start: 2.0, end: 3.0, values: vec![1.0] },
                StreamRecord { start: 1.0, end: 2.5, values: vec![1.0] },
            ],
        };
        let mut bytes = Vec::new();
        stream.write_to(&mut bytes).unwrap();
        assert!(matches!(
            EmbeddingStream::read_from(bytes.as_slice()),
            Err(StreamError::OutOfOrder { index: 1, .. })
        ));
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        bytes.push(0xFF);
        assert!(matches!(
            EmbeddingStream::read_from(bytes.as_slice()),
            Err(StreamError::TrailingBytes { count: 2 })
        ));
    }

    #[test]
    fn timed_embeddings_normalize_and_report_position() {
        let stream = EmbeddingStream {
            dim: 2,
            records: vec![
                StreamRecord { start: 0.0, end: 1.5, values: vec![3.0, 4.0] },
                StreamRecord { start: 0.5, end: 2.0, values: vec![0.0, 0.0] },
            ],
        };
        let err = stream.timed_embeddings().unwrap_err();
        assert!(matches!(err, StreamError::BadRecord { index: 1, .. }));

        let ok = EmbeddingStream { records: stream.records[..1].to_vec(), ..stream };
        let tes = ok.timed_embeddings().unwrap();
        assert!((tes[0].embedding.values()[0] - 0.6).abs() < 1e-7);
    }
}
