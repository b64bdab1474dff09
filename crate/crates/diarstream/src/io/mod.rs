//! File formats and stream tooling: the binary embedding-stream format,
//! RTTM read/write, oracle-endpoint window planning, and the synthetic
//! session generator.

mod rttm;
mod stream;
mod synthetic;
mod windows;

pub use rttm::{read_rttm, read_rttm_from, write_rttm, write_rttm_to, RttmError};
pub use stream::{EmbeddingStream, StreamError, StreamRecord};
pub use synthetic::{generate_synthetic, SynthError, Synthetic, SyntheticSpec};
pub use windows::{plan_windows, segments_from_labels};
