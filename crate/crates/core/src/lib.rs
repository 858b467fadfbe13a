//! Multi-channel overlapped speech separation.
//!
//! The crate covers the signal chain needed to separate a target talker from
//! a reverberant two-talker mixture recorded on a linear microphone array,
//! and to score the result:
//!
//! - [`signal`]: waveform containers, STFT/iSTFT, WAV I/O
//! - [`room`]: image-source room impulse responses and mixture simulation
//! - [`spatial`]: steering vectors, inter-channel phase differences, angle features
//! - [`masking`]: complex ratio masks (oracle and angle-feature heuristic)
//! - [`beamforming`]: mask-based PSD estimation, MVDR, delay-and-sum, filter-and-sum
//! - [`separation`]: the end-to-end per-utterance pipeline
//! - [`metrics`]: Si-SNR and corpus reports
//! - [`pipeline`]: configuration, manifests and the batch `simulate`/`separate`/`evaluate` drivers
//! - [`tensor`]: the binary tensor interchange format

// Range checks are written as negated comparisons so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod config;
mod error;
pub mod linalg;
pub mod manifest;
pub mod masking;
pub mod metrics;
pub mod pipeline;
pub mod room;
pub mod separation;
pub mod signal;
pub mod spatial;
pub mod tensor;

pub use error::{Error, Result};
pub use num_complex::Complex64;
