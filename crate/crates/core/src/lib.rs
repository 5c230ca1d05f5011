//! Remaining-useful-life prediction for hard disk drives from daily
//! S.M.A.R.T. logs.
//!
//! The pipeline runs: [`ingest`] Backblaze CSVs into a partitioned store,
//! [`preprocess`] each drive into a gap-free labeled history, rank attributes
//! with gradient-boosted trees in [`featsel`], cut sliding windows in
//! [`dataset`], train the encoder-decoder LSTM in [`seqnet`], and score it with
//! [`eval`]. [`synth`] generates fleets with known failure times for testing.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod featsel;
pub mod ingest;
pub mod preprocess;
pub mod seqnet;
pub mod synth;
pub mod tensor;

pub use error::{Error, ErrorCategory, Result};
