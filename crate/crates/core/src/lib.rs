//! Roundtrip-consistent synthetic question-answering data generation.
//!
//! Three small transformer models are trained from scratch on the tape in
//! [`autodiff`]: an answer extractor `p(a|c)`, a question generator
//! `p(q|a,c)` and a question answerer `p(a|q,c)`. The pipeline samples
//! answers from unlabeled windows, generates questions, re-answers them and
//! keeps only the triples whose answers agree.

pub mod autodiff;
pub mod corpus;
pub mod encoder;
mod error;
pub mod experiment;
pub mod pipeline;
pub mod qgen;
pub mod span;
pub mod training;

pub use error::{Error, Result};
