//! L1-aware multilingual mispronunciation detection.
//!
//! A CTC phoneme recognizer over a unified multilingual phoneme inventory,
//! optionally conditioned on the speaker's native (L1) and target (L2)
//! language, either through one-hot vectors or through the embedding of an
//! auxiliary language-identification network. Includes the training
//! strategies, a synthetic corpus generator, and the hierarchical
//! mispronunciation-detection evaluation.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the 64-bit variant used by training and the CLI.

pub mod autodiff;
pub mod corpus;
pub mod ctc;
pub mod error;
pub mod eval;
pub mod io;
pub mod networks;
pub mod phonemes;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = autodiff::Tensor<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type ParamStore = autodiff::ParamStore<f64>;
pub type AdamState = autodiff::AdamState<f64>;
