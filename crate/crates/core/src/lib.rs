//! Learned sentence-ordering rewards for long-form generation.
//!
//! The crate trains two ordering "teachers" on gold documents, pretrains a
//! title/ingredient-conditioned recipe generator, fine-tunes it with
//! self-critical policy gradients using teacher rewards with per-sentence
//! credit, and scores outputs with word/action/state-change overlap metrics.

pub mod adam;
pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod gru;
pub mod policy;
pub mod seeding;
pub mod tape;
pub mod teacher;
pub mod tensor;

pub use error::{Error, Result};
