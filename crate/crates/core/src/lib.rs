//! Question-answering pipeline for classroom chatbots.
//!
//! Students collect and label questions against instructor-defined intents,
//! expand them by round-trip translation, add keyword policies, train an
//! intent classifier, and answer questions from the recognized intent's
//! context passage.

pub mod dataset;
pub mod text;
pub mod intent;
pub mod policy;
pub mod augmentation;
pub mod clients;
pub mod qa;
pub mod pipeline;
pub mod project;
#[doc(hidden)]
pub mod testing;
