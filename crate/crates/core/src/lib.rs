//! Learning to generate confusing multiple-choice distractors.
//!
//! A policy network over image and question features picks wrong answers from
//! a closed pool and is trained with REINFORCE against a frozen triplet
//! scorer. The crate also contains the comparison generators, the attack and
//! augmentation experiments, and the `distractor` command-line tool.

pub mod agent;
pub mod baselines;
#[cfg(feature = "cli")]
pub mod cli;
pub mod dataset;
pub mod environment;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod reinforce;
pub mod rng;

pub use error::{Error, Result};
pub use rng::Rng;
