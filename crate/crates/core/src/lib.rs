//! Desk-scale benchmark components for personalized preference learning.
//!
//! The crate is split along the pipeline stages:
//!
//! - [`data`] — comparison records, datasets, splits, and triple grouping
//! - [`synthgen`] — synthetic annotator populations with controllable
//!   disagreement, consistency, and minority structure
//! - [`characterize`] — dataset metrics: divergence, MV-ACC, minority users,
//!   consistency, room for personalization
//! - [`engine`] — parameter containers, Bradley-Terry losses, a small
//!   stochastic optimizer, and finite-difference gradient verification
//! - [`models`] — the preference-learning method families (vanilla,
//!   individual, conditional, user-embedding, variational, in-context
//!   meta-learned, retrieval vote) plus cold-start baselines
//! - [`eval`] — evaluation protocols: per-user accuracy, new-user
//!   adaptation curves, probe sets, and the personalization-tax probe
//!
//! Everything here is `no_std + alloc`; file formats and the CLI live in the
//! companion `prefbench` crate. All randomness is caller-seeded and every
//! operation is a pure function of its inputs and seed.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod characterize;
pub mod data;
pub mod engine;
pub mod eval;
pub mod models;
pub mod num;
pub mod rng;
pub mod synthgen;

pub use data::{ComparisonRecord, DatasetSplit, Embedding, PreferenceDataset, SplitMode, UserId};
pub use synthgen::{Archetype, GenMode, GeneratorConfig, UserProfile};
