//! Drift-aware online classifiers for data streams.
//!
//! The building blocks are an ADWIN change detector ([`adwin`]), an
//! incremental Hoeffding tree ([`hoeffding`]) and an adaptive random forest
//! ([`arf`]). On top of them, [`adf`] stacks forests into a deep model with
//! multi-grained scanning and a self-selecting cascade. [`stream`] loads and
//! synthesizes drifting streams, [`eval`] runs prequential evaluations and
//! rank tests, and [`cli`] wires everything into the `driftforest` binary.

pub mod adf;
pub mod adwin;
pub mod arf;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod hoeffding;
pub mod seed;
pub mod stats;
pub mod stream;
pub mod vote;

pub use adf::{AdfConfig, AdfModel};
pub use adwin::Adwin;
pub use arf::{AdaptiveRandomForest, ForestConfig};
pub use error::{Error, Result};
pub use eval::{kappa, run_prequential, ConfusionMatrix, Learner};
pub use hoeffding::{HoeffdingTree, TreeConfig};
pub use stream::{Instance, Shape, Stream, StreamMeta};
