//! Next-POI recommendation with a learned prompt policy.
//!
//! The pipeline turns raw check-ins into a heterogeneous knowledge graph,
//! discovers candidate POIs by sampling relation-path templates, mines one
//! evidence card per candidate, and lets a contextual Thompson Sampling
//! learner decide how each prompt is assembled (rationale cap, path-type
//! mixture, ordering, verbosity). The language model stays frozen behind
//! the [`backend::Backend`] trait; a deterministic simulated oracle makes
//! the whole loop runnable offline.
//!
//! Module map:
//!
//! * [`ingest`] parses check-ins and applies the filtering, segmentation
//!   and chronological split protocol.
//! * [`kg`] builds and queries the typed triple store.
//! * [`discovery`] finds candidates and enumerates evidence paths.
//! * [`evidence`] summarizes paths into rationales and applies the policy.
//! * [`prompt`] renders prompts and validates strict JSON replies.
//! * [`policy`] holds the bandit learner, reward, and episode loop.
//! * [`backend`] provides the HTTP client, the simulated oracle, and the
//!   synthetic world generator.
//! * [`eval`] computes metrics, cohorts, ablations and sensitivity sweeps.
//! * [`config`] and [`cli`] wire everything into the command-line tool.

pub mod backend;
pub mod cli;
pub mod config;
pub mod discovery;
pub mod error;
pub mod eval;
pub mod evidence;
pub mod ingest;
pub mod kg;
pub mod meta;
pub mod policy;
pub mod prompt;
pub mod taxonomy;

pub use error::{Error, Result};
