//! Event-keyed random number generation for counterfactual simulation.
//!
//! Every stochastic draw in a model is addressed by a stable [`EventId`]
//! and evaluated as a pure function of `(world seed, event id)` through a
//! Philox4x32-10 counter-based generator. Two runs of the same world under
//! different interventions then share the noise of every event they have in
//! common, no matter how differently their control flow unfolded.
//!
//! The crate also ships the reference micro-models in both a conventional
//! stateful-generator form and an event-keyed form, the paired-replicate
//! harness and estimators, and the experiments that compare the two.

#![forbid(unsafe_code)]

pub mod analysis;
pub mod cbrng;
pub mod config;
pub mod counterfactual;
mod error;
pub mod eventkey;
pub mod models;
pub mod report;

pub use cbrng::{philox_block, sample_fixed, to_unit_uniform, Counter128, Distribution, Key128, UnitUniform};
pub use error::{Error, Result};
pub use eventkey::{
    child_id, event_key, event_uniform, founder_id, serialize_event, AgentId, EventId, EventLedger, WorldSeed,
};
pub use models::{Mode, ModelSpec, RunOptions, RunOutcome, Scenario};
