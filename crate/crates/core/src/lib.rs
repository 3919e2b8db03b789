//! Decoupled-reward post-training for generic text rewriting.
//!
//! The pipeline runs on three synthetic rewrite task families (factuality,
//! stylistic, conversational):
//!
//! 1. [`corpus`] generates instances with exactly computable gold revisions.
//! 2. [`policy`] trains a softmax edit policy by behavior cloning (SFT); the
//!    result is frozen as the reference policy.
//! 3. [`reward`] builds best/worst preference pairs from SFT samples and fits
//!    Bradley-Terry reward models for agreement and coherence. Conciseness is
//!    a rule-based negative edit ratio.
//! 4. [`rl`] fine-tunes the policy with clipped PPO against the task-weighted
//!    sum of the three rewards, with a KL penalty toward the reference.
//! 5. [`eval`] rolls policies out on held-out instances and scores them with
//!    the programmatic [`judge`]s.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod judge;
pub mod pipeline;
pub mod policy;
pub mod reward;
pub mod rl;
pub mod seed;
pub mod textops;

pub use error::{Error, Result};
