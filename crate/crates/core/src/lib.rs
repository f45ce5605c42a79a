//! Emotional support conversation (ESC) simulation and training toolkit.
//!
//! The pipeline has four stages, each a module here:
//!
//! 1. [`sim`] — multi-agent dialogue simulation: sample candidate system
//!    responses, roll each forward against a user simulator, have a critic
//!    score the continuation, and emit a future-oriented reward dataset.
//! 2. [`reward`] — the composite reward: a binary thinking-format reward,
//!    a trainable future-oriented scorer, and their weighted combination.
//! 3. [`grpo`] — group relative policy optimization with a clipped
//!    surrogate and KL penalty, exercised on a toy differentiable policy.
//! 4. [`eval`] — the interactive evaluation protocol: success rate,
//!    average turns, threshold sweeps, and category breakdowns.
//!
//! Supporting modules: [`dialogue`] (conversation data model), [`tags`]
//! (the `<think>`/`<response>` output grammar), [`backend`] (chat
//! completion abstraction), [`agents`] (prompt-bound simulation roles),
//! [`store`] (dataset loaders and JSONL persistence), and [`exec`]
//! (data-parallel map with a sequential fallback).

pub mod agents;
pub mod backend;
pub mod dialogue;
pub mod eval;
pub mod exec;
pub mod grpo;
pub mod reward;
pub mod sim;
pub mod store;
pub mod tags;
