//! Evaluation harness for chess move-proposing policies.
//!
//! The crate covers the whole pipeline: a rules core and notation layer,
//! a UCI engine driver, pluggable move policies with sampling-retry and
//! fallback protocols, Elo arithmetic, a game/match arena, FEN to best-move
//! dataset construction, and the evaluation metrics computed over all of it.

pub mod arena;
pub mod dataset;
pub mod engine;
pub mod exec;
pub mod metrics;
pub mod notation;
pub mod policy;
pub mod rating;
pub mod rules;
