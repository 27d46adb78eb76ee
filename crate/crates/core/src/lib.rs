//! Long-form story generation by planning, drafting, reranking and
//! editing, with every model behind a swappable backend.
//!
//! The pipeline:
//! - [`plan`] turns a premise into a setting, characters and an outline;
//! - [`draft`] composes budgeted prompts and samples continuations;
//! - [`rewrite`] filters and reranks them;
//! - [`edit`] keeps a per-character knowledge base and fixes
//!   contradictions;
//! - [`orchestrator`] runs the loop, the rolling baseline and ablations;
//! - [`eval`] scores contradiction detectors by ROC-AUC.

pub mod backends;
pub mod config;
pub mod draft;
pub mod edit;
pub mod eval;
pub mod model;
pub mod orchestrator;
pub mod plan;
pub mod rewrite;
pub mod templates;
pub mod text;
