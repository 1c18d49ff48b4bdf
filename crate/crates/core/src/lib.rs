//! Multi-agent TCM consultation, syndrome differentiation and dual-stage
//! prescription retrieval.

pub mod agents;
pub mod domain;
pub mod dsrs;
pub mod engine;
pub mod eval;
pub mod gateway;
pub mod maccm;
pub mod prompts;
pub mod service;
pub mod syndrome;
