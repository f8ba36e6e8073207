//! A group-discussion service with an LLM devil's advocate.
//!
//! After every `k` public human messages in a treatment-condition room, a
//! three-stage pipeline summarizes the majority stance, drafts an empathetic
//! Socratic counterargument and rejects drafts that repeat earlier agent
//! messages. Around it sit the chat server, the experiment protocol
//! (roles, conditions, tasks, questionnaires), a simulation harness and
//! descriptive statistics over the collected questionnaires.

pub mod analyze;
pub mod chat;
pub mod config;
pub mod domain;
pub mod error;
pub mod llm;
pub mod pipeline;
pub mod server;
pub mod session;
pub mod sim;

pub use error::{Error, Result};
