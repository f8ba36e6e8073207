//! The devil's advocate: decides when to speak, summarizes the majority
//! stance, drafts a counterargument and rejects drafts that repeat earlier
//! agent messages.

mod counter;
mod prompts;
mod run;
mod similarity;
mod summary;
mod trigger;

pub use counter::{ends_with_question, RejectedDraft};
pub use prompts::{render, PromptStore, PromptTemplates};
pub use run::{AgentDraft, AgentMeta, AgentOutcome, DevilsAdvocate, DiscussionContext};
pub use similarity::{check_duplicate, cosine_similarity, DuplicateVerdict, EmbeddingVector};
pub use summary::{parse_summary, Leaning, StanceSummary};
pub use trigger::{on_human_message, strategy_for, InterventionRequest, MessageCadence, TriggerState, TriggerStrategy};
