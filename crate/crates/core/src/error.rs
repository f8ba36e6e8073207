use std::io;

use thiserror::Error;

use crate::domain::{FrameError, MessageError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Message(#[from] MessageError),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analyze(#[from] AnalyzeError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChatError {
    #[error("`{0}` is not a member of this room")]
    NotAMember(String),
    #[error("room `{0}` is closed")]
    RoomClosed(String),
    #[error("invalid recipient `{0}`")]
    InvalidRecipient(String),
    #[error("corrupt transcript: {0}")]
    CorruptTranscript(String),
    #[error("juniors cannot join the evaluation room")]
    JuniorJoinRejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("prompt must not be empty")]
    EmptyPrompt,
    #[error("text to embed must not be empty")]
    EmptyText,
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("provider timed out after {0} ms")]
    Timeout(u64),
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("no public messages in the discussion window")]
    EmptyWindow,
    #[error("attempt {attempt} exceeds the budget of {max}")]
    BudgetExhausted { attempt: u32, max: u32 },
    #[error("draft does not end with a question: {0}")]
    InvalidDraft(String),
    #[error(transparent)]
    Provider(#[from] LlmError),
    #[error("prompt template error: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("a session needs exactly 4 distinct participants, got {0}")]
    WrongPartySize(usize),
    #[error("operation not allowed in phase {0}")]
    WrongPhase(String),
    #[error("illegal transition from {from} on {trigger}")]
    IllegalTransition { from: String, trigger: String },
    #[error("participant `{participant}` already answered the questionnaire for task {task_index}")]
    DuplicateSubmission { participant: String, task_index: usize },
    #[error("item value {value} on scale `{scale}` is outside 1..=7")]
    OutOfRangeItem { scale: String, value: u8 },
    #[error("questionnaire does not match its instruments: {0}")]
    InvalidResponse(String),
    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("script must reference exactly 4 participants, found {0}")]
    ScriptParticipantMismatch(usize),
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("simulation failed: {0}")]
    Run(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyzeError {
    #[error("response from participant `{participant}` in session `{session}` has no matching manifest entry")]
    OrphanResponse { session: String, participant: String },
}
