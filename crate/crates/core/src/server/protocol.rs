//! Frames the server sends and the payloads it accepts.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::domain::{FrameError, FrameType, Message, MessageKind, SessionId, TaskSpec, WireFrame};
use crate::error::{ChatError, Error, SessionError};
use crate::session::{InstrumentSet, Scale, ScaleScores};

/// Label attached to every agent frame so clients can mark it as AI-generated.
pub const AGENT_LABEL: &str = "AI";

fn object(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(map) => map,
        _ => Map::new(),
    }
}

/// Chat for public and system messages, DM for direct messages and
/// AgentMessage for the devil's advocate.
pub fn message_frame(msg: &Message) -> WireFrame {
    let mut payload = object(serde_json::to_value(msg).expect("message serializes"));
    let frame_type = match msg.kind {
        MessageKind::HumanPublic | MessageKind::System => FrameType::Chat,
        MessageKind::HumanDm => FrameType::Dm,
        MessageKind::Agent => {
            payload.insert("label".into(), AGENT_LABEL.into());
            FrameType::AgentMessage
        }
    };
    WireFrame::new(frame_type, payload)
}

/// Extracts the message carried by a Chat, DM or AgentMessage frame.
pub fn frame_message(frame: &WireFrame) -> Option<Message> {
    match frame.frame_type {
        FrameType::Chat | FrameType::Dm | FrameType::AgentMessage => frame.parse_payload().ok(),
        _ => None,
    }
}

pub fn join_ack(session_id: &SessionId, pseudonym: &str, role: &str, phase: &str) -> WireFrame {
    WireFrame::new(
        FrameType::Join,
        object(json!({"session_id": session_id, "pseudonym": pseudonym, "role": role, "phase": phase})),
    )
}

pub fn phase_change(phase: &str, task_index: Option<usize>) -> WireFrame {
    let mut payload = object(json!({ "phase": phase }));
    if let Some(i) = task_index {
        payload.insert("task_index".into(), i.into());
    }
    WireFrame::new(FrameType::PhaseChange, payload)
}

/// Private task start carrying the participant's role-specific briefing.
pub fn task_start(task: &TaskSpec, task_index: usize, room_id: &str, briefing: &str, agent_enabled: bool) -> WireFrame {
    WireFrame::new(
        FrameType::TaskStart,
        object(json!({
            "task_id": task.id,
            "task_index": task_index,
            "title": task.title,
            "options": task.options,
            "briefing": briefing,
            "room_id": room_id,
            "duration_secs": task.duration_secs,
            "agent_enabled": agent_enabled,
        })),
    )
}

pub fn task_end(task_index: usize, room_id: &str) -> WireFrame {
    WireFrame::new(FrameType::TaskEnd, object(json!({"task_index": task_index, "room_id": room_id})))
}

pub fn questionnaire_open(task_index: usize, include_ai: bool, instruments: &InstrumentSet) -> WireFrame {
    let scales: Vec<Value> = Scale::ALL
        .iter()
        .filter(|s| include_ai || **s != Scale::AiPerception)
        .map(|s| serde_json::to_value(instruments.get(*s)).expect("instrument serializes"))
        .collect();
    WireFrame::new(
        FrameType::QuestionnaireOpen,
        object(json!({"task_index": task_index, "scales": scales})),
    )
}

pub fn questionnaire_ack(task_index: usize, response_id: &str) -> WireFrame {
    WireFrame::new(
        FrameType::QuestionnaireSubmit,
        object(json!({"task_index": task_index, "response_id": response_id, "accepted": true})),
    )
}

pub fn admin_reply(command: &str, result: Value) -> WireFrame {
    WireFrame::new(
        FrameType::Admin,
        object(json!({"command": command, "ok": true, "result": result})),
    )
}

#[derive(Debug, Clone, Deserialize)]
pub struct JoinRequest {
    pub session_id: SessionId,
    pub token: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatRequest {
    pub text: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DmRequest {
    pub recipient: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub task_index: usize,
    pub scales: ScaleScores,
}

/// Stable machine-readable code for an error sent to a client.
pub fn error_code(err: &Error) -> &'static str {
    match err {
        Error::Frame(FrameError::Malformed(_)) => "malformed",
        Error::Frame(FrameError::UnknownType(_)) => "unknown_type",
        Error::Frame(FrameError::UnsupportedVersion(_)) => "unsupported_version",
        Error::Frame(FrameError::SchemaViolation { .. }) => "schema_violation",
        Error::Chat(ChatError::NotAMember(_)) => "not_a_member",
        Error::Chat(ChatError::RoomClosed(_)) => "room_closed",
        Error::Chat(ChatError::InvalidRecipient(_)) => "invalid_recipient",
        Error::Chat(ChatError::JuniorJoinRejected) => "junior_join_rejected",
        Error::Session(SessionError::WrongPhase(_)) => "wrong_phase",
        Error::Session(SessionError::IllegalTransition { .. }) => "illegal_transition",
        Error::Session(SessionError::DuplicateSubmission { .. }) => "duplicate_submission",
        Error::Session(SessionError::OutOfRangeItem { .. }) => "out_of_range_item",
        Error::Session(SessionError::InvalidResponse(_)) => "invalid_response",
        Error::Session(SessionError::UnknownSession(_)) => "unknown_session",
        Error::Session(SessionError::UnknownParticipant(_)) => "unknown_participant",
        Error::Message(_) => "invalid_message",
        _ => "internal",
    }
}

pub fn error_frame(err: &Error) -> WireFrame {
    WireFrame::error(error_code(err), err.to_string())
}
