//! Line-delimited JSON wire protocol.
//!
//! Frames are encoded with a fixed top-level key order (`type`,
//! `protocol_version`, `payload`) and payload keys sorted recursively, so the
//! same frame always yields the same bytes.

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameType {
    Join,
    Leave,
    Chat,
    #[serde(rename = "DM")]
    Dm,
    AgentMessage,
    TaskStart,
    TaskEnd,
    QuestionnaireOpen,
    QuestionnaireSubmit,
    PhaseChange,
    Error,
    /// Session-management commands on the admin connection.
    Admin,
}

impl FrameType {
    pub const ALL: [FrameType; 12] = [
        FrameType::Join,
        FrameType::Leave,
        FrameType::Chat,
        FrameType::Dm,
        FrameType::AgentMessage,
        FrameType::TaskStart,
        FrameType::TaskEnd,
        FrameType::QuestionnaireOpen,
        FrameType::QuestionnaireSubmit,
        FrameType::PhaseChange,
        FrameType::Error,
        FrameType::Admin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::Join => "Join",
            FrameType::Leave => "Leave",
            FrameType::Chat => "Chat",
            FrameType::Dm => "DM",
            FrameType::AgentMessage => "AgentMessage",
            FrameType::TaskStart => "TaskStart",
            FrameType::TaskEnd => "TaskEnd",
            FrameType::QuestionnaireOpen => "QuestionnaireOpen",
            FrameType::QuestionnaireSubmit => "QuestionnaireSubmit",
            FrameType::PhaseChange => "PhaseChange",
            FrameType::Error => "Error",
            FrameType::Admin => "Admin",
        }
    }

    /// Payload keys every frame of this type must carry, in either direction.
    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            FrameType::Join => &["session_id"],
            FrameType::Leave => &[],
            FrameType::Chat => &["text"],
            FrameType::Dm => &["recipient", "text"],
            FrameType::AgentMessage => &["text"],
            FrameType::TaskStart => &["task_id", "task_index"],
            FrameType::TaskEnd => &["task_index"],
            FrameType::QuestionnaireOpen => &["scales", "task_index"],
            FrameType::QuestionnaireSubmit => &["task_index"],
            FrameType::PhaseChange => &["phase"],
            FrameType::Error => &["code", "message"],
            FrameType::Admin => &["command"],
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameType {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FrameType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| FrameError::UnknownType(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown frame type `{0}`")]
    UnknownType(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u64),
    #[error("{frame_type} payload violates schema: {detail}")]
    SchemaViolation { frame_type: FrameType, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    #[serde(rename = "type")]
    pub frame_type: FrameType,
    pub protocol_version: u32,
    pub payload: Map<String, Value>,
}

impl WireFrame {
    pub fn new(frame_type: FrameType, payload: Map<String, Value>) -> Self {
        Self {
            frame_type,
            protocol_version: PROTOCOL_VERSION,
            payload,
        }
    }

    /// Builds a frame from any serializable payload struct.
    pub fn with_payload<T: Serialize>(frame_type: FrameType, payload: &T) -> Result<Self, FrameError> {
        match serde_json::to_value(payload) {
            Ok(Value::Object(map)) => {
                let frame = Self::new(frame_type, map);
                frame.check_schema()?;
                Ok(frame)
            }
            Ok(_) => Err(FrameError::SchemaViolation {
                frame_type,
                detail: "payload must be a JSON object".into(),
            }),
            Err(e) => Err(FrameError::Malformed(e.to_string())),
        }
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        let mut payload = Map::new();
        payload.insert("code".into(), Value::String(code.into()));
        payload.insert("message".into(), Value::String(message.into()));
        Self::new(FrameType::Error, payload)
    }

    pub fn check_schema(&self) -> Result<(), FrameError> {
        for key in self.frame_type.required_keys() {
            match self.payload.get(*key) {
                None | Some(Value::Null) => {
                    return Err(FrameError::SchemaViolation {
                        frame_type: self.frame_type,
                        detail: format!("missing required key `{key}`"),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Deserializes the payload into a typed struct.
    pub fn parse_payload<T: DeserializeOwned>(&self) -> Result<T, FrameError> {
        serde_json::from_value(Value::Object(self.payload.clone())).map_err(|e| FrameError::SchemaViolation {
            frame_type: self.frame_type,
            detail: e.to_string(),
        })
    }

    pub fn str_field(&self, key: &str) -> Option<&str> {
        self.payload.get(key).and_then(Value::as_str)
    }
}

fn canonicalize(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, canonicalize(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        other => other,
    }
}

/// Canonical UTF-8 JSON encoding of a frame (no trailing newline).
pub fn encode_frame(frame: &WireFrame) -> Result<Vec<u8>, FrameError> {
    frame.check_schema()?;
    if frame.protocol_version != PROTOCOL_VERSION {
        return Err(FrameError::UnsupportedVersion(frame.protocol_version.into()));
    }
    let payload = canonicalize(Value::Object(frame.payload.clone()));
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(b"{\"type\":");
    serde_json::to_writer(&mut out, frame.frame_type.as_str()).map_err(|e| FrameError::Malformed(e.to_string()))?;
    out.extend_from_slice(b",\"protocol_version\":");
    out.extend_from_slice(frame.protocol_version.to_string().as_bytes());
    out.extend_from_slice(b",\"payload\":");
    serde_json::to_writer(&mut out, &payload).map_err(|e| FrameError::Malformed(e.to_string()))?;
    out.push(b'}');
    Ok(out)
}

pub fn decode_frame(bytes: &[u8]) -> Result<WireFrame, FrameError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| FrameError::Malformed(e.to_string()))?;
    let Value::Object(mut top) = value else {
        return Err(FrameError::Malformed("frame must be a JSON object".into()));
    };
    let frame_type: FrameType = match top.remove("type") {
        Some(Value::String(s)) => s.parse()?,
        _ => return Err(FrameError::Malformed("missing string field `type`".into())),
    };
    let version = top
        .remove("protocol_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| FrameError::Malformed("missing integer field `protocol_version`".into()))?;
    if version != u64::from(PROTOCOL_VERSION) {
        return Err(FrameError::UnsupportedVersion(version));
    }
    let payload = match top.remove("payload") {
        Some(Value::Object(map)) => map,
        Some(_) => {
            return Err(FrameError::SchemaViolation {
                frame_type,
                detail: "payload must be a JSON object".into(),
            })
        }
        None => return Err(FrameError::Malformed("missing field `payload`".into())),
    };
    if let Some(extra) = top.keys().next() {
        return Err(FrameError::Malformed(format!("unexpected top-level field `{extra}`")));
    }
    let frame = WireFrame::new(frame_type, payload);
    frame.check_schema()?;
    Ok(frame)
}
