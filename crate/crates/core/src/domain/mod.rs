//! Shared domain types: participants, conditions, messages, tasks, intervention
//! settings and the wire-protocol frame schema.

mod config;
mod frame;
mod message;
mod role;
mod task;

pub use config::{InterventionConfig, TriggerStrategyId};
pub use frame::{decode_frame, encode_frame, FrameError, FrameType, WireFrame, PROTOCOL_VERSION};
pub use message::{Author, Message, MessageError, MessageKind};
pub use role::{Condition, ParticipantRole, Power, RoleKind};
pub use task::{builtin_tasks, validate_task, TaskOption, TaskSpec, DEFAULT_TASK_DURATION_SECS};

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Stable identifier of a participant inside a session (never shown to other members).
    ParticipantId
);
string_id!(RoomId);
string_id!(SessionId);

/// Anonymous handle shown in the chat ("Member A" .. "Member D").
pub fn pseudonym_for(index: usize) -> String {
    let letter = (b'A' + (index % 26) as u8) as char;
    format!("Member {letter}")
}
