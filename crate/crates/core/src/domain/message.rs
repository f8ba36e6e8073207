use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RoomId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    /// Human member, identified only by pseudonym.
    Participant(String),
    Agent,
    System,
}

impl Author {
    pub fn pseudonym(&self) -> Option<&str> {
        match self {
            Author::Participant(name) => Some(name),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    HumanPublic,
    #[serde(rename = "HumanDM")]
    HumanDm,
    Agent,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MessageError {
    #[error("direct messages need exactly one recipient")]
    MissingRecipient,
    #[error("only direct messages may carry a recipient")]
    UnexpectedRecipient,
    #[error("a direct message cannot be addressed to its author")]
    SelfAddressed,
    #[error("{kind:?} message has incompatible author {author:?}")]
    AuthorMismatch { kind: MessageKind, author: Author },
}

/// One chat event. `seq` is assigned by the server and is gapless within a room.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub room_id: RoomId,
    pub seq: u64,
    pub author: Author,
    pub kind: MessageKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<String>,
    pub text: String,
    pub timestamp: u64,
}

impl Message {
    pub fn make_id(room_id: &RoomId, seq: u64) -> String {
        format!("{room_id}-{seq:06}")
    }

    /// Checks the author/kind/recipient consistency rules.
    pub fn check_shape(author: &Author, kind: MessageKind, recipient: Option<&str>) -> Result<(), MessageError> {
        match kind {
            MessageKind::HumanDm => {
                let to = recipient.ok_or(MessageError::MissingRecipient)?;
                match author {
                    Author::Participant(from) if from == to => Err(MessageError::SelfAddressed),
                    Author::Participant(_) => Ok(()),
                    other => Err(MessageError::AuthorMismatch { kind, author: other.clone() }),
                }
            }
            _ if recipient.is_some() => Err(MessageError::UnexpectedRecipient),
            MessageKind::HumanPublic => match author {
                Author::Participant(_) => Ok(()),
                other => Err(MessageError::AuthorMismatch { kind, author: other.clone() }),
            },
            MessageKind::Agent if *author != Author::Agent => {
                Err(MessageError::AuthorMismatch { kind, author: author.clone() })
            }
            MessageKind::System if *author != Author::System => {
                Err(MessageError::AuthorMismatch { kind, author: author.clone() })
            }
            _ => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<(), MessageError> {
        Self::check_shape(&self.author, self.kind, self.recipient.as_deref())
    }

    /// Whether `pseudonym` is allowed to see this message.
    pub fn visible_to(&self, pseudonym: &str) -> bool {
        match self.kind {
            MessageKind::HumanDm => {
                self.author.pseudonym() == Some(pseudonym) || self.recipient.as_deref() == Some(pseudonym)
            }
            _ => true,
        }
    }
}
