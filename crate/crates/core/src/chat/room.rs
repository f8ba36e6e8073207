use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{Author, Message, MessageError, MessageKind, ParticipantRole, RoomId, SessionId};
use crate::error::{ChatError, Error, Result};
use crate::session::{Phase, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoomVisibility {
    Main,
    SeniorsOnly,
}

/// One chat room. Members are identified by pseudonym, which is what every
/// message carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    pub id: RoomId,
    pub session_id: SessionId,
    pub visibility: RoomVisibility,
    members: BTreeSet<String>,
    next_seq: u64,
    closed: bool,
    messages: Vec<Message>,
}

impl Room {
    pub fn new(id: RoomId, session_id: SessionId, visibility: RoomVisibility) -> Self {
        Self {
            id,
            session_id,
            visibility,
            members: BTreeSet::new(),
            next_seq: 1,
            closed: false,
            messages: Vec::new(),
        }
    }

    pub fn with_members(mut self, members: impl IntoIterator<Item = String>) -> Self {
        self.members.extend(members);
        self
    }

    /// Adds a member; seniors-only rooms turn juniors away.
    pub fn admit(&mut self, pseudonym: &str, role: ParticipantRole) -> Result<()> {
        if self.visibility == RoomVisibility::SeniorsOnly && !role.is_senior() {
            return Err(ChatError::JuniorJoinRejected.into());
        }
        self.members.insert(pseudonym.to_string());
        Ok(())
    }

    pub fn members(&self) -> &BTreeSet<String> {
        &self.members
    }

    pub fn is_member(&self, pseudonym: &str) -> bool {
        self.members.contains(pseudonym)
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    /// Validates a post and builds the message it would become, without
    /// committing it. Callers persist the message and then [`Room::commit`].
    pub fn prepare(
        &self,
        author: Author,
        kind: MessageKind,
        text: String,
        recipient: Option<String>,
        timestamp: u64,
    ) -> Result<Message> {
        if self.closed {
            return Err(ChatError::RoomClosed(self.id.to_string()).into());
        }
        if let Author::Participant(name) = &author {
            if !self.is_member(name) {
                return Err(ChatError::NotAMember(name.clone()).into());
            }
        }
        if kind == MessageKind::Agent && self.visibility != RoomVisibility::Main {
            return Err(ChatError::NotAMember("agent".into()).into());
        }
        Message::check_shape(&author, kind, recipient.as_deref()).map_err(|e| match e {
            MessageError::MissingRecipient | MessageError::SelfAddressed => {
                Error::Chat(ChatError::InvalidRecipient(recipient.clone().unwrap_or_default()))
            }
            other => Error::Message(other),
        })?;
        if let Some(to) = &recipient {
            if !self.is_member(to) {
                return Err(ChatError::InvalidRecipient(to.clone()).into());
            }
        }
        Ok(Message {
            id: Message::make_id(&self.id, self.next_seq),
            room_id: self.id.clone(),
            seq: self.next_seq,
            author,
            kind,
            recipient,
            text,
            timestamp,
        })
    }

    /// Appends a message built by [`Room::prepare`] against the current state.
    pub fn commit(&mut self, message: Message) {
        debug_assert_eq!(message.seq, self.next_seq);
        self.next_seq = message.seq + 1;
        self.messages.push(message);
    }

    /// `prepare` + `commit` for callers without a transcript.
    pub fn post_message(
        &mut self,
        author: Author,
        kind: MessageKind,
        text: impl Into<String>,
        recipient: Option<String>,
        timestamp: u64,
    ) -> Result<Message> {
        let msg = self.prepare(author, kind, text.into(), recipient, timestamp)?;
        self.commit(msg.clone());
        Ok(msg)
    }

    pub fn visible_to<'a>(&'a self, pseudonym: &'a str) -> impl Iterator<Item = &'a Message> + 'a {
        self.messages.iter().filter(move |m| m.visible_to(pseudonym))
    }

    pub(crate) fn from_parts(
        id: RoomId,
        session_id: SessionId,
        visibility: RoomVisibility,
        messages: Vec<Message>,
    ) -> Self {
        let next_seq = messages.last().map_or(1, |m| m.seq + 1);
        Self {
            id,
            session_id,
            visibility,
            members: BTreeSet::new(),
            next_seq,
            closed: false,
            messages,
        }
    }
}

pub const EVALUATION_ROOM: &str = "evaluation";

/// Seniors-only room for the post-task evaluation chat.
pub fn open_evaluation_room(session: &Session) -> Result<Room> {
    if session.phase != Phase::Evaluation {
        return Err(crate::error::SessionError::WrongPhase(session.phase.to_string()).into());
    }
    let mut room = Room::new(EVALUATION_ROOM.into(), session.id.clone(), RoomVisibility::SeniorsOnly);
    for (participant, role) in &session.roles {
        if role.is_senior() {
            let pseudonym = session
                .pseudonym(participant)
                .ok_or_else(|| crate::error::SessionError::UnknownParticipant(participant.to_string()))?;
            room.admit(pseudonym, *role)?;
        }
    }
    Ok(room)
}
