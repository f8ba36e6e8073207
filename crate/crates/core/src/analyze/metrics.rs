use std::collections::BTreeMap;

use serde::Serialize;

use super::SessionData;
use crate::chat::{read_transcript, replay_transcript, TranscriptRecord};
use crate::domain::{Condition, Message, MessageKind, RoomId};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSimilarity {
    pub seq: u64,
    pub attempt_index: u32,
    pub max_similarity: Option<f64>,
    pub fallback: bool,
}

/// Result of replaying the cadence rule over a finished transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CadenceReplay {
    /// Times the rule would have started a pipeline.
    pub fires: u32,
    pub agents: u32,
    /// A pipeline was started but the room closed before it posted.
    pub trailing_pending: bool,
    /// Every agent message answered a fire and every fire but a trailing
    /// one produced an agent message.
    pub conformant: bool,
}

/// Counts public human messages since the last agent message; fires at `k`
/// unless a pipeline is already pending.
pub fn reference_cadence(messages: &[Message], k: u32) -> CadenceReplay {
    let mut since = 0u32;
    let mut pending = false;
    let mut fires = 0;
    let mut agents = 0;
    let mut unprompted = false;
    for m in messages {
        match m.kind {
            MessageKind::HumanPublic => {
                since += 1;
                if !pending && since >= k {
                    pending = true;
                    fires += 1;
                }
            }
            MessageKind::Agent => {
                agents += 1;
                unprompted |= !pending;
                pending = false;
                since = 0;
            }
            MessageKind::HumanDm | MessageKind::System => {}
        }
    }
    CadenceReplay {
        fires,
        agents,
        trailing_pending: pending,
        conformant: !unprompted && fires == agents + u32::from(pending),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomMetrics {
    pub room_id: RoomId,
    pub condition: Option<Condition>,
    pub public: usize,
    pub direct: usize,
    pub agent: usize,
    pub system: usize,
    /// Public messages per pseudonym.
    pub per_participant: BTreeMap<String, usize>,
    pub agent_similarity: Vec<AgentSimilarity>,
    /// Treatment rooms only.
    pub cadence: Option<CadenceReplay>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub rooms: Vec<RoomMetrics>,
    pub pipeline_failures: u32,
}

impl SessionMetrics {
    pub fn room(&self, id: &str) -> Option<&RoomMetrics> {
        self.rooms.iter().find(|r| r.room_id.as_str() == id)
    }

    /// Agent messages only in treatment rooms and, when no pipeline failed,
    /// cadence replay agrees everywhere. A failed pipeline restarts the
    /// window without leaving a transcript line, so replay is skipped then.
    pub fn cadence_conformant(&self) -> bool {
        self.rooms.iter().all(|r| match (r.condition, r.cadence) {
            (Some(Condition::Baseline), _) => r.agent == 0,
            (Some(Condition::Treatment), Some(c)) => self.pipeline_failures > 0 || c.conformant,
            _ => r.agent == 0,
        })
    }
}

fn task_condition(data: &SessionData, room: &str) -> Option<Condition> {
    let index: usize = room.strip_prefix("task")?.parse().ok()?;
    data.manifest.condition_order.get(index.checked_sub(1)?).copied()
}

pub fn room_metrics(data: &SessionData, room_id: RoomId, records: &[TranscriptRecord]) -> Result<RoomMetrics> {
    let room = replay_transcript(&room_id, records)?;
    let condition = task_condition(data, room_id.as_str());
    let mut m = RoomMetrics {
        room_id,
        condition,
        public: 0,
        direct: 0,
        agent: 0,
        system: 0,
        per_participant: BTreeMap::new(),
        agent_similarity: Vec::new(),
        cadence: None,
    };
    for msg in room.messages() {
        match msg.kind {
            MessageKind::HumanPublic => {
                m.public += 1;
                if let Some(p) = msg.author.pseudonym() {
                    *m.per_participant.entry(p.to_string()).or_default() += 1;
                }
            }
            MessageKind::HumanDm => m.direct += 1,
            MessageKind::Agent => m.agent += 1,
            MessageKind::System => m.system += 1,
        }
    }
    for r in records.iter().filter(|r| r.message.kind == MessageKind::Agent) {
        let meta = r.agent.clone().unwrap_or_default();
        m.agent_similarity.push(AgentSimilarity {
            seq: r.message.seq,
            attempt_index: meta.attempt_index,
            max_similarity: meta.max_similarity,
            fallback: meta.fallback,
        });
    }
    if condition == Some(Condition::Treatment) {
        m.cadence = Some(reference_cadence(room.messages(), data.manifest.intervention.cadence_k));
    }
    Ok(m)
}

/// Replays every room transcript of a session and summarizes it.
pub fn transcript_metrics(data: &SessionData) -> Result<SessionMetrics> {
    let mut rooms = Vec::new();
    for path in data.store().transcript_files()? {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let records = read_transcript(&path)?;
        rooms.push(room_metrics(data, RoomId::new(stem), &records)?);
    }
    Ok(SessionMetrics {
        session_id: data.manifest.session_id.to_string(),
        rooms,
        pipeline_failures: data.manifest.pipeline_failures,
    })
}
