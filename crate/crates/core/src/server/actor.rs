//! One task per session. Every client frame, admin command, timer expiry and
//! pipeline result for the session goes through its queue, so seq assignment,
//! transcript appends and phase changes are serialized.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::{mpsc, oneshot};
use tokio::time::{sleep_until, Instant};
use tracing::{debug, info, warn};

use super::protocol::{self, ChatRequest, DmRequest, SubmitRequest};
use super::{Clock, Outbound};
use crate::chat::{open_evaluation_room, Room, RoomVisibility, TranscriptRecord, TranscriptWriter};
use crate::domain::{
    encode_frame, Author, Condition, FrameType, InterventionConfig, Message, MessageKind, ParticipantId, RoomId,
    WireFrame,
};
use crate::error::{ChatError, PipelineError, Result, SessionError};
use crate::pipeline::{
    strategy_for, AgentMeta, AgentOutcome, DevilsAdvocate, DiscussionContext, EmbeddingVector, TriggerState,
    TriggerStrategy,
};
use crate::session::{EvaluationRecord, InstrumentSet, Manifest, Phase, PhaseTrigger, QuestionnaireResponse, Session, SessionStore};

pub const TEAM_BUILDING_ROOM: &str = "team_building";

pub fn task_room_id(task_index: usize) -> RoomId {
    RoomId::new(format!("task{}", task_index + 1))
}

pub type ConnId = u64;

#[derive(Debug)]
pub enum SessionCommand {
    Start,
    ForceAdvance,
    Abort,
    RecordEvaluation(EvaluationRecord),
    Status,
}

pub(crate) enum Cmd {
    Join {
        conn: ConnId,
        participant: ParticipantId,
        out: Outbound,
        reply: oneshot::Sender<Result<String>>,
    },
    Frame {
        conn: ConnId,
        participant: ParticipantId,
        frame: WireFrame,
    },
    Disconnect {
        conn: ConnId,
    },
    Admin {
        command: SessionCommand,
        reply: oneshot::Sender<Result<Value>>,
    },
    Watch {
        out: Outbound,
    },
    Snapshot {
        reply: oneshot::Sender<SessionSnapshot>,
    },
    PipelineDone {
        room: RoomId,
        ticket: u64,
        result: std::result::Result<AgentOutcome, PipelineError>,
    },
}

/// Live state of one session, as seen by the actor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub phase: Phase,
    pub rooms: Vec<RoomSnapshot>,
    pub connected: Vec<String>,
    pub pipeline_failures: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomSnapshot {
    pub room_id: RoomId,
    pub next_seq: u64,
    pub closed: bool,
    pub trigger: TriggerState,
    pub messages: Vec<Message>,
}

impl SessionSnapshot {
    pub fn room(&self, id: &str) -> Option<&RoomSnapshot> {
        self.rooms.iter().find(|r| r.room_id.as_str() == id)
    }
}

struct RoomSlot {
    room: Room,
    writer: TranscriptWriter,
    /// Set for task rooms; the agent only runs under Treatment.
    condition: Option<Condition>,
    task_index: Option<usize>,
    trigger: TriggerState,
    pending_ticket: Option<u64>,
}

pub(crate) struct ActorParts {
    pub session: Session,
    pub manifest: Manifest,
    pub store: SessionStore,
    pub intervention: InterventionConfig,
    pub advocate: Arc<DevilsAdvocate>,
    pub instruments: Arc<InstrumentSet>,
    pub clock: Clock,
    pub team_building: Duration,
}

pub(crate) struct SessionActor {
    session: Session,
    manifest: Manifest,
    store: SessionStore,
    intervention: InterventionConfig,
    advocate: Arc<DevilsAdvocate>,
    instruments: Arc<InstrumentSet>,
    clock: Clock,
    team_building: Duration,
    rooms: Vec<RoomSlot>,
    clients: BTreeMap<String, BTreeMap<ConnId, Outbound>>,
    watchers: Vec<Outbound>,
    agent_history: Vec<EmbeddingVector>,
    next_ticket: u64,
    deadline: Option<Instant>,
    self_tx: mpsc::WeakUnboundedSender<Cmd>,
}

impl SessionActor {
    pub(crate) fn spawn(parts: ActorParts) -> mpsc::UnboundedSender<Cmd> {
        let (tx, rx) = mpsc::unbounded_channel();
        let actor = SessionActor {
            session: parts.session,
            manifest: parts.manifest,
            store: parts.store,
            intervention: parts.intervention,
            advocate: parts.advocate,
            instruments: parts.instruments,
            clock: parts.clock,
            team_building: parts.team_building,
            rooms: Vec::new(),
            clients: BTreeMap::new(),
            watchers: Vec::new(),
            agent_history: Vec::new(),
            next_ticket: 0,
            deadline: None,
            self_tx: tx.downgrade(),
        };
        tokio::spawn(actor.run(rx));
        tx
    }

    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Cmd>) {
        let far = Duration::from_secs(86_400 * 365);
        loop {
            let deadline = self.deadline;
            tokio::select! {
                biased;
                cmd = rx.recv() => match cmd {
                    Some(cmd) => self.handle(cmd),
                    None => break,
                },
                _ = sleep_until(deadline.unwrap_or_else(|| Instant::now() + far)), if deadline.is_some() => {
                    self.deadline = None;
                    if let Err(e) = self.advance(PhaseTrigger::Timer) {
                        warn!(session = %self.session.id, error = %e, "timer transition failed");
                    }
                }
            }
        }
        debug!(session = %self.session.id, "session actor stopped");
    }

    fn handle(&mut self, cmd: Cmd) {
        match cmd {
            Cmd::Join { conn, participant, out, reply } => {
                let _ = reply.send(self.join(conn, &participant, out));
            }
            Cmd::Frame { conn, participant, frame } => {
                if let Err(e) = self.client_frame(&participant, frame) {
                    debug!(%participant, error = %e, "client frame rejected");
                    self.send_to_conn(&participant, conn, &protocol::error_frame(&e));
                }
            }
            Cmd::Disconnect { conn } => {
                for conns in self.clients.values_mut() {
                    conns.remove(&conn);
                }
                self.clients.retain(|_, c| !c.is_empty());
            }
            Cmd::Admin { command, reply } => {
                let _ = reply.send(self.admin(command));
            }
            Cmd::Watch { out } => self.watchers.push(out),
            Cmd::Snapshot { reply } => {
                let _ = reply.send(self.snapshot());
            }
            Cmd::PipelineDone { room, ticket, result } => self.pipeline_done(&room, ticket, result),
        }
    }

    fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.session.id.to_string(),
            phase: self.session.phase,
            rooms: self
                .rooms
                .iter()
                .map(|s| RoomSnapshot {
                    room_id: s.room.id.clone(),
                    next_seq: s.room.next_seq(),
                    closed: s.room.is_closed(),
                    trigger: s.trigger,
                    messages: s.room.messages().to_vec(),
                })
                .collect(),
            connected: self.clients.keys().cloned().collect(),
            pipeline_failures: self.manifest.pipeline_failures,
        }
    }

    fn pseudonym(&self, participant: &ParticipantId) -> Result<String> {
        self.session
            .pseudonym(participant)
            .map(str::to_string)
            .ok_or_else(|| SessionError::UnknownParticipant(participant.to_string()).into())
    }

    // ---- outbound ----

    fn encode(frame: &WireFrame) -> Vec<u8> {
        encode_frame(frame).expect("server frames are encodable")
    }

    fn send_to_conn(&self, pseudonym_of: &ParticipantId, conn: ConnId, frame: &WireFrame) {
        let Some(name) = self.session.pseudonym(pseudonym_of) else { return };
        if let Some(out) = self.clients.get(name).and_then(|c| c.get(&conn)) {
            let _ = out.send(Self::encode(frame));
        }
    }

    fn send_to(&self, pseudonym: &str, bytes: &[u8]) {
        if let Some(conns) = self.clients.get(pseudonym) {
            for out in conns.values() {
                let _ = out.send(bytes.to_vec());
            }
        }
    }

    fn send_to_watchers(&mut self, bytes: &[u8]) {
        self.watchers.retain(|w| w.send(bytes.to_vec()).is_ok());
    }

    fn broadcast(&mut self, frame: &WireFrame) {
        let bytes = Self::encode(frame);
        for conns in self.clients.values() {
            for out in conns.values() {
                let _ = out.send(bytes.clone());
            }
        }
        self.send_to_watchers(&bytes);
    }

    fn fan_out(&mut self, room_idx: usize, msg: &Message) {
        let bytes = Self::encode(&protocol::message_frame(msg));
        let room = &self.rooms[room_idx].room;
        for name in self.clients.keys() {
            if room.is_member(name) && msg.visible_to(name) {
                self.send_to(name, &bytes);
            }
        }
        self.send_to_watchers(&bytes);
    }

    // ---- rooms ----

    fn slot_index(&self, id: &RoomId) -> Option<usize> {
        self.rooms.iter().position(|s| &s.room.id == id)
    }

    fn open_room(&mut self, room: Room, condition: Option<Condition>, task_index: Option<usize>) -> Result<()> {
        let writer = self.store.transcript_writer(&room.id)?;
        self.rooms.push(RoomSlot {
            room,
            writer,
            condition,
            task_index,
            trigger: TriggerState::default(),
            pending_ticket: None,
        });
        Ok(())
    }

    fn main_room(&mut self, id: RoomId) -> Room {
        let members = self.session.all_pseudonyms();
        Room::new(id, self.session.id.clone(), RoomVisibility::Main).with_members(members)
    }

    fn close_room(&mut self, id: &RoomId) {
        if let Some(i) = self.slot_index(id) {
            let slot = &mut self.rooms[i];
            slot.room.close();
            slot.pending_ticket = None;
            slot.trigger.pipeline_in_flight = false;
        }
    }

    /// The room a participant's Chat and DM frames go to in the current phase.
    fn active_room(&self, participant: &ParticipantId) -> Result<usize> {
        let id = match self.session.phase {
            Phase::TeamBuilding => RoomId::new(TEAM_BUILDING_ROOM),
            Phase::Task { index, .. } => task_room_id(index),
            Phase::Evaluation => {
                if !self.session.role(participant)?.is_senior() {
                    return Err(ChatError::JuniorJoinRejected.into());
                }
                RoomId::new(crate::chat::EVALUATION_ROOM)
            }
            other => return Err(SessionError::WrongPhase(other.to_string()).into()),
        };
        self.slot_index(&id)
            .ok_or_else(|| SessionError::WrongPhase(self.session.phase.to_string()).into())
    }

    /// Assigns the next seq, appends to the transcript, then fans out. Public
    /// human messages in treatment rooms feed the intervention trigger.
    fn post(
        &mut self,
        room_idx: usize,
        author: Author,
        kind: MessageKind,
        text: String,
        recipient: Option<String>,
        agent: Option<AgentMeta>,
    ) -> Result<Message> {
        let now = self.clock.now_ms();
        let session_id = self.session.id.clone();
        let slot = &mut self.rooms[room_idx];
        let msg = slot.room.prepare(author, kind, text, recipient, now)?;
        slot.writer.append(&TranscriptRecord {
            session_id,
            message: msg.clone(),
            agent,
        })?;
        slot.room.commit(msg.clone());
        self.fan_out(room_idx, &msg);

        let slot = &mut self.rooms[room_idx];
        if kind == MessageKind::HumanPublic && slot.condition.is_some_and(Condition::allows_agent) {
            let strategy = strategy_for(self.intervention.trigger_strategy);
            if let Some(request) = strategy.on_human_message(&mut slot.trigger, &self.intervention, &msg) {
                self.spawn_pipeline(room_idx, request);
            }
        }
        Ok(msg)
    }

    fn spawn_pipeline(&mut self, room_idx: usize, request: crate::pipeline::InterventionRequest) {
        let Some(task_index) = self.rooms[room_idx].task_index else { return };
        let ctx = DiscussionContext::from(&self.session.tasks[task_index]);
        let history: Vec<Message> = self.rooms[room_idx]
            .room
            .messages()
            .iter()
            .filter(|m| matches!(m.kind, MessageKind::HumanPublic | MessageKind::Agent))
            .cloned()
            .collect();
        let agent_history = self.agent_history.clone();
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        self.rooms[room_idx].pending_ticket = Some(ticket);
        let advocate = Arc::clone(&self.advocate);
        let tx = self.self_tx.clone();
        let room = request.room_id.clone();
        debug!(%room, seq = request.trigger_seq, ticket, "intervention triggered");
        tokio::spawn(async move {
            let result = advocate.run(&request, &ctx, &history, &agent_history).await;
            if let Some(tx) = tx.upgrade() {
                let _ = tx.send(Cmd::PipelineDone { room, ticket, result });
            }
        });
    }

    fn pipeline_done(&mut self, room: &RoomId, ticket: u64, result: std::result::Result<AgentOutcome, PipelineError>) {
        let Some(idx) = self.slot_index(room) else { return };
        if self.rooms[idx].pending_ticket != Some(ticket) {
            debug!(%room, ticket, "discarding stale pipeline result");
            return;
        }
        self.rooms[idx].pending_ticket = None;
        let strategy = strategy_for(self.intervention.trigger_strategy);
        match result {
            Ok(outcome) => {
                let meta = outcome.meta();
                let posted = self.post(
                    idx,
                    Author::Agent,
                    MessageKind::Agent,
                    outcome.draft.text.clone(),
                    None,
                    Some(meta),
                );
                match posted {
                    Ok(msg) => {
                        info!(%room, seq = msg.seq, attempt = outcome.draft.attempt_index, fallback = outcome.fallback, "agent message posted");
                        self.agent_history.push(outcome.draft.embedding);
                        strategy.on_agent_posted(&mut self.rooms[idx].trigger);
                    }
                    Err(e) => {
                        warn!(%room, error = %e, "agent message dropped");
                        strategy.on_pipeline_failed(&mut self.rooms[idx].trigger);
                    }
                }
            }
            Err(e) => {
                warn!(%room, error = %e, "intervention pipeline failed; discussion continues without it");
                strategy.on_pipeline_failed(&mut self.rooms[idx].trigger);
                self.manifest.pipeline_failures += 1;
                self.persist_manifest();
            }
        }
    }

    // ---- clients ----

    fn join(&mut self, conn: ConnId, participant: &ParticipantId, out: Outbound) -> Result<String> {
        let role = self.session.role(participant)?;
        let name = self.session.ensure_pseudonym(participant)?;
        let role_name = if role.is_senior() { "senior" } else { "junior" };
        let phase = self.session.phase;
        let mut frames = vec![
            protocol::join_ack(&self.session.id, &name, role_name, phase.name()),
            protocol::phase_change(phase.name(), phase_task_index(phase)),
        ];
        for slot in &self.rooms {
            if slot.room.is_member(&name) {
                frames.extend(slot.room.visible_to(&name).map(protocol::message_frame));
            }
        }
        frames.extend(self.private_phase_frames(participant)?);
        for f in &frames {
            let _ = out.send(Self::encode(f));
        }
        self.clients.entry(name.clone()).or_default().insert(conn, out);
        info!(session = %self.session.id, %participant, pseudonym = %name, "participant joined");
        Ok(name)
    }

    /// TaskStart with the private briefing, or the questionnaire if still open.
    fn private_phase_frames(&self, participant: &ParticipantId) -> Result<Vec<WireFrame>> {
        Ok(match self.session.phase {
            Phase::Task { index, condition } => {
                let briefing = self.session.deliver_briefing(participant)?;
                let task = &self.session.tasks[index];
                vec![protocol::task_start(
                    task,
                    index,
                    task_room_id(index).as_str(),
                    briefing,
                    condition.allows_agent(),
                )]
            }
            Phase::Questionnaire { index } if !self.session.has_submitted(index, participant) => {
                let include_ai = self.session.condition_order[index].allows_agent();
                vec![protocol::questionnaire_open(index, include_ai, &self.instruments)]
            }
            _ => Vec::new(),
        })
    }

    fn client_frame(&mut self, participant: &ParticipantId, frame: WireFrame) -> Result<()> {
        match frame.frame_type {
            FrameType::Chat => {
                let req: ChatRequest = frame.parse_payload()?;
                let idx = self.active_room(participant)?;
                let name = self.pseudonym(participant)?;
                self.post(idx, Author::Participant(name), MessageKind::HumanPublic, req.text, None, None)?;
            }
            FrameType::Dm => {
                let req: DmRequest = frame.parse_payload()?;
                let idx = self.active_room(participant)?;
                let name = self.pseudonym(participant)?;
                self.post(idx, Author::Participant(name), MessageKind::HumanDm, req.text, Some(req.recipient), None)?;
            }
            FrameType::QuestionnaireSubmit => {
                let req: SubmitRequest = frame.parse_payload()?;
                let response = QuestionnaireResponse {
                    session_id: self.session.id.clone(),
                    participant_id: participant.clone(),
                    task_index: req.task_index,
                    scales: req.scales,
                };
                let id = self.session.record_questionnaire(&response, &self.instruments)?;
                self.store.append_response(&response)?;
                let name = self.pseudonym(participant)?;
                self.send_to(&name, &Self::encode(&protocol::questionnaire_ack(req.task_index, &id)));
                self.advance(PhaseTrigger::AllQuestionnairesIn)?;
            }
            other => {
                return Err(crate::domain::FrameError::SchemaViolation {
                    frame_type: other,
                    detail: "not accepted from clients".into(),
                }
                .into())
            }
        }
        Ok(())
    }

    // ---- phases ----

    fn admin(&mut self, command: SessionCommand) -> Result<Value> {
        match command {
            SessionCommand::Start => {
                if self.session.phase != Phase::Lobby {
                    return Err(SessionError::IllegalTransition {
                        from: self.session.phase.to_string(),
                        trigger: "start".into(),
                    }
                    .into());
                }
                self.advance(PhaseTrigger::Admin)?;
            }
            SessionCommand::ForceAdvance => {
                self.advance(PhaseTrigger::Admin)?;
            }
            SessionCommand::Abort => {
                let prev = self.session.phase;
                self.session.abort()?;
                self.enter_phase(prev)?;
            }
            SessionCommand::RecordEvaluation(record) => {
                if self.session.phase != Phase::Evaluation {
                    return Err(SessionError::WrongPhase(self.session.phase.to_string()).into());
                }
                self.manifest.evaluation = Some(record);
                self.store.write_manifest(&self.manifest)?;
            }
            SessionCommand::Status => return Ok(serde_json::to_value(self.snapshot())?),
        }
        Ok(json!({ "phase": self.session.phase }))
    }

    fn advance(&mut self, trigger: PhaseTrigger) -> Result<()> {
        let prev = self.session.phase;
        let next = self.session.advance_phase(trigger)?;
        if next != prev {
            info!(session = %self.session.id, from = %prev, to = %next, %trigger, "phase change");
            self.enter_phase(prev)?;
        }
        Ok(())
    }

    fn enter_phase(&mut self, prev: Phase) -> Result<()> {
        match prev {
            Phase::TeamBuilding => self.close_room(&RoomId::new(TEAM_BUILDING_ROOM)),
            Phase::Task { index, .. } => {
                let room = task_room_id(index);
                self.close_room(&room);
                self.broadcast(&protocol::task_end(index, room.as_str()));
            }
            Phase::Evaluation => self.close_room(&RoomId::new(crate::chat::EVALUATION_ROOM)),
            _ => {}
        }
        let phase = self.session.phase;
        self.deadline = None;
        match phase {
            Phase::TeamBuilding => {
                let room = self.main_room(RoomId::new(TEAM_BUILDING_ROOM));
                self.open_room(room, None, None)?;
                self.deadline = Some(Instant::now() + self.team_building);
            }
            Phase::Task { index, condition } => {
                let room = self.main_room(task_room_id(index));
                self.open_room(room, Some(condition), Some(index))?;
                let secs = self.session.tasks[index].duration_secs;
                self.deadline = Some(Instant::now() + Duration::from_secs(secs));
            }
            Phase::Evaluation => {
                self.session.all_pseudonyms();
                let room = open_evaluation_room(&self.session)?;
                self.open_room(room, None, None)?;
            }
            Phase::Completed | Phase::Aborted => {
                let ids: Vec<RoomId> = self.rooms.iter().map(|s| s.room.id.clone()).collect();
                for id in ids {
                    self.close_room(&id);
                }
            }
            Phase::Lobby | Phase::Questionnaire { .. } => {}
        }
        self.broadcast(&protocol::phase_change(phase.name(), phase_task_index(phase)));
        let participants = self.session.participants.clone();
        for p in &participants {
            let Some(name) = self.session.pseudonym(p).map(str::to_string) else { continue };
            if !self.clients.contains_key(&name) {
                continue;
            }
            for frame in self.private_phase_frames(p)? {
                self.send_to(&name, &Self::encode(&frame));
            }
        }
        self.manifest.phase = phase;
        self.store.write_manifest(&self.manifest)?;
        Ok(())
    }

    fn persist_manifest(&self) {
        if let Err(e) = self.store.write_manifest(&self.manifest) {
            warn!(session = %self.session.id, error = %e, "manifest write failed");
        }
    }
}

fn phase_task_index(phase: Phase) -> Option<usize> {
    match phase {
        Phase::Task { index, .. } | Phase::Questionnaire { index } => Some(index),
        _ => None,
    }
}
