use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{mpsc, oneshot};
use tracing::info;

use super::actor::{ActorParts, Cmd, ConnId, SessionActor, SessionCommand, SessionSnapshot};
use super::protocol::{self, JoinRequest};
use super::Clock;
use crate::config::ServiceConfig;
use crate::domain::{
    decode_frame, encode_frame, Condition, FrameType, InterventionConfig, ParticipantId,
    ParticipantRole, SessionId, TaskSpec, WireFrame,
};
use crate::error::{DomainError, Error, Result, SessionError};
use crate::llm::{fnv1a64, LlmProvider};
use crate::pipeline::{DevilsAdvocate, PromptStore};
use crate::session::{
    condition_order_for, EvaluationRecord, InstrumentSet, Manifest, OrderPolicy, Session, SessionStore,
};

/// Encoded frames travelling to one connection.
pub type Outbound = mpsc::UnboundedSender<Vec<u8>>;

/// Both ends of an in-process connection, speaking encoded wire frames.
#[derive(Debug)]
pub struct Connection {
    tx: mpsc::UnboundedSender<Vec<u8>>,
    rx: mpsc::UnboundedReceiver<Vec<u8>>,
}

impl Connection {
    pub fn send(&self, frame: &WireFrame) -> bool {
        encode_frame(frame).is_ok_and(|bytes| self.tx.send(bytes).is_ok())
    }

    pub fn send_raw(&self, bytes: Vec<u8>) -> bool {
        self.tx.send(bytes).is_ok()
    }

    pub async fn recv_raw(&mut self) -> Option<Vec<u8>> {
        self.rx.recv().await
    }

    pub async fn recv(&mut self) -> Option<WireFrame> {
        let bytes = self.rx.recv().await?;
        Some(decode_frame(&bytes).expect("server sent an undecodable frame"))
    }

    pub fn try_recv(&mut self) -> Option<WireFrame> {
        let bytes = self.rx.try_recv().ok()?;
        Some(decode_frame(&bytes).expect("server sent an undecodable frame"))
    }

    /// Sender half for frames to the server, receiver half for frames from it.
    pub fn split(self) -> (mpsc::UnboundedSender<Vec<u8>>, mpsc::UnboundedReceiver<Vec<u8>>) {
        (self.tx, self.rx)
    }
}

/// Everything a hub needs, already loaded.
#[derive(Clone)]
pub struct HubSettings {
    pub intervention: InterventionConfig,
    pub team_building: Duration,
    pub data_dir: PathBuf,
    pub tasks: Vec<TaskSpec>,
    pub instruments: Arc<InstrumentSet>,
    pub prompts: Arc<PromptStore>,
    pub provider: Arc<dyn LlmProvider>,
    pub order_policy: OrderPolicy,
    pub clock: Clock,
    pub admin_token: Option<String>,
    /// Mixed into join tokens.
    pub token_salt: u64,
}

impl HubSettings {
    pub fn from_config(cfg: &ServiceConfig, clock: Clock) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            intervention: cfg.intervention.clone(),
            team_building: Duration::from_secs(cfg.team_building_secs),
            data_dir: cfg.data_dir.clone(),
            tasks: cfg.load_tasks()?,
            instruments: Arc::new(cfg.load_instruments()?),
            prompts: cfg.load_prompts()?,
            provider: cfg.provider.build()?,
            order_policy: cfg.order_policy(),
            clock,
            admin_token: cfg.admin_token.clone(),
            token_salt: rand::random(),
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub session_id: Option<SessionId>,
    /// Defaults to `p1`..`p4`.
    #[serde(default)]
    pub participants: Option<Vec<ParticipantId>>,
    #[serde(default)]
    pub seed: u64,
    /// Position in the counterbalancing batch; defaults to the number of
    /// sessions this hub has created so far.
    #[serde(default)]
    pub batch_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: SessionId,
    pub tokens: BTreeMap<ParticipantId, String>,
    pub roles: BTreeMap<ParticipantId, ParticipantRole>,
    pub pseudonyms: BTreeMap<ParticipantId, String>,
    pub condition_order: [Condition; 2],
}

/// Commands accepted on the admin connection, tagged by `command`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum AdminRequest {
    CreateSession(CreateSession),
    Start { session_id: SessionId },
    ForceAdvance { session_id: SessionId },
    Abort { session_id: SessionId },
    RecordEvaluation {
        session_id: SessionId,
        bonus_awarded: bool,
        #[serde(default)]
        note: Option<String>,
    },
    Status { session_id: SessionId },
    Watch { session_id: SessionId },
    List,
}

struct HubInner {
    settings: HubSettings,
    advocate: Arc<DevilsAdvocate>,
    sessions: Mutex<BTreeMap<SessionId, mpsc::UnboundedSender<Cmd>>>,
    tokens: Mutex<BTreeMap<String, (SessionId, ParticipantId)>>,
    next_conn: AtomicU64,
}

/// Registry of live sessions and entry point for connections.
#[derive(Clone)]
pub struct Hub {
    inner: Arc<HubInner>,
}

impl Hub {
    pub fn new(settings: HubSettings) -> Self {
        let advocate = Arc::new(DevilsAdvocate::new(
            Arc::clone(&settings.provider),
            Arc::clone(&settings.prompts),
            settings.intervention.clone(),
        ));
        Self {
            inner: Arc::new(HubInner {
                settings,
                advocate,
                sessions: Mutex::new(BTreeMap::new()),
                tokens: Mutex::new(BTreeMap::new()),
                next_conn: AtomicU64::new(1),
            }),
        }
    }

    pub fn settings(&self) -> &HubSettings {
        &self.inner.settings
    }

    pub fn session_ids(&self) -> Vec<SessionId> {
        self.inner.sessions.lock().expect("hub lock").keys().cloned().collect()
    }

    fn actor(&self, id: &SessionId) -> Result<mpsc::UnboundedSender<Cmd>> {
        self.inner
            .sessions
            .lock()
            .expect("hub lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()).into())
    }

    /// Creates the session directory and manifest and starts its actor.
    /// Must run inside a tokio runtime.
    pub async fn create_session(&self, req: CreateSession) -> Result<SessionCreated> {
        let s = &self.inner.settings;
        let participants = req
            .participants
            .unwrap_or_else(|| (1..=4).map(|i| ParticipantId::new(format!("p{i}"))).collect());
        let session_id = req.session_id.unwrap_or_else(|| SessionId::new(format!("s{}", req.seed)));
        let batch_index = req
            .batch_index
            .unwrap_or_else(|| self.inner.sessions.lock().expect("hub lock").len());
        if self.inner.sessions.lock().expect("hub lock").contains_key(&session_id) {
            return Err(DomainError::InvalidConfig(format!("session `{session_id}` already exists")).into());
        }
        let order = condition_order_for(batch_index, s.order_policy);
        let mut session = Session::new(session_id.clone(), participants, req.seed, order, s.tasks.clone())?;
        let store = SessionStore::create(&s.data_dir, &session_id)?;
        let manifest = Manifest::from_session(&mut session, &s.intervention);
        store.write_manifest(&manifest)?;

        let tokens: BTreeMap<ParticipantId, String> = session
            .participants
            .iter()
            .map(|p| {
                let key = format!("{}:{}:{}", s.token_salt, session_id, p);
                (p.clone(), format!("{:016x}", fnv1a64(key.as_bytes())))
            })
            .collect();
        let created = SessionCreated {
            session_id: session_id.clone(),
            tokens: tokens.clone(),
            roles: session.roles.clone(),
            pseudonyms: session.pseudonyms().clone(),
            condition_order: order,
        };
        let tx = SessionActor::spawn(ActorParts {
            session,
            manifest,
            store,
            intervention: s.intervention.clone(),
            advocate: Arc::clone(&self.inner.advocate),
            instruments: Arc::clone(&s.instruments),
            clock: s.clock,
            team_building: s.team_building,
        });
        {
            let mut map = self.inner.tokens.lock().expect("hub lock");
            for (p, t) in tokens {
                map.insert(t, (session_id.clone(), p));
            }
        }
        self.inner.sessions.lock().expect("hub lock").insert(session_id.clone(), tx);
        info!(session = %session_id, ?order, "session created");
        Ok(created)
    }

    pub async fn command(&self, session: &SessionId, command: SessionCommand) -> Result<Value> {
        let (reply, rx) = oneshot::channel();
        self.actor(session)?
            .send(Cmd::Admin { command, reply })
            .map_err(|_| SessionError::UnknownSession(session.to_string()))?;
        rx.await.map_err(|_| SessionError::UnknownSession(session.to_string()))?
    }

    pub async fn snapshot(&self, session: &SessionId) -> Result<SessionSnapshot> {
        let (reply, rx) = oneshot::channel();
        self.actor(session)?
            .send(Cmd::Snapshot { reply })
            .map_err(|_| SessionError::UnknownSession(session.to_string()))?;
        Ok(rx.await.map_err(|_| SessionError::UnknownSession(session.to_string()))?)
    }

    /// Mirrors every frame the session emits, DMs included, to `out`.
    pub fn watch(&self, session: &SessionId, out: Outbound) -> Result<()> {
        self.actor(session)?
            .send(Cmd::Watch { out })
            .map_err(|_| SessionError::UnknownSession(session.to_string()).into())
    }

    pub async fn admin(&self, req: AdminRequest, out: Option<&Outbound>) -> Result<Value> {
        match req {
            AdminRequest::CreateSession(c) => Ok(serde_json::to_value(self.create_session(c).await?)?),
            AdminRequest::Start { session_id } => self.command(&session_id, SessionCommand::Start).await,
            AdminRequest::ForceAdvance { session_id } => self.command(&session_id, SessionCommand::ForceAdvance).await,
            AdminRequest::Abort { session_id } => self.command(&session_id, SessionCommand::Abort).await,
            AdminRequest::RecordEvaluation { session_id, bonus_awarded, note } => {
                let record = EvaluationRecord { bonus_awarded, note };
                self.command(&session_id, SessionCommand::RecordEvaluation(record)).await
            }
            AdminRequest::Status { session_id } => self.command(&session_id, SessionCommand::Status).await,
            AdminRequest::Watch { session_id } => {
                let out = out.ok_or_else(|| DomainError::InvalidConfig("watch needs a connection".into()))?;
                self.watch(&session_id, out.clone())?;
                Ok(json!({ "watching": session_id }))
            }
            AdminRequest::List => Ok(serde_json::to_value(self.session_ids())?),
        }
    }

    fn next_conn(&self) -> ConnId {
        self.inner.next_conn.fetch_add(1, Ordering::Relaxed)
    }

    /// Opens an in-process participant connection.
    pub fn connect_client(&self) -> Connection {
        let (to_server, inbound) = mpsc::unbounded_channel();
        let (out, from_server) = mpsc::unbounded_channel();
        tokio::spawn(drive_client(self.clone(), inbound, out));
        Connection { tx: to_server, rx: from_server }
    }

    /// Opens an in-process admin connection.
    pub fn connect_admin(&self) -> Connection {
        let (to_server, inbound) = mpsc::unbounded_channel();
        let (out, from_server) = mpsc::unbounded_channel();
        tokio::spawn(drive_admin(self.clone(), inbound, out));
        Connection { tx: to_server, rx: from_server }
    }

    async fn join(&self, conn: ConnId, frame: &WireFrame, out: Outbound) -> Result<(mpsc::UnboundedSender<Cmd>, ParticipantId)> {
        let req: JoinRequest = frame.parse_payload()?;
        let (session_id, participant) = self
            .inner
            .tokens
            .lock()
            .expect("hub lock")
            .get(&req.token)
            .cloned()
            .filter(|(s, _)| *s == req.session_id)
            .ok_or_else(|| SessionError::UnknownParticipant("invalid join token".into()))?;
        let tx = self.actor(&session_id)?;
        let (reply, rx) = oneshot::channel();
        tx.send(Cmd::Join {
            conn,
            participant: participant.clone(),
            out,
            reply,
        })
        .map_err(|_| SessionError::UnknownSession(session_id.to_string()))?;
        rx.await.map_err(|_| SessionError::UnknownSession(session_id.to_string()))??;
        Ok((tx, participant))
    }
}

fn send_frame(out: &Outbound, frame: &WireFrame) {
    if let Ok(bytes) = encode_frame(frame) {
        let _ = out.send(bytes);
    }
}

/// Reads a participant connection: the first frame must be Join, after which
/// Chat, DM and QuestionnaireSubmit frames go to the session actor.
pub(crate) async fn drive_client(hub: Hub, mut inbound: mpsc::UnboundedReceiver<Vec<u8>>, out: Outbound) {
    let conn = hub.next_conn();
    let mut joined: Option<(mpsc::UnboundedSender<Cmd>, ParticipantId)> = None;
    while let Some(bytes) = inbound.recv().await {
        let frame = match decode_frame(&bytes) {
            Ok(f) => f,
            Err(e) => {
                send_frame(&out, &protocol::error_frame(&Error::Frame(e)));
                continue;
            }
        };
        match (&joined, frame.frame_type) {
            (_, FrameType::Leave) => break,
            (None, FrameType::Join) => match hub.join(conn, &frame, out.clone()).await {
                Ok(j) => joined = Some(j),
                Err(e) => send_frame(&out, &protocol::error_frame(&e)),
            },
            (None, _) => send_frame(&out, &WireFrame::error("not_joined", "send Join first")),
            (Some(_), FrameType::Join) => send_frame(&out, &WireFrame::error("already_joined", "connection already joined")),
            (Some((tx, participant)), _) => {
                let cmd = Cmd::Frame {
                    conn,
                    participant: participant.clone(),
                    frame,
                };
                if tx.send(cmd).is_err() {
                    break;
                }
            }
        }
    }
    if let Some((tx, _)) = joined {
        let _ = tx.send(Cmd::Disconnect { conn });
    }
}

pub(crate) async fn drive_admin(hub: Hub, mut inbound: mpsc::UnboundedReceiver<Vec<u8>>, out: Outbound) {
    while let Some(bytes) = inbound.recv().await {
        let frame = match decode_frame(&bytes) {
            Ok(f) => f,
            Err(e) => {
                send_frame(&out, &protocol::error_frame(&Error::Frame(e)));
                continue;
            }
        };
        if frame.frame_type != FrameType::Admin {
            send_frame(&out, &WireFrame::error("unexpected_frame", "admin connections accept Admin frames only"));
            continue;
        }
        if let Some(expected) = &hub.settings().admin_token {
            if frame.str_field("token") != Some(expected.as_str()) {
                send_frame(&out, &WireFrame::error("unauthorized", "missing or wrong admin token"));
                continue;
            }
        }
        let command = frame.str_field("command").unwrap_or_default().to_string();
        let reply = match frame.parse_payload::<AdminRequest>() {
            Ok(req) => hub.admin(req, Some(&out)).await,
            Err(e) => Err(e.into()),
        };
        match reply {
            Ok(result) => send_frame(&out, &protocol::admin_reply(&command, result)),
            Err(e) => send_frame(&out, &protocol::error_frame(&e)),
        }
    }
}
