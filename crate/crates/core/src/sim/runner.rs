use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tokio::time::{sleep, timeout};
use tracing::{debug, info, warn};

use super::script::{fill_options, ActionKind, PersonaSet, Script, StopCondition};
use crate::config::ServiceConfig;
use crate::domain::{
    decode_frame, encode_frame, FrameType, Message, MessageKind, ParticipantId, RoleKind, SessionId, TaskSpec,
    WireFrame,
};
use crate::error::{Result, SimError};
use crate::llm::{fnv1a64, CompletionParams, ProviderKind};
use crate::pipeline::render;
use crate::server::protocol::{frame_message, SubmitRequest};
use crate::server::{Clock, CreateSession, Hub, HubSettings, SessionCommand, SessionCreated, SessionSnapshot};
use crate::session::{Phase, Scale, ScaleScores};

/// Virtual start time of every simulated session (2025-01-01T00:00:00Z).
pub const SIM_EPOCH_MS: u64 = 1_735_689_600_000;

/// Upper bound on virtual time spent waiting for any single event.
const STALL_LIMIT: Duration = Duration::from_secs(6 * 3600);

/// Done-signal key for the evaluation chat.
const EVALUATION_KEY: usize = usize::MAX;

const EVALUATION_SPACING_MS: u64 = 2_000;

/// Everything a simulated session produced.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub session_id: SessionId,
    pub session_dir: PathBuf,
    pub created: SessionCreated,
    pub snapshot: SessionSnapshot,
    /// Every frame each participant received, in arrival order.
    pub captures: BTreeMap<ParticipantId, Vec<WireFrame>>,
}

impl SimOutcome {
    pub fn messages(&self, room: &str) -> &[Message] {
        self.snapshot.room(room).map_or(&[], |r| r.messages.as_slice())
    }

    pub fn count(&self, room: &str, kind: MessageKind) -> usize {
        self.messages(room).iter().filter(|m| m.kind == kind).count()
    }
}

pub fn sim_session_id(seed: u64) -> SessionId {
    SessionId::new(format!("sim-{seed:04}"))
}

/// Hub settings for a simulation writing under `out`. The mock provider is
/// reseeded with `seed`. Call inside the runtime that will run the session.
pub fn hub_settings(cfg: &ServiceConfig, seed: u64, out: &Path) -> Result<HubSettings> {
    let mut cfg = cfg.clone();
    if cfg.provider.kind == ProviderKind::Mock {
        cfg.provider.seed = Some(seed);
    }
    cfg.data_dir = out.to_path_buf();
    let mut settings = HubSettings::from_config(&cfg, Clock::virtual_at(SIM_EPOCH_MS))?;
    settings.token_salt = seed;
    Ok(settings)
}

/// Paused virtual time for the mock provider; real time otherwise, so network
/// timeouts behave.
fn runtime(cfg: &ServiceConfig) -> Result<tokio::runtime::Runtime> {
    let mut builder = tokio::runtime::Builder::new_current_thread();
    builder.enable_all();
    if cfg.provider.kind == ProviderKind::Mock {
        builder.start_paused(true);
    }
    Ok(builder.build()?)
}

/// Runs a scripted session to completion on a fresh runtime and writes
/// `<out>/<session_id>/`.
pub fn simulate_script(script: &Script, cfg: &ServiceConfig, seed: u64, out: &Path) -> Result<SimOutcome> {
    script.validate()?;
    runtime(cfg)?.block_on(async {
        let hub = Hub::new(hub_settings(cfg, seed, out)?);
        run_scripted_session(&hub, script, seed).await
    })
}

/// Runs a persona session to completion on a fresh runtime.
pub fn simulate_personas(personas: &PersonaSet, cfg: &ServiceConfig, seed: u64, out: &Path) -> Result<SimOutcome> {
    personas.validate()?;
    runtime(cfg)?.block_on(async {
        let hub = Hub::new(hub_settings(cfg, seed, out)?);
        run_persona_session(&hub, personas, seed).await
    })
}

fn run_err(msg: impl Into<String>) -> crate::error::Error {
    SimError::Run(msg.into()).into()
}

fn frame(frame_type: FrameType, payload: Value) -> WireFrame {
    let Value::Object(map) = payload else { unreachable!("payloads are objects") };
    WireFrame::new(frame_type, map)
}

fn send(tx: &mpsc::UnboundedSender<Vec<u8>>, f: &WireFrame) {
    if let Ok(bytes) = encode_frame(f) {
        let _ = tx.send(bytes);
    }
}

/// Seeded Likert answers shaped after the instruments in a QuestionnaireOpen.
fn answers(open: &WireFrame, participant: &ParticipantId, seed: u64) -> Option<SubmitRequest> {
    let task_index = open.payload.get("task_index")?.as_u64()? as usize;
    let scales = open.payload.get("scales")?.as_array()?;
    let key = format!("{seed}/{participant}/{task_index}");
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(key.as_bytes()));
    let mut by_scale: BTreeMap<Scale, Vec<u8>> = BTreeMap::new();
    for s in scales {
        let scale = Scale::from_name(s.get("name")?.as_str()?)?;
        let n = s.get("items")?.as_array()?.len();
        by_scale.insert(scale, (0..n).map(|_| rng.random_range(1..=7u8)).collect());
    }
    let mut take = |s: Scale| by_scale.remove(&s).unwrap_or_default();
    let scores = ScaleScores {
        psychological_safety: take(Scale::PsychologicalSafety),
        process_satisfaction: take(Scale::ProcessSatisfaction),
        outcome_satisfaction: take(Scale::OutcomeSatisfaction),
        nasa_tlx: take(Scale::NasaTlx),
        ai_perception: by_scale.remove(&Scale::AiPerception),
    };
    Some(SubmitRequest { task_index, scales: scores })
}

/// What one simulated participant does on its own.
struct ClientPlan {
    participant: ParticipantId,
    session_id: SessionId,
    token: String,
    /// Scripted actions replayed in every task.
    actions: Vec<(u64, ActionKind, String, Option<String>)>,
    /// (delay from previous line, text) for the evaluation chat.
    evaluation: Vec<(u64, String)>,
    seed: u64,
    tasks: Arc<Vec<TaskSpec>>,
}

/// Sends timed frames while `active` still names this schedule.
async fn run_schedule(
    tx: mpsc::UnboundedSender<Vec<u8>>,
    frames: Vec<(u64, WireFrame)>,
    key: usize,
    active: watch::Receiver<Option<usize>>,
    done: mpsc::UnboundedSender<usize>,
) {
    for (delay, f) in frames {
        sleep(Duration::from_millis(delay)).await;
        if *active.borrow() != Some(key) {
            break;
        }
        send(&tx, &f);
    }
    let _ = done.send(key);
}

/// Joins, follows the phase machine, answers questionnaires and records
/// every frame it receives. Ends on Completed or Aborted.
async fn client_task(
    plan: ClientPlan,
    tx: mpsc::UnboundedSender<Vec<u8>>,
    mut rx: mpsc::UnboundedReceiver<Vec<u8>>,
    active: watch::Receiver<Option<usize>>,
    done: mpsc::UnboundedSender<usize>,
) -> Result<Vec<WireFrame>> {
    send(
        &tx,
        &frame(FrameType::Join, json!({"session_id": plan.session_id, "token": plan.token})),
    );
    let mut capture = Vec::new();
    let mut schedules: Vec<JoinHandle<()>> = Vec::new();
    while let Some(bytes) = rx.recv().await {
        let f = decode_frame(&bytes)?;
        match f.frame_type {
            FrameType::TaskStart => {
                let idx = f.payload.get("task_index").and_then(Value::as_u64).unwrap_or(0) as usize;
                let task = &plan.tasks[idx];
                let frames = plan
                    .actions
                    .iter()
                    .map(|(delay, kind, text, recipient)| {
                        let text = fill_options(text, task);
                        let f = match kind {
                            ActionKind::Public => frame(FrameType::Chat, json!({ "text": text })),
                            ActionKind::Dm => frame(FrameType::Dm, json!({ "text": text, "recipient": recipient })),
                        };
                        (*delay, f)
                    })
                    .collect();
                schedules.push(tokio::spawn(run_schedule(tx.clone(), frames, idx, active.clone(), done.clone())));
            }
            FrameType::QuestionnaireOpen => match answers(&f, &plan.participant, plan.seed) {
                Some(req) => send(&tx, &WireFrame::with_payload(FrameType::QuestionnaireSubmit, &req)?),
                None => warn!(participant = %plan.participant, "could not read questionnaire"),
            },
            FrameType::PhaseChange => match f.str_field("phase") {
                Some("evaluation") if !plan.evaluation.is_empty() => {
                    let frames = plan
                        .evaluation
                        .iter()
                        .map(|(d, text)| (*d, frame(FrameType::Chat, json!({ "text": text }))))
                        .collect();
                    schedules.push(tokio::spawn(run_schedule(
                        tx.clone(),
                        frames,
                        EVALUATION_KEY,
                        active.clone(),
                        done.clone(),
                    )));
                }
                Some("completed" | "aborted") => {
                    capture.push(f);
                    break;
                }
                _ => {}
            },
            FrameType::Error => {
                debug!(participant = %plan.participant, payload = ?f.payload, "server error frame");
            }
            _ => {}
        }
        capture.push(f);
    }
    for s in schedules {
        s.abort();
    }
    send(&tx, &frame(FrameType::Leave, json!({})));
    Ok(capture)
}

/// Session-wide view built from the admin watch stream.
struct Driver {
    hub: Hub,
    session: SessionId,
    watch_rx: mpsc::UnboundedReceiver<Vec<u8>>,
    done_rx: mpsc::UnboundedReceiver<usize>,
    done_tx: mpsc::UnboundedSender<usize>,
    phase: String,
    task_index: Option<usize>,
    history: BTreeMap<String, Vec<Message>>,
    done: BTreeMap<usize, usize>,
}

impl Driver {
    fn new(hub: &Hub, session: &SessionId) -> Result<Self> {
        let (watch_tx, watch_rx) = mpsc::unbounded_channel();
        hub.watch(session, watch_tx)?;
        let (done_tx, done_rx) = mpsc::unbounded_channel();
        Ok(Self {
            hub: hub.clone(),
            session: session.clone(),
            watch_rx,
            done_rx,
            done_tx,
            phase: "lobby".into(),
            task_index: None,
            history: BTreeMap::new(),
            done: BTreeMap::new(),
        })
    }

    fn observe(&mut self, bytes: &[u8]) -> Result<()> {
        let f = decode_frame(bytes)?;
        if f.frame_type == FrameType::PhaseChange {
            self.phase = f.str_field("phase").unwrap_or_default().to_string();
            self.task_index = f.payload.get("task_index").and_then(Value::as_u64).map(|i| i as usize);
        } else if let Some(msg) = frame_message(&f) {
            self.history.entry(msg.room_id.to_string()).or_default().push(msg);
        }
        Ok(())
    }

    async fn step(&mut self) -> Result<()> {
        let event = timeout(STALL_LIMIT, async {
            tokio::select! {
                biased;
                f = self.watch_rx.recv() => Ok(f),
                d = self.done_rx.recv() => Err(d),
            }
        })
        .await
        .map_err(|_| run_err(format!("session stalled in phase {}", self.phase)))?;
        match event {
            Ok(Some(bytes)) => self.observe(&bytes)?,
            Ok(None) => return Err(run_err("session stopped unexpectedly")),
            Err(Some(key)) => *self.done.entry(key).or_default() += 1,
            Err(None) => {}
        }
        Ok(())
    }

    /// Applies everything already queued without waiting.
    fn drain(&mut self) -> Result<()> {
        while let Ok(bytes) = self.watch_rx.try_recv() {
            self.observe(&bytes)?;
        }
        while let Ok(key) = self.done_rx.try_recv() {
            *self.done.entry(key).or_default() += 1;
        }
        Ok(())
    }

    async fn wait_until(&mut self, pred: impl Fn(&Self) -> bool) -> Result<()> {
        self.drain()?;
        while !pred(self) {
            self.step().await?;
        }
        Ok(())
    }

    fn in_task(&self, idx: usize) -> bool {
        self.phase == "task" && self.task_index == Some(idx)
    }

    fn done_count(&self, key: usize) -> usize {
        self.done.get(&key).copied().unwrap_or(0)
    }

    fn public_count(&self, room: &str) -> u64 {
        self.history
            .get(room)
            .map_or(0, |h| h.iter().filter(|m| m.kind == MessageKind::HumanPublic).count() as u64)
    }

    async fn command(&self, command: SessionCommand) -> Result<Value> {
        self.hub.command(&self.session, command).await
    }

    async fn wait_connected(&self, n: usize) -> Result<()> {
        for _ in 0..10_000 {
            if self.hub.snapshot(&self.session).await?.connected.len() >= n {
                return Ok(());
            }
            tokio::task::yield_now().await;
        }
        Err(run_err("participants did not join"))
    }

    /// Ends task `idx` if a timer has not already done so, then waits for the
    /// questionnaires to move the session on.
    async fn finish_task(&mut self, idx: usize, settle_ms: u64, last: bool) -> Result<()> {
        sleep(Duration::from_millis(settle_ms)).await;
        if matches!(self.hub.snapshot(&self.session).await?.phase, Phase::Task { index, .. } if index == idx) {
            self.command(SessionCommand::ForceAdvance).await?;
        }
        if last {
            self.wait_until(|d| d.phase == "evaluation").await
        } else {
            self.wait_until(|d| d.in_task(idx + 1)).await
        }
    }

    async fn finish_session(&mut self, bonus_awarded: bool, note: Option<String>) -> Result<()> {
        self.command(SessionCommand::RecordEvaluation(crate::session::EvaluationRecord {
            bonus_awarded,
            note,
        }))
        .await?;
        self.command(SessionCommand::ForceAdvance).await?;
        self.wait_until(|d| d.phase == "completed").await
    }
}

struct Clients {
    txs: Vec<mpsc::UnboundedSender<Vec<u8>>>,
    handles: Vec<(ParticipantId, JoinHandle<Result<Vec<WireFrame>>>)>,
}

fn spawn_clients(
    hub: &Hub,
    plans: Vec<ClientPlan>,
    active: &watch::Receiver<Option<usize>>,
    done: &mpsc::UnboundedSender<usize>,
) -> Clients {
    let mut clients = Clients {
        txs: Vec::new(),
        handles: Vec::new(),
    };
    for plan in plans {
        let (tx, rx) = hub.connect_client().split();
        clients.txs.push(tx.clone());
        let participant = plan.participant.clone();
        let handle = tokio::spawn(client_task(plan, tx, rx, active.clone(), done.clone()));
        clients.handles.push((participant, handle));
    }
    clients
}

async fn collect(hub: &Hub, created: SessionCreated, clients: Clients) -> Result<SimOutcome> {
    drop(clients.txs);
    let mut captures = BTreeMap::new();
    for (participant, handle) in clients.handles {
        let frames = handle.await.map_err(|e| run_err(e.to_string()))??;
        captures.insert(participant, frames);
    }
    let snapshot = hub.snapshot(&created.session_id).await?;
    let session_dir = hub.settings().data_dir.join(created.session_id.as_str());
    info!(session = %created.session_id, dir = %session_dir.display(), "simulation finished");
    Ok(SimOutcome {
        session_id: created.session_id.clone(),
        session_dir,
        created,
        snapshot,
        captures,
    })
}

/// Seniors share the evaluation lines in turn, one line every 2 s.
fn evaluation_plan(lines: &[String], seniors: &[ParticipantId]) -> BTreeMap<ParticipantId, Vec<(u64, String)>> {
    let mut out: BTreeMap<ParticipantId, Vec<(u64, String)>> = BTreeMap::new();
    let mut last: BTreeMap<ParticipantId, u64> = BTreeMap::new();
    if seniors.is_empty() {
        return out;
    }
    for (k, line) in lines.iter().enumerate() {
        let who = &seniors[k % seniors.len()];
        let at = EVALUATION_SPACING_MS * (k as u64 + 1);
        let prev = last.insert(who.clone(), at).unwrap_or(0);
        out.entry(who.clone()).or_default().push((at - prev, line.clone()));
    }
    out
}

fn seniors_of(created: &SessionCreated, order: &[ParticipantId]) -> Vec<ParticipantId> {
    order
        .iter()
        .filter(|p| created.roles.get(*p).is_some_and(|r| r.is_senior()))
        .cloned()
        .collect()
}

/// Drives the full phase machine with scripted participants:
/// lobby, team building, both tasks with questionnaires, evaluation.
pub async fn run_scripted_session(hub: &Hub, script: &Script, seed: u64) -> Result<SimOutcome> {
    script.validate()?;
    let ids = script.participant_ids();
    let created = hub
        .create_session(CreateSession {
            session_id: Some(sim_session_id(seed)),
            participants: Some(ids.clone()),
            seed,
            batch_index: Some(0),
        })
        .await?;
    let mut driver = Driver::new(hub, &created.session_id)?;
    let (active_tx, active_rx) = watch::channel(None);
    let tasks = Arc::new(hub.settings().tasks.clone());
    let junior = created
        .roles
        .iter()
        .find(|(_, r)| !r.is_senior())
        .and_then(|(p, _)| created.pseudonyms.get(p))
        .cloned()
        .unwrap_or_default();
    let lines: Vec<String> = script
        .evaluation
        .messages
        .iter()
        .map(|l| render(l, &BTreeMap::from([("junior", junior.clone())])).unwrap_or_else(|_| l.clone()))
        .collect();
    let mut evaluation = evaluation_plan(&lines, &seniors_of(&created, &ids));
    let speakers = evaluation.len();
    let plans = script
        .participants
        .iter()
        .map(|p| ClientPlan {
            participant: p.id.clone(),
            session_id: created.session_id.clone(),
            token: created.tokens[&p.id].clone(),
            actions: p
                .actions
                .iter()
                .map(|a| (a.delay_ms, a.kind, a.text.clone(), a.recipient.clone()))
                .collect(),
            evaluation: evaluation.remove(&p.id).unwrap_or_default(),
            seed,
            tasks: Arc::clone(&tasks),
        })
        .collect();
    let clients = spawn_clients(hub, plans, &active_rx, &driver.done_tx);
    driver.wait_connected(4).await?;

    driver.command(SessionCommand::Start).await?;
    let _ = active_tx.send(Some(0));
    driver.command(SessionCommand::ForceAdvance).await?;
    for idx in 0..tasks.len() {
        driver.wait_until(|d| d.in_task(idx)).await?;
        let room = crate::server::task_room_id(idx).to_string();
        match script.stop {
            StopCondition::Exhausted => driver.wait_until(|d| d.done_count(idx) >= 4).await?,
            StopCondition::Messages(n) => {
                driver
                    .wait_until(|d| d.public_count(&room) >= n || d.done_count(idx) >= 4)
                    .await?
            }
            StopCondition::TimeMs(ms) => {
                let _ = timeout(Duration::from_millis(ms), driver.wait_until(|d| d.done_count(idx) >= 4)).await;
            }
        }
        let last = idx + 1 == tasks.len();
        let _ = active_tx.send(if last { Some(EVALUATION_KEY) } else { Some(idx + 1) });
        driver.finish_task(idx, script.settle_ms, last).await?;
    }
    driver.wait_until(|d| d.done_count(EVALUATION_KEY) >= speakers).await?;
    driver
        .finish_session(script.evaluation.bonus_awarded, script.evaluation.note.clone())
        .await?;
    collect(hub, created, clients).await
}

fn history_text(history: &[Message], window: usize) -> String {
    let visible: Vec<&Message> = history
        .iter()
        .filter(|m| matches!(m.kind, MessageKind::HumanPublic | MessageKind::Agent))
        .collect();
    visible[visible.len().saturating_sub(window)..]
        .iter()
        .map(|m| match m.author.pseudonym() {
            Some(name) => format!("{name}: {}", m.text),
            None => format!("AI: {}", m.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Persona participants speak in round-robin turns with seeded jitter; each
/// turn renders the persona prompt from the participant's briefing and the
/// recent public discussion.
pub async fn run_persona_session(hub: &Hub, personas: &PersonaSet, seed: u64) -> Result<SimOutcome> {
    personas.validate()?;
    let ids: Vec<ParticipantId> = personas.personas.iter().map(|p| p.id.clone()).collect();
    let created = hub
        .create_session(CreateSession {
            session_id: Some(sim_session_id(seed)),
            participants: Some(ids.clone()),
            seed,
            batch_index: Some(0),
        })
        .await?;
    let roles: Vec<RoleKind> = ids.iter().map(|p| created.roles[p].kind()).collect();
    let assignment = personas.assign(&roles);
    let mut driver = Driver::new(hub, &created.session_id)?;
    let (active_tx, active_rx) = watch::channel(None);
    let tasks = Arc::new(hub.settings().tasks.clone());
    let plans = ids
        .iter()
        .map(|p| ClientPlan {
            participant: p.clone(),
            session_id: created.session_id.clone(),
            token: created.tokens[p].clone(),
            actions: Vec::new(),
            evaluation: Vec::new(),
            seed,
            tasks: Arc::clone(&tasks),
        })
        .collect();
    let clients = spawn_clients(hub, plans, &active_rx, &driver.done_tx);
    driver.wait_connected(4).await?;
    let provider = Arc::clone(&hub.settings().provider);
    let prompts = Arc::clone(&hub.settings().prompts);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7065_7273_6f6e_6173);

    driver.command(SessionCommand::Start).await?;
    let _ = active_tx.send(Some(0));
    driver.command(SessionCommand::ForceAdvance).await?;
    for (idx, task) in tasks.iter().enumerate() {
        driver.wait_until(|d| d.in_task(idx)).await?;
        let room = crate::server::task_room_id(idx).to_string();
        let labels = task.option_labels();
        for turn in 0..personas.turns_per_task {
            let jitter = if personas.jitter_ms > 0 { rng.random_range(0..=personas.jitter_ms) } else { 0 };
            sleep(Duration::from_millis(personas.turn_interval_ms + jitter)).await;
            driver.drain()?;
            if !driver.in_task(idx) {
                break;
            }
            let pos = turn % ids.len();
            let persona = &personas.personas[assignment[pos]];
            let leaning = labels.get(persona.leaning).or(labels.first()).copied().unwrap_or_default();
            let history = driver.history.get(&room).map(Vec::as_slice).unwrap_or(&[]);
            let mut values = BTreeMap::new();
            values.insert("profile", persona.profile.clone());
            values.insert("briefing", task.briefing_for(roles[pos]).to_string());
            values.insert("task_title", task.title.clone());
            values.insert("options", labels.join(" | "));
            values.insert("leaning", leaning.to_string());
            values.insert("history", history_text(history, personas.history_window));
            let prompt = render(&prompts.current()?.persona, &values)?;
            let text = provider.complete(&prompt, &CompletionParams::default()).await?;
            send(&clients.txs[pos], &frame(FrameType::Chat, json!({ "text": text.trim() })));
        }
        let last = idx + 1 == tasks.len();
        let _ = active_tx.send(if last { None } else { Some(idx + 1) });
        driver.finish_task(idx, 5_000, last).await?;
    }
    driver.finish_session(false, None).await?;
    collect(hub, created, clients).await
}
