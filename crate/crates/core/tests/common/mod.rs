#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use advocate_core::domain::{builtin_tasks, Condition, FrameType, InterventionConfig, ParticipantId, RoleKind, WireFrame};
use advocate_core::llm::{LlmProvider, MockProvider};
use advocate_core::pipeline::PromptStore;
use advocate_core::server::protocol::SubmitRequest;
use advocate_core::server::{Clock, Connection, CreateSession, Hub, HubSettings, SessionCreated};
use advocate_core::session::{InstrumentSet, OrderPolicy, Scale, ScaleScores};
use serde_json::json;
use tempfile::TempDir;

pub const EPOCH_MS: u64 = 1_735_689_600_000;

pub struct Fixture {
    pub hub: Hub,
    pub created: SessionCreated,
    pub dir: TempDir,
}

impl Fixture {
    pub async fn new(order: [Condition; 2], provider: Arc<dyn LlmProvider>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let settings = HubSettings {
            intervention: InterventionConfig::default(),
            team_building: Duration::from_secs(600),
            data_dir: dir.path().to_path_buf(),
            tasks: builtin_tasks(),
            instruments: Arc::new(InstrumentSet::builtin()),
            prompts: Arc::new(PromptStore::builtin()),
            provider,
            order_policy: OrderPolicy::Fixed(order),
            clock: Clock::virtual_at(EPOCH_MS),
            admin_token: None,
            token_salt: 1,
        };
        let hub = Hub::new(settings);
        let created = hub
            .create_session(CreateSession { seed: 11, ..CreateSession::default() })
            .await
            .unwrap();
        Self { hub, created, dir }
    }

    pub async fn mock(order: [Condition; 2]) -> Self {
        Self::new(order, Arc::new(MockProvider::new(3))).await
    }

    pub fn ids(&self) -> Vec<ParticipantId> {
        self.created.tokens.keys().cloned().collect()
    }

    pub fn junior(&self) -> ParticipantId {
        self.created
            .roles
            .iter()
            .find(|(_, r)| r.kind() == RoleKind::Junior)
            .map(|(p, _)| p.clone())
            .unwrap()
    }

    pub fn seniors(&self) -> Vec<ParticipantId> {
        self.ids().into_iter().filter(|p| *p != self.junior()).collect()
    }

    pub fn pseudonym(&self, p: &ParticipantId) -> String {
        self.created.pseudonyms[p].clone()
    }

    /// Connects and joins; returns the connection after the join ack.
    pub async fn join(&self, p: &ParticipantId) -> Connection {
        let mut conn = self.hub.connect_client();
        conn.send(&join_frame(&self.created, p));
        let ack = conn.recv().await.unwrap();
        assert_eq!(ack.frame_type, FrameType::Join, "{ack:?}");
        conn
    }

    pub async fn join_all(&self) -> Vec<Connection> {
        let mut out = Vec::new();
        for p in self.ids() {
            out.push(self.join(&p).await);
        }
        out
    }

    pub async fn advance(&self) {
        self.hub
            .admin(
                serde_json::from_value(json!({"command": "force-advance", "session_id": self.created.session_id})).unwrap(),
                None,
            )
            .await
            .unwrap();
    }

    pub async fn start(&self) {
        self.hub
            .admin(serde_json::from_value(json!({"command": "start", "session_id": self.created.session_id})).unwrap(), None)
            .await
            .unwrap();
    }
}

pub fn join_frame(created: &SessionCreated, p: &ParticipantId) -> WireFrame {
    frame(FrameType::Join, json!({"session_id": created.session_id, "token": created.tokens[p]}))
}

pub fn frame(t: FrameType, payload: serde_json::Value) -> WireFrame {
    match payload {
        serde_json::Value::Object(map) => WireFrame::new(t, map),
        _ => panic!("payload must be an object"),
    }
}

pub fn chat(text: &str) -> WireFrame {
    frame(FrameType::Chat, json!({ "text": text }))
}

pub fn dm(recipient: &str, text: &str) -> WireFrame {
    frame(FrameType::Dm, json!({ "recipient": recipient, "text": text }))
}

pub fn submit(task_index: usize, treatment: bool) -> WireFrame {
    let set = InstrumentSet::builtin();
    let items = |s: Scale| vec![4u8; set.item_count(s)];
    let req = SubmitRequest {
        task_index,
        scales: ScaleScores {
            psychological_safety: items(Scale::PsychologicalSafety),
            process_satisfaction: items(Scale::ProcessSatisfaction),
            outcome_satisfaction: items(Scale::OutcomeSatisfaction),
            nasa_tlx: items(Scale::NasaTlx),
            ai_perception: treatment.then(|| items(Scale::AiPerception)),
        },
    };
    WireFrame::with_payload(FrameType::QuestionnaireSubmit, &req).unwrap()
}

/// Everything currently queued for the connection, after letting the
/// server go idle.
pub async fn drain(conn: &mut Connection) -> Vec<WireFrame> {
    let mut out = Vec::new();
    while let Ok(Some(f)) = tokio::time::timeout(Duration::from_millis(20), conn.recv()).await {
        out.push(f);
    }
    out
}

pub async fn drain_all(conns: &mut [Connection]) -> Vec<Vec<WireFrame>> {
    let mut out = Vec::new();
    for c in conns.iter_mut() {
        out.push(drain(c).await);
    }
    out
}

pub fn of_type(frames: &[WireFrame], t: FrameType) -> Vec<&WireFrame> {
    frames.iter().filter(|f| f.frame_type == t).collect()
}

pub fn error_code(f: &WireFrame) -> &str {
    f.str_field("code").unwrap_or_default()
}

pub mod ws {
    use std::time::Duration;

    use advocate_core::domain::{decode_frame, encode_frame, WireFrame};
    use advocate_core::server::{serve_on, Hub};
    use futures::{SinkExt, StreamExt};
    use tokio::net::TcpStream;
    use tokio_tungstenite::tungstenite::Message;
    use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

    pub struct WsClient {
        inner: WebSocketStream<MaybeTlsStream<TcpStream>>,
    }

    impl WsClient {
        pub async fn connect(base: &str, path: &str) -> Self {
            let (inner, _) = connect_async(format!("{base}{path}")).await.unwrap();
            Self { inner }
        }

        pub async fn send(&mut self, frame: &WireFrame) {
            let text = String::from_utf8(encode_frame(frame).unwrap()).unwrap();
            self.inner.send(Message::Text(text.into())).await.unwrap();
        }

        /// Next frame, or None after `wait` of silence.
        pub async fn recv_within(&mut self, wait: Duration) -> Option<(Vec<u8>, WireFrame)> {
            loop {
                let msg = tokio::time::timeout(wait, self.inner.next()).await.ok()??.ok()?;
                let bytes = match msg {
                    Message::Text(t) => t.as_str().as_bytes().to_vec(),
                    Message::Binary(b) => b.to_vec(),
                    Message::Close(_) => return None,
                    _ => continue,
                };
                let frame = decode_frame(&bytes).unwrap();
                return Some((bytes, frame));
            }
        }

        pub async fn recv(&mut self) -> WireFrame {
            self.recv_within(Duration::from_secs(5)).await.expect("frame within 5 s").1
        }

        pub async fn close(mut self) {
            let _ = self.inner.close(None).await;
        }
    }

    /// Serves the hub on an ephemeral loopback port; returns `ws://host:port`.
    pub async fn serve(hub: Hub) -> String {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { serve_on(listener, hub, None).await.unwrap() });
        format!("ws://{addr}")
    }
}
