mod common;

use advocate_core::domain::{Condition, FrameType};
use advocate_core::server::protocol::frame_message;
use advocate_core::server::SessionCreated;
use common::ws::{serve, WsClient};
use common::*;
use serde_json::json;

fn admin(command: &str, extra: serde_json::Value) -> advocate_core::domain::WireFrame {
    let mut payload = json!({ "command": command });
    payload.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    frame(FrameType::Admin, payload)
}

#[tokio::test]
async fn full_round_trip_over_websockets() {
    let fx = Fixture::mock([Condition::Baseline, Condition::Treatment]).await;
    let base = serve(fx.hub.clone()).await;

    let mut adm = WsClient::connect(&base, "/ws/admin").await;
    adm.send(&admin("create-session", json!({"session_id": "ws-1", "seed": 5}))).await;
    let reply = adm.recv().await;
    assert_eq!(reply.frame_type, FrameType::Admin);
    let created: SessionCreated = serde_json::from_value(reply.payload["result"].clone()).unwrap();
    assert_eq!(created.session_id.as_str(), "ws-1");

    let mut clients = Vec::new();
    for p in created.tokens.keys() {
        let mut c = WsClient::connect(&base, "/ws/client").await;
        c.send(&join_frame(&created, p)).await;
        let ack = c.recv().await;
        assert_eq!(ack.str_field("pseudonym"), Some(created.pseudonyms[p].as_str()));
        c.recv().await; // phase
        clients.push(c);
    }
    adm.send(&admin("start", json!({"session_id": "ws-1"}))).await;
    assert_eq!(adm.recv().await.payload["ok"], json!(true));
    adm.send(&admin("force-advance", json!({"session_id": "ws-1"}))).await;
    assert_eq!(adm.recv().await.payload["ok"], json!(true));

    for c in clients.iter_mut() {
        loop {
            if c.recv().await.frame_type == FrameType::TaskStart {
                break;
            }
        }
    }
    for (i, c) in clients.iter_mut().enumerate() {
        c.send(&chat(&format!("hello from {i}"))).await;
    }
    let mut orders = Vec::new();
    for c in clients.iter_mut() {
        let mut seqs = Vec::new();
        while seqs.len() < 4 {
            let f = c.recv().await;
            if let Some(m) = frame_message(&f) {
                seqs.push((m.seq, m.text));
            }
        }
        orders.push(seqs);
    }
    assert!(orders.iter().all(|o| *o == orders[0]));
    assert_eq!(orders[0].iter().map(|(s, _)| *s).collect::<Vec<_>>(), [1, 2, 3, 4]);

    adm.send(&admin("status", json!({"session_id": "ws-1"}))).await;
    let status = adm.recv().await;
    assert_eq!(status.payload["command"], json!("status"));
    adm.send(&chat("not an admin frame")).await;
    assert_eq!(error_code(&adm.recv().await), "unexpected_frame");

    for c in clients {
        c.close().await;
    }
    adm.close().await;
}

#[tokio::test]
async fn serves_static_client_bundle() {
    let fx = Fixture::mock([Condition::Baseline, Condition::Treatment]).await;
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<html>client</html>").unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let hub = fx.hub.clone();
    let dir = assets.path().to_path_buf();
    tokio::spawn(async move { advocate_core::server::serve_on(listener, hub, Some(dir)).await.unwrap() });
    let body = reqwest::get(format!("http://{addr}/index.html")).await.unwrap().text().await.unwrap();
    assert_eq!(body, "<html>client</html>");
    let missing = reqwest::get(format!("http://{addr}/nope.js")).await.unwrap();
    assert_eq!(missing.status().as_u16(), 404);
}
