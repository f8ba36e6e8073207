//! WebSocket transport: `/ws/client` for participants, `/ws/admin` for the
//! experimenter, and an optional static directory for the web client.

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;
use tracing::info;

use super::hub::{Connection, Hub};
use crate::error::Result;

pub fn router(hub: Hub, static_dir: Option<PathBuf>) -> Router {
    let router = Router::new()
        .route("/ws/client", get(client_ws))
        .route("/ws/admin", get(admin_ws))
        .with_state(hub);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

/// Binds `addr` and serves until the task is dropped.
pub async fn serve(hub: Hub, addr: &str, static_dir: Option<PathBuf>) -> Result<()> {
    let listener = TcpListener::bind(addr).await?;
    serve_on(listener, hub, static_dir).await
}

pub async fn serve_on(listener: TcpListener, hub: Hub, static_dir: Option<PathBuf>) -> Result<()> {
    let local: SocketAddr = listener.local_addr()?;
    info!(%local, "listening");
    axum::serve(listener, router(hub, static_dir)).await?;
    Ok(())
}

async fn client_ws(State(hub): State<Hub>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| bridge(socket, hub.connect_client()))
}

async fn admin_ws(State(hub): State<Hub>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| bridge(socket, hub.connect_admin()))
}

/// Copies text and binary messages into the connection and frames back out
/// as text messages.
async fn bridge(socket: WebSocket, conn: Connection) {
    let (mut sink, mut stream) = socket.split();
    let (to_server, mut from_server) = conn.split();
    let writer = tokio::spawn(async move {
        while let Some(bytes) = from_server.recv().await {
            let text = String::from_utf8_lossy(&bytes).into_owned();
            if sink.send(WsMessage::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        let bytes = match msg {
            WsMessage::Text(t) => t.as_str().as_bytes().to_vec(),
            WsMessage::Binary(b) => b.to_vec(),
            WsMessage::Close(_) => break,
            _ => continue,
        };
        if to_server.send(bytes).is_err() {
            break;
        }
    }
    drop(to_server);
    writer.abort();
}
