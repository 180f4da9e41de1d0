//! HTTP front end: the `/ws` websocket plus the static UI bundle.
//!
//! One task owns the live simulation and advances it on a fixed control
//! period; connections talk to it only through queues, so the physics never
//! waits on a socket.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use tokio::sync::{broadcast, mpsc};
use tower_http::services::ServeDir;

use crate::live::{ClientId, LiveSim, Outbound};
use crate::replay::Frame;
use crate::wire::{parse_client, ClientMsg, ServerMsg};

const BROADCAST_CAPACITY: usize = 256;

enum HubMsg {
    Connect(ClientId, mpsc::UnboundedSender<String>),
    Disconnect(ClientId),
    Client(ClientId, ClientMsg),
}

#[derive(Clone)]
struct LiveState {
    hub: mpsc::UnboundedSender<HubMsg>,
    states: broadcast::Sender<Arc<str>>,
    next_id: Arc<AtomicU64>,
}

/// Router serving the live simulation. Spawns the simulation task, so it
/// must be called inside a tokio runtime.
pub fn live_router(sim: LiveSim, static_dir: &Path) -> Router {
    let (hub, rx) = mpsc::unbounded_channel();
    let (states, _) = broadcast::channel(BROADCAST_CAPACITY);
    tokio::spawn(sim_loop(sim, rx, states.clone()));
    let state = LiveState {
        hub,
        states,
        next_id: Arc::new(AtomicU64::new(1)),
    };
    Router::new()
        .route("/ws", get(live_ws))
        .with_state(state)
        .fallback_service(ServeDir::new(static_dir))
}

async fn sim_loop(
    mut sim: LiveSim,
    mut rx: mpsc::UnboundedReceiver<HubMsg>,
    states: broadcast::Sender<Arc<str>>,
) {
    let mut clients: Vec<(ClientId, mpsc::UnboundedSender<String>)> = Vec::new();
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(sim.control_dt()));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        let out = tokio::select! {
            _ = ticker.tick() => sim.tick(),
            msg = rx.recv() => match msg {
                None => return,
                Some(HubMsg::Connect(id, tx)) => {
                    clients.push((id, tx));
                    Vec::new()
                }
                Some(HubMsg::Disconnect(id)) => {
                    clients.retain(|(c, _)| *c != id);
                    sim.disconnect(id);
                    Vec::new()
                }
                Some(HubMsg::Client(id, m)) => sim.handle(id, m),
            },
        };
        for o in out {
            match o {
                Outbound::All(m) => {
                    // No subscribers is not an error.
                    let _ = states.send(Arc::from(m.to_json()));
                }
                Outbound::To(id, m) => {
                    if let Some((_, tx)) = clients.iter().find(|(c, _)| *c == id) {
                        let _ = tx.send(m.to_json());
                    }
                }
            }
        }
    }
}

async fn live_ws(ws: WebSocketUpgrade, State(st): State<LiveState>) -> Response {
    ws.on_upgrade(move |socket| live_session(socket, st))
}

async fn live_session(mut socket: WebSocket, st: LiveState) {
    let id = st.next_id.fetch_add(1, Ordering::Relaxed);
    let (direct_tx, mut direct_rx) = mpsc::unbounded_channel();
    let mut states = st.states.subscribe();
    if st.hub.send(HubMsg::Connect(id, direct_tx.clone())).is_err() {
        return;
    }
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t.to_string(),
                    Some(Ok(Message::Binary(_))) => {
                        let _ = direct_tx.send(ServerMsg::error(None, "binary frames are not supported").to_json());
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                match parse_client(&text) {
                    Ok(m) => {
                        if st.hub.send(HubMsg::Client(id, m)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = direct_tx.send(e.to_json());
                    }
                }
            }
            Some(text) = direct_rx.recv() => {
                if socket.send(Message::text(text)).await.is_err() {
                    break;
                }
            }
            state = states.recv() => match state {
                Ok(text) => {
                    if socket.send(Message::text(text.to_string())).await.is_err() {
                        break;
                    }
                }
                // A slow client skips frames rather than stalling the loop.
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => break,
            },
        }
    }
    let _ = st.hub.send(HubMsg::Disconnect(id));
}

#[derive(Clone)]
struct ReplayState {
    frames: Arc<Vec<Frame>>,
    speed: f64,
}

/// Router streaming a recorded trace to every connection from its start.
pub fn replay_router(frames: Vec<Frame>, speed: f64, static_dir: &Path) -> Router {
    let state = ReplayState {
        frames: Arc::new(frames),
        speed,
    };
    Router::new()
        .route("/ws", get(replay_ws))
        .with_state(state)
        .fallback_service(ServeDir::new(static_dir))
}

async fn replay_ws(ws: WebSocketUpgrade, State(st): State<ReplayState>) -> Response {
    ws.on_upgrade(move |socket| replay_session(socket, st))
}

async fn replay_session(mut socket: WebSocket, st: ReplayState) {
    let start = tokio::time::Instant::now();
    for f in st.frames.iter() {
        if let Some(d) = f.delay(st.speed) {
            tokio::time::sleep_until(start + d).await;
        }
        if socket.send(Message::text(f.msg.to_json())).await.is_err() {
            return;
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}

/// Serves `app` until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
