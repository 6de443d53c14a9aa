//! Live simulation service. One simulation runs per process; any number of
//! WebSocket clients on `/ws` watch its steps and send online commands, which
//! are applied at the next tick boundary in arrival order.

mod session;
pub mod wire;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

use udrive_core::catalog::Catalog;
use udrive_core::compliance::ComplianceReport;
use udrive_core::dsl::{parse_online_command, Program};
use udrive_core::params::ParameterStore;
use udrive_core::sim::scenario::Scenario;
use udrive_core::sim::{Simulation, Trace};

use session::{Input, LoopConfig, Shared, Status};
use wire::{CatalogSummary, ClientMessage, ScenarioMeta, ServerMessage};

/// How long clients get to read the `End` message before the server stops.
const CLOSE_GRACE: Duration = Duration::from_millis(250);

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub scenario: Scenario,
    pub program: Program,
    pub baseline: ParameterStore,
    pub max_ticks: Option<u64>,
    /// Simulated seconds per wall-clock second.
    pub pace: f64,
    /// Wait for a `resume` before the first tick.
    pub start_paused: bool,
    /// Pause automatically after recording each of these ticks.
    pub pause_at: BTreeSet<u64>,
    /// Directory served at `/`, e.g. a built console bundle.
    pub static_dir: Option<PathBuf>,
}

impl ServeConfig {
    pub fn new(scenario: Scenario, program: Program, baseline: ParameterStore) -> ServeConfig {
        ServeConfig {
            scenario,
            program,
            baseline,
            max_ticks: None,
            pace: 1.0,
            start_paused: false,
            pause_at: BTreeSet::new(),
            static_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("pace factor must be a positive number, got {0}")]
    BadPace(f64),
    #[error("server failed: {0}")]
    Server(String),
}

/// The finished run as the clients saw it.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub trace: Trace,
    pub report: ComplianceReport,
}

/// A bound, running server.
pub struct Server {
    addr: SocketAddr,
    session: JoinHandle<SessionOutcome>,
    http: JoinHandle<std::io::Result<()>>,
    shutdown: oneshot::Sender<()>,
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Wait for the simulation to end, give clients a moment to read the
    /// final message, then stop serving.
    pub async fn finished(self) -> Result<SessionOutcome, BridgeError> {
        let outcome = self.session.await.map_err(|e| BridgeError::Server(e.to_string()))?;
        tokio::time::sleep(CLOSE_GRACE).await;
        let _ = self.shutdown.send(());
        match self.http.await {
            Ok(Ok(())) => Ok(outcome),
            Ok(Err(e)) => Err(BridgeError::Server(e.to_string())),
            Err(e) => Err(BridgeError::Server(e.to_string())),
        }
    }
}

fn valid_pace(f: f64) -> bool {
    f.is_finite() && f > 0.0
}

/// Bind `addr` (port 0 picks a free port) and start the simulation.
pub async fn bind(cfg: ServeConfig, addr: SocketAddr) -> Result<Server, BridgeError> {
    if !valid_pace(cfg.pace) {
        return Err(BridgeError::BadPace(cfg.pace));
    }
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| BridgeError::Bind { addr, source })?;
    let addr = listener.local_addr().map_err(|source| BridgeError::Bind { addr, source })?;

    let sim = Simulation::new(cfg.scenario.clone(), cfg.program.clone(), cfg.baseline.clone(), cfg.max_ticks);
    let (tx, rx) = mpsc::unbounded_channel();
    let status = Status {
        rules: cfg.program.rules.iter().map(|r| r.name.clone()).collect(),
        next_tick: 0,
        paused: cfg.start_paused,
        pace: cfg.pace,
        end: None,
    };
    let max_ticks = cfg.max_ticks.unwrap_or(cfg.scenario.max_ticks);
    let shared = Arc::new(Shared::new(
        tx,
        status,
        CatalogSummary::of(Catalog::standard()),
        ScenarioMeta::of(&cfg.scenario, max_ticks),
    ));

    let mut app = Router::new().route("/ws", get(upgrade)).with_state(shared.clone());
    if let Some(dir) = &cfg.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    let (shutdown, stop) = oneshot::channel::<()>();
    let http = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop.await;
            })
            .await
    });
    let loop_cfg = LoopConfig { pace: cfg.pace, start_paused: cfg.start_paused, pause_at: cfg.pause_at };
    let session = tokio::spawn(session::run(sim, loop_cfg, shared, rx));
    Ok(Server { addr, session, http, shutdown })
}

/// Serve until the simulation ends.
pub async fn serve(cfg: ServeConfig, addr: SocketAddr) -> Result<SessionOutcome, BridgeError> {
    bind(cfg, addr).await?.finished().await
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

/// Check a client message and forward it to the loop. Returns the reply for
/// this client, if any.
fn handle_client(text: &str, shared: &Shared) -> Option<ServerMessage> {
    let msg: ClientMessage = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => return Some(ServerMessage::Error { message: format!("invalid message: {e}") }),
    };
    let forward = |input| {
        // fails only after the run has ended, when commands are moot
        shared.inputs.send(input).is_ok()
    };
    match msg {
        ClientMessage::Command { id, text } => match parse_online_command(&text, Catalog::standard()) {
            Ok(cmd) => {
                let ok = forward(Input::Command(Box::new(cmd)));
                let diagnostic = (!ok).then(|| "the run has ended".to_string());
                Some(ServerMessage::Ack { id, ok, diagnostic })
            }
            Err(diags) => {
                let text = diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
                Some(ServerMessage::Ack { id, ok: false, diagnostic: Some(text) })
            }
        },
        ClientMessage::Pause => {
            forward(Input::Pause);
            None
        }
        ClientMessage::Resume => {
            forward(Input::Resume);
            None
        }
        ClientMessage::SetPace { factor, id } => {
            let id = id.unwrap_or_else(|| "set_pace".to_string());
            if valid_pace(factor) {
                forward(Input::SetPace(factor));
                Some(ServerMessage::Ack { id, ok: true, diagnostic: None })
            } else {
                let diagnostic = Some(format!("pace factor must be a positive number, got {factor}"));
                Some(ServerMessage::Ack { id, ok: false, diagnostic })
            }
        }
    }
}

async fn connection(socket: WebSocket, shared: Arc<Shared>) {
    let (mut sink, mut stream) = socket.split();
    let (mut events, hello, ended) = shared.join();
    if sink.send(Message::Text(hello.into())).await.is_err() {
        return;
    }
    if let Some(end) = ended {
        let _ = sink.send(Message::Text(end.to_string().into())).await;
        let _ = sink.send(Message::Close(None)).await;
        return;
    }
    loop {
        tokio::select! {
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    if let Some(reply) = handle_client(text.as_str(), &shared) {
                        if sink.send(Message::Text(reply.to_json().into())).await.is_err() {
                            return;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
            event = events.recv() => match event {
                Ok(out) => {
                    if sink.send(Message::Text(out.json.to_string().into())).await.is_err() {
                        return;
                    }
                    if out.last {
                        let _ = sink.send(Message::Close(None)).await;
                        return;
                    }
                }
                // a client that cannot keep up is dropped, the loop never waits
                Err(broadcast::error::RecvError::Lagged(_)) | Err(broadcast::error::RecvError::Closed) => return,
            },
        }
    }
}
