use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use udrive_bridge::wire::{ClientMessage, ServerMessage};
use udrive_bridge::{bind, BridgeError, ServeConfig, Server};
use udrive_core::catalog::{baseline_parameters, Catalog};
use udrive_core::dsl::{load_program, parse_online_command, Program};
use udrive_core::params::{ParamKey, Value};
use udrive_core::sim::scenario::Scenario;
use udrive_core::sim::{run_simulation, ScriptedCommand, TraceStep};

const WAIT: Duration = Duration::from_secs(20);

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/scenarios").join(name);
    Scenario::load(&path).unwrap()
}

fn program(text: &str) -> Program {
    load_program(text).unwrap().0
}

fn config(sc: &str) -> ServeConfig {
    let mut cfg = ServeConfig::new(scenario(sc), Program::default(), baseline_parameters());
    cfg.pace = 1e4;
    cfg.start_paused = true;
    cfg
}

async fn start(cfg: ServeConfig) -> Server {
    bind(cfg, SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap()
}

struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl Client {
    async fn connect(server: &Server) -> (Client, ServerMessage) {
        let (ws, _) = connect_async(format!("ws://{}/ws", server.local_addr())).await.unwrap();
        let mut c = Client { ws };
        let hello = c.next().await.expect("hello");
        assert!(matches!(hello, ServerMessage::Hello { .. }), "{hello:?}");
        (c, hello)
    }

    /// Next server message, or None once the socket closes.
    async fn next(&mut self) -> Option<ServerMessage> {
        loop {
            let frame = tokio::time::timeout(WAIT, self.ws.next()).await.expect("server went quiet");
            match frame {
                Some(Ok(Message::Text(t))) => return Some(serde_json::from_str(t.as_str()).unwrap()),
                Some(Ok(Message::Close(_))) | None => return None,
                Some(Ok(_)) => continue,
                Some(Err(e)) => panic!("{e}"),
            }
        }
    }

    async fn send(&mut self, msg: &ClientMessage) {
        self.ws.send(Message::Text(serde_json::to_string(msg).unwrap().into())).await.unwrap();
    }

    async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::Text(text.to_string().into())).await.unwrap();
    }

    async fn command(&mut self, id: &str, text: &str) {
        self.send(&ClientMessage::Command { id: id.into(), text: text.into() }).await;
    }

    /// Read until the Ack for `id`, returning (ok, diagnostic).
    async fn ack(&mut self, id: &str) -> (bool, Option<String>) {
        loop {
            match self.next().await.expect("closed before ack") {
                ServerMessage::Ack { id: got, ok, diagnostic } if got == id => return (ok, diagnostic),
                ServerMessage::Ack { id: got, .. } => panic!("unexpected ack {got}"),
                _ => {}
            }
        }
    }

    /// Read until the server reports being paused; returns the next tick.
    async fn paused(&mut self) -> u64 {
        loop {
            if let ServerMessage::State { paused: true, next_tick, .. } = self.next().await.expect("closed") {
                return next_tick;
            }
        }
    }

    /// Collect every step until the run ends.
    async fn drain(&mut self) -> (Vec<TraceStep>, Vec<ServerMessage>) {
        let mut steps = Vec::new();
        let mut other = Vec::new();
        while let Some(msg) = self.next().await {
            match msg {
                ServerMessage::Step(s) => steps.push(*s),
                m => other.push(m),
            }
        }
        (steps, other)
    }
}

fn script(cmds: &[(u64, &str)]) -> Vec<ScriptedCommand> {
    cmds.iter()
        .map(|(t, c)| ScriptedCommand { tick: *t, command: parse_online_command(c, Catalog::standard()).unwrap() })
        .collect()
}

#[tokio::test]
async fn session_reproduces_scripted_run() {
    let cmds = [(20, "max_speed(20)"), (20, "set_light(low_beam)"), (60, "stop"), (120, "launch"), (121, "cruise_speed(45)")];
    let mut cfg = config("minimal.yaml");
    cfg.program = program("rule \"slow in view of cars\"\n  trigger always\n  then follow_dist(30)\nend\n");
    cfg.pause_at = cmds.iter().map(|(t, _)| *t).collect();
    let expected = run_simulation(&cfg.scenario, &cfg.program, &cfg.baseline, &script(&cmds), None);

    let server = start(cfg).await;
    let (mut c, _) = Client::connect(&server).await;
    c.send(&ClientMessage::Resume).await;
    let (mut steps, mut acks, mut sent) = (Vec::new(), 0, 0);
    while let Some(msg) = c.next().await {
        match msg {
            ServerMessage::Step(s) => {
                let tick = s.tick;
                steps.push(*s);
                let due: Vec<_> = cmds.iter().filter(|(t, _)| *t == tick).collect();
                if !due.is_empty() {
                    assert_eq!(c.paused().await, tick + 1);
                    for (i, (_, text)) in due.iter().enumerate() {
                        let id = format!("{tick}-{i}");
                        c.command(&id, text).await;
                        sent += 1;
                        assert_eq!(c.ack(&id).await, (true, None));
                        acks += 1;
                    }
                    c.send(&ClientMessage::Resume).await;
                }
            }
            ServerMessage::Ack { .. } => panic!("stray ack"),
            _ => {}
        }
    }
    assert_eq!(acks, sent);
    assert_eq!(steps, expected.steps);
    let outcome = server.finished().await.unwrap();
    assert_eq!(outcome.trace, expected);
}

#[tokio::test]
async fn stop_acknowledged_and_braking_on_next_step() {
    let mut cfg = config("latency.yaml");
    cfg.pause_at = BTreeSet::from([40]);
    let server = start(cfg).await;
    let (mut c, _) = Client::connect(&server).await;
    c.send(&ClientMessage::Resume).await;
    assert_eq!(c.paused().await, 41);
    c.command("s", "stop").await;
    assert_eq!(c.ack("s").await, (true, None));
    c.send(&ClientMessage::Resume).await;
    let step = loop {
        if let Some(ServerMessage::Step(s)) = c.next().await {
            break s;
        }
    };
    assert_eq!(step.tick, 41);
    assert_eq!(step.online, vec!["stop".to_string()]);
    assert!(step.planner_output.commanded_accel < 0.0);
    assert!(step.planner_output.stop_reason.is_some());
    drop(c);
    server.finished().await.unwrap();
}

#[tokio::test]
async fn malformed_command_is_rejected_without_effect() {
    let mut cfg = config("minimal.yaml");
    cfg.pause_at = BTreeSet::from([5]);
    let expected = run_simulation(&cfg.scenario, &cfg.program, &cfg.baseline, &[], None);
    let server = start(cfg).await;
    let (mut c, _) = Client::connect(&server).await;
    c.send(&ClientMessage::Resume).await;
    c.paused().await;
    c.command("bad", "max_speed(").await;
    let (ok, diag) = c.ack("bad").await;
    assert!(!ok);
    assert!(diag.unwrap().contains("error"));
    c.command("unknown", "fly_away(3)").await;
    assert!(!c.ack("unknown").await.0);
    c.send_raw("{\"type\":\"teleport\"}").await;
    assert!(matches!(c.next().await, Some(ServerMessage::Error { .. })));
    c.send(&ClientMessage::Resume).await;
    c.drain().await;
    assert_eq!(server.finished().await.unwrap().trace, expected);
}

#[tokio::test]
async fn later_arrival_wins_between_clients() {
    let mut cfg = config("minimal.yaml");
    cfg.pause_at = BTreeSet::from([10]);
    let server = start(cfg).await;
    let (mut a, _) = Client::connect(&server).await;
    let (mut b, _) = Client::connect(&server).await;
    a.send(&ClientMessage::Resume).await;
    assert_eq!(a.paused().await, 11);
    assert_eq!(b.paused().await, 11);
    a.command("a", "max_speed(35)").await;
    assert!(a.ack("a").await.0);
    b.command("b", "max_speed(70)").await;
    assert!(b.ack("b").await.0);
    b.send(&ClientMessage::Resume).await;
    let (steps_a, _) = a.drain().await;
    let (steps_b, _) = b.drain().await;
    assert_eq!(steps_a, steps_b);
    let s11 = steps_a.iter().find(|s| s.tick == 11).unwrap();
    assert_eq!(s11.online, vec!["max_speed(35)".to_string(), "max_speed(70)".to_string()]);
    assert_eq!(s11.params[&ParamKey::SpeedMax], Value::Num(70.0));
    server.finished().await.unwrap();
}

#[tokio::test]
async fn pause_and_resume_keep_the_tick_stream_gapless() {
    let mut cfg = config("minimal.yaml");
    cfg.pace = 200.0;
    cfg.start_paused = false;
    let server = start(cfg).await;
    let (mut c, _) = Client::connect(&server).await;
    // let a few ticks pass, then pause
    loop {
        if let Some(ServerMessage::Step(s)) = c.next().await {
            if s.tick >= 5 {
                break;
            }
        }
    }
    c.send(&ClientMessage::Pause).await;
    let resume_at = c.paused().await;
    tokio::time::sleep(Duration::from_millis(150)).await;
    c.command("w", "max_speed(40)").await;
    assert!(c.ack("w").await.0);
    c.send(&ClientMessage::SetPace { factor: 1e4, id: None }).await;
    c.send(&ClientMessage::Resume).await;
    let (steps, _) = c.drain().await;
    let outcome = server.finished().await.unwrap();

    let ticks: Vec<u64> = outcome.trace.steps.iter().map(|s| s.tick).collect();
    assert_eq!(ticks, (0..ticks.len() as u64).collect::<Vec<_>>());
    assert!(steps.windows(2).all(|w| w[1].tick == w[0].tick + 1));
    let applied = &outcome.trace.steps[resume_at as usize];
    assert_eq!(applied.online, vec!["max_speed(40)".to_string()]);
    assert!(outcome.trace.steps[..resume_at as usize].iter().all(|s| s.online.is_empty()));
}

#[tokio::test]
async fn pace_sets_tick_wall_time() {
    let mut cfg = config("minimal.yaml");
    cfg.pace = 10.0;
    cfg.max_ticks = Some(21);
    let server = start(cfg).await;
    let (mut c, _) = Client::connect(&server).await;
    c.send(&ClientMessage::SetPace { factor: 0.0, id: Some("zero".into()) }).await;
    let (ok, diag) = c.ack("zero").await;
    assert!(!ok && diag.unwrap().contains("positive"));
    c.send(&ClientMessage::SetPace { factor: -2.0, id: Some("neg".into()) }).await;
    assert!(!c.ack("neg").await.0);
    // No tick runs before the server sees `resume`, so timing from the send is
    // a lower bound free of delivery delay on the first step.
    let resumed = Instant::now();
    c.send(&ClientMessage::Resume).await;
    let mut last = None;
    while let Some(msg) = c.next().await {
        if let ServerMessage::Step(s) = msg {
            last = Some((s.tick, resumed.elapsed()));
        }
    }
    let (tick, took) = last.unwrap();
    assert_eq!(tick, 20);
    // 20 tick intervals at 100 ms / 10; pace 1 would take 2 s
    assert!(took >= Duration::from_millis(200), "{took:?}");
    assert!(took < Duration::from_millis(1500), "{took:?}");
    server.finished().await.unwrap();
}

#[tokio::test]
async fn hello_rule_changes_and_end() {
    let mut cfg = config("motorway.yaml");
    let ex1 = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/programs/ex1.udrv")).unwrap();
    cfg.program = program(&ex1);
    let rule = cfg.program.rules[0].name.clone();
    let server = start(cfg).await;
    let (mut c, hello) = Client::connect(&server).await;
    let ServerMessage::Hello { catalog, scenario, rules, next_tick, paused, .. } = hello else { unreachable!() };
    assert!(catalog.actions.iter().any(|a| a == "max_speed"));
    assert!(catalog.events.iter().any(|e| e == "entering_motorway"));
    assert_eq!(scenario.name, "motorway_clear");
    assert_eq!(rules, vec![rule.clone()]);
    assert_eq!((next_tick, paused), (0, true));

    c.send(&ClientMessage::Resume).await;
    let (steps, other) = c.drain().await;
    let changes: Vec<&Vec<String>> = other
        .iter()
        .filter_map(|m| match m {
            ServerMessage::RuleSetChanged { active, .. } => Some(active),
            _ => None,
        })
        .collect();
    assert_eq!(changes.first().map(|a| a.is_empty()), Some(true));
    assert!(changes.iter().any(|a| a.contains(&rule)));
    let Some(ServerMessage::End { outcome, end, report }) = other.last() else { panic!("no end: {other:?}") };
    assert_eq!(*outcome, report.outcome);
    assert_eq!(end.ticks as usize, steps.len());

    // a client arriving after the end still gets the result
    let (mut late, _) = Client::connect(&server).await;
    assert!(matches!(late.next().await, Some(ServerMessage::End { .. })));
    assert!(late.next().await.is_none());
    server.finished().await.unwrap();
}

#[tokio::test]
async fn serves_static_files_when_asked() {
    let dir = std::env::temp_dir().join(format!("udrive-static-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("index.html"), "<h1>console</h1>").unwrap();
    let mut cfg = config("minimal.yaml");
    cfg.static_dir = Some(dir.clone());
    let server = start(cfg).await;

    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut tcp = TcpStream::connect(server.local_addr()).await.unwrap();
    tcp.write_all(b"GET /index.html HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut body = String::new();
    tcp.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("<h1>console</h1>"));

    let (mut c, _) = Client::connect(&server).await;
    c.send(&ClientMessage::Resume).await;
    c.drain().await;
    server.finished().await.unwrap();
    std::fs::remove_dir_all(dir).ok();
}

#[tokio::test]
async fn bad_pace_and_busy_port_are_errors() {
    let mut cfg = config("minimal.yaml");
    cfg.pace = 0.0;
    assert!(matches!(bind(cfg, SocketAddr::from(([127, 0, 0, 1], 0))).await, Err(BridgeError::BadPace(_))));

    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let taken = holder.local_addr().unwrap();
    assert!(matches!(bind(config("minimal.yaml"), taken).await, Err(BridgeError::Bind { .. })));
}
