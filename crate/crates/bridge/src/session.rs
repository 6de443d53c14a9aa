use std::collections::BTreeSet;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use tokio::sync::{broadcast, mpsc};
use tokio::time::{sleep_until, Instant};

use udrive_core::compliance::evaluate;
use udrive_core::dsl::OnlineCommand;
use udrive_core::sim::{Simulation, Trace};

use crate::wire::{CatalogSummary, ScenarioMeta, ServerMessage};
use crate::SessionOutcome;

/// Enough for a long run even when a client reads slowly; beyond this a
/// client is considered stuck and is dropped.
const BROADCAST_CAPACITY: usize = 8192;

/// Messages for the simulation loop, in arrival order across all clients.
#[derive(Debug)]
pub(crate) enum Input {
    Command(Box<OnlineCommand>),
    Pause,
    Resume,
    SetPace(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct Outbound {
    pub json: Arc<str>,
    pub last: bool,
}

pub(crate) struct Status {
    pub rules: Vec<String>,
    pub next_tick: u64,
    pub paused: bool,
    pub pace: f64,
    /// The `End` message once the run is over, for late joiners.
    pub end: Option<Arc<str>>,
}

pub(crate) struct Shared {
    pub inputs: mpsc::UnboundedSender<Input>,
    pub events: broadcast::Sender<Outbound>,
    pub status: Mutex<Status>,
    pub catalog: CatalogSummary,
    pub scenario: ScenarioMeta,
}

impl Shared {
    pub fn new(
        inputs: mpsc::UnboundedSender<Input>,
        status: Status,
        catalog: CatalogSummary,
        scenario: ScenarioMeta,
    ) -> Shared {
        let (events, _) = broadcast::channel(BROADCAST_CAPACITY);
        Shared { inputs, events, status: Mutex::new(status), catalog, scenario }
    }

    pub fn status(&self) -> MutexGuard<'_, Status> {
        self.status.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Subscribe and build the greeting under one lock so that the first
    /// broadcast a client sees is the tick named in its `Hello`.
    pub fn join(&self) -> (broadcast::Receiver<Outbound>, String, Option<Arc<str>>) {
        let st = self.status();
        let rx = self.events.subscribe();
        let hello = ServerMessage::Hello {
            catalog: self.catalog.clone(),
            scenario: self.scenario.clone(),
            rules: st.rules.clone(),
            next_tick: st.next_tick,
            paused: st.paused,
            pace: st.pace,
        };
        (rx, hello.to_json(), st.end.clone())
    }

    fn publish(&self, msg: &ServerMessage, last: bool) {
        // no receivers is fine: nobody is watching yet
        let _ = self.events.send(Outbound { json: msg.to_json().into(), last });
    }
}

pub(crate) struct LoopConfig {
    pub pace: f64,
    pub start_paused: bool,
    pub pause_at: BTreeSet<u64>,
}

struct Control {
    paused: bool,
    pace: f64,
    pending: Vec<OnlineCommand>,
}

impl Control {
    /// Returns true when pause state or pace changed.
    fn apply(&mut self, input: Input) -> bool {
        match input {
            Input::Command(c) => {
                self.pending.push(*c);
                false
            }
            Input::Pause => !std::mem::replace(&mut self.paused, true),
            Input::Resume => std::mem::replace(&mut self.paused, false),
            Input::SetPace(f) => {
                let changed = f != self.pace;
                self.pace = f;
                changed
            }
        }
    }

    fn tick_wall(&self, tick_s: f64) -> Duration {
        Duration::from_secs_f64(tick_s / self.pace)
    }
}

fn announce_state(shared: &Shared, ctl: &Control) {
    let mut st = shared.status();
    st.paused = ctl.paused;
    st.pace = ctl.pace;
    let msg = ServerMessage::State { paused: ctl.paused, pace: ctl.pace, next_tick: st.next_tick };
    shared.publish(&msg, false);
}

/// Drive the simulation to completion. Commands received while a tick is
/// being computed, or while paused, are applied on the next tick.
pub(crate) async fn run(
    mut sim: Simulation,
    cfg: LoopConfig,
    shared: Arc<Shared>,
    mut inputs: mpsc::UnboundedReceiver<Input>,
) -> SessionOutcome {
    let tick_s = sim.scenario().tick_s;
    let mut ctl = Control { paused: cfg.start_paused, pace: cfg.pace, pending: Vec::new() };
    let mut steps = Vec::new();
    let mut last_active: Option<Vec<String>> = None;

    loop {
        let mut changed = false;
        while let Ok(input) = inputs.try_recv() {
            changed |= ctl.apply(input);
        }
        if changed {
            announce_state(&shared, &ctl);
        }
        if ctl.paused {
            // the sender lives in `shared`, so this only ends at shutdown
            match inputs.recv().await {
                Some(input) => {
                    if ctl.apply(input) {
                        announce_state(&shared, &ctl);
                    }
                }
                None => ctl.paused = false,
            }
            continue;
        }

        let started = Instant::now();
        let commands = std::mem::take(&mut ctl.pending);
        let Some(step) = sim.step(&commands) else { break };
        let finished = sim.is_finished();
        {
            let mut st = shared.status();
            st.next_tick = sim.next_tick();
            st.rules = sim.engine().program().rules.iter().map(|r| r.name.clone()).collect();
            if cfg.pause_at.contains(&step.tick) && !finished {
                ctl.paused = true;
                st.paused = true;
            }
            let active = step.active_rules.clone();
            let rules = st.rules.clone();
            shared.publish(&ServerMessage::Step(Box::new(step.clone())), false);
            if last_active.as_ref() != Some(&active) {
                shared.publish(&ServerMessage::RuleSetChanged { rules, active: active.clone() }, false);
                last_active = Some(active);
            }
            if ctl.paused {
                let msg = ServerMessage::State { paused: true, pace: ctl.pace, next_tick: st.next_tick };
                shared.publish(&msg, false);
            }
        }
        steps.push(step);
        if finished {
            break;
        }

        // wait out the rest of the tick, staying responsive to controls
        let mut deadline = started + ctl.tick_wall(tick_s);
        while !ctl.paused {
            tokio::select! {
                _ = sleep_until(deadline) => break,
                input = inputs.recv() => {
                    let Some(input) = input else { break };
                    if ctl.apply(input) {
                        announce_state(&shared, &ctl);
                        deadline = started + ctl.tick_wall(tick_s);
                    }
                }
            }
        }
    }

    let trace = Trace { header: sim.header().clone(), steps, end: sim.end().cloned() };
    let report = evaluate(&trace).expect("a finished simulation has an end record");
    let end = ServerMessage::End {
        outcome: report.outcome,
        end: trace.end.clone().expect("finished"),
        report: report.clone(),
    };
    {
        let mut st = shared.status();
        let json: Arc<str> = end.to_json().into();
        st.end = Some(json.clone());
        let _ = shared.events.send(Outbound { json, last: true });
    }
    SessionOutcome { trace, report }
}
