//! Deterministic one-dimensional driving simulator.
//!
//! The world is a route of segments measured in metres, with lanes as
//! integer indices. Each tick the simulator builds a [`Scene`], derives the
//! events, steps the rule engine, asks the [`planner::Planner`] for an
//! acceleration and lane command, records a [`TraceStep`] and integrates the
//! vehicle forward by one tick.

pub mod planner;
pub mod scenario;
pub mod trace;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Side};
use crate::dsl::ast::Program;
use crate::dsl::diagnostic::Diagnostic;
use crate::dsl::online::{parse_online_command, OnlineCommand};
use crate::engine::Engine;
use crate::params::{ParamKey, ParameterStore};
use crate::scene::{
    derive_events, AheadSegment, Ego, Maneuver, ObstacleView, Scene, SegmentView, SignalKind, SignalView, Weather,
};

use planner::{LaneCommand, Planner, PlannerOutput, StopReason, LANE_CHANGE_TICKS};
use scenario::{Scenario, SignalSpecKind};
pub use trace::{EndReason, Trace, TraceEnd, TraceError, TraceHeader, TraceRecord, TraceStep};

/// Objects behind the ego stay in the scene for this many metres.
pub const REAR_WINDOW: f64 = 30.0;
/// Signals, obstacles and upcoming segments are always visible this far
/// ahead, even when the detection range is set shorter.
pub const MIN_VIEW: f64 = 50.0;
/// Gaps below this (down to zero) count as a collision.
const OVERLAP: f64 = 5.0;
/// A vehicle stopped this close to the destination has arrived.
const ARRIVAL_SLACK: f64 = 1.0;

/// Online command stamped with the tick at which the operator issued it. It
/// takes effect in the following tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedCommand {
    pub tick: u64,
    pub command: OnlineCommand,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScriptLine {
    tick: u64,
    command: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("script line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("script line {line}: {}", .diagnostics.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Command { line: usize, diagnostics: Vec<Diagnostic> },
}

/// Parse a command script: JSON lines of `{"tick": n, "command": "text"}`.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_script(text: &str, cat: &Catalog) -> Result<Vec<ScriptedCommand>, ScriptError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let entry: ScriptLine = serde_json::from_str(line).map_err(|e| ScriptError::Syntax {
            line: i + 1,
            message: e.to_string(),
        })?;
        let command = parse_online_command(&entry.command, cat).map_err(|diagnostics| ScriptError::Command {
            line: i + 1,
            diagnostics,
        })?;
        out.push(ScriptedCommand { tick: entry.tick, command });
    }
    out.sort_by_key(|c| c.tick);
    Ok(out)
}

/// Render a script back to its JSON-lines text.
pub fn format_script(script: &[ScriptedCommand]) -> String {
    script
        .iter()
        .map(|c| {
            let line = ScriptLine { tick: c.tick, command: c.command.to_string() };
            serde_json::to_string(&line).expect("script line serializes") + "\n"
        })
        .collect()
}

/// Kinematic state of the ego vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub position: f64,
    pub lane: u32,
    /// km/h
    pub speed: f64,
    pub accel: f64,
    /// Side and remaining ticks of a lane change in progress.
    pub lane_change: Option<(Side, u32)>,
}

/// Advance the vehicle by one tick under a planner output.
///
/// Acceleration is constant over the tick and the position integrates the
/// exact trapezoid, including a stop part-way through the tick.
pub fn integrate(v: &mut VehicleState, out: &PlannerOutput, dt: f64) {
    let v0 = v.speed / 3.6;
    let a = out.commanded_accel;
    let mut v1 = v0 + a * dt;
    let advance;
    if v1 <= 0.0 && a < 0.0 {
        let t_stop = v0 / -a;
        advance = v0 * t_stop / 2.0;
        v1 = 0.0;
    } else {
        if let Some(target) = out.snap_to {
            let s = target / 3.6;
            if (v0 < s && v1 >= s) || (v0 > s && v1 <= s) || (v1 - s).abs() < 1e-9 {
                v1 = s;
            }
        }
        v1 = v1.max(0.0);
        advance = (v0 + v1) / 2.0 * dt;
    }
    v.position += advance;
    v.speed = v1 * 3.6;
    v.accel = a;

    match out.lane_command {
        LaneCommand::BeginChange { side } if v.lane_change.is_none() => {
            v.lane_change = Some((side, LANE_CHANGE_TICKS));
        }
        _ => {}
    }
    if let Some((side, left)) = v.lane_change {
        let left = left - 1;
        if left == 0 {
            v.lane = match side {
                Side::Left => v.lane.saturating_sub(1),
                Side::Right => v.lane + 1,
            };
            v.lane_change = None;
        } else {
            v.lane_change = Some((side, left));
        }
    }
}

/// A simulation that can be advanced one tick at a time.
pub struct Simulation {
    scenario: Scenario,
    starts: Vec<f64>,
    engine: Engine,
    planner: Planner,
    vehicle: VehicleState,
    prev: Option<Scene>,
    tick: u64,
    max_ticks: u64,
    end: Option<TraceEnd>,
    header: TraceHeader,
}

impl Simulation {
    pub fn new(scenario: Scenario, program: Program, baseline: ParameterStore, max_ticks: Option<u64>) -> Simulation {
        let header = TraceHeader {
            version: trace::TRACE_FORMAT_VERSION,
            scenario: scenario.name.clone(),
            tick_s: scenario.tick_s,
            destination: scenario.destination,
            rules: program.rules.iter().map(|r| r.name.clone()).collect(),
        };
        let vehicle = VehicleState {
            position: scenario.ego.position,
            lane: scenario.ego.lane,
            speed: scenario.ego.speed,
            accel: 0.0,
            lane_change: None,
        };
        Simulation {
            starts: scenario.segment_starts(),
            max_ticks: max_ticks.unwrap_or(scenario.max_ticks),
            scenario,
            engine: Engine::new(program, baseline),
            planner: Planner::new(),
            vehicle,
            prev: None,
            tick: 0,
            end: None,
            header,
        }
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Tick that the next call to [`Simulation::step`] will record.
    pub fn next_tick(&self) -> u64 {
        self.tick
    }

    pub fn end(&self) -> Option<&TraceEnd> {
        self.end.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.end.is_some()
    }

    fn segment_index(&self, pos: f64) -> usize {
        let n = self.scenario.route.len();
        (0..n)
            .rev()
            .find(|&i| pos >= self.starts[i])
            .unwrap_or(0)
    }

    fn maneuver(&self) -> Maneuver {
        if self.vehicle.lane_change.is_some() {
            return Maneuver::ChangingLane;
        }
        let stopped = self.vehicle.speed <= 0.0;
        match self.planner.holding() {
            Some(StopReason::Emergency) => Maneuver::Emergency,
            Some(StopReason::Park) if stopped => Maneuver::Parked,
            Some(StopReason::PullOver) if !stopped => Maneuver::PullingOver,
            _ if stopped => Maneuver::Stopped,
            _ => Maneuver::LaneFollow,
        }
    }

    /// Scene visible at the current tick for a detection range.
    pub fn scene(&self, range: f64) -> Scene {
        let sc = &self.scenario;
        let t = self.tick as f64 * sc.tick_s;
        let pos = self.vehicle.position;
        let view = range.max(MIN_VIEW);
        let visible = |d: f64| (-REAR_WINDOW..=view).contains(&d);

        let mut weather = Weather { light_level: 1.0, ..Weather::default() };
        for w in sc.weather.iter().filter(|w| w.start <= t) {
            weather = Weather {
                raining: w.raining,
                foggy: w.foggy,
                snowing: w.snowing,
                light_level: w.light_level,
            };
        }

        let jammed = |jam: &[[f64; 2]]| jam.iter().any(|[a, b]| t >= *a && t < *b);
        let i = self.segment_index(pos);
        let seg = &sc.route[i];
        let lanes = seg.lanes.max(1);
        let segment = SegmentView {
            id: seg.id.clone(),
            kind: seg.kind,
            speed_limit: seg.speed_limit,
            lanes,
            jam: jammed(&seg.jam),
            min_speed: seg.min_speed,
        };
        let ahead = sc
            .route
            .iter()
            .zip(&self.starts)
            .skip(i + 1)
            .map(|(s, start)| AheadSegment {
                id: s.id.clone(),
                kind: s.kind,
                distance: start - pos,
                length: s.length,
                speed_limit: s.speed_limit,
                jam: jammed(&s.jam),
            })
            .filter(|a| a.distance <= view)
            .collect();

        let obstacles = sc
            .obstacles
            .iter()
            .filter(|o| o.present_at(t))
            .map(|o| ObstacleView {
                id: o.id.clone(),
                kind: o.kind,
                distance: o.position_at(t) - pos,
                lane: o.lane,
                speed: o.speed_at(t),
            })
            .filter(|o| visible(o.distance))
            .collect();

        let signals = sc
            .signals
            .iter()
            .map(|s| SignalView {
                id: s.id.clone(),
                kind: match s.kind {
                    SignalSpecKind::TrafficLight => SignalKind::TrafficLight,
                    SignalSpecKind::StopSign => SignalKind::StopSign,
                    SignalSpecKind::Limit => SignalKind::Limit,
                },
                colour: s.colour_at(t),
                distance: s.position - pos,
                value: s.value,
            })
            .filter(|s| visible(s.distance))
            .collect();

        let destination_distance = sc.destination - pos;
        let at_destination = destination_distance <= 0.0
            || (self.vehicle.speed <= 0.0 && destination_distance <= ARRIVAL_SLACK);
        Scene {
            tick: self.tick,
            time: t,
            weather,
            ego: Ego {
                position: pos,
                lane: self.vehicle.lane,
                speed: self.vehicle.speed,
                accel: self.vehicle.accel,
                maneuver: self.maneuver(),
            },
            segment,
            obstacles,
            signals,
            ahead,
            destination_distance,
            at_destination,
        }
    }

    /// Run one tick with the online commands that take effect in it. Returns
    /// `None` once the run has ended.
    pub fn step(&mut self, online: &[OnlineCommand]) -> Option<TraceStep> {
        if self.end.is_some() {
            return None;
        }
        if self.tick >= self.max_ticks {
            self.finish(EndReason::MaxTicks, None);
            return None;
        }
        let params = self.engine.params();
        let range = params.num(ParamKey::DistCheck) * params.num(ParamKey::DistExpansionFactor);
        let scene = self.scene(range);
        let events = derive_events(self.prev.as_ref(), &scene, range);
        let notes = self.engine.step(&scene, &events, online);
        let controls = self.engine.take_controls();
        let plan = self.planner.plan(&scene, self.engine.params(), &controls);

        let step = TraceStep {
            tick: self.tick,
            scene: scene.clone(),
            events,
            active_rules: self.engine.active_names(),
            params: self.engine.params().snapshot(),
            planner_output: plan.clone(),
            online: online.iter().map(|c| c.to_string()).collect(),
            controls,
            notes,
            op_count: self.engine.last_op_count(),
        }
        .rounded();

        let hit = scene
            .obstacles
            .iter()
            .find(|o| o.lane == scene.ego.lane && o.distance <= 0.0 && o.distance > -OVERLAP);
        if let Some(o) = hit {
            let id = o.id.clone();
            self.finish(EndReason::Collision, Some(id));
        } else if scene.at_destination {
            self.finish(EndReason::DestinationReached, None);
        } else {
            integrate(&mut self.vehicle, &plan, self.scenario.tick_s);
            let lanes = self.scenario.route[self.segment_index(self.vehicle.position)].lanes.max(1);
            self.vehicle.lane = self.vehicle.lane.min(lanes - 1);
            self.tick += 1;
            self.prev = Some(scene);
        }
        Some(step)
    }

    fn finish(&mut self, reason: EndReason, collided_with: Option<String>) {
        let ticks = if reason == EndReason::MaxTicks { self.tick } else { self.tick + 1 };
        self.end = Some(TraceEnd {
            reason,
            ticks,
            final_position: crate::params::round3(self.vehicle.position),
            collided_with,
        });
    }
}

/// Run a whole scenario. Commands stamped at tick `t` take effect at `t + 1`.
pub fn run_simulation(
    scenario: &Scenario,
    program: &Program,
    baseline: &ParameterStore,
    script: &[ScriptedCommand],
    max_ticks: Option<u64>,
) -> Trace {
    let mut sim = Simulation::new(scenario.clone(), program.clone(), baseline.clone(), max_ticks);
    let mut steps = Vec::new();
    let mut pending: Vec<OnlineCommand> = Vec::new();
    let mut next = 0;
    loop {
        let tick = sim.next_tick();
        let now: Vec<OnlineCommand> = std::mem::take(&mut pending);
        match sim.step(&now) {
            Some(step) => steps.push(step),
            None => break,
        }
        while next < script.len() && script[next].tick <= tick {
            if script[next].tick == tick {
                pending.push(script[next].command.clone());
            }
            next += 1;
        }
    }
    Trace {
        header: sim.header().clone(),
        steps,
        end: sim.end().cloned(),
    }
}
