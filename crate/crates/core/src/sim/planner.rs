//! Longitudinal and lane planner. Its behaviour is a function of the scene,
//! the effective parameters, the control commands it has received and a
//! little memory (holds, latched light decisions, stop-sign waits).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::catalog::{ControlCommand, Side};
use crate::params::{ParamKey as K, ParameterStore};
use crate::scene::{Colour, Maneuver, ObstacleKind, Scene, SegmentKind, SignalKind};

pub const COMFORT_ACCEL: f64 = 1.5;
pub const COMFORT_DECEL: f64 = 2.0;
/// Braking towards a stop point starts once this deceleration is needed.
pub const BRAKE_ONSET: f64 = 1.5;
/// Hardest deceleration the planner will choose for a light or a stop.
pub const MAX_BRAKE: f64 = 4.0;
pub const PHYSICAL_ACCEL: (f64, f64) = (-6.0, 3.0);
pub const LANE_CHANGE_TICKS: u32 = 10;
pub const CRAWL_SPEED: f64 = 5.0;
/// An intersection entry this close to a light or stop sign counts as signalled.
const UNSIGNALLED_TOLERANCE: f64 = 2.0;
/// Gain of the following controller, km/h of speed per metre of gap error.
const FOLLOW_GAIN: f64 = 1.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RedLight,
    StopSign,
    StopCmd,
    PullOver,
    Park,
    Destination,
    Emergency,
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LaneCommand {
    Keep,
    BeginChange { side: Side },
    ContinueChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerOutput {
    /// km/h
    pub target_speed: f64,
    /// m/s²
    pub commanded_accel: f64,
    pub lane_command: LaneCommand,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stop_point: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stop_reason: Option<StopReason>,
    pub light: String,
    pub horn: bool,
    /// Speed the integrator may snap to when crossing it; absent while braking
    /// on a stop profile.
    #[serde(skip)]
    pub snap_to: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Hold {
    Stop(f64),
    PullOver(f64),
    Park(f64),
    Emergency,
}

#[derive(Debug, Clone, Default)]
struct SignWait {
    stopped_at: Option<f64>,
    released: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Planner {
    hold: Option<Hold>,
    speed_command: Option<(f64, f64)>,
    lane_pinned: bool,
    pending_changes: VecDeque<Side>,
    was_changing: bool,
    last_change_end: Option<f64>,
    /// Lights we decided to pass on red/yellow because stopping was infeasible.
    committed: BTreeSet<String>,
    signs: BTreeMap<String, SignWait>,
    crawl_until: f64,
}

fn kmh(ms: f64) -> f64 {
    ms * 3.6
}

fn ms(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Distance at which every special region (signals, intersections) starts
/// shaping speed: the nearest one ahead.
fn nearest_special(scene: &Scene) -> Option<f64> {
    let signals = scene
        .signals
        .iter()
        .filter(|s| s.kind != SignalKind::Limit && s.distance >= 0.0)
        .map(|s| s.distance);
    let regions = scene
        .ahead
        .iter()
        .filter(|a| matches!(a.kind, SegmentKind::Intersection | SegmentKind::Roundabout) && a.distance >= 0.0)
        .map(|a| a.distance);
    signals.chain(regions).min_by(f64::total_cmp)
}

impl Planner {
    pub fn new() -> Self {
        Planner::default()
    }

    fn apply_control(&mut self, c: &ControlCommand, scene: &Scene, p: &ParameterStore) {
        let pos = scene.ego.position;
        let v = ms(scene.ego.speed);
        let ds = p.num(K::DistStop) * p.num(K::DistExpansionFactor);
        match c {
            ControlCommand::Stop => {
                // next stop line we can still reach, else a comfortable stop
                let reachable = |d: f64| d - ds >= v * v / (2.0 * MAX_BRAKE);
                let lines = scene
                    .signals
                    .iter()
                    .filter(|s| s.kind != SignalKind::Limit)
                    .map(|s| s.distance)
                    .chain(
                        scene
                            .ahead
                            .iter()
                            .filter(|a| a.kind == SegmentKind::Intersection)
                            .map(|a| a.distance),
                    )
                    .filter(|d| *d >= 0.0 && reachable(*d))
                    .min_by(f64::total_cmp);
                let point = match lines {
                    Some(d) => pos + d - ds,
                    None => pos + v * v / (2.0 * COMFORT_DECEL),
                };
                self.hold = Some(Hold::Stop(point));
            }
            ControlCommand::PullOver => {
                self.hold = Some(Hold::PullOver(pos + v * v / (2.0 * COMFORT_DECEL) + ds))
            }
            ControlCommand::EmergencyPullOver => {
                self.hold = Some(Hold::PullOver(pos + v * v / (2.0 * MAX_BRAKE)))
            }
            ControlCommand::Park { position } => {
                let earliest = pos + v * v / (2.0 * MAX_BRAKE);
                self.hold = Some(Hold::Park(position.max(earliest)));
            }
            ControlCommand::EmergencyStop => self.hold = Some(Hold::Emergency),
            ControlCommand::Launch => {
                self.hold = None;
                for (id, w) in self.signs.iter_mut() {
                    if w.stopped_at.is_some() && scene.signals.iter().any(|s| &s.id == id && s.distance >= 0.0) {
                        w.released = true;
                    }
                }
            }
            ControlCommand::LaneFollow => {
                self.lane_pinned = true;
                self.pending_changes.clear();
            }
            ControlCommand::ChangeLane { side, count } => {
                self.lane_pinned = false;
                for _ in 0..*count {
                    self.pending_changes.push_back(*side);
                }
            }
            ControlCommand::CancelManoeuvre => {
                self.lane_pinned = false;
                self.pending_changes.clear();
            }
            ControlCommand::RePlanning => {
                // A one-dimensional route has nothing to re-route; forget
                // latched light decisions so they are re-evaluated.
                self.committed.clear();
            }
            ControlCommand::SpeedTo { target, accel } => self.speed_command = Some((*target, *accel)),
            ControlCommand::CancelSpeed => self.speed_command = None,
        }
    }

    /// Plan one tick.
    pub fn plan(&mut self, scene: &Scene, p: &ParameterStore, controls: &[ControlCommand]) -> PlannerOutput {
        for c in controls {
            self.apply_control(c, scene, p);
        }
        let pos = scene.ego.position;
        let v = ms(scene.ego.speed);
        let exp = p.num(K::DistExpansionFactor);
        let ds = p.num(K::DistStop) * exp;
        let adverse = scene.weather.adverse() && p.flag(K::PrefCheckEnv);
        let check_traj = p.flag(K::PrefCheckTraj);
        let (acc_lo, acc_hi) = if check_traj { p.range(K::CheckLongAccRange) } else { PHYSICAL_ACCEL };
        let brake_limit = if check_traj { (-acc_lo).max(0.0) } else { MAX_BRAKE };

        // ---- speed caps
        let cruise = self.speed_command.map_or(p.num(K::SpeedCruise), |(t, _)| t);
        let mut target = cruise.min(p.num(K::SpeedMax)).min(p.num(K::SpeedMaxPlan));
        let comply = p.flag(K::PrefComplySigns);
        if comply {
            target = target.min(scene.segment.speed_limit);
            let look_ahead = if p.flag(K::PrefCheckSpeed) { &scene.ahead[..] } else { &[] };
            for a in look_ahead.iter().filter(|a| a.distance >= 0.0) {
                let cap = kmh((ms(a.speed_limit).powi(2) + 2.0 * BRAKE_ONSET * a.distance).sqrt());
                target = target.min(cap);
            }
        }
        if adverse {
            target *= p.num(K::SpeedDecreaseRatio);
        }
        let in_region = matches!(scene.segment.kind, SegmentKind::Intersection | SegmentKind::Roundabout);
        if in_region || nearest_special(scene).is_some_and(|d| d <= p.num(K::DistPrep) * exp) {
            target = target.min(p.num(K::SpeedExpect));
        }
        target = target.max(p.num(K::SpeedMin));
        if comply {
            target = target.min(scene.segment.speed_limit);
        }
        if scene.time < self.crawl_until {
            target = target.min(CRAWL_SPEED);
        }

        // ---- lead vehicle
        let lane = scene.ego.lane;
        let mut stops: Vec<(f64, StopReason)> = Vec::new();
        let obstacle_dec = p.flag(K::PrefObstacleDec);
        for o in scene.obstacles.iter().filter(|o| o.lane == lane && o.distance >= 0.0) {
            match o.kind {
                ObstacleKind::Vehicle => {
                    let want = p.num(K::DistFollow) * exp;
                    let cap = (o.speed + FOLLOW_GAIN * (o.distance - want)).max(0.0);
                    target = target.min(cap);
                    if o.speed <= 0.0 {
                        stops.push((pos + o.distance - p.num(K::DistLongBuffer) * exp, StopReason::Obstacle));
                    }
                }
                ObstacleKind::Static if obstacle_dec => {
                    stops.push((pos + o.distance - p.num(K::DistLongBuffer) * exp, StopReason::Obstacle));
                }
                ObstacleKind::Pedestrian if obstacle_dec => {
                    stops.push((pos + o.distance - p.num(K::DistYield) * exp, StopReason::Obstacle));
                }
                _ => {}
            }
        }
        if check_traj {
            let (lo, hi) = p.range(K::CheckSpeedRange);
            target = target.clamp(lo, hi.max(lo));
        }
        target = target.max(0.0);

        // ---- traffic lights
        if let Some(light) = scene.next_light() {
            let colour = light.colour.unwrap_or(Colour::Green);
            if colour == Colour::Green {
                self.committed.remove(&light.id);
            } else if !self.committed.contains(&light.id) {
                let d_line = light.distance;
                let need = if d_line > 0.0 { v * v / (2.0 * d_line) } else { f64::INFINITY };
                let limit = if colour == Colour::Red { brake_limit } else { COMFORT_DECEL.min(brake_limit) };
                if need <= limit || v == 0.0 {
                    let ideal = pos + d_line - ds;
                    let earliest = pos + v * v / (2.0 * brake_limit.max(1e-6));
                    stops.push((ideal.max(earliest).min(pos + d_line), StopReason::RedLight));
                } else {
                    self.committed.insert(light.id.clone());
                }
            }
        }

        // ---- stop signs, and unsignalized intersections when asked to stop there
        let wait = p.num(K::PrefWaitTime);
        let mut lines: Vec<(String, f64)> = scene
            .signals
            .iter()
            .filter(|s| s.kind == SignalKind::StopSign)
            .map(|s| (s.id.clone(), s.distance))
            .collect();
        if p.flag(K::PrefStopNoSig) {
            let signalled = |d: f64| {
                scene
                    .signals
                    .iter()
                    .any(|s| s.kind != SignalKind::Limit && (s.distance - d).abs() <= UNSIGNALLED_TOLERANCE)
            };
            lines.extend(
                scene
                    .ahead
                    .iter()
                    .filter(|a| a.kind == SegmentKind::Intersection && !signalled(a.distance))
                    .map(|a| (a.id.clone(), a.distance)),
            );
        }
        for (id, distance) in lines {
            let w = self.signs.entry(id).or_default();
            if w.released || distance < 0.0 {
                continue;
            }
            if v == 0.0 && distance <= ds + 1.0 && w.stopped_at.is_none() {
                w.stopped_at = Some(scene.time);
            }
            if let Some(t0) = w.stopped_at {
                if scene.time - t0 >= wait - 1e-9 {
                    w.released = true;
                    if p.flag(K::PrefCrawl) {
                        self.crawl_until = scene.time + p.num(K::PrefCrawlTime);
                    }
                    continue;
                }
            }
            stops.push((pos + (distance - ds).max(0.0), StopReason::StopSign));
        }

        // ---- holds and destination
        match self.hold {
            Some(Hold::Stop(x)) => stops.push((x, StopReason::StopCmd)),
            Some(Hold::PullOver(x)) => stops.push((x, StopReason::PullOver)),
            Some(Hold::Park(x)) => stops.push((x, StopReason::Park)),
            Some(Hold::Emergency) | None => {}
        }
        if p.flag(K::PrefDestPullover) && scene.destination_distance >= 0.0 {
            stops.push((pos + scene.destination_distance, StopReason::Destination));
        }

        // ---- acceleration
        let mut accel_up = COMFORT_ACCEL;
        if adverse {
            accel_up *= p.num(K::SpeedDecLongAccRatio);
        }
        let mut accel_down = COMFORT_DECEL;
        if let Some((t, a)) = self.speed_command {
            if t > scene.ego.speed {
                accel_up = a.abs();
            } else {
                accel_down = a.abs();
            }
        }

        let nearest = stops.iter().copied().min_by(|a, b| a.0.total_cmp(&b.0));
        let mut snap_to = None;
        let mut accel;
        let mut stop_point = None;
        let mut stop_reason = None;

        if self.hold == Some(Hold::Emergency) {
            target = 0.0;
            accel = if v > 0.0 { acc_lo } else { 0.0 };
            stop_reason = Some(StopReason::Emergency);
        } else if let Some((sp, reason)) = nearest {
            stop_point = Some(sp);
            stop_reason = Some(reason);
            let d = sp - pos;
            let vn = ms(p.num(K::SpeedNearStop));
            if d <= ds {
                // final approach: constant deceleration to rest at the point
                target = 0.0;
                accel = if v <= 0.0 {
                    0.0
                } else if d > 1e-6 {
                    -v * v / (2.0 * d)
                } else {
                    acc_lo
                };
            } else {
                let needed = (v * v - vn * vn) / (2.0 * (d - ds));
                if v > vn && needed >= BRAKE_ONSET - 1e-9 {
                    target = target.min(kmh(vn));
                    accel = -needed;
                } else {
                    let allow = kmh((vn * vn + 2.0 * BRAKE_ONSET * (d - ds)).sqrt());
                    target = target.min(allow).max(kmh(vn).min(target.max(kmh(vn))));
                    accel = ((ms(target) - v) / 0.1).clamp(-accel_down, accel_up);
                    snap_to = Some(target);
                }
            }
        } else {
            accel = ((ms(target) - v) / 0.1).clamp(-accel_down, accel_up);
            snap_to = Some(target);
        }
        accel = accel.clamp(acc_lo, acc_hi);

        // ---- lanes
        let changing = scene.ego.maneuver == Maneuver::ChangingLane;
        if self.was_changing && !changing {
            self.last_change_end = Some(scene.time);
        }
        self.was_changing = changing;
        let lane_command = if changing {
            LaneCommand::ContinueChange
        } else if self.lane_pinned {
            LaneCommand::Keep
        } else if let Some(&side) = self.pending_changes.front() {
            let rested = self
                .last_change_end
                .is_none_or(|t| scene.time - t >= p.num(K::PrefTimeInterval) - 1e-9);
            let valid = match side {
                Side::Left => lane > 0,
                Side::Right => lane + 1 < scene.segment.lanes,
            };
            if !valid {
                self.pending_changes.pop_front();
                LaneCommand::Keep
            } else if rested {
                self.pending_changes.pop_front();
                LaneCommand::BeginChange { side }
            } else {
                LaneCommand::Keep
            }
        } else {
            LaneCommand::Keep
        };

        PlannerOutput {
            target_speed: target,
            commanded_accel: accel,
            lane_command,
            stop_point,
            stop_reason,
            light: p.token(K::DeviceLightState).to_string(),
            horn: p.flag(K::DeviceHorn),
            snap_to,
        }
    }

    /// Whether a hold keeps the vehicle in place (used for the maneuver label).
    pub fn holding(&self) -> Option<StopReason> {
        match self.hold {
            Some(Hold::Stop(_)) => Some(StopReason::StopCmd),
            Some(Hold::PullOver(_)) => Some(StopReason::PullOver),
            Some(Hold::Park(_)) => Some(StopReason::Park),
            Some(Hold::Emergency) => Some(StopReason::Emergency),
            None => None,
        }
    }
}
