//! Per-tick abstract scene, event derivation by edge detection, and
//! condition evaluation.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::dsl::ast::{format_number, ConditionExpr, Literal};
use crate::params::round3;

/// Light level below which `is_night` holds.
pub const NIGHT_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Weather {
    pub raining: bool,
    pub foggy: bool,
    pub snowing: bool,
    pub light_level: f64,
}

impl Weather {
    pub fn adverse(&self) -> bool {
        self.raining || self.foggy || self.snowing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    #[default]
    LaneFollow,
    ChangingLane,
    PullingOver,
    Stopped,
    Parked,
    Emergency,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ego {
    /// Metres along the route.
    pub position: f64,
    /// 0 is the leftmost (fast) lane.
    pub lane: u32,
    /// km/h
    pub speed: f64,
    /// m/s²
    pub accel: f64,
    pub maneuver: Maneuver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    #[default]
    Normal,
    Motorway,
    Roundabout,
    Tunnel,
    Intersection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentView {
    pub id: String,
    pub kind: SegmentKind,
    /// Posted limit, km/h.
    pub speed_limit: f64,
    pub lanes: u32,
    pub jam: bool,
    /// Minimum speed required in the fast lane, if the road sets one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_speed: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Static,
    Vehicle,
    Pedestrian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleView {
    pub id: String,
    pub kind: ObstacleKind,
    /// Signed longitudinal gap from the ego front to the obstacle rear, m.
    pub distance: f64,
    pub lane: u32,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    TrafficLight,
    StopSign,
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Colour {
    Red,
    Green,
    Yellow,
}

impl Colour {
    pub fn as_str(self) -> &'static str {
        match self {
            Colour::Red => "red",
            Colour::Green => "green",
            Colour::Yellow => "yellow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalView {
    pub id: String,
    pub kind: SignalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colour: Option<Colour>,
    /// Distance to the stop line (or sign), m. Negative once passed.
    pub distance: f64,
    /// Speed value for limit signs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

/// A special road region ahead, within detection range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AheadSegment {
    pub id: String,
    pub kind: SegmentKind,
    pub distance: f64,
    pub length: f64,
    pub speed_limit: f64,
    pub jam: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scene {
    pub tick: u64,
    /// Seconds since start.
    pub time: f64,
    pub weather: Weather,
    pub ego: Ego,
    pub segment: SegmentView,
    pub obstacles: Vec<ObstacleView>,
    pub signals: Vec<SignalView>,
    pub ahead: Vec<AheadSegment>,
    pub destination_distance: f64,
    pub at_destination: bool,
}

impl Scene {
    /// Copy with every float rounded to three decimals.
    pub fn rounded(&self) -> Scene {
        let mut s = self.clone();
        s.time = round3(s.time);
        s.weather.light_level = round3(s.weather.light_level);
        s.ego.position = round3(s.ego.position);
        s.ego.speed = round3(s.ego.speed);
        s.ego.accel = round3(s.ego.accel);
        s.segment.speed_limit = round3(s.segment.speed_limit);
        s.segment.min_speed = s.segment.min_speed.map(round3);
        for o in &mut s.obstacles {
            o.distance = round3(o.distance);
            o.speed = round3(o.speed);
        }
        for g in &mut s.signals {
            g.distance = round3(g.distance);
            g.value = g.value.map(round3);
        }
        for a in &mut s.ahead {
            a.distance = round3(a.distance);
            a.length = round3(a.length);
            a.speed_limit = round3(a.speed_limit);
        }
        s.destination_distance = round3(s.destination_distance);
        s
    }

    /// Nearest traffic light ahead (stop line not yet passed).
    pub fn next_light(&self) -> Option<&SignalView> {
        self.signals
            .iter()
            .filter(|s| s.kind == SignalKind::TrafficLight && s.distance >= 0.0)
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
    }

    /// Effective speed limit: nearest limit sign ahead, else the posted limit.
    pub fn speed_limit(&self) -> f64 {
        self.signals
            .iter()
            .filter(|s| s.kind == SignalKind::Limit && s.distance >= 0.0)
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
            .and_then(|s| s.value)
            .unwrap_or(self.segment.speed_limit)
    }
}

/// Events raised at one tick. Always contains `always`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventSet(BTreeSet<String>);

impl EventSet {
    pub fn new() -> Self {
        let mut e = EventSet(BTreeSet::new());
        e.insert("always");
        e
    }

    pub fn insert(&mut self, name: impl Into<String>) {
        self.0.insert(name.into());
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for EventSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut e = EventSet::new();
        for s in iter {
            e.insert(s);
        }
        e
    }
}

fn in_range(d: f64, range: f64) -> bool {
    (0.0..=range).contains(&d)
}

fn signal_event(s: &SignalView) -> String {
    match s.kind {
        SignalKind::TrafficLight => format!("{}_light_detected", s.colour.unwrap_or(Colour::Green).as_str()),
        SignalKind::StopSign => "stop_sign_detected".into(),
        SignalKind::Limit => format!("limit({})_detected", format_number(s.value.unwrap_or(0.0))),
    }
}

fn kind_event(kind: SegmentKind) -> Option<&'static str> {
    match kind {
        SegmentKind::Normal => None,
        SegmentKind::Motorway => Some("motorway"),
        SegmentKind::Roundabout => Some("roundabout"),
        SegmentKind::Tunnel => Some("tunnel"),
        SegmentKind::Intersection => Some("intersection"),
    }
}

/// Derive the event set from two consecutive scenes. With no previous scene
/// every currently true detection fires.
pub fn derive_events(prev: Option<&Scene>, cur: &Scene, detection_range: f64) -> EventSet {
    let mut e = EventSet::new();
    let empty = Scene::default();
    let first = prev.is_none();
    let p = prev.unwrap_or(&empty);

    let weather = [
        (p.weather.raining, cur.weather.raining, "rain"),
        (p.weather.foggy, cur.weather.foggy, "fog"),
        (p.weather.snowing, cur.weather.snowing, "snow"),
    ];
    for (was, is, name) in weather {
        if is && !was {
            e.insert(format!("{name}_started"));
        }
        if was && !is && !first {
            e.insert(format!("{name}_stopped"));
        }
    }

    let seen: HashSet<&str> = p
        .obstacles
        .iter()
        .filter(|o| in_range(o.distance, detection_range))
        .map(|o| o.id.as_str())
        .collect();
    for o in cur.obstacles.iter().filter(|o| in_range(o.distance, detection_range)) {
        if !seen.contains(o.id.as_str()) {
            e.insert(match o.kind {
                ObstacleKind::Static => "static_obstacle_detected",
                ObstacleKind::Vehicle => "vehicle_detected",
                ObstacleKind::Pedestrian => "pedestrian_detected",
            });
        }
    }
    for (kind, name) in [
        (ObstacleKind::Vehicle, "vehicle_no_longer_detected"),
        (ObstacleKind::Pedestrian, "pedestrian_no_longer_detected"),
    ] {
        let count = |s: &Scene| {
            s.obstacles
                .iter()
                .filter(|o| o.kind == kind && in_range(o.distance, detection_range))
                .count()
        };
        if !first && count(p) > 0 && count(cur) == 0 {
            e.insert(name);
        }
    }

    for s in cur.signals.iter().filter(|s| in_range(s.distance, detection_range)) {
        let before = p
            .signals
            .iter()
            .find(|q| q.id == s.id && in_range(q.distance, detection_range));
        match before {
            None => e.insert(signal_event(s)),
            // a light changing colour while in view is a new detection
            Some(q) if q.colour != s.colour => e.insert(signal_event(s)),
            Some(_) => {}
        }
    }
    let lost = p.signals.iter().any(|q| {
        in_range(q.distance, detection_range)
            && !cur
                .signals
                .iter()
                .any(|s| s.id == q.id && in_range(s.distance, detection_range))
    });
    if lost {
        e.insert("signal_no_longer_detected");
    }

    if first || p.segment.kind != cur.segment.kind {
        if let Some(name) = kind_event(cur.segment.kind) {
            e.insert(format!("entering_{name}"));
        }
        if !first {
            if let Some(name) = kind_event(p.segment.kind) {
                e.insert(format!("exiting_{name}"));
            }
        }
    }

    let (pm, cm) = (p.ego.maneuver, cur.ego.maneuver);
    if (first || pm != cm) && cm == Maneuver::ChangingLane {
        e.insert("change_lane_started");
    }
    if !first && pm == Maneuver::ChangingLane && cm != Maneuver::ChangingLane {
        e.insert("change_lane_finished");
    }
    if (first || pm != cm) && cm == Maneuver::Emergency {
        e.insert("emergency_stop");
    }
    if cur.at_destination && (first || !p.at_destination) {
        e.insert("destination_reached");
    }
    e
}

/// Evaluate a (possibly negated) condition on a scene.
pub fn eval_condition(c: &ConditionExpr, negated: bool, s: &Scene) -> bool {
    let num = || match c.args.first() {
        Some(Literal::Number(n)) => *n,
        _ => 0.0,
    };
    let ahead = |d: f64| d >= 0.0;
    let v = match c.id.as_str() {
        "is_raining" => s.weather.raining,
        "is_foggy" => s.weather.foggy,
        "is_snowing" => s.weather.snowing,
        "is_night" => s.weather.light_level < NIGHT_THRESHOLD,
        "find_obstacle" => s.obstacles.iter().any(|o| ahead(o.distance)),
        "obstacle_distance_leq" => {
            let n = num();
            s.obstacles.iter().any(|o| ahead(o.distance) && o.distance <= n)
        }
        "find_signal" => s.signals.iter().any(|g| ahead(g.distance)),
        "speed_limit_geq" => s.speed_limit() >= num(),
        "is_traffic_light" => {
            let want = match c.args.first() {
                Some(Literal::Token(t) | Literal::Str(t)) => t.as_str(),
                _ => "",
            };
            s.next_light()
                .and_then(|l| l.colour)
                .is_some_and(|col| col.as_str() == want)
        }
        "is_motorway" => s.segment.kind == SegmentKind::Motorway,
        "is_roundabout" => s.segment.kind == SegmentKind::Roundabout,
        "is_tunnel" => s.segment.kind == SegmentKind::Tunnel,
        "is_intersection" => s.segment.kind == SegmentKind::Intersection,
        "is_jam" => {
            s.segment.jam
                || s.ahead
                    .iter()
                    .any(|a| a.kind == SegmentKind::Intersection && a.jam)
        }
        _ => false,
    };
    v != negated
}
