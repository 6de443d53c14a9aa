//! Scenario files (YAML or JSON) and their validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scene::{Colour, ObstacleKind, SegmentKind};

/// Simulation step, seconds.
pub const TICK_S: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_tick")]
    pub tick_s: f64,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    pub route: Vec<SegmentSpec>,
    #[serde(default)]
    pub signals: Vec<SignalSpec>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub weather: Vec<WeatherSpec>,
    pub destination: f64,
    #[serde(default)]
    pub ego: EgoSpec,
}

fn default_tick() -> f64 {
    TICK_S
}

fn default_max_ticks() -> u64 {
    6000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub kind: SegmentKind,
    pub length: f64,
    #[serde(default = "default_lanes")]
    pub lanes: u32,
    pub speed_limit: f64,
    /// Minimum speed in the fast lane (lane 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_speed: Option<f64>,
    /// Jam intervals `[start, end)` in seconds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jam: Vec<[f64; 2]>,
}

fn default_lanes() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSpecKind {
    TrafficLight,
    StopSign,
    Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub colour: Colour,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub id: String,
    pub kind: SignalSpecKind,
    /// Stop line (or sign) position along the route, m.
    pub position: f64,
    /// Light phases, cycled unless `cycle` is false.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<Phase>,
    #[serde(default = "yes")]
    pub cycle: bool,
    /// Limit value for `limit` signs, km/h.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

fn yes() -> bool {
    true
}

impl SignalSpec {
    /// Light colour at time `t`, if this is a traffic light.
    pub fn colour_at(&self, t: f64) -> Option<Colour> {
        if self.kind != SignalSpecKind::TrafficLight || self.phases.is_empty() {
            return None;
        }
        let total: f64 = self.phases.iter().map(|p| p.duration).sum();
        let mut local = if self.cycle { t.rem_euclid(total) } else { t };
        for p in &self.phases {
            if local < p.duration {
                return Some(p.colour);
            }
            local -= p.duration;
        }
        self.phases.last().map(|p| p.colour)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub id: String,
    pub kind: ObstacleKind,
    #[serde(default)]
    pub lane: u32,
    /// Rear position at `t = 0`, m.
    pub position: f64,
    /// Constant speed, km/h.
    #[serde(default)]
    pub speed: f64,
    /// The obstacle halts here (a queue at a light, say).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at: Option<f64>,
    /// Presence window `[from, until)` in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<[f64; 2]>,
}

impl ObstacleSpec {
    pub fn position_at(&self, t: f64) -> f64 {
        let p = self.position + self.speed / 3.6 * t;
        match self.stop_at {
            Some(s) if p > s && self.position <= s => s,
            _ => p,
        }
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        match self.stop_at {
            Some(s) if self.position <= s && self.position + self.speed / 3.6 * t >= s => 0.0,
            _ => self.speed,
        }
    }

    pub fn present_at(&self, t: f64) -> bool {
        self.active.is_none_or(|[from, until]| t >= from && t < until)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherSpec {
    /// Seconds from start.
    pub start: f64,
    #[serde(default)]
    pub raining: bool,
    #[serde(default)]
    pub foggy: bool,
    #[serde(default)]
    pub snowing: bool,
    #[serde(default = "full_light")]
    pub light_level: f64,
}

fn full_light() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    #[serde(default)]
    pub position: f64,
    #[serde(default)]
    pub lane: u32,
    /// km/h
    #[serde(default)]
    pub speed: f64,
}

/// Scenario problem located by a JSON pointer into the document.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario: {}", join(.0))]
    Schema(Vec<SchemaError>),
}

fn join(errs: &[SchemaError]) -> String {
    errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError { path: path.into(), message: message.into() }
}

impl Scenario {
    /// Parse YAML (a superset of the JSON we accept) and validate.
    pub fn from_yaml(text: &str) -> Result<Scenario, ScenarioError> {
        let de = serde_yaml::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            ScenarioError::Schema(vec![schema(pointer(e.path()), e.inner().to_string())])
        })?;
        s.validate().map_err(ScenarioError::Schema)?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            ScenarioError::Schema(vec![schema(pointer(e.path()), e.inner().to_string())])
        })?;
        s.validate().map_err(ScenarioError::Schema)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Scenario::from_json(&text)
        } else {
            Scenario::from_yaml(&text)
        }
    }

    pub fn route_length(&self) -> f64 {
        self.route.iter().map(|s| s.length).sum()
    }

    /// Start position of every segment.
    pub fn segment_starts(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.route
            .iter()
            .map(|s| {
                let start = acc;
                acc += s.length;
                start
            })
            .collect()
    }

    /// Every problem found, in document order.
    pub fn validate(&self) -> Result<(), Vec<SchemaError>> {
        let mut errs = Vec::new();
        let fin_pos = |x: f64| x.is_finite() && x > 0.0;
        if (self.tick_s - TICK_S).abs() > 1e-12 {
            errs.push(schema("/tick_s", format!("only {TICK_S} s ticks are supported")));
        }
        if self.max_ticks == 0 {
            errs.push(schema("/max_ticks", "must be positive"));
        }
        if self.route.is_empty() {
            errs.push(schema("/route", "needs at least one segment"));
        }
        for (i, seg) in self.route.iter().enumerate() {
            if !fin_pos(seg.length) {
                errs.push(schema(format!("/route/{i}/length"), "must be a positive number"));
            }
            if seg.lanes == 0 {
                errs.push(schema(format!("/route/{i}/lanes"), "must be at least 1"));
            }
            if !fin_pos(seg.speed_limit) {
                errs.push(schema(format!("/route/{i}/speed_limit"), "must be a positive number"));
            }
            for (j, [a, b]) in seg.jam.iter().enumerate() {
                if !(a.is_finite() && b.is_finite() && *a >= 0.0 && a < b) {
                    errs.push(schema(format!("/route/{i}/jam/{j}"), "interval must satisfy 0 <= start < end"));
                }
            }
        }
        let len = self.route_length();
        let on_route = |x: f64| x.is_finite() && (0.0..=len).contains(&x);
        for (i, sig) in self.signals.iter().enumerate() {
            if !on_route(sig.position) {
                errs.push(schema(
                    format!("/signals/{i}/position"),
                    format!("{} lies outside the route (0..{len})", sig.position),
                ));
            }
            match sig.kind {
                SignalSpecKind::TrafficLight => {
                    if sig.phases.is_empty() {
                        errs.push(schema(format!("/signals/{i}/phases"), "a traffic light needs phases"));
                    }
                    for (j, p) in sig.phases.iter().enumerate() {
                        if !fin_pos(p.duration) {
                            errs.push(schema(format!("/signals/{i}/phases/{j}/duration"), "must be positive"));
                        }
                    }
                }
                SignalSpecKind::Limit => {
                    if !sig.value.is_some_and(fin_pos) {
                        errs.push(schema(format!("/signals/{i}/value"), "a limit sign needs a positive value"));
                    }
                }
                SignalSpecKind::StopSign => {}
            }
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            if !on_route(ob.position) {
                errs.push(schema(format!("/obstacles/{i}/position"), "outside the route"));
            }
            if !(ob.speed.is_finite() && ob.speed >= 0.0) {
                errs.push(schema(format!("/obstacles/{i}/speed"), "must be a non-negative number"));
            }
            if let Some([a, b]) = ob.active {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    errs.push(schema(format!("/obstacles/{i}/active"), "window must satisfy from < until"));
                }
            }
        }
        let mut last = f64::NEG_INFINITY;
        for (i, w) in self.weather.iter().enumerate() {
            if !(w.start.is_finite() && w.start >= last) {
                errs.push(schema(format!("/weather/{i}/start"), "timeline must be sorted by start"));
            }
            if !(0.0..=1.0).contains(&w.light_level) {
                errs.push(schema(format!("/weather/{i}/light_level"), "must lie in [0, 1]"));
            }
            last = w.start;
        }
        if !on_route(self.destination) {
            errs.push(schema("/destination", "outside the route"));
        }
        if !on_route(self.ego.position) {
            errs.push(schema("/ego/position", "outside the route"));
        }
        if !(self.ego.speed.is_finite() && self.ego.speed >= 0.0) {
            errs.push(schema("/ego/speed", "must be a non-negative number"));
        }
        if let Some(first) = self.route.first() {
            if self.ego.lane >= first.lanes {
                errs.push(schema("/ego/lane", "lane index exceeds the lane count"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "route:\n  - {length: 500, speed_limit: 50}\ndestination: 480\n";

    #[test]
    fn minimal_scenario_loads() {
        let s = Scenario::from_yaml(MINIMAL).unwrap();
        assert_eq!(s.route_length(), 500.0);
        assert_eq!(s.tick_s, 0.1);
    }

    #[test]
    fn signal_beyond_route_is_rejected() {
        let text = format!(
            "{MINIMAL}signals:\n  - {{id: L, kind: traffic_light, position: 600, phases: [{{colour: red, duration: 30}}]}}\n"
        );
        match Scenario::from_yaml(&text) {
            Err(ScenarioError::Schema(errs)) => assert_eq!(errs[0].path, "/signals/0/position"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_errors_carry_a_pointer() {
        let text = "route:\n  - {length: long, speed_limit: 50}\ndestination: 480\n";
        match Scenario::from_yaml(text) {
            Err(ScenarioError::Schema(errs)) => assert_eq!(errs[0].path, "/route/0/length"),
            other => panic!("{other:?}"),
        }
        let json = r#"{"route": [{"length": 100, "speed_limit": 50}], "destination": 50, "bogus": 1}"#;
        assert!(matches!(Scenario::from_json(json), Err(ScenarioError::Schema(_))));
    }

    #[test]
    fn phases_cycle() {
        let sig = SignalSpec {
            id: "L".into(),
            kind: SignalSpecKind::TrafficLight,
            position: 10.0,
            phases: vec![
                Phase { colour: Colour::Green, duration: 10.0 },
                Phase { colour: Colour::Red, duration: 5.0 },
            ],
            cycle: true,
            value: None,
        };
        assert_eq!(sig.colour_at(0.0), Some(Colour::Green));
        assert_eq!(sig.colour_at(12.0), Some(Colour::Red));
        assert_eq!(sig.colour_at(15.0), Some(Colour::Green));
        let once = SignalSpec { cycle: false, ..sig };
        assert_eq!(once.colour_at(100.0), Some(Colour::Red));
    }

    #[test]
    fn queued_obstacle_halts() {
        let ob = ObstacleSpec {
            id: "v".into(),
            kind: ObstacleKind::Vehicle,
            lane: 0,
            position: 0.0,
            speed: 36.0,
            stop_at: Some(50.0),
            active: None,
        };
        assert_eq!(ob.position_at(2.0), 20.0);
        assert_eq!(ob.position_at(10.0), 50.0);
        assert_eq!(ob.speed_at(10.0), 0.0);
    }
}
