//! Traffic-law robustness scoring over recorded traces.
//!
//! Each check folds over the trace steps and yields a signed margin: metres
//! for line and gap checks, km/h for speed checks, and ±1 for the device
//! check. A margin at or below zero means the rule was broken. Checks that
//! never apply report positive infinity, printed as `n/a`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::params::{round3, ParamKey, Value};
use crate::scene::{Colour, ObstacleKind, SegmentKind, SignalKind};
use crate::sim::trace::{EndReason, Trace, TraceStep};

/// Signals and junctions count as being approached within this many metres,
/// and stay relevant for this many metres after the line.
pub const APPROACH_AHEAD: f64 = 50.0;
pub const APPROACH_BEHIND: f64 = 30.0;
/// Speed cap in adverse weather and on roundabouts, km/h.
pub const SLOW_ZONE_CAP: f64 = 30.0;

pub const CHECK_IDS: [&str; 11] = [
    "law38_sub1",
    "law38_sub2",
    "law38_sub3",
    "law44",
    "law46_sub2",
    "law46_sub3",
    "law51_sub4",
    "law51_sub5",
    "law52",
    "law53",
    "law58",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawCheck {
    pub id: String,
    #[serde(serialize_with = "ser_rob", deserialize_with = "de_rob")]
    pub robustness: f64,
    pub violated: bool,
    pub context: String,
}

impl LawCheck {
    fn new(id: &str, robustness: f64, context: &str) -> LawCheck {
        let robustness = if robustness.is_finite() { round3(robustness) } else { f64::INFINITY };
        LawCheck {
            id: id.to_string(),
            robustness,
            violated: robustness <= 0.0,
            context: context.to_string(),
        }
    }

    pub fn applicable(&self) -> bool {
        self.robustness.is_finite()
    }
}

fn ser_rob<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("n/a")
    }
}

fn de_rob<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Rob {
        Num(f64),
        Text(String),
    }
    match Rob::deserialize(d)? {
        Rob::Num(n) => Ok(n),
        Rob::Text(t) if t == "n/a" => Ok(f64::INFINITY),
        Rob::Text(t) => Err(serde::de::Error::custom(format!("bad robustness `{t}`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Violation,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Violation => "violation",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub violated: usize,
    pub not_applicable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub scenario: String,
    pub outcome: Outcome,
    pub end_reason: EndReason,
    pub checks: Vec<LawCheck>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("trace has no termination record")]
pub struct IncompleteTrace;

impl ComplianceReport {
    pub fn check(&self, id: &str) -> Option<&LawCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table with one row per check.
    pub fn to_table(&self) -> String {
        let rows: Vec<[String; 4]> = self
            .checks
            .iter()
            .map(|c| {
                let pass = if !c.applicable() {
                    "-"
                } else if c.violated {
                    "FAIL"
                } else {
                    "PASS"
                };
                let rob = if c.applicable() { format!("{:.3}", c.robustness) } else { "n/a".into() };
                [c.id.clone(), pass.into(), rob, c.context.clone()]
            })
            .collect();
        let head = ["Law", "Pass", "Robustness", "Context"];
        let mut width = head.map(str::len);
        for r in &rows {
            for (w, cell) in width.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: [&str; 4]| {
            let _ = writeln!(
                out,
                "{:<w0$}  {:<w1$}  {:>w2$}  {}",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                w0 = width[0],
                w1 = width[1],
                w2 = width[2]
            );
        };
        line(head);
        for r in &rows {
            line([&r[0], &r[1], &r[2], &r[3]]);
        }
        let _ = writeln!(
            out,
            "outcome: {} ({} passed, {} violated, {} n/a)",
            self.outcome.as_str(),
            self.summary.passed,
            self.summary.violated,
            self.summary.not_applicable
        );
        out
    }
}

impl fmt::Display for ComplianceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

fn in_approach(d: f64) -> bool {
    (-APPROACH_BEHIND..=APPROACH_AHEAD).contains(&d)
}

/// Minimum of `cap - speed` over the steps where `cap_fn` yields a cap.
pub fn rob_speed(steps: &[TraceStep], cap_fn: impl Fn(&TraceStep) -> Option<f64>) -> f64 {
    steps
        .iter()
        .filter_map(|s| cap_fn(s).map(|cap| cap - s.scene.ego.speed))
        .fold(f64::INFINITY, f64::min)
}

/// Stop-line margin over every phase of `colour` that begins before the ego
/// reaches the line: the smallest distance to the line while the phase lasts
/// and the light is being approached, or zero once the line is crossed.
pub fn rob_light_phase(steps: &[TraceStep], colour: Colour) -> f64 {
    // per signal: (line distance at episode start, running minimum)
    let mut open: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    let mut worst = f64::INFINITY;
    let mut close = |start: f64, min: f64| {
        if start >= 0.0 && min.is_finite() {
            worst = worst.min(min.max(0.0));
        }
    };
    for s in steps {
        let mut seen = Vec::new();
        for g in s.scene.signals.iter().filter(|g| g.kind == SignalKind::TrafficLight) {
            if g.colour != Some(colour) {
                continue;
            }
            seen.push(g.id.as_str());
            let entry = open.entry(g.id.as_str()).or_insert((g.distance, f64::INFINITY));
            if in_approach(g.distance) {
                entry.1 = entry.1.min(g.distance);
            }
        }
        let ended: Vec<&str> = open.keys().copied().filter(|id| !seen.contains(id)).collect();
        for id in ended {
            let (start, min) = open.remove(id).expect("present");
            close(start, min);
        }
    }
    for (_, (start, min)) in open {
        close(start, min);
    }
    worst
}

fn next_light(s: &TraceStep) -> Option<(Colour, f64)> {
    s.scene
        .signals
        .iter()
        .filter(|g| g.kind == SignalKind::TrafficLight && g.distance >= 0.0 && g.distance <= APPROACH_AHEAD)
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
        .and_then(|g| g.colour.map(|c| (c, g.distance)))
}

fn lead_vehicle(s: &TraceStep) -> Option<(f64, f64)> {
    s.scene
        .obstacles
        .iter()
        .filter(|o| o.kind == ObstacleKind::Vehicle && o.lane == s.scene.ego.lane && o.distance >= 0.0)
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
        .map(|o| (o.distance, o.speed))
}

/// Minimum of `speed - posted minimum` while in the leftmost lane.
fn fast_lane_minimum(steps: &[TraceStep]) -> f64 {
    steps
        .iter()
        .filter(|s| s.scene.ego.lane == 0)
        .filter_map(|s| s.scene.segment.min_speed.map(|m| s.scene.ego.speed - m))
        .fold(f64::INFINITY, f64::min)
}

fn green_passage_gap(steps: &[TraceStep]) -> f64 {
    steps
        .iter()
        .filter(|s| {
            s.scene.signals.iter().any(|g| {
                g.kind == SignalKind::TrafficLight && g.colour == Some(Colour::Green) && in_approach(g.distance)
            })
        })
        .filter_map(lead_vehicle)
        .map(|(gap, _)| gap)
        .fold(f64::INFINITY, f64::min)
}

fn stopped_at_red(steps: &[TraceStep]) -> f64 {
    steps
        .iter()
        .filter(|s| s.scene.ego.speed <= 0.0)
        .filter_map(|s| {
            s.scene
                .signals
                .iter()
                .filter(|g| g.kind == SignalKind::TrafficLight && g.colour == Some(Colour::Red) && in_approach(g.distance))
                .map(|g| g.distance)
                .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        })
        .fold(f64::INFINITY, f64::min)
}

fn queue_gap_at_red(steps: &[TraceStep]) -> f64 {
    steps
        .iter()
        .filter(|s| matches!(next_light(s), Some((Colour::Red, _))))
        .filter_map(lead_vehicle)
        .filter(|(_, speed)| *speed <= 0.0)
        .map(|(gap, _)| gap)
        .fold(f64::INFINITY, f64::min)
}

/// Per stop sign: distance to the sign at the first full stop within the
/// approach, or the negated slowest speed if the ego never stopped.
fn stop_sign(steps: &[TraceStep]) -> f64 {
    // per sign: (stopped margin, slowest speed seen while approaching, passed)
    let mut signs: BTreeMap<&str, (Option<f64>, f64, bool)> = BTreeMap::new();
    for s in steps {
        for g in s.scene.signals.iter().filter(|g| g.kind == SignalKind::StopSign) {
            let e = signs.entry(g.id.as_str()).or_insert((None, f64::INFINITY, false));
            if g.distance >= 0.0 && g.distance <= APPROACH_AHEAD {
                e.1 = e.1.min(s.scene.ego.speed);
                if s.scene.ego.speed <= 0.0 && e.0.is_none() {
                    e.0 = Some(g.distance);
                }
            } else if g.distance < 0.0 {
                e.2 = true;
            }
        }
    }
    signs
        .values()
        .filter(|(stop, slowest, passed)| stop.is_some() || (*passed && slowest.is_finite()))
        .map(|(stop, slowest, _)| stop.unwrap_or(-slowest))
        .fold(f64::INFINITY, f64::min)
}

fn jammed_junction(steps: &[TraceStep]) -> f64 {
    steps
        .iter()
        .filter_map(|s| {
            let seg = &s.scene.segment;
            if seg.kind == SegmentKind::Intersection && seg.jam {
                return Some(0.0);
            }
            s.scene
                .ahead
                .iter()
                .filter(|a| a.kind == SegmentKind::Intersection && a.jam)
                .filter(|a| a.distance >= 0.0 && a.distance <= APPROACH_AHEAD)
                .map(|a| a.distance)
                .min_by(f64::total_cmp)
        })
        .fold(f64::INFINITY, f64::min)
}

fn fog_light(steps: &[TraceStep]) -> f64 {
    steps
        .iter()
        .filter(|s| s.scene.weather.foggy)
        .map(|s| match s.params.get(&ParamKey::DeviceLightState) {
            Some(Value::Token(t)) if t == "fog_light" => 1.0,
            _ => -1.0,
        })
        .fold(f64::INFINITY, f64::min)
}

/// Score a complete trace against every built-in check.
pub fn evaluate(trace: &Trace) -> Result<ComplianceReport, IncompleteTrace> {
    let end = trace.end.as_ref().ok_or(IncompleteTrace)?;
    let st = &trace.steps;
    let checks = vec![
        LawCheck::new("law38_sub1", green_passage_gap(st), "gap to lead vehicle while passing on green (m)"),
        LawCheck::new("law38_sub2", rob_light_phase(st, Colour::Yellow), "stop-line margin during yellow (m)"),
        LawCheck::new("law38_sub3", rob_light_phase(st, Colour::Red), "stop-line margin during red (m)"),
        LawCheck::new(
            "law44",
            fast_lane_minimum(st),
            "fast-lane speed above the posted minimum (km/h)",
        ),
        LawCheck::new(
            "law46_sub2",
            rob_speed(st, |s| s.scene.weather.adverse().then_some(SLOW_ZONE_CAP)),
            "margin below 30 km/h in fog, rain or snow",
        ),
        LawCheck::new(
            "law46_sub3",
            rob_speed(st, |s| (s.scene.segment.kind == SegmentKind::Roundabout).then_some(SLOW_ZONE_CAP)),
            "margin below 30 km/h on roundabouts",
        ),
        LawCheck::new("law51_sub4", stopped_at_red(st), "distance to line when stopped at red (m)"),
        LawCheck::new("law51_sub5", queue_gap_at_red(st), "gap to stopped vehicle at red (m)"),
        LawCheck::new("law52", stop_sign(st), "distance to stop sign at full stop (m)"),
        LawCheck::new("law53", jammed_junction(st), "distance kept from a jammed intersection (m)"),
        LawCheck::new("law58", fog_light(st), "fog light on while foggy (+1/-1)"),
    ];
    let violated = checks.iter().filter(|c| c.violated).count();
    let not_applicable = checks.iter().filter(|c| !c.applicable()).count();
    let summary = Summary {
        passed: checks.len() - violated - not_applicable,
        violated,
        not_applicable,
    };
    let outcome = match end.reason {
        EndReason::Collision => Outcome::Collision,
        _ if violated > 0 => Outcome::Violation,
        EndReason::MaxTicks => Outcome::Timeout,
        EndReason::DestinationReached => Outcome::Pass,
    };
    Ok(ComplianceReport {
        scenario: trace.header.scenario.clone(),
        outcome,
        end_reason: end.reason,
        checks,
        summary,
    })
}
