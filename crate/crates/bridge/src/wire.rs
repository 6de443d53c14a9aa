//! JSON messages exchanged over the `/ws` socket. Every message is an object
//! whose `type` field names the variant.

use serde::{Deserialize, Serialize};

use udrive_core::catalog::Catalog;
use udrive_core::compliance::{ComplianceReport, Outcome};
use udrive_core::sim::scenario::Scenario;
use udrive_core::sim::{TraceEnd, TraceStep};

/// Identifiers a client may use in commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogSummary {
    pub events: Vec<String>,
    pub conditions: Vec<String>,
    pub actions: Vec<String>,
}

impl CatalogSummary {
    pub fn of(cat: &Catalog) -> CatalogSummary {
        CatalogSummary {
            events: cat.events().iter().map(|e| e.id.to_string()).collect(),
            conditions: cat.conditions().iter().map(|c| c.id.to_string()).collect(),
            actions: cat.actions().iter().map(|a| a.id.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub tick_s: f64,
    pub destination: f64,
    pub route_length: f64,
    pub max_ticks: u64,
    pub lanes: u32,
}

impl ScenarioMeta {
    pub fn of(sc: &Scenario, max_ticks: u64) -> ScenarioMeta {
        ScenarioMeta {
            name: sc.name.clone(),
            tick_s: sc.tick_s,
            destination: sc.destination,
            route_length: sc.route_length(),
            max_ticks,
            lanes: sc.route.iter().map(|s| s.lanes).max().unwrap_or(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// First message on every connection.
    Hello {
        catalog: CatalogSummary,
        scenario: ScenarioMeta,
        rules: Vec<String>,
        next_tick: u64,
        paused: bool,
        pace: f64,
    },
    /// One recorded tick; the fields are those of a trace step.
    Step(Box<TraceStep>),
    /// Sent when the set of active rules differs from the previous tick.
    RuleSetChanged { rules: Vec<String>, active: Vec<String> },
    /// Reply to a `command` (or `set_pace`) from this connection only.
    Ack {
        id: String,
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagnostic: Option<String>,
    },
    /// Pause state or pace changed.
    State { paused: bool, pace: f64, next_tick: u64 },
    /// The run is over; the socket is closed after this message.
    End {
        outcome: Outcome,
        end: TraceEnd,
        report: ComplianceReport,
    },
    /// A client message that could not be decoded.
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// An online command in rule-language syntax, e.g. `max_speed(40)`.
    Command { id: String, text: String },
    Pause,
    Resume,
    SetPace {
        factor: f64,
        #[serde(default)]
        id: Option<String>,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}
