//! Trace records and their JSON-Lines encoding.
//!
//! A trace file is a header line, one line per tick and an end line. Every
//! float is rounded to three decimals before it is written, so two runs that
//! agree to the millimetre produce identical bytes.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::catalog::ControlCommand;
use crate::engine::Note;
use crate::params::{round3, ParamKey, Value};
use crate::scene::{EventSet, Scene};
use crate::sim::planner::PlannerOutput;

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub scenario: String,
    pub tick_s: f64,
    pub destination: f64,
    /// Rule names of the program that was run, in textual order.
    #[serde(default)]
    pub rules: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub tick: u64,
    pub scene: Scene,
    pub events: EventSet,
    pub active_rules: Vec<String>,
    pub params: BTreeMap<ParamKey, Value>,
    pub planner_output: PlannerOutput,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub online: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controls: Vec<ControlCommand>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<Note>,
    pub op_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    DestinationReached,
    Collision,
    MaxTicks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEnd {
    pub reason: EndReason,
    pub ticks: u64,
    pub final_position: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collided_with: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Step(Box<TraceStep>),
    End(TraceEnd),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<TraceStep>,
    pub end: Option<TraceEnd>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace has no header line")]
    MissingHeader,
}

impl TraceStep {
    /// Round every float to three decimals.
    pub fn rounded(mut self) -> TraceStep {
        self.scene = self.scene.rounded();
        let p = &mut self.planner_output;
        p.target_speed = round3(p.target_speed);
        p.commanded_accel = round3(p.commanded_accel);
        p.stop_point = p.stop_point.map(round3);
        // integrator-only hint, not part of the recorded output
        p.snap_to = None;
        for c in &mut self.controls {
            match c {
                ControlCommand::SpeedTo { target, accel } => {
                    *target = round3(*target);
                    *accel = round3(*accel);
                }
                ControlCommand::Park { position } => *position = round3(*position),
                _ => {}
            }
        }
        self
    }
}

impl Trace {
    pub fn is_complete(&self) -> bool {
        self.end.is_some()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut line = |rec: &TraceRecord| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")
        };
        line(&TraceRecord::Header(self.header.clone()))?;
        for s in &self.steps {
            line(&TraceRecord::Step(Box::new(s.clone())))?;
        }
        if let Some(e) = &self.end {
            line(&TraceRecord::End(e.clone()))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut end = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match rec {
                TraceRecord::Header(h) => header = Some(h),
                TraceRecord::Step(s) => steps.push(*s),
                TraceRecord::End(e) => end = Some(e),
            }
        }
        Ok(Trace {
            header: header.ok_or(TraceError::MissingHeader)?,
            steps,
            end,
        })
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, TraceError> {
        Trace::read_jsonl(text.as_bytes())
    }
}
