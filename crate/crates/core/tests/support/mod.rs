//! Shared fixtures and random generators for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;

use udrive_core::catalog::{baseline_parameters, Catalog};
use udrive_core::dsl::{load_program, parse_online_command, Program};
use udrive_core::params::ParameterStore;
use udrive_core::scene::{Colour, ObstacleKind, SegmentKind};
use udrive_core::sim::scenario::{
    EgoSpec, ObstacleSpec, Phase, Scenario, SegmentSpec, SignalSpec, SignalSpecKind, WeatherSpec, TICK_S,
};
use udrive_core::sim::{parse_script, ScriptedCommand};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn program(rel: &str) -> Program {
    let (p, diags) = load_program(&read(rel)).unwrap_or_else(|d| panic!("{rel}: {d:?}"));
    assert!(diags.iter().all(|d| !d.is_error()), "{rel}: {diags:?}");
    p
}

pub fn program_text(text: &str) -> Program {
    load_program(text).unwrap_or_else(|d| panic!("{d:?}")).0
}

pub fn scenario(rel: &str) -> Scenario {
    Scenario::load(&fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn script(rel: &str) -> Vec<ScriptedCommand> {
    parse_script(&read(rel), Catalog::standard()).unwrap()
}

pub fn command(tick: u64, text: &str) -> ScriptedCommand {
    ScriptedCommand { tick, command: parse_online_command(text, Catalog::standard()).unwrap() }
}

pub fn baseline() -> ParameterStore {
    baseline_parameters()
}

pub fn empty_program() -> Program {
    Program::default()
}

// ---------------------------------------------------------------- generators

const TRIGGERS: &[&str] = &[
    "always",
    "entering_motorway",
    "exiting_motorway",
    "entering_tunnel",
    "exiting_tunnel",
    "entering_roundabout",
    "exiting_roundabout",
    "rain_started",
    "rain_stopped",
    "vehicle_detected",
    "vehicle_no_longer_detected",
    "green_light_detected",
    "red_light_detected",
    "signal_no_longer_detected",
];

const CONDITIONS: &[&str] = &["is_raining", "is_night", "is_motorway", "is_tunnel", "obstacle_distance_leq(80)"];

/// Binding actions grouped by the parameter they write; one rule uses at most
/// one action per group so it never conflicts with itself.
const ACTION_GROUPS: &[&[&str]] = &[
    &["max_speed(40)", "max_speed(60)", "increase_max_speed(10)", "decrease_max_speed(5)"],
    &["cruise_speed(20)", "cruise_speed(35)", "cruise_speed(50)"],
    &["min_speed(0)", "min_speed(5)"],
    &["follow_dist(10)", "follow_dist(25)"],
    &["stop_dist(1)", "stop_dist(2)"],
    &["expect_speed(15)", "expect_speed(25)"],
    &["set_light(low_beam)", "set_light(high_beam)", "set_light(fog_light)"],
    &["prep_dist(30)", "prep_dist(60)"],
];

/// Online commands used for the supremacy property: all write parameters.
pub const ONLINE_WRITES: &[&str] = &[
    "max_speed(35)",
    "max_speed(70)",
    "cruise_speed(25)",
    "follow_dist(15)",
    "set_light(warning_flash)",
    "expect_speed(10)",
    "stop_dist(3)",
];

#[derive(Debug, Clone)]
pub struct RuleShape {
    pub trigger: usize,
    pub conditions: Vec<(bool, usize)>,
    pub actions: Vec<(usize, usize)>,
    pub exit: Option<usize>,
}

fn arb_rule() -> impl Strategy<Value = RuleShape> {
    let groups = ACTION_GROUPS.len();
    // `always` is favoured so that rules overlap in time and compete for keys
    (
        prop_oneof![2 => Just(0usize), 3 => 0..TRIGGERS.len()],
        prop::collection::vec((any::<bool>(), 0..CONDITIONS.len()), 0..=2),
        prop::sample::subsequence((0..groups).collect::<Vec<_>>(), 1..=3),
        prop::collection::vec(0..4usize, 3),
        prop::option::of(0..TRIGGERS.len()),
    )
        .prop_map(|(trigger, conditions, groups, picks, exit)| RuleShape {
            trigger,
            conditions,
            actions: groups
                .into_iter()
                .zip(picks)
                .map(|(g, pick)| (g, pick % ACTION_GROUPS[g].len()))
                .collect(),
            // an exit equal to the trigger is a validation error
            exit: exit.filter(|e| *e != trigger),
        })
}

pub fn render_program(rules: &[RuleShape]) -> String {
    let mut out = String::new();
    for (i, r) in rules.iter().enumerate() {
        out.push_str(&format!("rule \"r{i}\"\n  trigger {}\n", TRIGGERS[r.trigger]));
        if !r.conditions.is_empty() {
            let conds: Vec<String> = r
                .conditions
                .iter()
                .map(|(neg, c)| format!("{}{}", if *neg { "!" } else { "" }, CONDITIONS[*c]))
                .collect();
            out.push_str(&format!("  condition {}\n", conds.join(" ")));
        }
        let acts: Vec<&str> = r.actions.iter().map(|(g, k)| ACTION_GROUPS[*g][*k]).collect();
        out.push_str(&format!("  then {}\n", acts.join("; ")));
        if let Some(e) = r.exit {
            out.push_str(&format!("  until {}\n", TRIGGERS[e]));
        }
        out.push_str("end\n\n");
    }
    out
}

pub fn arb_program_text() -> impl Strategy<Value = String> {
    prop::collection::vec(arb_rule(), 1..=5).prop_map(|rules| render_program(&rules))
}

pub fn arb_scenario() -> impl Strategy<Value = Scenario> {
    let kinds = prop::sample::select(vec![
        SegmentKind::Normal,
        SegmentKind::Motorway,
        SegmentKind::Tunnel,
        SegmentKind::Roundabout,
        SegmentKind::Intersection,
    ]);
    let segment = (kinds, 60.0..200.0f64, prop::sample::select(vec![40.0, 60.0, 80.0]));
    (
        prop::collection::vec(segment, 1..=4),
        1u32..=3,
        prop::option::of((0.0..15.0f64, 2.0..15.0f64)),
        prop::sample::select(vec![0.1, 1.0]),
        prop::collection::vec((0.0..1.0f64, 30.0..70.0f64, any::<bool>()), 0..=2),
        prop::option::of((0.2..0.95f64, 3.0..20.0f64, 3.0..20.0f64)),
        0.0..50.0f64,
    )
        .prop_map(|(segs, lanes, rain, light, vehicles, light_sig, ego_speed)| {
            let route: Vec<SegmentSpec> = segs
                .iter()
                .enumerate()
                .map(|(i, (kind, length, limit))| SegmentSpec {
                    id: format!("seg{i}"),
                    kind: *kind,
                    length: length.round(),
                    lanes,
                    speed_limit: *limit,
                    min_speed: None,
                    jam: Vec::new(),
                })
                .collect();
            let len: f64 = route.iter().map(|s| s.length).sum();
            let mut weather = vec![WeatherSpec {
                start: 0.0,
                raining: false,
                foggy: false,
                snowing: false,
                light_level: light,
            }];
            if let Some((start, dur)) = rain {
                for (t, raining) in [(start, true), (start + dur, false)] {
                    weather.push(WeatherSpec { start: t, raining, foggy: false, snowing: false, light_level: light });
                }
            }
            let obstacles = vehicles
                .iter()
                .enumerate()
                .map(|(i, (frac, speed, other_lane))| ObstacleSpec {
                    id: format!("V{i}"),
                    kind: ObstacleKind::Vehicle,
                    lane: if *other_lane && lanes > 1 { 1 } else { 0 },
                    position: (frac * len).round().max(40.0).min(len),
                    speed: speed.round(),
                    stop_at: None,
                    active: None,
                })
                .collect();
            let signals = light_sig
                .map(|(frac, green, red)| SignalSpec {
                    id: "L".into(),
                    kind: SignalSpecKind::TrafficLight,
                    position: (frac * len).round(),
                    phases: vec![
                        Phase { colour: Colour::Green, duration: green.round() },
                        Phase { colour: Colour::Red, duration: red.round() },
                    ],
                    cycle: true,
                    value: None,
                })
                .into_iter()
                .collect();
            Scenario {
                name: "random".into(),
                tick_s: TICK_S,
                max_ticks: 300,
                route,
                signals,
                obstacles,
                weather,
                destination: len - 5.0,
                ego: EgoSpec { position: 0.0, lane: 0, speed: ego_speed.round() },
            }
        })
}

/// Random online writes stamped at ticks below `max_tick`.
pub fn arb_online(max_tick: u64) -> impl Strategy<Value = Vec<ScriptedCommand>> {
    prop::collection::vec((0..max_tick, 0..ONLINE_WRITES.len()), 1..=4).prop_map(|v| {
        let mut cmds: Vec<ScriptedCommand> = v.into_iter().map(|(t, i)| command(t, ONLINE_WRITES[i])).collect();
        cmds.sort_by_key(|c| c.tick);
        cmds
    })
}
