//! Registry of every event, condition and action the language knows about,
//! together with the planner parameter each action binds and the baseline
//! parameter defaults.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::dsl::ast::{ActionCall, Literal};
use crate::params::{ParamKey, ParameterStore, Value};

/// Environment variable naming an alternative defaults file.
pub const DEFAULTS_ENV: &str = "UDRIVE_DEFAULTS";

const DEFAULTS_TOML: &str = include_str!("../defaults.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventCategory {
    Weather,
    Obstacle,
    Signal,
    Road,
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionCategory {
    Weather,
    Obstacle,
    Signal,
    Road,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionCategory {
    Speed,
    Distance,
    Manoeuvre,
    Other,
}

/// Which kind of situation an action is meant for: preference (P),
/// constraint (C), signals (S), road (R), weather (W), obstacles (O).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeTag {
    P,
    C,
    S,
    R,
    W,
    O,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ArgDomain {
    Number { min: f64, max: f64, integer: bool },
    Bool,
    Enum(Vec<&'static str>),
    Str,
}

impl ArgDomain {
    fn num(min: f64, max: f64) -> Self {
        ArgDomain::Number { min, max, integer: false }
    }

    fn int(min: f64, max: f64) -> Self {
        ArgDomain::Number { min, max, integer: true }
    }

    fn describe(&self) -> String {
        match self {
            ArgDomain::Number { min, max, integer } => {
                let kind = if *integer { "integer" } else { "number" };
                format!("{kind} in [{min}, {max}]")
            }
            ArgDomain::Bool => "true or false".into(),
            ArgDomain::Enum(opts) => format!("one of {}", opts.join("|")),
            ArgDomain::Str => "a quoted string".into(),
        }
    }

    /// Check a literal against the domain, returning a reason on failure.
    pub fn check(&self, lit: &Literal) -> Result<(), String> {
        let bad = || Err(format!("expected {}, found `{lit}`", self.describe()));
        match (self, lit) {
            (ArgDomain::Number { min, max, integer }, Literal::Number(n)) => {
                if !n.is_finite() || n < min || n > max || (*integer && n.fract() != 0.0) {
                    bad()
                } else {
                    Ok(())
                }
            }
            (ArgDomain::Bool, Literal::Bool(_)) => Ok(()),
            (ArgDomain::Enum(opts), Literal::Token(t) | Literal::Str(t)) => {
                if opts.contains(&t.as_str()) {
                    Ok(())
                } else {
                    bad()
                }
            }
            (ArgDomain::Str, Literal::Str(_)) => Ok(()),
            _ => bad(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgSpec {
    pub name: &'static str,
    pub domain: ArgDomain,
    pub optional: bool,
}

fn req(name: &'static str, domain: ArgDomain) -> ArgSpec {
    ArgSpec { name, domain, optional: false }
}

fn opt(name: &'static str, domain: ArgDomain) -> ArgSpec {
    ArgSpec { name, domain, optional: true }
}

/// Match call arguments to parameter slots. Optional slots are dropped
/// front-to-back until the counts agree, so `increase_to(40)` fills `n` and
/// leaves `m` empty. Returns `None` on an arity mismatch.
pub fn align<'a>(params: &'a [ArgSpec], args: &'a [Literal]) -> Option<Vec<(&'a ArgSpec, Option<&'a Literal>)>> {
    let required = params.iter().filter(|p| !p.optional).count();
    if args.len() < required || args.len() > params.len() {
        return None;
    }
    let mut skip = params.len() - args.len();
    let mut it = args.iter();
    let mut out = Vec::with_capacity(params.len());
    for p in params {
        if p.optional && skip > 0 {
            skip -= 1;
            out.push((p, None));
        } else {
            out.push((p, it.next()));
        }
    }
    Some(out)
}

/// Check arity and every argument domain.
pub fn check_args(params: &[ArgSpec], args: &[Literal]) -> Result<(), ArgError> {
    let aligned = align(params, args).ok_or_else(|| {
        let required = params.iter().filter(|p| !p.optional).count();
        let expected = if required == params.len() {
            format!("{required}")
        } else {
            format!("{required} to {}", params.len())
        };
        ArgError::Arity(format!("expected {expected} argument(s), found {}", args.len()))
    })?;
    for (spec, lit) in aligned {
        if let Some(lit) = lit {
            spec.domain
                .check(lit)
                .map_err(|m| ArgError::Domain(format!("argument `{}`: {m}", spec.name)))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArgError {
    #[error("{0}")]
    Arity(String),
    #[error("{0}")]
    Domain(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSpec {
    pub id: &'static str,
    pub category: EventCategory,
    pub args: Vec<ArgSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSpec {
    pub id: &'static str,
    pub category: ConditionCategory,
    pub args: Vec<ArgSpec>,
}

/// Lane-change direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Motion requests that are executed once rather than held as parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlCommand {
    RePlanning,
    LaneFollow,
    ChangeLane { side: Side, count: u32 },
    Park { position: f64 },
    PullOver,
    EmergencyPullOver,
    Stop,
    EmergencyStop,
    Launch,
    CancelManoeuvre,
    /// Transient speed target with a signed acceleration in m/s².
    SpeedTo { target: f64, accel: f64 },
    CancelSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ControlKind {
    RePlanning,
    LaneFollow,
    ChangeLane,
    Park,
    PullOver,
    EmergencyPullOver,
    Stop,
    EmergencyStop,
    Launch,
    CancelManoeuvre,
    IncreaseTo,
    DecreaseTo,
    CancelSpeed,
}

/// How an action turns its arguments into an effect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Effect {
    /// The single argument is written to every listed key.
    Assign(Vec<ParamKey>),
    /// Two numeric arguments form a range.
    AssignRange(ParamKey),
    /// Relative change of the visible value, frozen at activation.
    Adjust(ParamKey, f64),
    /// Pin cruise, max and min to the argument or the current ego speed.
    KeepSpeed,
    /// A constant independent of the arguments.
    Fixed(ParamKey, Value),
    Control(ControlKind),
    /// Rule-set editing; only valid as an online command.
    Meta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionSpec {
    pub id: &'static str,
    pub category: ActionCategory,
    pub tags: Vec<TypeTag>,
    pub args: Vec<ArgSpec>,
    pub effect: Effect,
}

impl ActionSpec {
    /// Parameter keys this action writes, used for conflict checks.
    pub fn keys(&self) -> Vec<ParamKey> {
        match &self.effect {
            Effect::Assign(keys) => keys.clone(),
            Effect::AssignRange(k) | Effect::Adjust(k, _) | Effect::Fixed(k, _) => vec![*k],
            Effect::KeepSpeed => vec![ParamKey::SpeedCruise, ParamKey::SpeedMax, ParamKey::SpeedMin],
            Effect::Control(_) | Effect::Meta => Vec::new(),
        }
    }

    pub fn is_speed_command(&self) -> bool {
        matches!(
            self.effect,
            Effect::Control(ControlKind::IncreaseTo | ControlKind::DecreaseTo | ControlKind::CancelSpeed)
        )
    }
}

/// Allowed values and kind of one parameter key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ParamDomain {
    Num { min: f64, max: f64 },
    Range { min: f64, max: f64 },
    Bool,
    Token(Vec<&'static str>),
}

impl ParamDomain {
    pub fn admits(&self, v: &Value) -> bool {
        match (self, v) {
            (ParamDomain::Num { min, max }, Value::Num(n)) => n.is_finite() && n >= min && n <= max,
            (ParamDomain::Range { min, max }, Value::Range([a, b])) => {
                a.is_finite() && b.is_finite() && a <= b && a >= min && b <= max
            }
            (ParamDomain::Bool, Value::Bool(_)) => true,
            (ParamDomain::Token(opts), Value::Token(t)) => opts.contains(&t.as_str()),
            _ => false,
        }
    }
}

pub const LIGHTS: &[&str] = &["high_beam", "low_beam", "fog_light", "warning_flash"];
pub const SIDES: &[&str] = &["left", "right"];
pub const DRIVE_SIDES: &[&str] = &["left", "right", "middle"];
pub const COLOURS: &[&str] = &["red", "green", "yellow"];

const MAX_SPEED: f64 = 300.0;
const MAX_DIST: f64 = 10_000.0;

pub struct Catalog {
    events: Vec<EventSpec>,
    conditions: Vec<ConditionSpec>,
    actions: Vec<ActionSpec>,
    params: BTreeMap<ParamKey, ParamDomain>,
    event_index: HashMap<&'static str, usize>,
    condition_index: HashMap<&'static str, usize>,
    action_index: HashMap<&'static str, usize>,
}

static STANDARD: LazyLock<Catalog> = LazyLock::new(Catalog::build);

impl Catalog {
    /// The built-in catalog.
    pub fn standard() -> &'static Catalog {
        &STANDARD
    }

    pub fn events(&self) -> &[EventSpec] {
        &self.events
    }

    pub fn conditions(&self) -> &[ConditionSpec] {
        &self.conditions
    }

    pub fn actions(&self) -> &[ActionSpec] {
        &self.actions
    }

    pub fn event(&self, id: &str) -> Option<&EventSpec> {
        self.event_index.get(id).map(|&i| &self.events[i])
    }

    pub fn condition(&self, id: &str) -> Option<&ConditionSpec> {
        self.condition_index.get(id).map(|&i| &self.conditions[i])
    }

    pub fn lookup_action(&self, id: &str) -> Result<&ActionSpec, UnknownAction> {
        self.action_index
            .get(id)
            .map(|&i| &self.actions[i])
            .ok_or_else(|| UnknownAction(id.to_string()))
    }

    pub fn param_domain(&self, key: ParamKey) -> &ParamDomain {
        &self.params[&key]
    }

    fn build() -> Catalog {
        use ActionCategory as AC;
        use ParamKey as K;
        use TypeTag::*;

        let ev = |id, category| EventSpec { id, category, args: vec![] };
        let events = vec![
            ev("rain_started", EventCategory::Weather),
            ev("rain_stopped", EventCategory::Weather),
            ev("fog_started", EventCategory::Weather),
            ev("fog_stopped", EventCategory::Weather),
            ev("snow_started", EventCategory::Weather),
            ev("snow_stopped", EventCategory::Weather),
            ev("static_obstacle_detected", EventCategory::Obstacle),
            ev("pedestrian_detected", EventCategory::Obstacle),
            ev("vehicle_detected", EventCategory::Obstacle),
            ev("vehicle_no_longer_detected", EventCategory::Obstacle),
            ev("pedestrian_no_longer_detected", EventCategory::Obstacle),
            ev("red_light_detected", EventCategory::Signal),
            ev("green_light_detected", EventCategory::Signal),
            ev("yellow_light_detected", EventCategory::Signal),
            ev("stop_sign_detected", EventCategory::Signal),
            EventSpec {
                id: "limit_detected",
                category: EventCategory::Signal,
                args: vec![req("n", ArgDomain::num(0.0, MAX_SPEED))],
            },
            ev("signal_no_longer_detected", EventCategory::Signal),
            ev("change_lane_started", EventCategory::Road),
            ev("change_lane_finished", EventCategory::Road),
            ev("entering_motorway", EventCategory::Road),
            ev("exiting_motorway", EventCategory::Road),
            ev("entering_roundabout", EventCategory::Road),
            ev("exiting_roundabout", EventCategory::Road),
            ev("entering_tunnel", EventCategory::Road),
            ev("exiting_tunnel", EventCategory::Road),
            ev("entering_intersection", EventCategory::Road),
            ev("exiting_intersection", EventCategory::Road),
            ev("emergency_stop", EventCategory::Road),
            ev("destination_reached", EventCategory::Road),
            ev("always", EventCategory::Always),
        ];

        let cond = |id, category, args| ConditionSpec { id, category, args };
        use ConditionCategory as CC;
        let conditions = vec![
            cond("is_raining", CC::Weather, vec![]),
            cond("is_foggy", CC::Weather, vec![]),
            cond("is_snowing", CC::Weather, vec![]),
            cond("is_night", CC::Weather, vec![]),
            cond("find_obstacle", CC::Obstacle, vec![]),
            cond("obstacle_distance_leq", CC::Obstacle, vec![req("n", ArgDomain::num(0.0, MAX_DIST))]),
            cond("find_signal", CC::Signal, vec![]),
            cond("speed_limit_geq", CC::Signal, vec![req("n", ArgDomain::num(0.0, MAX_SPEED))]),
            cond("is_traffic_light", CC::Signal, vec![req("colour", ArgDomain::Enum(COLOURS.to_vec()))]),
            cond("is_motorway", CC::Road, vec![]),
            cond("is_roundabout", CC::Road, vec![]),
            cond("is_jam", CC::Road, vec![]),
            cond("is_tunnel", CC::Road, vec![]),
            cond("is_intersection", CC::Road, vec![]),
        ];

        let speed = || req("n", ArgDomain::num(0.0, MAX_SPEED));
        let dist = || req("n", ArgDomain::num(0.0, MAX_DIST));
        let ratio = || req("n", ArgDomain::num(0.0, 1.0));
        let flag = || req("b", ArgDomain::Bool);
        let seconds = || req("n", ArgDomain::num(0.0, 600.0));
        let a = |id, category, tags: &[TypeTag], args, effect| ActionSpec {
            id,
            category,
            tags: tags.to_vec(),
            args,
            effect,
        };
        let assign = |k: ParamKey| Effect::Assign(vec![k]);
        let control = Effect::Control;
        let accel = || opt("m", ArgDomain::num(0.0, 10.0));

        let actions = vec![
            // speed
            a("keep_speed", AC::Speed, &[], vec![opt("n", ArgDomain::num(0.0, MAX_SPEED))], Effect::KeepSpeed),
            a("max_speed", AC::Speed, &[], vec![speed()], assign(K::SpeedMax)),
            a("min_speed", AC::Speed, &[], vec![speed()], assign(K::SpeedMin)),
            a("increase_max_speed", AC::Speed, &[], vec![speed()], Effect::Adjust(K::SpeedMax, 1.0)),
            a("decrease_max_speed", AC::Speed, &[], vec![speed()], Effect::Adjust(K::SpeedMax, -1.0)),
            a("increase_min_speed", AC::Speed, &[], vec![speed()], Effect::Adjust(K::SpeedMin, 1.0)),
            a("decrease_min_speed", AC::Speed, &[], vec![speed()], Effect::Adjust(K::SpeedMin, -1.0)),
            a("increase_to", AC::Speed, &[], vec![accel(), speed()], control(ControlKind::IncreaseTo)),
            a("decrease_to", AC::Speed, &[], vec![accel(), speed()], control(ControlKind::DecreaseTo)),
            a("cancel_speed_control", AC::Speed, &[], vec![], control(ControlKind::CancelSpeed)),
            a("max_plan_speed", AC::Speed, &[P], vec![speed()], assign(K::SpeedMaxPlan)),
            a("cruise_speed", AC::Speed, &[P], vec![speed()], assign(K::SpeedCruise)),
            a("near_stop_speed", AC::Speed, &[P], vec![speed()], assign(K::SpeedNearStop)),
            a("expect_speed", AC::Speed, &[S, R], vec![speed()], assign(K::SpeedExpect)),
            a("decrease_ratio", AC::Speed, &[O, W], vec![ratio()], assign(K::SpeedDecreaseRatio)),
            a("dec_long_acc_ratio", AC::Speed, &[W], vec![ratio()], assign(K::SpeedDecLongAccRatio)),
            a("dec_lat_acc_ratio", AC::Speed, &[W], vec![ratio()], assign(K::SpeedDecLatAccRatio)),
            a(
                "speed_range",
                AC::Speed,
                &[C],
                vec![req("low", ArgDomain::num(0.0, MAX_SPEED)), req("high", ArgDomain::num(0.0, MAX_SPEED))],
                Effect::AssignRange(K::CheckSpeedRange),
            ),
            a(
                "long_acc_range",
                AC::Speed,
                &[C],
                vec![req("low", ArgDomain::num(-10.0, 10.0)), req("high", ArgDomain::num(-10.0, 10.0))],
                Effect::AssignRange(K::CheckLongAccRange),
            ),
            a(
                "lat_acc_range",
                AC::Speed,
                &[C],
                vec![req("low", ArgDomain::num(-10.0, 10.0)), req("high", ArgDomain::num(-10.0, 10.0))],
                Effect::AssignRange(K::CheckLatAccRange),
            ),
            // distance
            a("long_buffer_dist", AC::Distance, &[O], vec![dist()], assign(K::DistLongBuffer)),
            a("lat_buffer_dist", AC::Distance, &[O], vec![dist()], assign(K::DistLatBuffer)),
            a("follow_dist", AC::Distance, &[O], vec![dist()], assign(K::DistFollow)),
            a("yield_dist", AC::Distance, &[O], vec![dist()], assign(K::DistYield)),
            a("stop_dist", AC::Distance, &[O, S, R], vec![dist()], assign(K::DistStop)),
            a("prep_dist", AC::Distance, &[S, R], vec![dist()], assign(K::DistPrep)),
            a("check_dist", AC::Distance, &[S, R], vec![dist()], assign(K::DistCheck)),
            a(
                "expansion_factor",
                AC::Distance,
                &[W],
                vec![req("n", ArgDomain::num(0.1, 10.0))],
                assign(K::DistExpansionFactor),
            ),
            // manoeuvres
            a("re_planning", AC::Manoeuvre, &[], vec![], control(ControlKind::RePlanning)),
            a("re-planning", AC::Manoeuvre, &[], vec![], control(ControlKind::RePlanning)),
            a("lane_follow", AC::Manoeuvre, &[], vec![], control(ControlKind::LaneFollow)),
            a(
                "change_lane",
                AC::Manoeuvre,
                &[],
                vec![req("e", ArgDomain::Enum(SIDES.to_vec())), opt("n", ArgDomain::int(1.0, 8.0))],
                control(ControlKind::ChangeLane),
            ),
            a("park", AC::Manoeuvre, &[], vec![req("s", ArgDomain::num(0.0, 1e6))], control(ControlKind::Park)),
            a("pull_over", AC::Manoeuvre, &[], vec![], control(ControlKind::PullOver)),
            a("emergency_pull_over", AC::Manoeuvre, &[], vec![], control(ControlKind::EmergencyPullOver)),
            a("stop", AC::Manoeuvre, &[], vec![], control(ControlKind::Stop)),
            a("emergency_stop", AC::Manoeuvre, &[], vec![], control(ControlKind::EmergencyStop)),
            a("launch", AC::Manoeuvre, &[], vec![], control(ControlKind::Launch)),
            a("cancel_manoeuvre_control", AC::Manoeuvre, &[], vec![], control(ControlKind::CancelManoeuvre)),
            // other
            a(
                "revise_rule",
                AC::Other,
                &[],
                vec![req("r", ArgDomain::Str), req("a", ArgDomain::Str)],
                Effect::Meta,
            ),
            a("clear_rule", AC::Other, &[], vec![req("r", ArgDomain::Str)], Effect::Meta),
            a("hock_horn", AC::Other, &[], vec![], Effect::Fixed(K::DeviceHorn, Value::Bool(true))),
            a(
                "set_light",
                AC::Other,
                &[],
                vec![req("l", ArgDomain::Enum(LIGHTS.to_vec()))],
                assign(K::DeviceLightState),
            ),
            a(
                "off_light",
                AC::Other,
                &[],
                vec![opt("l", ArgDomain::Enum(LIGHTS.to_vec()))],
                Effect::Fixed(K::DeviceLightState, Value::Token("off".into())),
            ),
            a(
                "drive_side",
                AC::Other,
                &[P],
                vec![req("e", ArgDomain::Enum(DRIVE_SIDES.to_vec()))],
                assign(K::PrefDriveSide),
            ),
            a("pri_lane_change", AC::Other, &[P], vec![flag()], assign(K::PrefPriLaneChange)),
            a("borrow_adj_lane", AC::Other, &[P], vec![flag()], assign(K::PrefBorrowAdjLane)),
            a("obstacle_dec", AC::Other, &[O], vec![flag()], assign(K::PrefObstacleDec)),
            a("comply_signs", AC::Other, &[S], vec![flag()], assign(K::PrefComplySigns)),
            a("r_turn_red", AC::Other, &[S], vec![flag()], assign(K::PrefRTurnRed)),
            a("time_interval", AC::Other, &[R], vec![seconds()], assign(K::PrefTimeInterval)),
            a("dest_pullover", AC::Other, &[R], vec![flag()], assign(K::PrefDestPullover)),
            a("stop_no_sig", AC::Other, &[R], vec![flag()], assign(K::PrefStopNoSig)),
            a("max_hd", AC::Other, &[R], vec![req("n", ArgDomain::num(0.0, 3.2))], assign(K::PrefMaxHd)),
            a("max_sp", AC::Other, &[R], vec![req("n", ArgDomain::num(0.0, 1.0))], assign(K::PrefMaxSp)),
            a("check_env", AC::Other, &[S, R], vec![flag()], assign(K::PrefCheckEnv)),
            a("check_speed", AC::Other, &[S, R], vec![flag()], assign(K::PrefCheckSpeed)),
            a("wait_time", AC::Other, &[S, R], vec![seconds()], assign(K::PrefWaitTime)),
            a("crawl", AC::Other, &[S, R], vec![flag()], assign(K::PrefCrawl)),
            a("crawl_time", AC::Other, &[S, R], vec![seconds()], assign(K::PrefCrawlTime)),
            a("check_traj", AC::Other, &[C], vec![flag()], assign(K::PrefCheckTraj)),
        ];

        let num = |min, max| ParamDomain::Num { min, max };
        let range = |min, max| ParamDomain::Range { min, max };
        let params: BTreeMap<ParamKey, ParamDomain> = [
            (K::SpeedMax, num(0.0, MAX_SPEED)),
            (K::SpeedMin, num(0.0, MAX_SPEED)),
            (K::SpeedCruise, num(0.0, MAX_SPEED)),
            (K::SpeedMaxPlan, num(0.0, MAX_SPEED)),
            (K::SpeedNearStop, num(0.0, MAX_SPEED)),
            (K::SpeedExpect, num(0.0, MAX_SPEED)),
            (K::SpeedDecreaseRatio, num(0.0, 1.0)),
            (K::SpeedDecLongAccRatio, num(0.0, 1.0)),
            (K::SpeedDecLatAccRatio, num(0.0, 1.0)),
            (K::CheckSpeedRange, range(0.0, MAX_SPEED)),
            (K::CheckLongAccRange, range(-10.0, 10.0)),
            (K::CheckLatAccRange, range(-10.0, 10.0)),
            (K::DistLongBuffer, num(0.0, MAX_DIST)),
            (K::DistLatBuffer, num(0.0, MAX_DIST)),
            (K::DistFollow, num(0.0, MAX_DIST)),
            (K::DistYield, num(0.0, MAX_DIST)),
            (K::DistStop, num(0.0, MAX_DIST)),
            (K::DistPrep, num(0.0, MAX_DIST)),
            (K::DistCheck, num(0.0, MAX_DIST)),
            (K::DistExpansionFactor, num(0.1, 10.0)),
            (K::PrefDriveSide, ParamDomain::Token(DRIVE_SIDES.to_vec())),
            (K::PrefPriLaneChange, ParamDomain::Bool),
            (K::PrefBorrowAdjLane, ParamDomain::Bool),
            (K::PrefObstacleDec, ParamDomain::Bool),
            (K::PrefComplySigns, ParamDomain::Bool),
            (K::PrefRTurnRed, ParamDomain::Bool),
            (K::PrefTimeInterval, num(0.0, 600.0)),
            (K::PrefDestPullover, ParamDomain::Bool),
            (K::PrefStopNoSig, ParamDomain::Bool),
            (K::PrefMaxHd, num(0.0, 3.2)),
            (K::PrefMaxSp, num(0.0, 1.0)),
            (K::PrefCheckEnv, ParamDomain::Bool),
            (K::PrefCheckSpeed, ParamDomain::Bool),
            (K::PrefWaitTime, num(0.0, 600.0)),
            (K::PrefCrawl, ParamDomain::Bool),
            (K::PrefCrawlTime, num(0.0, 600.0)),
            (K::PrefCheckTraj, ParamDomain::Bool),
            (K::DeviceLightState, ParamDomain::Token([&["off"], LIGHTS].concat())),
            (K::DeviceHorn, ParamDomain::Bool),
        ]
        .into_iter()
        .collect();

        let event_index = events.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
        let condition_index = conditions.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
        let action_index = actions.iter().enumerate().map(|(i, a)| (a.id, i)).collect();
        Catalog {
            events,
            conditions,
            actions,
            params,
            event_index,
            condition_index,
            action_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown action `{0}`")]
pub struct UnknownAction(pub String);

/// What executing an action means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionEffect {
    Bind(Vec<(ParamKey, Value)>),
    Control(ControlCommand),
    Meta,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BindingError {
    #[error(transparent)]
    Unknown(#[from] UnknownAction),
    #[error("{0}")]
    Args(#[from] ArgError),
}

fn lit_value(lit: &Literal) -> Value {
    match lit {
        Literal::Number(n) => Value::Num(*n),
        Literal::Bool(b) => Value::Bool(*b),
        Literal::Token(t) | Literal::Str(t) => Value::Token(t.clone()),
    }
}

fn lit_num(lit: Option<&Literal>) -> Option<f64> {
    match lit {
        Some(Literal::Number(n)) => Some(*n),
        _ => None,
    }
}

/// Resolve an action call to its effect. Relative actions read the value
/// visible in `current`; `keep_speed()` without an argument uses `ego_speed`.
pub fn action_binding(
    call: &ActionCall,
    current: &ParameterStore,
    ego_speed: f64,
) -> Result<ActionEffect, BindingError> {
    let spec = Catalog::standard().lookup_action(&call.id)?;
    check_args(&spec.args, &call.args)?;
    let aligned = align(&spec.args, &call.args).expect("arity checked");
    let arg = |i: usize| aligned[i].1;

    Ok(match &spec.effect {
        Effect::Assign(keys) => {
            let v = lit_value(arg(0).expect("required argument"));
            ActionEffect::Bind(keys.iter().map(|k| (*k, v.clone())).collect())
        }
        Effect::AssignRange(k) => {
            let lo = lit_num(arg(0)).unwrap_or(0.0);
            let hi = lit_num(arg(1)).unwrap_or(0.0);
            if lo > hi {
                return Err(ArgError::Domain(format!("range low {lo} exceeds high {hi}")).into());
            }
            ActionEffect::Bind(vec![(*k, Value::Range([lo, hi]))])
        }
        Effect::Adjust(k, sign) => {
            let delta = lit_num(arg(0)).unwrap_or(0.0);
            let v = (current.num(*k) + sign * delta).clamp(0.0, MAX_SPEED);
            ActionEffect::Bind(vec![(*k, Value::Num(v))])
        }
        Effect::KeepSpeed => {
            let v = lit_num(arg(0)).unwrap_or(ego_speed);
            ActionEffect::Bind(
                [ParamKey::SpeedCruise, ParamKey::SpeedMax, ParamKey::SpeedMin]
                    .into_iter()
                    .map(|k| (k, Value::Num(v)))
                    .collect(),
            )
        }
        Effect::Fixed(k, v) => ActionEffect::Bind(vec![(*k, v.clone())]),
        Effect::Meta => ActionEffect::Meta,
        Effect::Control(kind) => ActionEffect::Control(match kind {
            ControlKind::RePlanning => ControlCommand::RePlanning,
            ControlKind::LaneFollow => ControlCommand::LaneFollow,
            ControlKind::ChangeLane => {
                let side = match arg(0) {
                    Some(Literal::Token(t) | Literal::Str(t)) if t == "right" => Side::Right,
                    _ => Side::Left,
                };
                let count = lit_num(arg(1)).unwrap_or(1.0) as u32;
                ControlCommand::ChangeLane { side, count }
            }
            ControlKind::Park => ControlCommand::Park { position: lit_num(arg(0)).unwrap_or(0.0) },
            ControlKind::PullOver => ControlCommand::PullOver,
            ControlKind::EmergencyPullOver => ControlCommand::EmergencyPullOver,
            ControlKind::Stop => ControlCommand::Stop,
            ControlKind::EmergencyStop => ControlCommand::EmergencyStop,
            ControlKind::Launch => ControlCommand::Launch,
            ControlKind::CancelManoeuvre => ControlCommand::CancelManoeuvre,
            ControlKind::CancelSpeed => ControlCommand::CancelSpeed,
            ControlKind::IncreaseTo | ControlKind::DecreaseTo => {
                // Without `m`, use the bound of the safety-check acceleration range.
                let (lo, hi) = current.range(ParamKey::CheckLongAccRange);
                let target = lit_num(arg(1)).unwrap_or(0.0);
                let accel = if *kind == ControlKind::IncreaseTo {
                    lit_num(arg(0)).unwrap_or(hi).abs()
                } else {
                    -lit_num(arg(0)).unwrap_or(-lo).abs()
                };
                ControlCommand::SpeedTo { target, accel }
            }
        }),
    })
}

/// Problems with a defaults file. All of them are fatal.
#[derive(Debug, thiserror::Error)]
pub enum DefaultsError {
    #[error("cannot read defaults file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("defaults file is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unknown parameter `{0}` in defaults")]
    UnknownKey(String),
    #[error("missing parameter `{0}` in defaults")]
    MissingKey(String),
    #[error("parameter `{key}` has invalid value {value}")]
    BadValue { key: String, value: String },
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let name = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&name, t, out),
            other => out.push((name, other.clone())),
        }
    }
}

fn toml_to_value(v: &toml::Value) -> Option<Value> {
    let num = |v: &toml::Value| match v {
        toml::Value::Integer(i) => Some(*i as f64),
        toml::Value::Float(f) => Some(*f),
        _ => None,
    };
    match v {
        toml::Value::Boolean(b) => Some(Value::Bool(*b)),
        toml::Value::String(s) => Some(Value::Token(s.clone())),
        toml::Value::Array(items) if items.len() == 2 => Some(Value::Range([num(&items[0])?, num(&items[1])?])),
        other => num(other).map(Value::Num),
    }
}

/// Parse and schema-check a defaults document.
pub fn parse_defaults(text: &str) -> Result<BTreeMap<ParamKey, Value>, DefaultsError> {
    let table: toml::Table = text.parse()?;
    let mut flat = Vec::new();
    flatten("", &table, &mut flat);
    let cat = Catalog::standard();
    let mut out = BTreeMap::new();
    for (name, raw) in flat {
        let key: ParamKey = name.parse().map_err(|_| DefaultsError::UnknownKey(name.clone()))?;
        let value = toml_to_value(&raw)
            .filter(|v| cat.param_domain(key).admits(v))
            .ok_or_else(|| DefaultsError::BadValue {
                key: name.clone(),
                value: raw.to_string(),
            })?;
        out.insert(key, value);
    }
    if let Some(missing) = ParamKey::ALL.iter().find(|k| !out.contains_key(k)) {
        return Err(DefaultsError::MissingKey(missing.to_string()));
    }
    Ok(out)
}

/// The built-in baseline.
pub fn baseline_parameters() -> ParameterStore {
    ParameterStore::new(parse_defaults(DEFAULTS_TOML).expect("built-in defaults are valid"))
}

/// The text of the built-in defaults file.
pub fn builtin_defaults_text() -> &'static str {
    DEFAULTS_TOML
}

/// Load a baseline from `path`, else from `$UDRIVE_DEFAULTS`, else built-in.
pub fn load_baseline(path: Option<&Path>) -> Result<ParameterStore, DefaultsError> {
    let env_path = std::env::var_os(DEFAULTS_ENV).map(std::path::PathBuf::from);
    let chosen = path.map(Path::to_path_buf).or(env_path);
    match chosen {
        None => Ok(baseline_parameters()),
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|source| DefaultsError::Io {
                path: p.display().to_string(),
                source,
            })?;
            Ok(ParameterStore::new(parse_defaults(&text)?))
        }
    }
}
