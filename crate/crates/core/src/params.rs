//! Planner parameter keys, values, and the layered parameter store.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

macro_rules! param_keys {
    ($( $variant:ident => $name:literal ),+ $(,)?) => {
        /// A namespaced planner parameter.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum ParamKey {
            $( $variant, )+
        }

        impl ParamKey {
            pub const ALL: &'static [ParamKey] = &[ $( ParamKey::$variant, )+ ];

            pub fn as_str(self) -> &'static str {
                match self {
                    $( ParamKey::$variant => $name, )+
                }
            }
        }

        impl FromStr for ParamKey {
            type Err = UnknownParamKey;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $( $name => Ok(ParamKey::$variant), )+
                    _ => Err(UnknownParamKey(s.to_string())),
                }
            }
        }
    };
}

param_keys! {
    SpeedMax => "speed.max",
    SpeedMin => "speed.min",
    SpeedCruise => "speed.cruise",
    SpeedMaxPlan => "speed.max_plan",
    SpeedNearStop => "speed.near_stop",
    SpeedExpect => "speed.expect",
    SpeedDecreaseRatio => "speed.decrease_ratio",
    SpeedDecLongAccRatio => "speed.dec_long_acc_ratio",
    SpeedDecLatAccRatio => "speed.dec_lat_acc_ratio",
    CheckSpeedRange => "check.speed_range",
    CheckLongAccRange => "check.long_acc_range",
    CheckLatAccRange => "check.lat_acc_range",
    DistLongBuffer => "dist.long_buffer",
    DistLatBuffer => "dist.lat_buffer",
    DistFollow => "dist.follow",
    DistYield => "dist.yield",
    DistStop => "dist.stop",
    DistPrep => "dist.prep",
    DistCheck => "dist.check",
    DistExpansionFactor => "dist.expansion_factor",
    PrefDriveSide => "pref.drive_side",
    PrefPriLaneChange => "pref.pri_lane_change",
    PrefBorrowAdjLane => "pref.borrow_adj_lane",
    PrefObstacleDec => "pref.obstacle_dec",
    PrefComplySigns => "pref.comply_signs",
    PrefRTurnRed => "pref.r_turn_red",
    PrefTimeInterval => "pref.time_interval",
    PrefDestPullover => "pref.dest_pullover",
    PrefStopNoSig => "pref.stop_no_sig",
    PrefMaxHd => "pref.max_hd",
    PrefMaxSp => "pref.max_sp",
    PrefCheckEnv => "pref.check_env",
    PrefCheckSpeed => "pref.check_speed",
    PrefWaitTime => "pref.wait_time",
    PrefCrawl => "pref.crawl",
    PrefCrawlTime => "pref.crawl_time",
    PrefCheckTraj => "pref.check_traj",
    DeviceLightState => "device.light_state",
    DeviceHorn => "device.horn",
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown parameter key `{0}`")]
pub struct UnknownParamKey(pub String);

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ParamKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ParamKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Num(f64),
    Range([f64; 2]),
    Token(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_range(&self) -> Option<(f64, f64)> {
        match self {
            Value::Range([lo, hi]) => Some((*lo, *hi)),
            _ => None,
        }
    }

    pub fn as_token(&self) -> Option<&str> {
        match self {
            Value::Token(t) => Some(t),
            _ => None,
        }
    }

    /// Value rounded to three decimals, as recorded in traces.
    pub fn rounded(&self) -> Value {
        match self {
            Value::Num(n) => Value::Num(round3(*n)),
            Value::Range([a, b]) => Value::Range([round3(*a), round3(*b)]),
            other => other.clone(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Num(n) => write!(f, "{n}"),
            Value::Range([a, b]) => write!(f, "[{a}, {b}]"),
            Value::Token(t) => f.write_str(t),
        }
    }
}

pub fn round3(x: f64) -> f64 {
    let r = (x * 1000.0).round() / 1000.0;
    // normalise -0.0
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Layered parameter settings: baseline, one overlay per active rule (in
/// activation order), and the online override layer on top.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    baseline: BTreeMap<ParamKey, Value>,
    overlays: Vec<(String, BTreeMap<ParamKey, Value>)>,
    online: BTreeMap<ParamKey, Value>,
}

impl ParameterStore {
    /// Panics if `baseline` is missing a key; use [`crate::catalog::load_defaults`]
    /// to build a checked baseline.
    pub fn new(baseline: BTreeMap<ParamKey, Value>) -> Self {
        for key in ParamKey::ALL {
            assert!(baseline.contains_key(key), "baseline missing {key}");
        }
        ParameterStore {
            baseline,
            overlays: Vec::new(),
            online: BTreeMap::new(),
        }
    }

    pub fn effective(&self, key: ParamKey) -> &Value {
        if let Some(v) = self.online.get(&key) {
            return v;
        }
        for (_, overlay) in self.overlays.iter().rev() {
            if let Some(v) = overlay.get(&key) {
                return v;
            }
        }
        &self.baseline[&key]
    }

    pub fn num(&self, key: ParamKey) -> f64 {
        self.effective(key).as_num().unwrap_or(0.0)
    }

    pub fn flag(&self, key: ParamKey) -> bool {
        self.effective(key).as_bool().unwrap_or(false)
    }

    pub fn range(&self, key: ParamKey) -> (f64, f64) {
        self.effective(key).as_range().unwrap_or((f64::NEG_INFINITY, f64::INFINITY))
    }

    pub fn token(&self, key: ParamKey) -> &str {
        self.effective(key).as_token().unwrap_or("")
    }

    pub fn baseline(&self, key: ParamKey) -> &Value {
        &self.baseline[&key]
    }

    pub fn baseline_map(&self) -> &BTreeMap<ParamKey, Value> {
        &self.baseline
    }

    pub fn online(&self) -> &BTreeMap<ParamKey, Value> {
        &self.online
    }

    pub fn overlays(&self) -> &[(String, BTreeMap<ParamKey, Value>)] {
        &self.overlays
    }

    pub fn set_online(&mut self, key: ParamKey, value: Value) {
        self.online.insert(key, value);
    }

    pub fn clear_online(&mut self, key: ParamKey) -> Option<Value> {
        self.online.remove(&key)
    }

    /// Replace all rule overlays; `layers` must be in activation order.
    pub fn set_overlays(&mut self, layers: Vec<(String, BTreeMap<ParamKey, Value>)>) {
        self.overlays = layers;
    }

    /// Full effective map, rounded for recording.
    pub fn snapshot(&self) -> BTreeMap<ParamKey, Value> {
        ParamKey::ALL
            .iter()
            .map(|k| (*k, self.effective(*k).rounded()))
            .collect()
    }
}
