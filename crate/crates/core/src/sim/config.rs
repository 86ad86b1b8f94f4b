use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::control::ControlConfig;
use crate::plant::{default_sensors, Fault, PlantConfig, SensorConfig};
use crate::scheduler::ScheduleConfig;
use crate::tagbus::{Value, WireValue};

pub const DEFAULT_START_EPOCH_MS: u64 = 1_700_000_000_000;

/// One configuration file: scenario plus plant, sensor, control and
/// optional dispatch sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default = "default_sensors")]
    pub sensors: Vec<SensorConfig>,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            scenario: Scenario::default(),
            plant: PlantConfig::default(),
            sensors: default_sensors(),
            control: ControlConfig::default(),
            schedule: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub dt: f64,
    pub scan_period: f64,
    pub duration: f64,
    /// 0 runs as fast as possible, 1 in real time, k k-times accelerated.
    pub speed: f64,
    pub seed: u64,
    pub start_epoch_ms: u64,
    /// A protection trip does not fail the run.
    pub allow_trip: bool,
    /// Tags written to the trace; empty records every plant and ctl tag.
    pub record: Vec<String>,
    pub events: Vec<Event>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "scenario".into(),
            dt: 0.05,
            scan_period: 0.1,
            duration: 10.0,
            speed: 0.0,
            seed: 0,
            start_epoch_ms: DEFAULT_START_EPOCH_MS,
            allow_trip: false,
            record: Vec::new(),
            events: Vec::new(),
        }
    }
}

/// Scenario event; exactly one action is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poke: Option<Poke>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<InjectFault>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assert: Option<Assertion>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action<'a> {
    Poke(&'a Poke),
    InjectFault(&'a InjectFault),
    Assert(&'a Assertion),
}

impl Event {
    pub fn poke(t: f64, tag: &str, value: ConfigValue) -> Self {
        Event {
            t,
            poke: Some(Poke {
                tag: tag.into(),
                value,
            }),
            inject_fault: None,
            assert: None,
        }
    }

    pub fn inject(t: f64, sensor: &str, fault: Fault) -> Self {
        Event {
            t,
            poke: None,
            inject_fault: Some(InjectFault {
                sensor: sensor.into(),
                fault,
            }),
            assert: None,
        }
    }

    pub fn assert(t: f64, tag: &str, op: CompareOp, value: ConfigValue) -> Self {
        Event {
            t,
            poke: None,
            inject_fault: None,
            assert: Some(Assertion {
                tag: tag.into(),
                op,
                value,
            }),
        }
    }

    pub fn action(&self) -> Result<Action<'_>, SimError> {
        match (&self.poke, &self.inject_fault, &self.assert) {
            (Some(p), None, None) => Ok(Action::Poke(p)),
            (None, Some(f), None) => Ok(Action::InjectFault(f)),
            (None, None, Some(a)) => Ok(Action::Assert(a)),
            _ => Err(SimError::Config(format!(
                "event at t={} must have exactly one of poke, inject_fault, assert",
                self.t
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Poke {
    pub tag: String,
    pub value: ConfigValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectFault {
    pub sensor: String,
    pub fault: Fault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    pub tag: String,
    pub op: CompareOp,
    pub value: ConfigValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CompareOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    /// Compares an actual tag value with the expected one. Text compares
    /// only for (in)equality; numbers compare numerically.
    pub fn holds(&self, actual: &Value, expected: &ConfigValue) -> bool {
        match (actual.as_f64(), expected.as_f64()) {
            (Some(a), Some(e)) => match self {
                CompareOp::Eq => a == e,
                CompareOp::Ne => a != e,
                CompareOp::Lt => a < e,
                CompareOp::Le => a <= e,
                CompareOp::Gt => a > e,
                CompareOp::Ge => a >= e,
            },
            _ => {
                let same = actual.to_string() == expected.to_string();
                match self {
                    CompareOp::Eq => same,
                    CompareOp::Ne => !same,
                    _ => false,
                }
            }
        }
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Literal value in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl ConfigValue {
    pub fn to_wire(&self) -> WireValue {
        match self {
            ConfigValue::Bool(b) => WireValue::Int(i64::from(*b)),
            ConfigValue::Int(i) => WireValue::Int(*i),
            ConfigValue::Real(x) => WireValue::Real(*x),
            ConfigValue::Text(s) => WireValue::Text(s.clone()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ConfigValue::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            ConfigValue::Int(i) => Some(*i as f64),
            ConfigValue::Real(x) => Some(*x),
            ConfigValue::Text(_) => None,
        }
    }
}

impl fmt::Display for ConfigValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_wire().fmt(f)
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: Config = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Config::from_toml(&text).map_err(|e| match e {
            SimError::Parse(m) => SimError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Control config with scan period and nominal values taken from the
    /// scenario and plant sections.
    pub fn effective_control(&self) -> ControlConfig {
        let mut c = self.control;
        c.scan_period = self.scenario.scan_period;
        c.nominal.n_hpt = self.plant.n_hpt_nominal;
        c.nominal.n_lpt = self.plant.n_lpt_nominal;
        c.nominal.p_oil = self.plant.p_oil_nominal;
        c
    }

    /// Plant steps per control scan.
    pub fn scan_ratio(&self) -> Result<u64, SimError> {
        let s = &self.scenario;
        let ratio = s.scan_period / s.dt;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio {
            return Err(SimError::Config(format!(
                "dt {} must divide scan_period {}",
                s.dt, s.scan_period
            )));
        }
        Ok(rounded as u64)
    }

    /// Number of plant steps; the trace holds one more sample than this.
    pub fn steps(&self) -> u64 {
        (self.scenario.duration / self.scenario.dt + 1e-9).floor() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let s = &self.scenario;
        let positive = [("dt", s.dt), ("scan_period", s.scan_period)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("scenario.{name} must be positive")));
            }
        }
        if !(s.duration >= 0.0 && s.duration.is_finite()) {
            return Err(SimError::Config("scenario.duration must be non-negative".into()));
        }
        if !(s.speed >= 0.0 && s.speed.is_finite()) {
            return Err(SimError::Config("scenario.speed must be non-negative".into()));
        }
        self.scan_ratio()?;
        let mut last = f64::NEG_INFINITY;
        for e in &s.events {
            e.action()?;
            if !(e.t >= 0.0 && e.t <= s.duration) {
                return Err(SimError::Config(format!(
                    "event time {} outside [0, duration {}]",
                    e.t, s.duration
                )));
            }
            if e.t < last {
                return Err(SimError::Config(format!("events not sorted by t at t={}", e.t)));
            }
            last = e.t;
        }
        self.plant.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.effective_control().validate().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[scenario]
name = "cold-start"
duration = 300.0
seed = 7

[[scenario.events]]
t = 1.0
poke = { tag = "cmd.start", value = true }

[[scenario.events]]
t = 200.0
poke = { tag = "cmd.load", value = "ring" }

[[scenario.events]]
t = 250.0
inject_fault = { sensor = "plant.p_oil", fault = { stuck_at = 0.0 } }

[[scenario.events]]
t = 299.0
assert = { tag = "ctl.seq", op = "==", value = "loaded" }

[plant]
ambient_temp = 20.0

[control]
purge_time = 20.0
"#;

    #[test]
    fn parses_sample() {
        let cfg = Config::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.scenario.events.len(), 4);
        assert_eq!(cfg.scenario.dt, 0.05);
        assert_eq!(cfg.plant.ambient_temp, 20.0);
        assert_eq!(cfg.control.purge_time, 20.0);
        assert_eq!(cfg.sensors.len(), default_sensors().len());
        assert!(matches!(cfg.scenario.events[3].action().unwrap(), Action::Assert(_)));
        assert_eq!(cfg.scan_ratio().unwrap(), 2);
        assert_eq!(cfg.steps(), 6000);
        let again = Config::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let bad = [
            "[scenario]\ndt = 0.03\nscan_period = 0.1\n",
            "[scenario]\nduration = 5.0\n[[scenario.events]]\nt = 6.0\npoke = { tag = \"cmd.start\", value = 1 }\n",
            "[scenario]\n[[scenario.events]]\nt = 2.0\npoke = { tag = \"cmd.start\", value = 1 }\n[[scenario.events]]\nt = 1.0\npoke = { tag = \"cmd.start\", value = 1 }\n",
            "[scenario]\n[[scenario.events]]\nt = 1.0\n",
            "[scenario]\nbogus = 1\n",
            "[plant]\nn_hpt_nominal = -1.0\n",
        ];
        for text in bad {
            assert!(Config::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = Config::from_toml("[scenario]\ndt = \"x\"\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn comparisons() {
        assert!(CompareOp::Eq.holds(&Value::Enum("loaded".into()), &ConfigValue::Text("loaded".into())));
        assert!(CompareOp::Ge.holds(&Value::Real(5.0), &ConfigValue::Int(5)));
        assert!(CompareOp::Eq.holds(&Value::Bool(true), &ConfigValue::Bool(true)));
        assert!(!CompareOp::Lt.holds(&Value::Enum("a".into()), &ConfigValue::Text("b".into())));
    }
}
