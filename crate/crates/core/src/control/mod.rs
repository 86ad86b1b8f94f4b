//! Middle level: an emulated PLC scan with start/stop sequencer,
//! protection trips, auxiliary equipment logic and a speed governor.

mod pid;
mod scan;
mod sequence;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use pid::{pid_update, PidState};
pub use scan::{aux_logic, control_scan, trip_predicate, AuxCommands};
pub use sequence::{is_edge, sequence_table, SeqState, Transition};

use crate::plant::{CommandSet, LoadMode, Measurement};
use crate::tagbus::Quality;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("control configuration: {0}")]
    Config(String),
    #[error("non-finite controller input")]
    NonFinite,
    #[error("scan called with dt {got}, configured scan period is {expected}")]
    ScanPeriod { expected: f64, got: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripCause {
    Overspeed,
    ExhaustOvertemp,
    LowOilPressure,
    Manual,
    IgnitionFail,
}

impl TripCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            TripCause::Overspeed => "overspeed",
            TripCause::ExhaustOvertemp => "exhaust_overtemp",
            TripCause::LowOilPressure => "low_oil_pressure",
            TripCause::Manual => "manual",
            TripCause::IgnitionFail => "ignition_fail",
        }
    }
}

impl fmt::Display for TripCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alarm {
    Overspeed,
    ExhaustOvertemp,
    LowOilPressure,
    IgnitionFail,
    ManualTrip,
    NHptBad,
    NLptBad,
    TExhBad,
    POilBad,
    StartRefused,
    CommandRefused,
    MainPumpFail,
    AuxPumpFail,
}

impl Alarm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Alarm::Overspeed => "overspeed",
            Alarm::ExhaustOvertemp => "exhaust_overtemp",
            Alarm::LowOilPressure => "low_oil_pressure",
            Alarm::IgnitionFail => "ignition_fail",
            Alarm::ManualTrip => "manual_trip",
            Alarm::NHptBad => "n_hpt_bad",
            Alarm::NLptBad => "n_lpt_bad",
            Alarm::TExhBad => "t_exh_bad",
            Alarm::POilBad => "p_oil_bad",
            Alarm::StartRefused => "start_refused",
            Alarm::CommandRefused => "command_refused",
            Alarm::MainPumpFail => "main_pump_fail",
            Alarm::AuxPumpFail => "aux_pump_fail",
        }
    }
}

impl fmt::Display for Alarm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Comma-joined alarm ids, or `none`.
pub fn format_alarms(alarms: &BTreeSet<Alarm>) -> String {
    if alarms.is_empty() {
        "none".into()
    } else {
        alarms.iter().map(Alarm::as_str).collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtectionLimits {
    pub n_hpt_trip: f64,
    pub n_lpt_trip: f64,
    pub t_exh_trip: f64,
    pub p_oil_trip_low: f64,
    pub p_oil_aux_start: f64,
}

impl Default for ProtectionLimits {
    fn default() -> Self {
        ProtectionLimits {
            n_hpt_trip: 1.05 * 5200.0,
            n_lpt_trip: 1.05 * 4800.0,
            t_exh_trip: 520.0,
            p_oil_trip_low: 150.0,
            p_oil_aux_start: 250.0,
        }
    }
}

impl ProtectionLimits {
    pub fn validate(&self, nominal: &Nominals) -> Result<(), ControlError> {
        let err = |m: String| Err(ControlError::Config(m));
        if !(self.p_oil_trip_low < self.p_oil_aux_start && self.p_oil_aux_start < nominal.p_oil) {
            return err(format!(
                "need p_oil_trip_low ({}) < p_oil_aux_start ({}) < p_oil_nominal ({})",
                self.p_oil_trip_low, self.p_oil_aux_start, nominal.p_oil
            ));
        }
        if !(self.n_hpt_trip > nominal.n_hpt && self.n_lpt_trip > nominal.n_lpt) {
            return err("trip speeds must exceed nominal speeds".into());
        }
        if !self.t_exh_trip.is_finite() {
            return err("t_exh_trip must be finite".into());
        }
        Ok(())
    }
}

/// Plant nominal values the controller scales against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Nominals {
    pub n_hpt: f64,
    pub n_lpt: f64,
    pub p_oil: f64,
}

impl Default for Nominals {
    fn default() -> Self {
        Nominals {
            n_hpt: 5200.0,
            n_lpt: 4800.0,
            p_oil: 350.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub scan_period: f64,
    pub limits: ProtectionLimits,
    pub nominal: Nominals,
    pub purge_time: f64,
    pub warmup_time: f64,
    pub ignition_timeout: f64,
    /// Fuel held during Ignition and Warmup, %.
    pub ignition_fuel: f64,
    /// Exhaust temperature rise confirming light-off, °C.
    pub ignition_rise: f64,
    /// Fuel ramp during Acceleration, %/s.
    pub accel_ramp: f64,
    /// Idle speed as a fraction of nominal HPT speed.
    pub idle_speed_fraction: f64,
    /// Loaded speed as a fraction of nominal HPT speed.
    pub loaded_speed_fraction: f64,
    /// Relative band around the idle setpoint that ends Acceleration.
    pub idle_band: f64,
    /// Operator setpoints are clamped to this fraction range of nominal.
    pub setpoint_min_fraction: f64,
    pub setpoint_max_fraction: f64,
    /// Speed fraction of nominal below which Cooldown completes.
    pub stop_speed_fraction: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub aux_stop_hysteresis: f64,
    pub cooler_on_temp: f64,
    pub cooler_off_temp: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            scan_period: 0.1,
            limits: ProtectionLimits::default(),
            nominal: Nominals::default(),
            purge_time: 30.0,
            warmup_time: 60.0,
            ignition_timeout: 10.0,
            ignition_fuel: 20.0,
            ignition_rise: 10.0,
            accel_ramp: 1.0,
            idle_speed_fraction: 0.7,
            loaded_speed_fraction: 1.0,
            idle_band: 0.02,
            setpoint_min_fraction: 0.5,
            setpoint_max_fraction: 1.0,
            stop_speed_fraction: 0.05,
            kp: 0.02,
            ki: 0.0025,
            kd: 0.0,
            aux_stop_hysteresis: 20.0,
            cooler_on_temp: 55.0,
            cooler_off_temp: 45.0,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let err = |m: &str| Err(ControlError::Config(m.to_string()));
        self.limits.validate(&self.nominal)?;
        if !(self.scan_period > 0.0 && self.scan_period.is_finite()) {
            return err("scan_period must be positive");
        }
        let nonneg = [self.purge_time, self.warmup_time, self.ignition_timeout, self.ignition_fuel, self.ignition_rise];
        if !nonneg.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return err("timers, ignition fuel and rise must be non-negative");
        }
        if !(self.accel_ramp > 0.0) {
            return err("accel_ramp must be positive");
        }
        if !(self.setpoint_min_fraction <= self.idle_speed_fraction
            && self.idle_speed_fraction <= self.setpoint_max_fraction
            && self.loaded_speed_fraction <= self.setpoint_max_fraction
            && self.setpoint_max_fraction * self.nominal.n_hpt < self.limits.n_hpt_trip)
        {
            return err("speed setpoints must lie within the setpoint range, below the trip speed");
        }
        if !(self.cooler_off_temp < self.cooler_on_temp) {
            return err("cooler_off_temp must be below cooler_on_temp");
        }
        self.governor()?;
        Ok(())
    }

    pub fn idle_speed(&self) -> f64 {
        self.idle_speed_fraction * self.nominal.n_hpt
    }

    pub fn loaded_speed(&self) -> f64 {
        self.loaded_speed_fraction * self.nominal.n_hpt
    }

    pub fn governor(&self) -> Result<PidState, ControlError> {
        PidState::new(self.kp, self.ki, self.kd, 0.0, 100.0)
    }
}

/// Operator commands observed since the previous scan.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OperatorCommands {
    pub start: bool,
    pub stop: bool,
    pub reset: bool,
    pub trip: bool,
    pub load: Option<LoadMode>,
    /// HPT speed setpoint override, rpm; `None` uses the state default.
    pub speed_setpoint: Option<f64>,
}

/// Measurement snapshot seen by one scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements {
    pub n_hpt: Measurement,
    pub n_lpt: Measurement,
    pub t_exh: Measurement,
    pub p_oil: Measurement,
    pub t_oil: Measurement,
    pub main_pump_fb: Measurement,
    pub aux_pump_fb: Measurement,
}

impl Measurements {
    /// Noise-free GOOD readings of a plant at rest.
    pub fn at_rest(ambient: f64) -> Self {
        let good = |value| Measurement {
            value,
            quality: Quality::Good,
        };
        Measurements {
            n_hpt: good(0.0),
            n_lpt: good(0.0),
            t_exh: good(ambient),
            p_oil: good(0.0),
            t_oil: good(ambient),
            main_pump_fb: good(0.0),
            aux_pump_fb: good(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    pub seq: SeqState,
    pub trip_cause: Option<TripCause>,
    pub step_timer: f64,
    pub governor: PidState,
    pub target_load_mode: LoadMode,
    pub latched_alarms: BTreeSet<Alarm>,
    /// Fuel demand carried between scans during Acceleration, %.
    pub fuel_demand: f64,
    /// Exhaust temperature when Ignition was entered.
    pub ignition_ref_temp: f64,
    pub aux_latched: bool,
    pub cooler_latched: bool,
    pub last_commands: CommandSet,
    pub speed_setpoint: f64,
}

impl ControlState {
    pub fn new(cfg: &ControlConfig) -> Result<Self, ControlError> {
        cfg.validate()?;
        Ok(ControlState {
            seq: SeqState::Stopped,
            trip_cause: None,
            step_timer: 0.0,
            governor: cfg.governor()?,
            target_load_mode: LoadMode::Unloaded,
            latched_alarms: BTreeSet::new(),
            fuel_demand: 0.0,
            ignition_ref_temp: 0.0,
            aux_latched: false,
            cooler_latched: false,
            last_commands: CommandSet::default(),
            speed_setpoint: 0.0,
        })
    }

    pub fn enter(&mut self, seq: SeqState) {
        if seq != self.seq {
            self.seq = seq;
            self.step_timer = 0.0;
        }
    }

    pub fn trip(&mut self, cause: TripCause) {
        self.enter(SeqState::Tripped);
        self.trip_cause = Some(cause);
        self.target_load_mode = LoadMode::Unloaded;
    }
}
