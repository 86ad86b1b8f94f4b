//! Lower level: the unit's physical model and its field sensors.
//!
//! Signal paths (all configurable transfer functions):
//!
//! ```text
//! fuel ──────────────────────────► tf_fuel_to_hpt ─► n_hpt
//! max(0, n_hpt − n_ss)·(1 − load) ► tf_hpt_to_lpt ──► n_lpt  (0 while n_hpt < n_ss)
//! fuel·(1 + load)·airflow(n_hpt) ► tf_fuel_to_texh ─► t_exh − ambient
//! max pump fraction ─────────────► tf_pump_to_poil ─► p_oil / p_oil_nominal
//! speed heat − fan relief ───────► tf_fans_to_toil ─► t_oil − ambient
//! ```
//!
//! `airflow(n) = (1 + f)/(f + n/n_nominal)` with `f` the standstill airflow
//! fraction: the same fuel runs hotter while the compressor is slow.

mod config;
mod sensor;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::PlantConfig;
pub use sensor::{default_sensors, read_sensor, sensor_stream_seed, Fault, Measurement, Sensor, SensorConfig};

use crate::dynamics::{discretize, DiscreteBlock, DynamicsError};

#[derive(Debug, thiserror::Error)]
pub enum PlantError {
    #[error("plant configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("non-finite command {name} = {value}")]
    NonFiniteCommand { name: &'static str, value: f64 },
    #[error("no sensor publishes tag {0}")]
    UnknownSensor(String),
    #[error("unknown plant field {0:?}")]
    UnknownField(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadMode {
    #[default]
    Unloaded,
    Ring,
    #[serde(alias = "trunk_line")]
    Trunk,
}

impl LoadMode {
    pub const ALL: [LoadMode; 3] = [LoadMode::Unloaded, LoadMode::Ring, LoadMode::Trunk];

    pub fn as_str(&self) -> &'static str {
        match self {
            LoadMode::Unloaded => "unloaded",
            LoadMode::Ring => "ring",
            LoadMode::Trunk => "trunk",
        }
    }
}

impl fmt::Display for LoadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoadMode {
    type Err = PlantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unloaded" => Ok(LoadMode::Unloaded),
            "ring" => Ok(LoadMode::Ring),
            "trunk" | "trunk_line" => Ok(LoadMode::Trunk),
            _ => Err(PlantError::Config(format!("unknown load mode {s:?}"))),
        }
    }
}

/// Actuator commands for one plant step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommandSet {
    /// Fuel valve demand, %.
    pub fuel: f64,
    pub main_pump: bool,
    pub aux_pump: bool,
    pub emerg_pump: bool,
    pub cooler_fans: bool,
    pub roof_fans: bool,
    pub load_mode: LoadMode,
}

/// Plant fields a sensor can observe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    FuelValvePos,
    NHpt,
    NLpt,
    TExh,
    POil,
    TOil,
    MainPumpOn,
    AuxPumpOn,
    EmergPumpOn,
    CoolerFansOn,
    RoofFansOn,
    SimTime,
}

impl Field {
    pub const ALL: [Field; 12] = [
        Field::FuelValvePos,
        Field::NHpt,
        Field::NLpt,
        Field::TExh,
        Field::POil,
        Field::TOil,
        Field::MainPumpOn,
        Field::AuxPumpOn,
        Field::EmergPumpOn,
        Field::CoolerFansOn,
        Field::RoofFansOn,
        Field::SimTime,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Field::FuelValvePos => "fuel_valve_pos",
            Field::NHpt => "n_hpt",
            Field::NLpt => "n_lpt",
            Field::TExh => "t_exh",
            Field::POil => "p_oil",
            Field::TOil => "t_oil",
            Field::MainPumpOn => "main_pump_on",
            Field::AuxPumpOn => "aux_pump_on",
            Field::EmergPumpOn => "emerg_pump_on",
            Field::CoolerFansOn => "cooler_fans_on",
            Field::RoofFansOn => "roof_fans_on",
            Field::SimTime => "sim_time",
        }
    }

    pub fn units(&self) -> &'static str {
        match self {
            Field::FuelValvePos => "%",
            Field::NHpt | Field::NLpt => "rpm",
            Field::TExh | Field::TOil => "degC",
            Field::POil => "kPa",
            Field::SimTime => "s",
            _ => "",
        }
    }

    pub fn is_boolean(&self) -> bool {
        matches!(
            self,
            Field::MainPumpOn | Field::AuxPumpOn | Field::EmergPumpOn | Field::CoolerFansOn | Field::RoofFansOn
        )
    }
}

impl FromStr for Field {
    type Err = PlantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| PlantError::UnknownField(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub fuel_valve_pos: f64,
    pub n_hpt: f64,
    pub n_lpt: f64,
    pub t_exh: f64,
    pub p_oil: f64,
    pub t_oil: f64,
    pub main_pump_on: bool,
    pub aux_pump_on: bool,
    pub emerg_pump_on: bool,
    pub cooler_fans_on: bool,
    pub roof_fans_on: bool,
    pub load_mode: LoadMode,
    pub sim_time: f64,
}

impl PlantState {
    pub fn at_rest(ambient: f64) -> Self {
        PlantState {
            fuel_valve_pos: 0.0,
            n_hpt: 0.0,
            n_lpt: 0.0,
            t_exh: ambient,
            p_oil: 0.0,
            t_oil: ambient,
            main_pump_on: false,
            aux_pump_on: false,
            emerg_pump_on: false,
            cooler_fans_on: false,
            roof_fans_on: false,
            load_mode: LoadMode::Unloaded,
            sim_time: 0.0,
        }
    }

    /// Numeric value of a field; booleans read as 0/1.
    pub fn field(&self, f: Field) -> f64 {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        match f {
            Field::FuelValvePos => self.fuel_valve_pos,
            Field::NHpt => self.n_hpt,
            Field::NLpt => self.n_lpt,
            Field::TExh => self.t_exh,
            Field::POil => self.p_oil,
            Field::TOil => self.t_oil,
            Field::MainPumpOn => b(self.main_pump_on),
            Field::AuxPumpOn => b(self.aux_pump_on),
            Field::EmergPumpOn => b(self.emerg_pump_on),
            Field::CoolerFansOn => b(self.cooler_fans_on),
            Field::RoofFansOn => b(self.roof_fans_on),
            Field::SimTime => self.sim_time,
        }
    }

    pub fn is_finite(&self) -> bool {
        Field::ALL.iter().all(|f| self.field(*f).is_finite())
    }
}

/// Timestamped record of a sensor fault change.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultEvent {
    pub sim_time: f64,
    pub tag_name: String,
    pub fault: Fault,
}

#[derive(Debug, Clone)]
struct Paths {
    hpt: DiscreteBlock,
    lpt: DiscreteBlock,
    texh: DiscreteBlock,
    poil: DiscreteBlock,
    toil: DiscreteBlock,
}

/// The stepped plant: configuration, realized signal paths, state and
/// sensors. Owned by a single simulation loop.
#[derive(Debug, Clone)]
pub struct Plant {
    cfg: PlantConfig,
    dt: f64,
    paths: Paths,
    state: PlantState,
    sensors: Vec<Sensor>,
    fault_log: Vec<FaultEvent>,
}

impl Plant {
    pub fn new(cfg: PlantConfig, sensors: Vec<SensorConfig>, dt: f64, seed: u64) -> Result<Self, PlantError> {
        cfg.validate()?;
        for (i, s) in sensors.iter().enumerate() {
            s.validate()?;
            if sensors[..i].iter().any(|o| o.tag_name == s.tag_name) {
                return Err(PlantError::Config(format!("duplicate sensor tag {}", s.tag_name)));
            }
        }
        let paths = Paths {
            hpt: discretize(&cfg.tf_fuel_to_hpt, dt)?,
            lpt: discretize(&cfg.tf_hpt_to_lpt, dt)?,
            texh: discretize(&cfg.tf_fuel_to_texh, dt)?,
            poil: discretize(&cfg.tf_pump_to_poil, dt)?,
            toil: discretize(&cfg.tf_fans_to_toil, dt)?,
        };
        Ok(Plant {
            state: PlantState::at_rest(cfg.ambient_temp),
            sensors: sensors.into_iter().map(|s| Sensor::new(s, seed)).collect(),
            cfg,
            dt,
            paths,
            fault_log: Vec::new(),
        })
    }

    pub fn with_defaults(dt: f64, seed: u64) -> Result<Self, PlantError> {
        Plant::new(PlantConfig::default(), default_sensors(), dt, seed)
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn fault_log(&self) -> &[FaultEvent] {
        &self.fault_log
    }

    /// Advances every path by one `dt`. A non-finite command is rejected
    /// and leaves the state untouched.
    pub fn step(&mut self, cmd: &CommandSet) -> Result<&PlantState, PlantError> {
        if !cmd.fuel.is_finite() {
            return Err(PlantError::NonFiniteCommand {
                name: "fuel",
                value: cmd.fuel,
            });
        }
        let cfg = &self.cfg;
        let prev = self.state;
        let fuel = cmd.fuel.clamp(0.0, 100.0);
        let load = match cmd.load_mode {
            LoadMode::Unloaded => 0.0,
            LoadMode::Ring => cfg.load_torque_ring,
            LoadMode::Trunk => cfg.load_torque_trunk,
        };
        let n_ss = cfg.self_sustain_speed();

        let mut paths = self.paths.clone();
        let n_hpt = paths.hpt.step(fuel)?.max(0.0);
        let lpt_drive = (prev.n_hpt - n_ss).max(0.0) * (1.0 - load);
        let lpt_out = paths.lpt.step(lpt_drive)?;
        let n_lpt = if n_hpt < n_ss { 0.0 } else { lpt_out.max(0.0) };
        let firing = fuel * (1.0 + load) * cfg.texh_airflow_factor(prev.n_hpt);
        let t_exh = cfg.ambient_temp + paths.texh.step(firing)?;
        let pump = [
            (cmd.main_pump, 1.0),
            (cmd.aux_pump, cfg.aux_pump_fraction),
            (cmd.emerg_pump, cfg.emerg_pump_fraction),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, f)| *f)
        .fold(0.0, f64::max);
        let p_oil = (paths.poil.step(pump)? * cfg.p_oil_nominal).max(0.0);
        let relief = if cmd.cooler_fans { cfg.cooler_fans_relief } else { 0.0 }
            + if cmd.roof_fans { cfg.roof_fans_relief } else { 0.0 };
        let heat = (cfg.oil_heat_at_nominal * prev.n_hpt / cfg.n_hpt_nominal - relief).max(0.0);
        let t_oil = cfg.ambient_temp + paths.toil.step(heat)?;

        let next = PlantState {
            fuel_valve_pos: fuel,
            n_hpt,
            n_lpt,
            t_exh,
            p_oil,
            t_oil,
            main_pump_on: cmd.main_pump,
            aux_pump_on: cmd.aux_pump,
            emerg_pump_on: cmd.emerg_pump,
            cooler_fans_on: cmd.cooler_fans,
            roof_fans_on: cmd.roof_fans,
            load_mode: cmd.load_mode,
            sim_time: prev.sim_time + self.dt,
        };
        if !next.is_finite() {
            return Err(PlantError::Dynamics(DynamicsError::NonFinite(f64::NAN)));
        }
        self.paths = paths;
        self.state = next;
        Ok(&self.state)
    }

    /// Reads every sensor once, in configuration order.
    pub fn read_sensors(&mut self) -> Vec<(&SensorConfig, Measurement)> {
        let state = self.state;
        self.sensors.iter_mut().map(|s| {
            let m = s.read(&state);
            (&s.config, m)
        }).collect()
    }

    pub fn read(&mut self, tag_name: &str) -> Result<Measurement, PlantError> {
        let state = self.state;
        let s = self
            .sensors
            .iter_mut()
            .find(|s| s.config.tag_name == tag_name)
            .ok_or_else(|| PlantError::UnknownSensor(tag_name.to_string()))?;
        Ok(s.read(&state))
    }

    /// Applies `fault` to the named sensor from now on; `Fault::None` clears it.
    pub fn inject_fault(&mut self, tag_name: &str, fault: Fault) -> Result<(), PlantError> {
        let now = self.state.sim_time;
        let s = self
            .sensors
            .iter_mut()
            .find(|s| s.config.tag_name == tag_name)
            .ok_or_else(|| PlantError::UnknownSensor(tag_name.to_string()))?;
        s.set_fault(fault, now);
        log::info!("t={now:.3}s fault {fault:?} on {tag_name}");
        self.fault_log.push(FaultEvent {
            sim_time: now,
            tag_name: tag_name.to_string(),
            fault,
        });
        Ok(())
    }
}
