use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Action, Config};
use super::SimError;
use crate::control::{control_scan, format_alarms, ControlConfig, ControlState, Measurements, OperatorCommands, SeqState};
use crate::plant::{CommandSet, Fault, LoadMode, Measurement, Plant};
use crate::tagbus::{Historian, Millis, Quality, TagDef, TagName, TagStore, Value, ValueKind};

/// Environment variable naming the default output directory.
pub const RUN_DIR_ENV: &str = "GTCU_RUN_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub t: f64,
    pub from: SeqState,
    pub to: SeqState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub t: f64,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub t: f64,
    pub sensor: String,
    pub fault: Fault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertFailure {
    pub t: f64,
    pub tag: String,
    pub op: String,
    pub expected: String,
    /// `None` when the tag does not exist.
    pub actual: Option<String>,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub start_epoch_ms: u64,
    pub dt: f64,
    pub scan_period: f64,
    pub duration: f64,
    pub samples: u64,
    pub recorded_tags: Vec<String>,
    pub asserts_passed: usize,
    pub assert_failures: Vec<AssertFailure>,
    pub transitions: Vec<TransitionRecord>,
    pub trips: Vec<TripRecord>,
    pub faults: Vec<FaultRecord>,
    pub final_seq: SeqState,
    pub exit_code: i32,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub record: RunRecord,
    pub dir: PathBuf,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        self.record.exit_code
    }

    pub fn trace_path(&self) -> PathBuf {
        self.dir.join("trace.csv")
    }

    pub fn history_path(&self) -> PathBuf {
        self.dir.join("history.log")
    }
}

/// SHA-256 of the configuration's canonical JSON (sorted keys), hex.
pub fn config_hash(cfg: &Config) -> String {
    let canonical = serde_json::to_value(cfg).expect("config serializes").to_string();
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn tag(name: &str) -> TagName {
    TagName::new(name).expect("static tag name")
}

/// Index of the ctl.* tags, in commit order.
struct CtlTags {
    seq: TagName,
    trip_cause: TagName,
    step_timer: TagName,
    fuel_cmd: TagName,
    n_hpt_setpoint: TagName,
    pumps: [TagName; 5],
    load_mode: TagName,
    alarms: TagName,
    alarm_count: TagName,
}

impl CtlTags {
    fn new() -> Self {
        CtlTags {
            seq: tag("ctl.seq"),
            trip_cause: tag("ctl.trip_cause"),
            step_timer: tag("ctl.step_timer"),
            fuel_cmd: tag("ctl.fuel_cmd"),
            n_hpt_setpoint: tag("ctl.n_hpt_setpoint"),
            pumps: [
                tag("ctl.main_pump_cmd"),
                tag("ctl.aux_pump_cmd"),
                tag("ctl.emerg_pump_cmd"),
                tag("ctl.cooler_fans_cmd"),
                tag("ctl.roof_fans_cmd"),
            ],
            load_mode: tag("ctl.load_mode"),
            alarms: tag("ctl.alarms"),
            alarm_count: tag("ctl.alarm_count"),
        }
    }
}

/// The coupled plant/controller loop. Every value exchanged between plant,
/// controller and operator passes through the tag store.
///
/// Sample `k` (time `k·dt`) fires due events, publishes sensor readings,
/// runs a control scan when `k` is a multiple of the scan ratio, evaluates
/// due assertions and finally advances the plant by one step under the
/// latest actuator commands.
pub struct Simulation {
    cfg: Config,
    ctl_cfg: ControlConfig,
    store: Arc<TagStore>,
    plant: Plant,
    ctl: ControlState,
    commands: CommandSet,
    k: u64,
    scan_ratio: u64,
    next_event: usize,
    sensor_tags: Vec<(TagName, bool)>,
    load_mode_tag: TagName,
    ctl_tags: CtlTags,
    cmd_seq: HashMap<TagName, u64>,
    recorded: Vec<TagName>,
    transitions: Vec<TransitionRecord>,
    trips: Vec<TripRecord>,
    asserts_passed: usize,
    assert_failures: Vec<AssertFailure>,
}

impl Simulation {
    pub fn new(cfg: Config) -> Result<Self, SimError> {
        Self::with_historian(cfg, None)
    }

    /// Like [`Simulation::new`], archiving every commit (including the
    /// initial command values) to `historian`.
    pub fn with_historian(cfg: Config, historian: Option<Historian>) -> Result<Self, SimError> {
        cfg.validate()?;
        let ctl_cfg = cfg.effective_control();
        let s = &cfg.scenario;
        let plant = Plant::new(cfg.plant.clone(), cfg.sensors.clone(), s.dt, s.seed)?;
        let ctl = ControlState::new(&ctl_cfg)?;
        let store = Arc::new(TagStore::new());
        store.set_clock(s.start_epoch_ms);
        if let Some(h) = historian {
            store.attach_historian(h);
        }

        let plant_ms = ((s.dt * 1000.0).round() as Millis).max(1);
        let scan_ms = ((s.scan_period * 1000.0).round() as Millis).max(1);
        let mut sensor_tags = Vec::new();
        for sc in &cfg.sensors {
            let name = TagName::new(sc.tag_name.as_str())?;
            let boolean = sc.source_field.is_boolean();
            let units = if sc.units.is_empty() { sc.source_field.units() } else { &sc.units };
            let (kind, init) = if boolean {
                (ValueKind::Bool, Value::Bool(false))
            } else {
                (ValueKind::Real, Value::Real(plant.state().field(sc.source_field)))
            };
            store.define(TagDef::new(name.clone(), kind, units).with_period(plant_ms), init)?;
            sensor_tags.push((name, boolean));
        }
        let load_mode_tag = tag("plant.load_mode");
        store.define(
            TagDef::new(load_mode_tag.clone(), ValueKind::Enum, "").with_period(plant_ms),
            Value::Enum(LoadMode::Unloaded.as_str().into()),
        )?;

        let ctl_tags = CtlTags::new();
        let ctl_defs = [
            (&ctl_tags.seq, ValueKind::Enum, "", Value::Enum(SeqState::Stopped.as_str().into())),
            (&ctl_tags.trip_cause, ValueKind::Enum, "", Value::Enum("none".into())),
            (&ctl_tags.step_timer, ValueKind::Real, "s", Value::Real(0.0)),
            (&ctl_tags.fuel_cmd, ValueKind::Real, "%", Value::Real(0.0)),
            (&ctl_tags.n_hpt_setpoint, ValueKind::Real, "rpm", Value::Real(0.0)),
            (&ctl_tags.load_mode, ValueKind::Enum, "", Value::Enum(LoadMode::Unloaded.as_str().into())),
            (&ctl_tags.alarms, ValueKind::Enum, "", Value::Enum("none".into())),
            (&ctl_tags.alarm_count, ValueKind::Int, "", Value::Int(0)),
        ];
        for (name, kind, units, init) in ctl_defs {
            store.define(TagDef::new(name.clone(), kind, units).with_period(scan_ms), init)?;
        }
        for name in &ctl_tags.pumps {
            store.define(TagDef::new(name.clone(), ValueKind::Bool, "").with_period(scan_ms), Value::Bool(false))?;
        }

        let cmd_defs = [
            ("cmd.start", ValueKind::Bool, "", Value::Bool(false)),
            ("cmd.stop", ValueKind::Bool, "", Value::Bool(false)),
            ("cmd.reset", ValueKind::Bool, "", Value::Bool(false)),
            ("cmd.trip", ValueKind::Bool, "", Value::Bool(false)),
            ("cmd.load", ValueKind::Enum, "", Value::Enum(LoadMode::Unloaded.as_str().into())),
            ("cmd.n_hpt_setpoint", ValueKind::Real, "rpm", Value::Real(0.0)),
        ];
        let mut cmd_seq = HashMap::new();
        for (name, kind, units, init) in cmd_defs {
            let name = tag(name);
            store.define(TagDef::new(name.clone(), kind, units), init.clone())?;
            store.commit(&name, init, Quality::Good)?;
            let (_, seq) = store.get_with_seq(&name).expect("just defined");
            cmd_seq.insert(name, seq);
        }

        let recorded = if s.record.is_empty() {
            store
                .names()
                .into_iter()
                .filter(|n| matches!(n.namespace(), "plant" | "ctl"))
                .collect()
        } else {
            let mut v = Vec::new();
            for name in &s.record {
                let n = TagName::new(name.as_str())?;
                if !store.contains(&n) {
                    return Err(SimError::Config(format!("recorded tag {name} does not exist")));
                }
                v.push(n);
            }
            v
        };

        for e in &s.events {
            match e.action()? {
                Action::Poke(p) => {
                    let def = store
                        .def(&p.tag)
                        .ok_or_else(|| SimError::Config(format!("poke at t={}: no tag {}", e.t, p.tag)))?;
                    if !def.client_writable() {
                        return Err(SimError::Config(format!("poke at t={}: tag {} is read-only", e.t, p.tag)));
                    }
                    Value::from_wire(def.kind, &p.value.to_wire())
                        .map_err(|_| SimError::Config(format!("poke at t={}: bad value {} for {}", e.t, p.value, p.tag)))?;
                    if def.name.as_str() == "cmd.load" && p.value.to_string().parse::<LoadMode>().is_err() {
                        return Err(SimError::Config(format!("poke at t={}: unknown load mode {}", e.t, p.value)));
                    }
                }
                Action::InjectFault(f) => {
                    if !cfg.sensors.iter().any(|sc| sc.tag_name == f.sensor) {
                        return Err(SimError::Config(format!("fault at t={}: no sensor {}", e.t, f.sensor)));
                    }
                }
                Action::Assert(a) => {
                    if store.def(&a.tag).is_none() {
                        return Err(SimError::Config(format!("assert at t={}: no tag {}", e.t, a.tag)));
                    }
                }
            }
        }

        Ok(Simulation {
            scan_ratio: cfg.scan_ratio()?,
            cfg,
            ctl_cfg,
            store,
            plant,
            ctl,
            commands: CommandSet::default(),
            k: 0,
            next_event: 0,
            sensor_tags,
            load_mode_tag,
            ctl_tags,
            cmd_seq,
            recorded,
            transitions: Vec::new(),
            trips: Vec::new(),
            asserts_passed: 0,
            assert_failures: Vec::new(),
        })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn store(&self) -> &Arc<TagStore> {
        &self.store
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn control_state(&self) -> &ControlState {
        &self.ctl
    }

    /// Index of the next sample.
    pub fn sample_index(&self) -> u64 {
        self.k
    }

    /// Time of the next sample, on a 1 ns grid.
    pub fn time(&self) -> f64 {
        grid_time(self.k, self.cfg.scenario.dt)
    }

    pub fn transitions(&self) -> &[TransitionRecord] {
        &self.transitions
    }

    pub fn trips(&self) -> &[TripRecord] {
        &self.trips
    }

    pub fn assert_failures(&self) -> &[AssertFailure] {
        &self.assert_failures
    }

    pub fn recorded_tags(&self) -> &[TagName] {
        &self.recorded
    }

    /// `t[s]` followed by `name[units]` (bare name when unitless).
    pub fn trace_header(&self) -> Vec<String> {
        let mut h = vec!["t[s]".to_string()];
        for name in &self.recorded {
            let units = self.store.def(name.as_str()).map(|d| d.units).unwrap_or_default();
            h.push(if units.is_empty() { name.to_string() } else { format!("{name}[{units}]") });
        }
        h
    }

    /// 0 when every assertion held and no unexpected trip occurred.
    pub fn exit_code(&self) -> i32 {
        let bad_trip = !self.trips.is_empty() && !self.cfg.scenario.allow_trip;
        if self.assert_failures.is_empty() && !bad_trip {
            0
        } else {
            1
        }
    }

    /// Runs sample `k` and advances the plant; returns the trace row.
    pub fn step(&mut self) -> Result<Vec<String>, SimError> {
        let row = self.sample()?;
        self.plant.step(&self.commands)?;
        self.k += 1;
        Ok(row)
    }

    /// Runs sample `k` without advancing the plant (the final sample).
    pub fn sample(&mut self) -> Result<Vec<String>, SimError> {
        let t = self.time();
        let s = &self.cfg.scenario;
        self.store.set_clock(s.start_epoch_ms + (t * 1000.0).round() as Millis);

        let mut due_asserts = Vec::new();
        while let Some(e) = self.cfg.scenario.events.get(self.next_event) {
            if e.t > t + 1e-9 {
                break;
            }
            match e.action()? {
                Action::Poke(p) => {
                    let name = TagName::new(p.tag.as_str())?;
                    self.store.poke(&name, &p.value.to_wire()).map_err(|r| {
                        SimError::Config(format!("poke {} {} at t={} refused: {r}", p.tag, p.value, e.t))
                    })?;
                    log::info!("t={t}: poke {} {}", p.tag, p.value);
                }
                Action::InjectFault(f) => {
                    self.plant.inject_fault(&f.sensor, f.fault)?;
                    log::info!("t={t}: fault {:?} on {}", f.fault, f.sensor);
                }
                Action::Assert(_) => due_asserts.push(self.next_event),
            }
            self.next_event += 1;
        }

        let readings = self.plant.read_sensors();
        for ((name, boolean), (_, m)) in self.sensor_tags.iter().zip(readings) {
            let value = if *boolean { Value::Bool(m.value > 0.5) } else { Value::Real(m.value) };
            self.store.commit(name, value, m.quality)?;
        }
        let mode = self.plant.state().load_mode.as_str();
        self.store.commit(&self.load_mode_tag, Value::Enum(mode.into()), Quality::Good)?;

        if self.k.is_multiple_of(self.scan_ratio) {
            self.scan(t)?;
        }

        let row = self.trace_row(t);
        for idx in due_asserts {
            self.check_assert(idx, t);
        }
        self.store.refresh_staleness();
        Ok(row)
    }

    fn measurement(&self, name: &str) -> Measurement {
        let bad = Measurement {
            value: 0.0,
            quality: Quality::Bad,
        };
        let Ok(name) = TagName::new(name) else { return bad };
        match self.store.get(&name) {
            Some(tag) => Measurement {
                value: tag.value.as_f64().unwrap_or(f64::NAN),
                quality: tag.quality,
            },
            None => bad,
        }
    }

    /// Value of a cmd tag if it was written since the last scan.
    fn take_command(&mut self, name: &str) -> Option<Value> {
        let name = tag(name);
        let (tag, seq) = self.store.get_with_seq(&name)?;
        let last = self.cmd_seq.insert(name, seq);
        (last != Some(seq)).then_some(tag.value)
    }

    fn operator_commands(&mut self) -> OperatorCommands {
        let mut event = |name: &str| self.take_command(name).and_then(|v| v.as_bool()).unwrap_or(false);
        let (start, stop, reset, trip) = (event("cmd.start"), event("cmd.stop"), event("cmd.reset"), event("cmd.trip"));
        let load = self.take_command("cmd.load").and_then(|v| match v.as_str().map(str::parse::<LoadMode>) {
            Some(Ok(mode)) => Some(mode),
            _ => {
                log::warn!("ignoring cmd.load value {v}");
                None
            }
        });
        let speed_setpoint = self
            .store
            .get(&tag("cmd.n_hpt_setpoint"))
            .and_then(|t| t.value.as_f64())
            .filter(|v| *v > 0.0);
        OperatorCommands {
            start,
            stop,
            reset,
            trip,
            load,
            speed_setpoint,
        }
    }

    fn scan(&mut self, t: f64) -> Result<(), SimError> {
        let m = Measurements {
            n_hpt: self.measurement("plant.n_hpt"),
            n_lpt: self.measurement("plant.n_lpt"),
            t_exh: self.measurement("plant.t_exh"),
            p_oil: self.measurement("plant.p_oil"),
            t_oil: self.measurement("plant.t_oil"),
            main_pump_fb: self.measurement("plant.main_pump_on"),
            aux_pump_fb: self.measurement("plant.aux_pump_on"),
        };
        let ops = self.operator_commands();
        let (next, commands) = control_scan(&self.ctl, &m, &ops, &self.ctl_cfg, self.ctl_cfg.scan_period)?;
        if next.seq != self.ctl.seq {
            log::info!("t={t}: {} -> {}", self.ctl.seq.as_str(), next.seq.as_str());
            self.transitions.push(TransitionRecord {
                t,
                from: self.ctl.seq,
                to: next.seq,
            });
            if next.seq == SeqState::Tripped {
                let cause = next.trip_cause.map(|c| c.as_str()).unwrap_or("unknown");
                log::warn!("t={t}: trip ({cause})");
                self.trips.push(TripRecord { t, cause: cause.into() });
            }
        }
        self.ctl = next;
        self.commands = commands;
        self.publish_control()
    }

    fn publish_control(&self) -> Result<(), SimError> {
        let (s, c, tags) = (&self.ctl, &self.commands, &self.ctl_tags);
        let good = Quality::Good;
        let commit = |name: &TagName, v: Value| self.store.commit(name, v, good).map(|_| ());
        commit(&tags.seq, Value::Enum(s.seq.as_str().into()))?;
        commit(&tags.trip_cause, Value::Enum(s.trip_cause.map(|c| c.as_str()).unwrap_or("none").into()))?;
        commit(&tags.step_timer, Value::Real(s.step_timer))?;
        commit(&tags.fuel_cmd, Value::Real(c.fuel))?;
        commit(&tags.n_hpt_setpoint, Value::Real(s.speed_setpoint))?;
        let switches = [c.main_pump, c.aux_pump, c.emerg_pump, c.cooler_fans, c.roof_fans];
        for (name, on) in tags.pumps.iter().zip(switches) {
            commit(name, Value::Bool(on))?;
        }
        commit(&tags.load_mode, Value::Enum(c.load_mode.as_str().into()))?;
        commit(&tags.alarms, Value::Enum(format_alarms(&s.latched_alarms)))?;
        commit(&tags.alarm_count, Value::Int(s.latched_alarms.len() as i64))?;
        Ok(())
    }

    fn trace_row(&self, t: f64) -> Vec<String> {
        let mut row = Vec::with_capacity(self.recorded.len() + 1);
        row.push(crate::tagbus::format_real(t));
        for name in &self.recorded {
            row.push(self.store.get(name).map(|tag| tag.value.to_string()).unwrap_or_default());
        }
        row
    }

    fn check_assert(&mut self, idx: usize, t: f64) {
        let Ok(Action::Assert(a)) = self.cfg.scenario.events[idx].action() else { return };
        let actual = TagName::new(a.tag.as_str()).ok().and_then(|n| self.store.get(&n));
        let passed = actual.as_ref().is_some_and(|tag| a.op.holds(&tag.value, &a.value));
        if passed {
            self.asserts_passed += 1;
            log::info!("t={t}: assert {} {} {} passed", a.tag, a.op, a.value);
        } else {
            let actual = actual.map(|tag| tag.value.to_string());
            log::warn!("t={t}: assert {} {} {} failed (actual {:?})", a.tag, a.op, a.value, actual);
            self.assert_failures.push(AssertFailure {
                t,
                tag: a.tag.clone(),
                op: a.op.to_string(),
                expected: a.value.to_string(),
                actual,
            });
        }
    }

    /// Fields of `run.json` known to the loop.
    pub fn record(&self, run_id: &str) -> RunRecord {
        let s = &self.cfg.scenario;
        RunRecord {
            run_id: run_id.into(),
            scenario: s.name.clone(),
            config_hash: config_hash(&self.cfg),
            seed: s.seed,
            start_epoch_ms: s.start_epoch_ms,
            dt: s.dt,
            scan_period: s.scan_period,
            duration: s.duration,
            samples: self.k,
            recorded_tags: self.recorded.iter().map(|n| n.to_string()).collect(),
            asserts_passed: self.asserts_passed,
            assert_failures: self.assert_failures.clone(),
            transitions: self.transitions.clone(),
            trips: self.trips.clone(),
            faults: self
                .plant
                .fault_log()
                .iter()
                .map(|f| FaultRecord {
                    t: f.sim_time,
                    sensor: f.tag_name.clone(),
                    fault: f.fault,
                })
                .collect(),
            final_seq: self.ctl.seq,
            exit_code: self.exit_code(),
        }
    }

    /// Seed, start time and scenario name identify a run directory.
    pub fn run_id(&self) -> String {
        run_id(&self.cfg)
    }
}

pub(super) fn run_id(cfg: &Config) -> String {
    let s = &cfg.scenario;
    let name: String = s
        .name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{name}-s{}-{}", s.seed, s.start_epoch_ms)
}

fn grid_time(k: u64, dt: f64) -> f64 {
    (k as f64 * dt * 1e9).round() / 1e9
}

/// Keeps a loop at `speed`× real time; logs when it falls behind.
pub(super) struct Pacer {
    start: Instant,
    speed: f64,
    late_since: Option<f64>,
}

impl Pacer {
    pub(super) fn new(speed: f64) -> Self {
        Pacer {
            start: Instant::now(),
            speed,
            late_since: None,
        }
    }

    /// Waits until simulated time `t` is due.
    pub(super) fn wait(&mut self, t: f64, tolerance: f64) {
        if self.speed <= 0.0 {
            return;
        }
        let due = Duration::from_secs_f64(t / self.speed);
        let elapsed = self.start.elapsed();
        if let Some(ahead) = due.checked_sub(elapsed) {
            std::thread::sleep(ahead);
            self.late_since = None;
        } else if (elapsed - due).as_secs_f64() > tolerance && self.late_since.is_none() {
            log::warn!("real-time overrun at t={t}: {:.3} s behind", (elapsed - due).as_secs_f64());
            self.late_since = Some(t);
        }
    }
}

/// Executes the scenario to completion and writes
/// `<out_root>/<run-id>/{trace.csv, history.log, run.json}`.
pub fn run(cfg: &Config, out_root: &Path) -> Result<RunSummary, SimError> {
    cfg.validate()?;
    let id = run_id(cfg);
    let dir = out_root.join(&id);
    fs::create_dir_all(&dir).map_err(|e| SimError::Io(format!("{}: {e}", dir.display())))?;
    let historian = Historian::create(dir.join("history.log"))?;
    let mut sim = Simulation::with_historian(cfg.clone(), Some(historian))?;

    let mut trace = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("trace.csv"))?));
    let csv_err = |e: csv::Error| SimError::Io(e.to_string());
    trace.write_record(sim.trace_header()).map_err(csv_err)?;
    let steps = cfg.steps();
    let mut pacer = Pacer::new(cfg.scenario.speed);
    for k in 0..=steps {
        pacer.wait(sim.time(), cfg.scenario.scan_period);
        let row = if k < steps { sim.step()? } else { sim.sample()? };
        trace.write_record(&row).map_err(csv_err)?;
    }
    trace.flush()?;
    if let Some(mut h) = sim.store().detach_historian() {
        h.flush()?;
    }

    let record = sim.record(&id);
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    let mut f = File::create(dir.join("run.json"))?;
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")?;
    log::info!("run {id}: {} samples, exit code {}", record.samples, record.exit_code);
    Ok(RunSummary { record, dir })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::{CompareOp, ConfigValue, Event};

    fn short(duration: f64) -> Config {
        let mut cfg = Config::default();
        cfg.scenario.duration = duration;
        cfg
    }

    #[test]
    fn rest_scenario_stays_at_rest() {
        let mut cfg = short(10.0);
        for sc in &mut cfg.sensors {
            sc.noise_sigma = 0.0;
        }
        let ambient = cfg.plant.ambient_temp;
        let mut sim = Simulation::new(cfg).unwrap();
        let header = sim.trace_header();
        let col = |name: &str| header.iter().position(|h| h.starts_with(name)).unwrap();
        let (n, t_exh) = (col("plant.n_hpt"), col("plant.t_exh"));
        for _ in 0..200 {
            let row = sim.step().unwrap();
            assert_eq!(row[n], "0.0");
            assert_eq!(row[t_exh].parse::<f64>().unwrap(), ambient);
        }
        assert_eq!(sim.control_state().seq, SeqState::Stopped);
        assert_eq!(sim.exit_code(), 0);
    }

    #[test]
    fn poke_is_visible_in_its_own_sample() {
        let mut cfg = short(2.0);
        cfg.scenario.events = vec![
            Event::poke(1.0, "cmd.start", ConfigValue::Bool(true)),
            Event::assert(1.0, "ctl.seq", CompareOp::Eq, ConfigValue::Text("purge".into())),
            Event::assert(0.95, "ctl.seq", CompareOp::Eq, ConfigValue::Text("stopped".into())),
        ];
        cfg.scenario.events.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut sim = Simulation::new(cfg).unwrap();
        for _ in 0..=40 {
            sim.step().unwrap();
        }
        assert!(sim.assert_failures().is_empty(), "{:?}", sim.assert_failures());
        assert_eq!(sim.transitions()[0].t, 1.0);
    }

    #[test]
    fn bad_event_targets_are_config_errors() {
        for e in [
            Event::poke(0.0, "plant.n_hpt", ConfigValue::Real(1.0)),
            Event::poke(0.0, "cmd.nope", ConfigValue::Bool(true)),
            Event::poke(0.0, "cmd.load", ConfigValue::Text("sideways".into())),
            Event::poke(0.0, "cmd.start", ConfigValue::Text("yes".into())),
            Event::assert(0.0, "ctl.nope", CompareOp::Eq, ConfigValue::Int(0)),
            Event::inject(0.0, "plant.nope", Fault::OutOfRange),
        ] {
            let mut cfg = short(1.0);
            cfg.scenario.events = vec![e.clone()];
            assert!(matches!(Simulation::new(cfg), Err(SimError::Config(_))), "{e:?}");
        }
    }

    #[test]
    fn manual_trip_without_allowance_fails_run() {
        let mut cfg = short(1.0);
        cfg.scenario.events = vec![Event::poke(0.5, "cmd.trip", ConfigValue::Bool(true))];
        let dir = tempfile::tempdir().unwrap();
        let summary = run(&cfg, dir.path()).unwrap();
        assert_eq!(summary.record.trips.len(), 1);
        assert_eq!(summary.exit_code(), 1);
        cfg.scenario.allow_trip = true;
        assert_eq!(run(&cfg, dir.path()).unwrap().exit_code(), 0);
    }

    #[test]
    fn run_writes_artifacts() {
        let mut cfg = short(1.0);
        cfg.scenario.name = "smoke test".into();
        cfg.scenario.events = vec![Event::assert(1.0, "ctl.seq", CompareOp::Eq, ConfigValue::Text("loaded".into()))];
        let dir = tempfile::tempdir().unwrap();
        let summary = run(&cfg, dir.path()).unwrap();
        assert!(summary.dir.ends_with("smoke_test-s0-1700000000000"));
        assert_eq!(summary.exit_code(), 1);
        let trace = fs::read_to_string(summary.trace_path()).unwrap();
        assert_eq!(trace.lines().count(), 1 + 21);
        assert!(trace.starts_with("t[s],ctl.alarm_count,ctl.alarms,"));
        let hist = Historian::load(summary.history_path()).unwrap();
        assert!(hist.len() > 21 * 12);
        let json: RunRecord = serde_json::from_str(&fs::read_to_string(summary.dir.join("run.json")).unwrap()).unwrap();
        assert_eq!(json, summary.record);
        assert_eq!(json.config_hash, config_hash(&cfg));
        assert_eq!(json.assert_failures[0].actual.as_deref(), Some("stopped"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = Config::default();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.scenario.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
