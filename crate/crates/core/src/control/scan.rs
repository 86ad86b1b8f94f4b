use super::{
    pid_update, Alarm, ControlConfig, ControlError, ControlState, Measurements, OperatorCommands, SeqState, TripCause,
};
use crate::plant::{CommandSet, LoadMode, Measurement};

fn usable(m: &Measurement) -> bool {
    m.quality.is_good() && m.value.is_finite()
}

/// Every armed trip predicate holding for `seq` and the measurements, in
/// priority order. Unusable (BAD, STALE or non-finite) readings on a
/// protection tag count as the trip condition they guard.
pub fn trip_predicate(seq: SeqState, m: &Measurements, cfg: &ControlConfig) -> Vec<(TripCause, Alarm)> {
    let lim = &cfg.limits;
    let mut trips = Vec::new();
    if seq == SeqState::Tripped {
        return trips;
    }
    for (reading, limit, bad) in [(&m.n_hpt, lim.n_hpt_trip, Alarm::NHptBad), (&m.n_lpt, lim.n_lpt_trip, Alarm::NLptBad)] {
        if !usable(reading) {
            trips.push((TripCause::Overspeed, bad));
        } else if reading.value >= limit {
            trips.push((TripCause::Overspeed, Alarm::Overspeed));
        }
    }
    if !usable(&m.t_exh) {
        trips.push((TripCause::ExhaustOvertemp, Alarm::TExhBad));
    } else if m.t_exh.value >= lim.t_exh_trip {
        trips.push((TripCause::ExhaustOvertemp, Alarm::ExhaustOvertemp));
    }
    if seq.oil_protection_armed() {
        if !usable(&m.p_oil) {
            trips.push((TripCause::LowOilPressure, Alarm::POilBad));
        } else if m.p_oil.value < lim.p_oil_trip_low {
            trips.push((TripCause::LowOilPressure, Alarm::LowOilPressure));
        }
    }
    trips
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AuxCommands {
    pub main_pump: bool,
    pub aux_pump: bool,
    pub emerg_pump: bool,
    pub cooler_fans: bool,
    pub roof_fans: bool,
    pub aux_latched: bool,
    pub cooler_latched: bool,
    pub main_failed: bool,
    pub aux_failed: bool,
}

/// Pump and fan commands for the state `cs` has already reached this scan.
/// A pump is failed when it was commanded last scan but its feedback is
/// off or unusable.
pub fn aux_logic(m: &Measurements, cs: &ControlState, cfg: &ControlConfig) -> AuxCommands {
    let running = cs.seq != SeqState::Stopped;
    let tripped = cs.seq == SeqState::Tripped;
    let fb_off = |fb: &Measurement| !usable(fb) || fb.value < 0.5;
    let main_failed = cs.last_commands.main_pump && fb_off(&m.main_pump_fb);
    let aux_failed = cs.last_commands.aux_pump && fb_off(&m.aux_pump_fb);

    let aux_start = cfg.limits.p_oil_aux_start;
    let low = !usable(&m.p_oil) || m.p_oil.value < aux_start;
    let recovered = usable(&m.p_oil) && m.p_oil.value >= aux_start + cfg.aux_stop_hysteresis;
    let aux_latched = running && if cs.aux_latched { !recovered } else { low };
    let aux_pump = running && (aux_latched || main_failed);

    let cooler_latched = if !usable(&m.t_oil) {
        true
    } else if cs.cooler_latched {
        m.t_oil.value > cfg.cooler_off_temp
    } else {
        m.t_oil.value > cfg.cooler_on_temp
    };

    AuxCommands {
        main_pump: running,
        aux_pump,
        emerg_pump: tripped || (main_failed && aux_failed),
        cooler_fans: cooler_latched || tripped,
        roof_fans: running,
        aux_latched,
        cooler_latched,
        main_failed,
        aux_failed,
    }
}

fn start_permissive(m: &Measurements) -> bool {
    usable(&m.p_oil) && usable(&m.t_oil)
}

/// One PLC scan: protections, then sequencer, then governor, then
/// auxiliary equipment. Pure in its arguments.
pub fn control_scan(
    cs: &ControlState,
    m: &Measurements,
    ops: &OperatorCommands,
    cfg: &ControlConfig,
    dt: f64,
) -> Result<(ControlState, CommandSet), ControlError> {
    if (dt - cfg.scan_period).abs() > 1e-9 * cfg.scan_period {
        return Err(ControlError::ScanPeriod {
            expected: cfg.scan_period,
            got: dt,
        });
    }
    let mut s = cs.clone();
    s.step_timer += dt;

    // operator reset is taken first so protections re-check the reset state
    let was_reset = s.seq == SeqState::Tripped && ops.reset && !ops.trip;
    if was_reset {
        s.enter(SeqState::Stopped);
        s.trip_cause = None;
        s.latched_alarms.clear();
        s.governor = cfg.governor()?;
        s.fuel_demand = 0.0;
    } else if ops.reset {
        s.latched_alarms.clear();
    }

    // protections
    if s.seq != SeqState::Tripped {
        let mut trips = trip_predicate(s.seq, m, cfg);
        if ops.trip {
            trips.push((TripCause::Manual, Alarm::ManualTrip));
        }
        if let Some(&(cause, _)) = trips.first() {
            s.latched_alarms.extend(trips.iter().map(|t| t.1));
            s.trip(cause);
        }
    }

    // sequencer
    if s.seq == SeqState::Tripped {
        if ops.start || ops.load.is_some() {
            s.latched_alarms.insert(Alarm::CommandRefused);
        }
    } else if !was_reset {
        if let Some(mode) = ops.load {
            s.target_load_mode = mode;
        }
        sequence(&mut s, m, ops, cfg);
    }

    // governor
    let fuel = match s.seq {
        SeqState::Ignition | SeqState::Warmup => cfg.ignition_fuel,
        SeqState::Acceleration => s.fuel_demand,
        SeqState::Idle | SeqState::Loaded => {
            let default = if s.seq == SeqState::Idle {
                cfg.idle_speed()
            } else {
                cfg.loaded_speed()
            };
            let n = cfg.nominal.n_hpt;
            s.speed_setpoint = ops
                .speed_setpoint
                .filter(|v| v.is_finite() && *v > 0.0)
                .map(|v| v.clamp(cfg.setpoint_min_fraction * n, cfg.setpoint_max_fraction * n))
                .unwrap_or(default);
            let (pid, out) = pid_update(&s.governor, s.speed_setpoint, m.n_hpt.value, dt)?;
            s.governor = pid;
            out
        }
        _ => 0.0,
    };
    if !matches!(s.seq, SeqState::Idle | SeqState::Loaded) {
        s.speed_setpoint = 0.0;
    }

    // auxiliary equipment
    let aux = aux_logic(m, &s, cfg);
    s.aux_latched = aux.aux_latched;
    s.cooler_latched = aux.cooler_latched;
    if aux.main_failed {
        s.latched_alarms.insert(Alarm::MainPumpFail);
    }
    if aux.aux_failed {
        s.latched_alarms.insert(Alarm::AuxPumpFail);
    }

    let cmd = CommandSet {
        fuel,
        main_pump: aux.main_pump,
        aux_pump: aux.aux_pump,
        emerg_pump: aux.emerg_pump,
        cooler_fans: aux.cooler_fans,
        roof_fans: aux.roof_fans,
        load_mode: if s.seq == SeqState::Loaded {
            s.target_load_mode
        } else {
            LoadMode::Unloaded
        },
    };
    s.last_commands = cmd;
    Ok((s, cmd))
}

fn sequence(s: &mut ControlState, m: &Measurements, ops: &OperatorCommands, cfg: &ControlConfig) {
    use SeqState::*;
    if ops.stop && s.seq.is_stoppable() {
        s.enter(Cooldown);
        return;
    }
    match s.seq {
        Stopped => {
            if ops.start {
                if start_permissive(m) {
                    s.enter(Purge);
                } else {
                    s.latched_alarms.insert(super::Alarm::StartRefused);
                }
            }
        }
        Purge => {
            if s.step_timer >= cfg.purge_time - 1e-9 {
                s.ignition_ref_temp = m.t_exh.value;
                s.enter(Ignition);
            }
        }
        Ignition => {
            if m.t_exh.value - s.ignition_ref_temp >= cfg.ignition_rise {
                s.enter(Warmup);
            } else if s.step_timer >= cfg.ignition_timeout - 1e-9 {
                s.latched_alarms.insert(super::Alarm::IgnitionFail);
                s.trip(TripCause::IgnitionFail);
            }
        }
        Warmup => {
            if s.step_timer >= cfg.warmup_time - 1e-9 {
                s.fuel_demand = cfg.ignition_fuel;
                s.enter(Acceleration);
            }
        }
        Acceleration => {
            s.fuel_demand = (s.fuel_demand + cfg.accel_ramp * cfg.scan_period).min(100.0);
            let idle = cfg.idle_speed();
            if m.n_hpt.value >= (1.0 - cfg.idle_band) * idle {
                s.governor.preload(s.fuel_demand, idle - m.n_hpt.value);
                s.enter(Idle);
            }
        }
        Idle => {
            if s.target_load_mode != LoadMode::Unloaded {
                s.enter(Loaded);
            }
        }
        Loaded => {
            if s.target_load_mode == LoadMode::Unloaded {
                s.enter(Idle);
            }
        }
        Cooldown => {
            if ops.start {
                s.latched_alarms.insert(super::Alarm::CommandRefused);
            }
            let f = cfg.stop_speed_fraction;
            if m.n_hpt.value < f * cfg.nominal.n_hpt && m.n_lpt.value < f * cfg.nominal.n_lpt {
                s.target_load_mode = LoadMode::Unloaded;
                s.governor = cfg.governor().expect("validated");
                s.fuel_demand = 0.0;
                s.enter(Stopped);
            }
        }
        Tripped => {}
    }
}
