mod common;

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gtcu::control::{control_scan, trip_predicate, ControlConfig, ControlState, Measurements, OperatorCommands, SeqState};
use gtcu::dynamics::{simulate_series, Signal, TransferFunction};
use gtcu::plant::{CommandSet, Fault, LoadMode, Measurement, Plant, PlantConfig};
use gtcu::scheduler::{allocate_load, UnitModel};
use gtcu::sim::{run, Config, ConfigValue, Event};
use gtcu::sysid::{default_delay_grid, detect_anomaly, fit_first_order, IdentDataset};
use gtcu::tagbus::{decode, encode, Historian, HistorianRecord, Quality, TagName, WireValue};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn rel(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn within(limit: Duration, took: Duration) -> Result<(), String> {
    if took <= limit {
        Ok(())
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

fn dynamics_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let k = signed(&mut rng, 0.1, 100.0);
        let t1: f64 = rng.random_range(0.5..50.0);
        let dt = t1 / 100.0;
        let tau = rng.random_range(0..=300) as f64 * dt;
        let tf = TransferFunction::first_order(k, t1, tau).map_err(|e| e.to_string())?;
        let n = ((tau + 10.0 * t1) / dt).ceil() as usize;
        let u = Signal::from_fn(0.0, dt, n, |_| 1.0).unwrap();
        let y = simulate_series(&tf, &u).map_err(|e| e.to_string())?;
        for (i, got) in y.values().iter().enumerate() {
            let t = i as f64 * dt;
            let want = if t < tau - 1e-9 * dt { 0.0 } else { k * (1.0 - (-(t - tau) / t1).exp()) };
            let err = (got - want).abs() / k.abs();
            worst = worst.max(err);
            if err > 1e-3 {
                return Err(format!("K={k} T1={t1} tau={tau} t={t}: {got} vs {want}"));
            }
        }
    }
    within(Duration::from_secs(5), start.elapsed())?;
    Ok(format!("50 transfer functions, worst error {worst:.1e}·K, {:.2?}", start.elapsed()))
}

fn step_dataset(tf: &TransferFunction, dt: f64) -> IdentDataset {
    let n = ((5.0 + tf.dead_time() + 8.0 * tf.t1()) / dt).ceil() as usize;
    let u = Signal::from_fn(0.0, dt, n, |t| if t >= 5.0 { 1.0 } else { 0.0 }).unwrap();
    let y = simulate_series(tf, &u).unwrap();
    IdentDataset::new(u, y).unwrap()
}

fn identification_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_clean = 0.0f64;
    for _ in 0..100 {
        let k = signed(&mut rng, 0.1, 50.0);
        let t1: f64 = rng.random_range(1.0..20.0);
        let dt = t1 / 100.0;
        let steps = (5.0 / dt + 1e-9).floor() as usize;
        let tau = rng.random_range(0..=steps) as f64 * dt;
        let tf = TransferFunction::first_order(k, t1, tau).unwrap();
        let fit = fit_first_order(&step_dataset(&tf, dt), &default_delay_grid(dt)).map_err(|e| e.to_string())?;
        let e_tau = (fit.tf.dead_time() - tau).abs() / tau.max(dt);
        let err = rel(fit.tf.gain(), k).max(rel(fit.tf.t1(), t1)).max(e_tau);
        worst_clean = worst_clean.max(err);
        if err > 1e-3 {
            return Err(format!("noise-free K={k} T1={t1} tau={tau}: got {:?}", fit.tf));
        }
    }

    let mut worst_noisy = 0.0f64;
    let mut worst_tau = 0;
    let truth = TransferFunction::first_order(3.0, 8.0, 2.0).unwrap();
    let dt = 0.1;
    for seed in 0..20 {
        let mut ds = step_dataset(&truth, dt);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.05 * truth.gain()).unwrap();
        ds.y = ds.y.with_values(ds.y.values().iter().map(|v| v + noise.sample(&mut noise_rng)).collect());
        let fit = fit_first_order(&ds, &default_delay_grid(dt)).map_err(|e| e.to_string())?;
        let err = rel(fit.tf.gain(), 3.0).max(rel(fit.tf.t1(), 8.0));
        worst_noisy = worst_noisy.max(err);
        worst_tau = worst_tau.max(((fit.tf.dead_time() - 2.0) / dt).abs().round() as usize);
        if err > 0.05 {
            return Err(format!("noise seed {seed}: got {:?}", fit.tf));
        }
    }
    within(Duration::from_secs(30), start.elapsed())?;
    Ok(format!(
        "100 noise-free cases worst {:.1e}, 20 noisy seeds worst K/T1 {:.1}% and tau {} samples, {:.2?}",
        worst_clean,
        100.0 * worst_noisy,
        worst_tau,
        start.elapsed()
    ))
}

fn random_reading(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Measurement {
    let value = match rng.random_range(0..50) {
        0 => f64::NAN,
        1 => f64::INFINITY,
        _ => rng.random_range(lo..hi),
    };
    let quality = match rng.random_range(0..10) {
        0 => Quality::Bad,
        1 => Quality::Stale,
        _ => Quality::Good,
    };
    Measurement { value, quality }
}

fn fail_safe_suite() -> Outcome {
    let cfg = ControlConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = 20_000;
    let mut trips = 0;
    for i in 0..cases {
        let m = Measurements {
            n_hpt: random_reading(&mut rng, -100.0, 6500.0),
            n_lpt: random_reading(&mut rng, -100.0, 6500.0),
            t_exh: random_reading(&mut rng, -20.0, 700.0),
            p_oil: random_reading(&mut rng, -10.0, 500.0),
            t_oil: random_reading(&mut rng, -20.0, 120.0),
            main_pump_fb: random_reading(&mut rng, 0.0, 1.0),
            aux_pump_fb: random_reading(&mut rng, 0.0, 1.0),
        };
        let ops = OperatorCommands {
            start: rng.random_bool(0.2),
            stop: rng.random_bool(0.1),
            reset: rng.random_bool(0.1),
            trip: rng.random_bool(0.05),
            load: if rng.random_bool(0.2) {
                Some(LoadMode::ALL[rng.random_range(0..LoadMode::ALL.len())])
            } else {
                None
            },
            speed_setpoint: if rng.random_bool(0.2) { Some(rng.random_range(0.0..6000.0)) } else { None },
        };
        let seq = SeqState::ALL[rng.random_range(0..SeqState::ALL.len())];
        let mut cs = ControlState::new(&cfg).map_err(|e| e.to_string())?;
        cs.enter(seq);
        cs.step_timer = rng.random_range(0.0..120.0);
        let tripping = !trip_predicate(seq, &m, &cfg).is_empty() || (ops.trip && seq != SeqState::Tripped);
        let (next, cmd) = control_scan(&cs, &m, &ops, &cfg, cfg.scan_period).map_err(|e| e.to_string())?;
        if tripping {
            trips += 1;
            if cmd.fuel != 0.0 || !cmd.emerg_pump || next.seq != SeqState::Tripped {
                return Err(format!("case {i}: {seq:?} {m:?} {ops:?} gave {cmd:?} in {:?}", next.seq));
            }
        }
    }
    Ok(format!("{cases} vectors, {trips} tripping, 0 violations"))
}

fn cold_start_config() -> Config {
    let mut cfg = Config::default();
    cfg.scenario.name = "cold_start".into();
    cfg.scenario.duration = 300.0;
    cfg.scenario.events = vec![
        Event::poke(1.0, "cmd.start", ConfigValue::Bool(true)),
        Event::poke(200.0, "cmd.load", ConfigValue::Text("ring".into())),
    ];
    cfg
}

struct Trace {
    columns: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Trace {
    fn read(bytes: &[u8]) -> Trace {
        let mut rdr = csv::Reader::from_reader(bytes);
        let columns = rdr
            .headers()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, h)| (h.split('[').next().unwrap().to_string(), i))
            .collect();
        let rows = rdr.records().map(|r| r.unwrap()).collect();
        Trace { columns, rows }
    }

    fn text(&self, row: usize, col: &str) -> &str {
        &self.rows[row][self.columns[col]]
    }

    fn num(&self, row: usize, col: &str) -> f64 {
        self.text(row, col).parse().unwrap()
    }
}

fn run_cold_start() -> Result<(Vec<u8>, Duration), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let summary = run(&cold_start_config(), dir.path()).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let bytes = std::fs::read(summary.dir.join("trace.csv")).map_err(|e| e.to_string())?;
    Ok((bytes, took))
}

fn cold_start(trace_bytes: &[u8], took: Duration) -> Outcome {
    within(Duration::from_secs(10), took)?;
    let tr = Trace::read(trace_bytes);
    let n = tr.rows.len();
    if !(0..n).any(|i| tr.text(i, "ctl.seq") == "loaded") {
        return Err("never reached loaded".into());
    }

    let sigma = 5.0;
    let mut running_max = f64::NEG_INFINITY;
    let mut accel_samples = 0;
    for i in (0..n).filter(|i| tr.text(*i, "ctl.seq") == "acceleration") {
        let v = tr.num(i, "plant.n_hpt");
        if v < running_max - 5.0 * sigma {
            return Err(format!("n_hpt fell to {v} after {running_max} during acceleration"));
        }
        running_max = running_max.max(v);
        accel_samples += 1;
    }
    if accel_samples == 0 {
        return Err("no acceleration samples".into());
    }

    let threshold = PlantConfig::default().self_sustain_speed();
    let crossed = (0..n).find(|i| tr.num(*i, "plant.n_hpt") > threshold).ok_or("n_hpt never self-sustains")?;
    let lpt_rise = (0..n).find(|i| tr.num(*i, "plant.n_lpt") > 10.0 * sigma).ok_or("n_lpt never rises")?;
    if lpt_rise <= crossed {
        return Err(format!("n_lpt rose at sample {lpt_rise}, n_hpt crossed at {crossed}"));
    }

    let ignition = (0..n).find(|i| tr.text(*i, "ctl.seq") == "ignition").ok_or("no ignition")?;
    let load = (0..n).find(|i| tr.num(*i, "t") >= 200.0).unwrap();
    let t_exh: Vec<f64> = (ignition..load).map(|i| tr.num(i, "plant.t_exh")).collect();
    let peak = t_exh.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tail = &t_exh[t_exh.len() - 400..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let smoothed: Vec<f64> = tail.windows(40).map(|w| w.iter().sum::<f64>() / 40.0).collect();
    let spread = smoothed.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - smoothed.iter().cloned().fold(f64::INFINITY, f64::min);
    if peak - tail_mean < 5.0 {
        return Err(format!("t_exh peak {peak:.1} not above settled {tail_mean:.1}"));
    }
    if spread > 3.0 {
        return Err(format!("t_exh still moving before load: spread {spread:.2}"));
    }
    Ok(format!(
        "loaded; lpt rise {:.2} s after hpt self-sustains; t_exh peak {peak:.1} settles to {tail_mean:.1} degC; {took:.2?}",
        tr.num(lpt_rise, "t") - tr.num(crossed, "t")
    ))
}

fn determinism(a: &[u8]) -> Outcome {
    let (b, _) = run_cold_start()?;
    if a == b.as_slice() {
        Ok(format!("two traces of {} bytes are identical", a.len()))
    } else {
        Err("traces differ".into())
    }
}

fn codec_identity() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let strategy = common::message();
    let cases = 100_000;
    for i in 0..cases {
        let msg = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let line = encode(&msg).map_err(|e| format!("case {i}: {e}"))?;
        match decode(line.as_bytes()) {
            Ok(back) if back == msg => {}
            other => return Err(format!("case {i}: {line:?} decoded to {other:?}")),
        }
    }
    for (line, reason) in common::MALFORMED {
        match decode(line.as_bytes()) {
            Err(e) if e.reason == *reason => {}
            other => return Err(format!("{line:?}: {other:?}, expected {reason:?}")),
        }
    }
    Ok(format!("{cases} round trips, {} malformed lines", common::MALFORMED.len()))
}

fn historian_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tags: Vec<TagName> = (0..12).map(|i| TagName::new(format!("plant.tag{i}")).unwrap()).collect();
    let mut hist = Historian::in_memory();
    let mut all = Vec::new();
    let mut clock = 1_700_000_000_000u64;
    for i in 0..100_000 {
        clock += rng.random_range(0..4);
        let value = match i % 3 {
            0 => WireValue::Int(rng.random_range(-100..100)),
            1 => WireValue::Real(rng.random_range(-1e3..1e3)),
            _ => WireValue::Text("idle".into()),
        };
        let rec = HistorianRecord {
            tag: tags[rng.random_range(0..tags.len())].clone(),
            timestamp: clock,
            value,
            quality: if rng.random_bool(0.9) { Quality::Good } else { Quality::Stale },
        };
        hist.append(rec.clone()).map_err(|e| e.to_string())?;
        all.push(rec);
    }
    let first = all[0].timestamp;
    for q in 0..100 {
        let tag = &tags[rng.random_range(0..tags.len())];
        let a = rng.random_range(first..=clock + 1);
        let b = rng.random_range(a..=clock + 2);
        let got: Vec<&HistorianRecord> = hist.query(tag, a, b).map_err(|e| e.to_string())?.iter().collect();
        let want: Vec<&HistorianRecord> =
            all.iter().filter(|r| &r.tag == tag && r.timestamp >= a && r.timestamp < b).collect();
        if got != want {
            return Err(format!("query {q} on {tag} [{a}, {b}): {} vs {} records", got.len(), want.len()));
        }
    }
    Ok("100000 appends, 100 queries equal the linear scan".into())
}

/// Best fuel over the committed set by a zooming grid over all outputs but
/// one, which takes the remainder; every unit gets a turn as the remainder.
fn grid_search(units: &[&UnitModel], demand: f64) -> Option<f64> {
    let n = units.len();
    if n == 1 {
        let u = units[0];
        return (demand >= u.q_min && demand <= u.q_max).then(|| u.fuel_rate(demand));
    }
    (0..n).filter_map(|r| zoom_grid(units, r, demand)).min_by(f64::total_cmp)
}

fn zoom_grid(units: &[&UnitModel], remainder: usize, demand: f64) -> Option<f64> {
    let free: Vec<&UnitModel> = (0..units.len()).filter(|i| *i != remainder).map(|i| units[i]).collect();
    let last = units[remainder];
    let cost = |q: &[f64]| -> Option<f64> {
        let rest = demand - q.iter().sum::<f64>();
        if rest < last.q_min - 1e-12 || rest > last.q_max + 1e-12 {
            return None;
        }
        let mut f = last.fuel_rate(rest.clamp(last.q_min, last.q_max));
        for (u, q) in free.iter().zip(q) {
            f += u.fuel_rate(*q);
        }
        Some(f)
    };
    let m = free.len();
    let points = 11usize;
    let mut lo: Vec<f64> = free.iter().map(|u| u.q_min).collect();
    let mut hi: Vec<f64> = free.iter().map(|u| u.q_max).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..80 {
        let mut idx = vec![0usize; m];
        loop {
            let q: Vec<f64> = (0..m)
                .map(|j| lo[j] + (hi[j] - lo[j]) * idx[j] as f64 / (points - 1) as f64)
                .collect();
            if let Some(f) = cost(&q) {
                if best.as_ref().is_none_or(|(b, _)| f < *b) {
                    best = Some((f, q));
                }
            }
            let mut j = 0;
            while j < m {
                idx[j] += 1;
                if idx[j] < points {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == m {
                break;
            }
        }
        let (_, q) = best.as_ref()?;
        for j in 0..m {
            let half = 3.0 * (hi[j] - lo[j]) / (points - 1) as f64;
            lo[j] = (q[j] - half).max(free[j].q_min);
            hi[j] = (q[j] + half).min(free[j].q_max);
        }
    }
    best.map(|(f, _)| f)
}

fn brute_force(units: &[UnitModel], demand: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for mask in 1u32..(1 << units.len()) {
        let on: Vec<&UnitModel> = (0..units.len()).filter(|i| mask & (1 << i) != 0).map(|i| &units[i]).collect();
        let lo: f64 = on.iter().map(|u| u.q_min).sum();
        let hi: f64 = on.iter().map(|u| u.q_max).sum();
        if demand < lo || demand > hi {
            continue;
        }
        if let Some(f) = grid_search(&on, demand) {
            best = Some(best.map_or(f, |b| b.min(f)));
        }
    }
    best
}

fn scheduler_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut instances = 0;
    let mut worst = 0.0f64;
    let mut interior_checks = 0;
    while instances < 50 {
        let count = rng.random_range(1..=4);
        let units: Vec<UnitModel> = (0..count)
            .map(|i| {
                let q_min = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..40.0) };
                UnitModel::new(
                    &format!("U{i}"),
                    rng.random_range(0.0..50.0),
                    rng.random_range(0.5..5.0),
                    rng.random_range(0.001..0.05),
                    q_min,
                    rng.random_range(60.0..200.0),
                )
            })
            .collect();
        let demand = rng.random_range(0.0..1.0) * units.iter().map(|u| u.q_max).sum::<f64>();
        let Ok(alloc) = allocate_load(&units, demand) else {
            if brute_force(&units, demand).is_some() {
                return Err(format!("demand {demand} reported infeasible for {units:?}"));
            }
            continue;
        };
        instances += 1;
        let oracle = brute_force(&units, demand).ok_or("grid search found no feasible point")?;
        let err = rel(alloc.total_fuel_rate, oracle);
        worst = worst.max(err);
        if err > 1e-6 {
            return Err(format!("demand {demand}: {} vs grid {oracle} for {units:?}", alloc.total_fuel_rate));
        }
        let marginals: Vec<f64> = alloc
            .units
            .iter()
            .zip(&units)
            .filter(|(d, u)| d.on && d.q > u.q_min + 1e-9 && d.q < u.q_max - 1e-9)
            .map(|(d, u)| u.marginal(d.q))
            .collect();
        for m in &marginals {
            interior_checks += 1;
            if (m - marginals[0]).abs() > 1e-9 * marginals[0].abs().max(1.0) {
                return Err(format!("unequal marginals {marginals:?}"));
            }
        }
    }
    Ok(format!("50 instances, worst fuel gap {worst:.1e}, {interior_checks} interior marginals equal"))
}

fn stuck_sensor_detection() -> Outcome {
    let window = 20;
    let threshold = 5.0;
    let inject_at = 1000;
    let mut worst_delay = 0;
    for seed in 0..20 {
        let mut plant = Plant::with_defaults(0.05, seed).map_err(|e| e.to_string())?;
        let sigma = plant
            .sensors()
            .iter()
            .find(|s| s.config.tag_name == "plant.p_oil")
            .ok_or("no p_oil sensor")?
            .config
            .noise_sigma;
        let cmd = CommandSet {
            main_pump: true,
            ..CommandSet::default()
        };
        let mut residuals = Vec::with_capacity(2000);
        for k in 0..2000 {
            if k == inject_at {
                let stuck = plant.state().p_oil + 5.0 * sigma;
                plant.inject_fault("plant.p_oil", Fault::StuckAt(stuck)).map_err(|e| e.to_string())?;
            }
            let m = plant.read("plant.p_oil").map_err(|e| e.to_string())?;
            residuals.push(m.value - plant.state().p_oil);
            plant.step(&cmd).map_err(|e| e.to_string())?;
        }
        let sig = Signal::new(0.0, plant.dt(), residuals).unwrap();
        let found = detect_anomaly(&sig, window, threshold).map_err(|e| e.to_string())?;
        let [a] = found.as_slice() else {
            return Err(format!("seed {seed}: {} intervals {found:?}", found.len()));
        };
        let start = (a.t_start / plant.dt()).round() as usize;
        if start < inject_at || start > inject_at + 2 * window {
            return Err(format!("seed {seed}: interval starts at sample {start}"));
        }
        worst_delay = worst_delay.max(start - inject_at);
    }
    Ok(format!("20 seeds, one interval each, worst delay {worst_delay} samples"))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: u32, label: &str, outcome: Outcome| {
        match outcome {
            Ok(detail) => println!("criterion {n} {label}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} {label}: FAIL ({why})");
            }
        }
    };
    report(1, "dynamics oracle", dynamics_oracle());
    report(2, "identification round trip", identification_round_trip());
    report(3, "fail-safe commands", fail_safe_suite());
    match run_cold_start() {
        Ok((trace, took)) => {
            report(4, "cold start", cold_start(&trace, took));
            report(5, "determinism", determinism(&trace));
        }
        Err(e) => {
            report(4, "cold start", Err(e.clone()));
            report(5, "determinism", Err(e));
        }
    }
    report(6, "protocol codec", codec_identity());
    report(7, "historian oracle", historian_oracle());
    report(8, "scheduler oracle", scheduler_oracle());
    report(9, "stuck sensor detection", stuck_sensor_detection());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
