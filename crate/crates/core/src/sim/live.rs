use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use super::config::Config;
use super::runner::{run_id, Pacer, Simulation};
use super::SimError;
use crate::tagbus::{
    spawn_tcp, spawn_ws, Historian, ServerHandle, TagDef, TagStore, Value, ValueKind, WireValue, TCP_PORT, WS_PORT,
};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub tcp_addr: SocketAddr,
    pub ws_addr: SocketAddr,
    /// 0 is treated as real time.
    pub speed: f64,
    /// Where `<run-id>/history.log` is written; `None` keeps no log.
    pub out_root: Option<PathBuf>,
    /// Replay only: return once the log is exhausted instead of holding
    /// the final values until shutdown.
    pub exit_at_end: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            tcp_addr: SocketAddr::from(([127, 0, 0, 1], TCP_PORT)),
            ws_addr: SocketAddr::from(([127, 0, 0, 1], WS_PORT)),
            speed: 1.0,
            out_root: None,
            exit_at_end: false,
        }
    }
}

fn effective_speed(speed: f64) -> f64 {
    if speed > 0.0 {
        speed
    } else {
        1.0
    }
}

fn start_servers(
    store: &Arc<TagStore>,
    opts: &ServeOptions,
    shutdown: &Arc<AtomicBool>,
) -> Result<(ServerHandle, ServerHandle), SimError> {
    let tcp = spawn_tcp(store.clone(), opts.tcp_addr, shutdown.clone())?;
    let ws = match spawn_ws(store.clone(), opts.ws_addr, shutdown.clone()) {
        Ok(ws) => ws,
        Err(e) => {
            tcp.shutdown();
            return Err(e.into());
        }
    };
    Ok((tcp, ws))
}

/// Runs the scenario in real time (scaled by `speed`) behind the TCP and
/// browser-socket servers until `shutdown` is raised. The scenario
/// duration is ignored; events fire at their times. `ready` receives the
/// bound addresses once both servers listen. Returns the samples executed.
pub fn serve(
    cfg: &Config,
    opts: &ServeOptions,
    shutdown: Arc<AtomicBool>,
    ready: impl FnOnce(SocketAddr, SocketAddr),
) -> Result<u64, SimError> {
    let historian = match &opts.out_root {
        Some(root) => Some(Historian::create(root.join(run_id(cfg)).join("history.log"))?),
        None => None,
    };
    let mut sim = Simulation::with_historian(cfg.clone(), historian)?;
    let (tcp, ws) = start_servers(sim.store(), opts, &shutdown)?;
    ready(tcp.local_addr(), ws.local_addr());

    let mut pacer = Pacer::new(effective_speed(opts.speed));
    let mut result = Ok(());
    while !shutdown.load(Ordering::SeqCst) {
        pacer.wait(sim.time(), cfg.scenario.scan_period);
        if let Err(e) = sim.step() {
            result = Err(e);
            break;
        }
    }
    shutdown.store(true, Ordering::SeqCst);
    tcp.join();
    ws.join();
    if let Some(mut h) = sim.store().detach_historian() {
        h.flush()?;
    }
    log::info!("serve stopped after {} samples", sim.sample_index());
    result.map(|_| sim.sample_index())
}

fn kind_of(v: &WireValue) -> ValueKind {
    match v {
        WireValue::Int(_) => ValueKind::Int,
        WireValue::Real(_) => ValueKind::Real,
        WireValue::Text(_) => ValueKind::Enum,
    }
}

/// Re-serves a historian log: every record is re-committed with its
/// original timestamp, paced by the gaps between timestamps. Returns the
/// number of records replayed.
pub fn replay(
    history: &Path,
    opts: &ServeOptions,
    shutdown: Arc<AtomicBool>,
    ready: impl FnOnce(SocketAddr, SocketAddr),
) -> Result<usize, SimError> {
    let hist = Historian::load(history)?;
    let records = hist.all_records();
    let store = Arc::new(TagStore::new());
    let t0 = records.first().map(|r| r.timestamp).unwrap_or(0);
    store.set_clock(t0);
    let mut defined = HashSet::new();
    for r in &records {
        if defined.insert(r.tag.clone()) {
            let kind = kind_of(&r.value);
            store.define(TagDef::new(r.tag.clone(), kind, ""), Value::default_for(kind))?;
        }
    }
    let (tcp, ws) = start_servers(&store, opts, &shutdown)?;
    ready(tcp.local_addr(), ws.local_addr());

    let mut pacer = Pacer::new(effective_speed(opts.speed));
    let mut done = 0;
    for r in &records {
        if shutdown.load(Ordering::SeqCst) {
            break;
        }
        pacer.wait((r.timestamp - t0) as f64 / 1000.0, 0.1);
        store.set_clock(r.timestamp);
        let value = Value::from_wire(kind_of(&r.value), &r.value)?;
        store.commit_at(&r.tag, value, r.quality, r.timestamp)?;
        done += 1;
    }
    while !opts.exit_at_end && !shutdown.load(Ordering::SeqCst) {
        std::thread::sleep(std::time::Duration::from_millis(20));
    }
    shutdown.store(true, Ordering::SeqCst);
    tcp.join();
    ws.join();
    Ok(done)
}
