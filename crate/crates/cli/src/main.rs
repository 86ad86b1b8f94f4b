use std::fs::File;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use gtcu::scheduler::{schedule, write_csv};
use gtcu::sim::{self, Config, ServeOptions, SimError, RUN_DIR_ENV};
use gtcu::sysid::{fit_first_order, fit_second_order, IdentDataset};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "gtcu", version, about = "Gas-turbine compressor unit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write trace, history and run record.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Real-time multiple; 0 runs as fast as possible.
        #[arg(long)]
        speed: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario interactively behind the tag servers until interrupted.
    Serve {
        #[arg(long, default_value_t = gtcu::tagbus::TCP_PORT)]
        port: u16,
        #[arg(long, default_value_t = gtcu::tagbus::WS_PORT)]
        ws_port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Defaults to the built-in configuration.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Directory for the history log; none is kept when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identify a transfer function from a logged CSV.
    Ident {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        input: String,
        #[arg(long)]
        output: String,
        #[arg(long, value_enum, default_value = "1")]
        order: Order,
        /// Largest dead time searched, seconds.
        #[arg(long, default_value_t = 5.0)]
        max_delay: f64,
        /// Also print a TOML fragment under this name.
        #[arg(long)]
        toml: Option<String>,
    },
    /// Dispatch the production plan in a configuration's [schedule] section.
    Schedule {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-serve a recorded history log.
    Replay {
        /// Run id under the run directory, or a path to a run directory or log.
        #[arg(long)]
        run: String,
        #[arg(long, default_value_t = gtcu::tagbus::TCP_PORT)]
        port: u16,
        #[arg(long, default_value_t = gtcu::tagbus::WS_PORT)]
        ws_port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit once the log is exhausted.
        #[arg(long)]
        exit_at_end: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    #[value(name = "1")]
    First,
    #[value(name = "2")]
    Second,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_config() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8, Failure> {
    match cmd {
        Command::Run { scenario, speed, out } => run(&scenario, speed, out),
        Command::Serve {
            port,
            ws_port,
            bind,
            scenario,
            speed,
            out,
        } => {
            let cfg = match scenario {
                Some(path) => load_config(&path)?,
                None => Config::default(),
            };
            let opts = serve_options(bind, port, ws_port, speed, out);
            let samples = sim::serve(&cfg, &opts, shutdown_flag()?, announce)?;
            log::info!("served {samples} samples");
            Ok(0)
        }
        Command::Ident {
            csv,
            input,
            output,
            order,
            max_delay,
            toml,
        } => ident(&csv, &input, &output, order, max_delay, toml.as_deref()),
        Command::Schedule { config, out } => {
            let cfg = load_config(&config)?;
            let Some(sc) = cfg.schedule else {
                return Err(Failure::Usage(format!("{}: no [schedule] section", config.display())));
            };
            let plan = schedule(&sc.units, &sc.plan).map_err(|e| Failure::Runtime(e.to_string()))?;
            let written = match out {
                Some(path) => {
                    let f = File::create(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                    write_csv(&plan, f)
                }
                None => write_csv(&plan, io::stdout().lock()),
            };
            written.map_err(|e| Failure::Runtime(e.to_string()))?;
            eprintln!("total fuel: {}", plan.total_fuel);
            Ok(0)
        }
        Command::Replay {
            run,
            port,
            ws_port,
            bind,
            speed,
            out,
            exit_at_end,
        } => {
            let log = history_path(&run, out.as_deref())?;
            let mut opts = serve_options(bind, port, ws_port, speed, None);
            opts.exit_at_end = exit_at_end;
            let n = sim::replay(&log, &opts, shutdown_flag()?, announce)?;
            log::info!("replayed {n} records");
            Ok(0)
        }
    }
}

fn load_config(path: &Path) -> Result<Config, Failure> {
    Config::load(path).map_err(|e| match e {
        SimError::Io(m) => Failure::Usage(m),
        other => other.into(),
    })
}

fn run_root(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os(RUN_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn run(scenario: &Path, speed: Option<f64>, out: Option<PathBuf>) -> Result<u8, Failure> {
    let mut cfg = load_config(scenario)?;
    if let Some(s) = speed {
        cfg.scenario.speed = s;
        cfg.validate()?;
    }
    let summary = sim::run(&cfg, &run_root(out))?;
    let rec = &summary.record;
    println!("run {}", rec.run_id);
    println!("dir {}", summary.dir.display());
    println!("samples {}", rec.samples);
    println!("final state {}", rec.final_seq.as_str());
    for t in &rec.trips {
        println!("trip at {} s: {}", t.t, t.cause.as_str());
    }
    for f in &rec.assert_failures {
        let actual = f.actual.as_deref().unwrap_or("<missing>");
        println!("assert failed at {} s: {} {} {} (actual {actual})", f.t, f.tag, f.op, f.expected);
    }
    println!("asserts passed {}, failed {}", rec.asserts_passed, rec.assert_failures.len());
    Ok(rec.exit_code as u8)
}

fn ident(csv: &Path, input: &str, output: &str, order: Order, max_delay: f64, toml: Option<&str>) -> Result<u8, Failure> {
    if !(max_delay >= 0.0 && max_delay.is_finite()) {
        return Err(Failure::Usage("--max-delay must be a non-negative number".into()));
    }
    let file = File::open(csv).map_err(|e| Failure::Usage(format!("{}: {e}", csv.display())))?;
    let ds = IdentDataset::from_csv(file, input, output).map_err(|e| Failure::Usage(e.to_string()))?;
    let dt = ds.u.dt();
    let steps = (max_delay / dt + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let fit = match order {
        Order::First => fit_first_order(&ds, &grid),
        Order::Second => fit_second_order(&ds, &grid),
    }
    .map_err(|e| Failure::Runtime(e.to_string()))?;
    let tf = &fit.tf;
    println!("K = {}", tf.gain());
    println!("T1 = {}", tf.t1());
    println!("T2 = {}", tf.t2());
    println!("tau = {}", tf.dead_time());
    println!("fit = {:.2}%", fit.fit_percent);
    println!("degenerate = {}", fit.degenerate);
    if let Some(name) = toml {
        println!();
        print!("{}", fit.to_toml_fragment(name));
    }
    Ok(0)
}

fn serve_options(bind: IpAddr, port: u16, ws_port: u16, speed: f64, out: Option<PathBuf>) -> ServeOptions {
    ServeOptions {
        tcp_addr: SocketAddr::new(bind, port),
        ws_addr: SocketAddr::new(bind, ws_port),
        speed,
        out_root: out,
        exit_at_end: false,
    }
}

fn shutdown_flag() -> Result<Arc<AtomicBool>, Failure> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    ctrlc::set_handler(move || f.store(true, Ordering::SeqCst))
        .map_err(|e| Failure::Runtime(format!("cannot install interrupt handler: {e}")))?;
    Ok(flag)
}

fn announce(tcp: SocketAddr, ws: SocketAddr) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "tcp {tcp}");
    let _ = writeln!(out, "ws {ws}");
    let _ = out.flush();
}

fn history_path(run: &str, out: Option<&Path>) -> Result<PathBuf, Failure> {
    let direct = PathBuf::from(run);
    let candidates = [
        direct.clone(),
        direct.join("history.log"),
        run_root(out.map(Path::to_path_buf)).join(run).join("history.log"),
    ];
    candidates
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| Failure::Usage(format!("no history log found for run {run}")))
}
