//! `pqroute` command-line entry point.
//!
//! Exit status: 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pqroute::config::{parse_variant, ConfigError, Overrides, ScenarioConfig};
use pqroute::formats::{self, FormatError};
use pqroute::gateway::{self, Gateway, GatewayConfig, SessionEvent};
use pqroute::runner::{self, PreparedRun};
use pqroute_core::operator::Variant;
use pqroute_core::sim::{generate_synthetic_leaks, synthetic_districts, LeakGenConfig, OperatorMode};

#[derive(Debug, Parser)]
#[command(name = "pqroute", version, about = "Predictive Q-routing with an operator in the loop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its report.
    Run(RunArgs),
    /// Write a synthetic leak history as CSV.
    Generate(GenerateArgs),
    /// Re-run a scenario with a fixed intervention script or a session event log.
    Replay(ReplayArgs),
    /// Export the metric series of an existing report as CSV.
    Metrics(MetricsArgs),
    /// Start the session gateway.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct CommonRun {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = "PQROUTE_OUT_DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// plain, reward_shaping or action_pruning.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    max_windows: Option<usize>,
    /// Reset the learner tables at every window.
    #[arg(long)]
    cold_start: bool,
    /// Also write qopt_delta.csv, path_cost.csv and label_counts.csv.
    #[arg(long)]
    csv: bool,
}

impl CommonRun {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            variant: self.variant,
            max_windows: self.max_windows,
            cold_start: self.cold_start.then_some(true),
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonRun,
    /// Comma-separated seeds run in parallel, each into `<out>/seed-<n>`.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    sweep: Vec<u64>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1816)]
    count: usize,
    #[arg(long, default_value_t = 119)]
    nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = LeakGenConfig::default().propensity_shape)]
    propensity_shape: f64,
    #[arg(long, default_value_t = LeakGenConfig::default().repair_mean_hours)]
    repair_mean_hours: f64,
    #[arg(long, default_value_t = LeakGenConfig::default().cost_mean)]
    cost_mean: f64,
    /// Events CSV; defaults to `leaks.csv` in the output directory.
    #[arg(long)]
    events_out: Option<PathBuf>,
    #[arg(long, env = "PQROUTE_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Also write a district-grid topology with `--nodes` nodes.
    #[arg(long)]
    topology_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[command(flatten)]
    common: CommonRun,
    /// Intervention script (JSON).
    #[arg(long, conflicts_with = "event_log", required_unless_present = "event_log")]
    script: Option<PathBuf>,
    /// Gateway session event log (NDJSON).
    #[arg(long)]
    event_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Report directory or `report.ndjson` file.
    #[arg(long)]
    report: PathBuf,
    /// Defaults to the report's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory relative scenario paths resolve against.
    #[arg(long, default_value = ".")]
    base_dir: PathBuf,
    /// Where per-session event logs are written.
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl ToString) -> Self {
        Failure { code: 2, message: e.to_string() }
    }

    fn runtime(e: impl ToString) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run_one(prepared: &PreparedRun, out: &Path, csv: bool) -> Result<(), Failure> {
    let output = runner::execute(prepared).map_err(Failure::runtime)?;
    runner::write_outputs(out, &output, csv).map_err(Failure::runtime)?;
    let s = &output.report.summary;
    println!(
        "{}: {} windows, final qopt_delta {}, {} infeasible, {:.0} ms",
        out.display(),
        s.windows,
        s.final_qopt_delta.map_or("-".into(), |d| format!("{d:.6}")),
        s.infeasible_windows,
        output.timing.elapsed_ms
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let (cfg, base) = ScenarioConfig::load(&a.common.config)?;
    if a.sweep.is_empty() {
        let prepared = PreparedRun::new(cfg, &base, &a.common.overrides())?;
        return run_one(&prepared, &a.common.out, a.common.csv);
    }
    let runs = a
        .sweep
        .iter()
        .map(|&seed| {
            let o = Overrides { seed: Some(seed), ..a.common.overrides() };
            Ok((seed, PreparedRun::new(cfg.clone(), &base, &o)?))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let results: Vec<Result<(), Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|(seed, prepared)| {
                let out = a.common.out.join(format!("seed-{seed}"));
                let csv = a.common.csv;
                scope.spawn(move || run_one(prepared, &out, csv))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Failure::runtime("worker panicked")))).collect()
    });
    results.into_iter().collect()
}

/// Divisor pair of `n` closest to square, rows <= cols.
fn grid_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt() as usize;
    while rows > 1 && !n.is_multiple_of(rows) {
        rows -= 1;
    }
    (rows.max(1), n / rows.max(1))
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let cfg = LeakGenConfig {
        count: a.count,
        propensity_shape: a.propensity_shape,
        repair_mean_hours: a.repair_mean_hours,
        cost_mean: a.cost_mean,
    };
    let events = generate_synthetic_leaks(a.nodes, &cfg, a.seed).map_err(Failure::config)?;
    let path = a.events_out.unwrap_or_else(|| a.out.join("leaks.csv"));
    create_parent(&path)?;
    formats::write_leaks_file(&path, &events).map_err(Failure::runtime)?;
    println!("{}: {} events over {} nodes", path.display(), events.len(), a.nodes);
    if let Some(topo) = a.topology_out {
        let (rows, cols) = grid_shape(a.nodes);
        let g = synthetic_districts(rows, cols, 0.3, a.seed).map_err(Failure::config)?;
        create_parent(&topo)?;
        formats::write_topology(&topo, &g).map_err(Failure::runtime)?;
        println!("{}: {rows}x{cols} districts, {} directed edges", topo.display(), g.edge_count());
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir)
            .map_err(|e| Failure::runtime(FormatError::Io { path: dir.to_path_buf(), source: e })),
        _ => Ok(()),
    }
}

fn cmd_replay(a: ReplayArgs) -> Result<(), Failure> {
    let (mut cfg, base) = ScenarioConfig::load(&a.common.config)?;
    let script_path = match (&a.script, &a.event_log) {
        (Some(s), _) => s.clone(),
        (None, Some(log)) => {
            let events = read_event_log(log)?;
            let entries = gateway::script_from_events(&events);
            let path = a.common.out.join("replay-script.json");
            std::fs::create_dir_all(&a.common.out).map_err(Failure::runtime)?;
            formats::write_json(&path, &formats::ScriptDoc { entries }).map_err(Failure::runtime)?;
            std::path::absolute(&path).map_err(Failure::runtime)?
        }
        (None, None) => unreachable!("clap requires one"),
    };
    cfg.operator.mode = OperatorMode::Scripted;
    cfg.operator.script = Some(std::path::absolute(&script_path).map_err(Failure::runtime)?);
    let mut prepared = PreparedRun::new(cfg, &base, &a.common.overrides())?;
    prepared.overrides.push(format!("replay={}", script_path.display()));
    run_one(&prepared, &a.common.out, a.common.csv)
}

fn read_event_log(path: &Path) -> Result<Vec<SessionEvent>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(FormatError::Io { path: path.to_path_buf(), source: e }))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Failure::config(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn cmd_metrics(a: MetricsArgs) -> Result<(), Failure> {
    let windows = formats::read_report_windows(&a.report).map_err(Failure::config)?;
    if windows.is_empty() {
        return Err(Failure::config(format!("{}: report has no windows", a.report.display())));
    }
    let out = a.out.unwrap_or_else(|| {
        if a.report.is_dir() {
            a.report.clone()
        } else {
            a.report.parent().map(Path::to_path_buf).unwrap_or_default()
        }
    });
    std::fs::create_dir_all(&out).map_err(Failure::runtime)?;
    for p in formats::write_metric_series(&out, &windows).map_err(Failure::runtime)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<(), Failure> {
    if let Some(dir) = &a.log_dir {
        std::fs::create_dir_all(dir).map_err(Failure::config)?;
    }
    let rt = tokio::runtime::Runtime::new().map_err(Failure::runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr).await.map_err(Failure::config)?;
        println!("listening on http://{}", listener.local_addr().map_err(Failure::runtime)?);
        let gw = Gateway::new(GatewayConfig { base_dir: a.base_dir, log_dir: a.log_dir });
        gateway::serve(listener, gw).await.map_err(Failure::runtime)
    })
}
