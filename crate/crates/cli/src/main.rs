//! `docom`: run and compare decentralized stochastic optimizers.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use docom_cli::config::{self, ConfigError, ExperimentConfig};
use docom_cli::{presets, runner, sweep};
use docom_core::{safe_step_sizes, theory_constants, MixingMatrix};

#[derive(Parser)]
#[command(
    name = "docom",
    about = "Decentralized stochastic optimization with compressed gossip",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment and optionally write its artifacts.
    Run(RunArgs),
    /// Run a preset x seed cross product in parallel and combine the results.
    Sweep(SweepArgs),
    /// Inspect the built-in experiment presets.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Print the spectral quantities of a mixing topology.
    Topology {
        #[command(subcommand)]
        action: TopologyAction,
    },
    /// Evaluate the convergence-guarantee step-size bounds.
    Stepsizes(StepsizesArgs),
}

#[derive(Subcommand)]
enum PresetAction {
    /// List the presets with a one-line description each.
    List,
    /// Print a preset as a config file.
    Show { name: String },
}

#[derive(Subcommand)]
enum TopologyAction {
    /// Compute rho, omega_bar, and degrees for a named topology.
    Inspect(TopologyArgs),
}

#[derive(Args)]
struct TopologyArgs {
    /// Topology family: ring or complete.
    #[arg(long, default_value = "ring")]
    topology: String,
    /// Number of agents.
    #[arg(long)]
    n: usize,
}

#[derive(Args)]
struct StepsizesArgs {
    /// Topology family: ring or complete.
    #[arg(long, default_value = "ring")]
    topology: String,
    /// Number of agents.
    #[arg(long)]
    n: usize,
    /// Compression contraction delta = k/d (1 for no compression).
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Smoothness constant of the objective.
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    /// Momentum weight the run will use (must be inside (0, 1)).
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Also evaluate the analysis constants at this descent step.
    #[arg(long)]
    eta: Option<f64>,
    /// Consensus step for the analysis constants (defaults to the bound).
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args, Default)]
struct RunArgs {
    /// Start from a named preset.
    #[arg(long)]
    preset: Option<String>,
    /// Layer a key = value config file over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    compressor: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Initial momentum batch: `full` or a draw count.
    #[arg(long)]
    b0: Option<String>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record metrics every this many iterations.
    #[arg(long)]
    stride: Option<u64>,
    /// Directory for resolved.cfg, metrics.csv, and the charts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rayon thread count (0 keeps the library default).
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall-clock timestamps (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
    /// Set any config key, repeatable; wins over the other flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Directory that receives one subdirectory per run.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated preset names (default: all of them).
    #[arg(long)]
    presets: Option<String>,
    /// Comma-separated seeds (default: 1).
    #[arg(long, default_value = "1")]
    seeds: String,
    /// Rayon thread count (0 keeps the library default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Override any config key in every run, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Preset { action } => cmd_preset(action),
        Command::Topology {
            action: TopologyAction::Inspect(args),
        } => cmd_topology(args),
        Command::Stepsizes(args) => cmd_stepsizes(args),
    }
}

fn fail(code: i32, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code.clamp(0, 255) as u8)
}

fn config_fail(e: ConfigError) -> ExitCode {
    fail(e.exit_code(), e)
}

fn parse_set(entries: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    entries
        .iter()
        .map(|entry| {
            entry
                .split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| ConfigError::Syntax {
                    line: 0,
                    text: entry.clone(),
                })
        })
        .collect()
}

fn init_workers(workers: usize) -> Result<(), String> {
    if workers == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| format!("could not size the thread pool: {e}"))
}

fn resolve_run_config(args: &RunArgs) -> Result<ExperimentConfig, ConfigError> {
    let mut layers: Vec<Vec<(String, String)>> = Vec::new();
    if let Some(name) = &args.preset {
        layers.push(
            presets::preset(name)
                .ok_or_else(|| ConfigError::UnknownKey(format!("preset `{name}`")))?,
        );
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        layers.push(config::parse_config_text(&text)?);
    }
    let mut flags: Vec<(String, String)> = Vec::new();
    let mut push = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            flags.push((key.to_string(), v));
        }
    };
    push("algo", args.algo.clone());
    push("iters", args.iters.map(|v| v.to_string()));
    push("n", args.n.map(|v| v.to_string()));
    push("topology", args.topology.clone());
    push("compressor", args.compressor.clone());
    push("eta", args.eta.map(|v| v.to_string()));
    push("gamma", args.gamma.map(|v| v.to_string()));
    push("beta", args.beta.map(|v| v.to_string()));
    push("b0", args.b0.clone());
    push("batch", args.batch.map(|v| v.to_string()));
    push("seed", args.seed.map(|v| v.to_string()));
    push("stride", args.stride.map(|v| v.to_string()));
    push("out", args.out.as_ref().map(|p| p.display().to_string()));
    push("workers", args.workers.map(|v| v.to_string()));
    if args.timing {
        flags.push(("timing".to_string(), "true".to_string()));
    }
    layers.push(flags);
    layers.push(parse_set(&args.set)?);
    config::resolve(&layers)
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let cfg = match resolve_run_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => return config_fail(e),
    };
    if let Err(e) = init_workers(cfg.workers) {
        return fail(1, e);
    }
    match runner::run_to_completion(&cfg) {
        Ok(records) => {
            println!("{}", runner::final_summary(&records));
            if let Some(dir) = &cfg.out {
                println!("artifacts written to {}", dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(1, e),
    }
}

fn cmd_sweep(args: SweepArgs) -> ExitCode {
    if let Err(e) = init_workers(args.workers) {
        return fail(1, e);
    }
    let preset_names: Vec<String> = match &args.presets {
        None => presets::PRESET_NAMES.iter().map(|s| s.to_string()).collect(),
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
    };
    let seeds: Result<Vec<u64>, _> = args
        .seeds
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect();
    let seeds = match seeds {
        Ok(s) => s,
        Err(_) => return fail(3, format!("`--seeds {}` is not a comma-separated list of integers", args.seeds)),
    };
    let overrides = match parse_set(&args.set) {
        Ok(o) => o,
        Err(e) => return config_fail(e),
    };
    match sweep::run_sweep(&preset_names, &seeds, &overrides, &args.out) {
        Ok(report) => {
            print!("{}", report.summary);
            println!("artifacts written to {}", args.out.display());
            if report.all_succeeded() {
                ExitCode::SUCCESS
            } else {
                fail(1, "at least one sweep member failed (see summary above)")
            }
        }
        Err(e) => fail(1, e),
    }
}

fn cmd_preset(action: PresetAction) -> ExitCode {
    match action {
        PresetAction::List => {
            print!("{}", presets::describe_all());
            ExitCode::SUCCESS
        }
        PresetAction::Show { name } => match presets::preset(&name) {
            Some(pairs) => {
                println!("# preset {name}");
                for (key, value) in pairs {
                    println!("{key} = {value}");
                }
                ExitCode::SUCCESS
            }
            None => fail(config::EXIT_UNKNOWN_KEY, format!("unknown preset `{name}`")),
        },
    }
}

fn build_topology(kind: &str, n: usize) -> Result<MixingMatrix, String> {
    match kind {
        "ring" => MixingMatrix::ring(n).map_err(|e| e.to_string()),
        "complete" => MixingMatrix::complete(n).map_err(|e| e.to_string()),
        other => Err(format!("`{other}` is not a topology (ring, complete)")),
    }
}

fn omega_warning(omega_bar: f64) -> Option<String> {
    (omega_bar < 1.0).then(|| {
        format!(
            "note: omega_bar = {omega_bar:.6} < 1; the step-size bounds were derived \
             for omega_bar >= 1 and are evaluated here with the computed value, \
             which makes them looser than the theory strictly covers"
        )
    })
}

fn cmd_topology(args: TopologyArgs) -> ExitCode {
    let w = match build_topology(&args.topology, args.n) {
        Ok(w) => w,
        Err(e) => return fail(3, e),
    };
    println!("topology = {}", args.topology);
    println!("n = {}", w.n());
    println!("rho = {:.12}", w.rho());
    println!("omega_bar = {:.12}", w.omega_bar());
    let degrees: Vec<usize> = (0..w.n()).map(|i| w.degree(i)).collect();
    println!("degrees = {degrees:?}");
    println!("sum_degrees = {}", w.sum_degrees());
    if w.is_degenerate() {
        println!("note: rho is numerically zero; consensus cannot contract on this graph");
    }
    if let Some(warning) = omega_warning(w.omega_bar()) {
        println!("{warning}");
    }
    ExitCode::SUCCESS
}

fn cmd_stepsizes(args: StepsizesArgs) -> ExitCode {
    let w = match build_topology(&args.topology, args.n) {
        Ok(w) => w,
        Err(e) => return fail(3, e),
    };
    let (rho, omega_bar) = (w.rho(), w.omega_bar());
    println!("topology = {} (n = {})", args.topology, args.n);
    println!("rho = {rho:.12}");
    println!("omega_bar = {omega_bar:.12}");
    println!("delta = {}", args.delta);
    println!("lipschitz = {}", args.l);
    if let Some(warning) = omega_warning(omega_bar) {
        println!("{warning}");
    }
    let safe = match safe_step_sizes(args.l, rho, args.delta, omega_bar, args.n, args.beta) {
        Ok(s) => s,
        Err(e) => return fail(3, e),
    };
    println!("gamma_max = {:.12e}", safe.gamma);
    println!("eta_max = {:.12e}", safe.eta);
    println!("beta_bar = {:.12e}", safe.beta_bar);
    println!("c_gbar = {:.12e}", safe.c_gbar);
    if args.eta.is_some() || args.gamma.is_some() {
        let eta = args.eta.unwrap_or(safe.eta);
        let gamma = args.gamma.unwrap_or(safe.gamma);
        match theory_constants(args.l, rho, args.delta, omega_bar, args.n, args.beta, eta, gamma) {
            Ok(c) => {
                println!("at eta = {eta:.6e}, gamma = {gamma:.6e}:");
                println!("  potential weights a = {:.6e}, b = {:.6e}, c = {:.6e}", c.a, c.b, c.c);
                println!("  c_sigma = {:.6e}", c.c_sigma);
                println!("  c_gbar = {:.6e}", c.c_gbar);
                println!("  beta_bar = {:.6e}", c.beta_bar);
            }
            Err(e) => return fail(3, e),
        }
    }
    ExitCode::SUCCESS
}
