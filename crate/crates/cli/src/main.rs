use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use overtake_core::grid::{replay, GridState};
use overtake_core::harness::{run_batch, run_single, write_jsonl, RunConfig};
use overtake_core::planner::{plan, plan_with_fallback, PlanError, PlannerMode, SearchLimits};
use overtake_core::promela::{emit_model, parse_trail};

/// Overtaking planner, simulator and Promela bridge.
#[derive(Parser)]
#[command(name = "overtake-mc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Final,
    #[value(name = "prepA")]
    PrepA,
    #[value(name = "prepB")]
    PrepB,
    /// Final, then the preparations goal picked by the AV's lane.
    Auto,
}

impl ModeArg {
    fn fixed(self) -> Option<PlannerMode> {
        match self {
            ModeArg::Final => Some(PlannerMode::Final),
            ModeArg::PrepA => Some(PlannerMode::PreparationsA),
            ModeArg::PrepB => Some(PlannerMode::PreparationsB),
            ModeArg::Auto => None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and print its metrics as JSON.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Event log (JSON lines); overrides output.events.
        #[arg(long)]
        events: Option<PathBuf>,
        /// World trace (JSON lines); overrides output.trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run independent seeded simulations and print a summary table.
    Batch {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 12)]
        runs: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Summary JSON; overrides output.metrics.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Plan from a snapshot file such as `lane=L; fv=14; ov=24; lcc=0`.
    Plan {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
        #[arg(long)]
        max_lane_changes: Option<u8>,
        #[arg(long)]
        depth: Option<u32>,
    },
    /// Write the Promela model for a snapshot.
    Emit {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Final)]
        mode: ModeArg,
        #[arg(long)]
        max_lane_changes: Option<u8>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Extract the action list from a Spin guided-simulation transcript.
    ParseTrail { file: PathBuf },
    /// Print the default configuration file.
    DefaultConfig,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_snapshot(path: &Path) -> Result<GridState> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.parse::<GridState>()?)
}

fn limits(max_lane_changes: Option<u8>, depth: Option<u32>) -> SearchLimits {
    let mut l = SearchLimits::default();
    if let Some(m) = max_lane_changes {
        l.max_lane_changes = m;
    }
    if let Some(d) = depth {
        l.depth_bound = d;
    }
    l
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            events,
            trace,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let out = run_single(&cfg)?;
            if let Some(p) = events.or(cfg.output.events.clone()) {
                write_jsonl(&p, &out.events).with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(p) = trace.or(cfg.output.trace.clone()) {
                write_jsonl(&p, &out.trace).with_context(|| format!("writing {}", p.display()))?;
            }
            let json = serde_json::to_string_pretty(&out.metrics)?;
            if let Some(p) = &cfg.output.metrics {
                std::fs::write(p, &json)?;
            }
            println!("{json}");
        }
        Command::Batch {
            config,
            runs,
            seed,
            json,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let summary = run_batch(&cfg, runs)?;
            print!("{}", summary.table());
            if let Some(p) = json.or(cfg.output.metrics.clone()) {
                std::fs::write(&p, serde_json::to_string_pretty(&summary)?)?;
            }
        }
        Command::Plan {
            snapshot,
            mode,
            max_lane_changes,
            depth,
        } => {
            let snap = load_snapshot(&snapshot)?;
            let limits = limits(max_lane_changes, depth);
            let result = match mode.fixed() {
                Some(m) => plan(&snap, m, &limits),
                None => plan_with_fallback(&snap, &limits),
            };
            match result {
                Ok(p) => {
                    println!("mode: {}", p.mode);
                    println!("states expanded: {}", p.states_expanded);
                    println!("search time: {:?}", p.search_time);
                    let r = replay(&limits.model(), &snap, &p.actions)?;
                    println!("{:>4}  {:<16} {}", 0, "", r.states[0]);
                    for (i, (a, s)) in p.actions.iter().zip(&r.states[1..]).enumerate() {
                        println!("{:>4}  {:<16} {}", i + 1, a.name(), s);
                    }
                }
                Err(PlanError::NoPath(reason)) => {
                    println!("no plan: {reason:?}");
                    return Ok(ExitCode::from(2));
                }
                Err(e) => bail!(e),
            }
        }
        Command::Emit {
            snapshot,
            mode,
            max_lane_changes,
            output,
        } => {
            let Some(mode) = mode.fixed() else {
                bail!("emit needs a fixed mode (final, prepA or prepB)");
            };
            let snap = load_snapshot(&snapshot)?;
            let text = emit_model(&snap, mode, &limits(max_lane_changes, None));
            match output {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
        }
        Command::ParseTrail { file } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            for action in parse_trail(&text)? {
                println!("{}", action.name());
            }
        }
        Command::DefaultConfig => print!("{}", RunConfig::default().to_toml_string()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("OVERTAKE_MC_LOG").unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
