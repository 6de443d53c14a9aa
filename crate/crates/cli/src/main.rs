//! `udrive`: lint and format preference programs, run them in the simulator,
//! score traces for rule compliance, benchmark the parser and serve live runs.
//!
//! Exit codes: 0 success or pass, 1 diagnostics or a failed run, 2 operational
//! errors (unreadable files, bad scenarios, usage errors).

mod commands;

use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "udrive", version, about = "Driving-preference programs: lint, run, replay, bench, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate programs; directories are searched for `.udrv` files.
    Lint {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Print programs in canonical layout.
    Fmt {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Exit 1 if any file is not already formatted.
        #[arg(long, conflicts_with = "write")]
        check: bool,
        /// Rewrite files in place.
        #[arg(long)]
        write: bool,
        /// Allow --write on files with comments, which formatting removes.
        #[arg(long, requires = "write")]
        drop_comments: bool,
    },
    /// Simulate a scenario and score the trace.
    Run(RunArgs),
    /// Re-score a stored trace.
    Replay {
        trace: PathBuf,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Time parsing of synthetic programs.
    Bench {
        #[arg(long, default_value_t = 20)]
        max_rules: usize,
        #[arg(long, default_value_t = 3)]
        actions_per_rule: usize,
        #[arg(long, default_value_t = 10)]
        max_actions: usize,
        #[arg(long, default_value_t = 200)]
        repetitions: usize,
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario live over WebSocket at `/ws`.
    Serve {
        #[command(flatten)]
        input: SimInput,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        pace: f64,
        /// Wait for a client to send `resume` before the first tick.
        #[arg(long)]
        start_paused: bool,
        /// Pause after recording this tick (repeatable).
        #[arg(long = "pause-at", value_name = "TICK")]
        pause_at: Vec<u64>,
        /// Serve this directory at `/`, e.g. the console bundle.
        #[arg(long = "static", value_name = "DIR")]
        static_dir: Option<PathBuf>,
        /// Write trace.jsonl, compliance.json and summary.txt here at the end.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Inputs shared by `run` and `serve`.
#[derive(Debug, Args)]
struct SimInput {
    /// Scenario file (YAML or JSON).
    #[arg(long, short)]
    scenario: PathBuf,
    /// Program file; repeat to combine several, rules keep file order.
    #[arg(long, short)]
    program: Vec<PathBuf>,
    /// Stop after this many ticks (default: the scenario's limit).
    #[arg(long)]
    max_ticks: Option<u64>,
    /// Baseline parameter file; overrides $UDRIVE_DEFAULTS.
    #[arg(long)]
    defaults: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    input: SimInput,
    /// Online commands as JSON lines of {"tick": n, "command": "..."}.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "udrive-out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Lint { paths } => commands::lint(&paths),
        Command::Fmt { paths, check, write, drop_comments } => commands::fmt(&paths, check, write, drop_comments),
        Command::Run(a) => commands::run(&a.input.into(), a.script.as_deref(), &a.out),
        Command::Replay { trace, json } => commands::replay(&trace, json),
        Command::Bench { max_rules, actions_per_rule, max_actions, repetitions, json } => {
            let cfg = udrive_core::bench::BenchConfig { max_rules, actions_per_rule, max_actions, repetitions };
            commands::bench(&cfg, json)
        }
        Command::Serve { input, host, port, pace, start_paused, pause_at, static_dir, out } => {
            let opts = commands::ServeOptions {
                addr: (host, port).into(),
                pace,
                start_paused,
                pause_at: pause_at.into_iter().collect(),
                static_dir,
                out,
            };
            commands::serve(&input.into(), opts)
        }
    };
    ExitCode::from(code as u8)
}

impl From<SimInput> for commands::SimFiles {
    fn from(s: SimInput) -> Self {
        commands::SimFiles { scenario: s.scenario, programs: s.program, max_ticks: s.max_ticks, defaults: s.defaults }
    }
}
