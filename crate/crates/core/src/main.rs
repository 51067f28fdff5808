use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::json;

use degenflow::config::{parse_config_at, Command};
use degenflow::experiment::{run_command, status_for_error, RunContext};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Eigen,
    Solve,
    BlowupScan,
    VerifyExact,
    WeightsCheck,
    DecayFit,
}

impl Cmd {
    fn command(self) -> Command {
        match self {
            Cmd::Eigen => Command::Eigen,
            Cmd::Solve => Command::Solve,
            Cmd::BlowupScan => Command::BlowupScan,
            Cmd::VerifyExact => Command::VerifyExact,
            Cmd::WeightsCheck => Command::WeightsCheck,
            Cmd::DecayFit => Command::DecayFit,
        }
    }
}

/// Weighted degenerate diffusion experiments.
#[derive(Debug, Parser)]
#[command(name = "degenflow", version)]
struct Args {
    /// Command to run; must match `command` in the config file.
    command: Cmd,
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Maximum number of concurrent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(code: u8, kind: &str, message: String) -> ExitCode {
    let report = json!({ "exit_code": code, "error": { "kind": kind, "message": message } });
    eprintln!("{report}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(2, "io", format!("cannot read {}: {e}", args.config.display())),
    };
    let base = args.config.parent().map(|p| p.to_path_buf());
    let cfg = match parse_config_at(&text, base.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(status_for_error(&e).code() as u8, "config", e.to_string()),
    };
    if cfg.command != args.command.command() {
        return fail(
            2,
            "config",
            format!(
                "command line asks for '{}' but the config says '{}'",
                args.command.command().name(),
                cfg.command.name()
            ),
        );
    }
    let out_dir = args.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let report = run_command(&cfg, &RunContext { jobs: args.jobs.max(1), out_dir });
    println!("{}", serde_json::to_string_pretty(&report.summary).unwrap_or_default());
    ExitCode::from(report.status.code() as u8)
}
