use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use multidiv_cli::{load, run, ConfigError, Overrides, RunReport};

#[derive(Parser)]
#[command(name = "multidiv", version, about = "Divergence identities and surface-measure checks driven by a JSON config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task in the config.
    Run(Flags),
    /// Pointwise identity suites and the weak form.
    Check(Flags),
    /// Divergence components of a field on a grid.
    Div(Flags),
    /// Weak-form residual of a candidate divergence.
    Weakdiv(Flags),
    /// Tube measures and the surface measure.
    Surface(Flags),
    /// Tube averages of a function.
    Lemma3(Flags),
    /// Surface divergence against the tube limit.
    Theorem2(Flags),
    /// Restriction of the lifted divergence for closed α.
    Restriction(Flags),
    /// Tube limit for a wedge of tangent fields.
    Corollary(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    config: PathBuf,
    /// Seed for random configurations; overrides the config.
    #[arg(long, env = "MULTIDIV_SEED")]
    seed: Option<u64>,
    /// Sample points per pointwise sweep.
    #[arg(long)]
    points: Option<usize>,
    /// Relative tolerance for pointwise identities.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock time per task.
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (only, flags) = match cli.command {
        Command::Run(f) => (None, f),
        Command::Check(f) => (Some("check"), f),
        Command::Div(f) => (Some("div"), f),
        Command::Weakdiv(f) => (Some("weakdiv"), f),
        Command::Surface(f) => (Some("surface"), f),
        Command::Lemma3(f) => (Some("lemma3"), f),
        Command::Theorem2(f) => (Some("theorem2"), f),
        Command::Restriction(f) => (Some("restriction"), f),
        Command::Corollary(f) => (Some("corollary"), f),
    };
    match execute(only, &flags) {
        Ok(report) => {
            summarize(&report);
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(only: Option<&str>, flags: &Flags) -> Result<RunReport, ConfigError> {
    let config = load(&flags.config)?;
    let overrides = Overrides {
        seed: flags.seed,
        points: flags.points,
        tolerance: flags.tol,
        only: only.map(str::to_string),
        timings: flags.timings,
    };
    let report = run(config, &overrides)?;
    let text = match flags.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    match &flags.out {
        Some(path) => std::fs::write(path, text).map_err(|e| ConfigError(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(report)
}

fn summarize(report: &RunReport) {
    for t in &report.tasks {
        let verdict = if t.passed { "pass" } else { "FAIL" };
        match &t.error {
            Some(e) => eprintln!("task {} {}: {verdict} ({e})", t.index, t.task),
            None => eprintln!("task {} {}: {verdict}", t.index, t.task),
        }
    }
}
