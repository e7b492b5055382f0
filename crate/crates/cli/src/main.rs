use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polgrad_cli::checks::{run_suite_with, SUITES};
use polgrad_cli::config::ExperimentConfig;
use polgrad_cli::presets::{run_preset, RUN_PRESETS};
use polgrad_cli::rate_fit::fit_trace;
use polgrad_cli::runner::run;
use polgrad_cli::trace::Trace;
use polgrad_cli::{CliError, CliResult, OUT_DIR_ENV};

/// Exact-oracle policy optimization experiments.
#[derive(Parser)]
#[command(name = "polgrad", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV trace.
    Run(RunArgs),
    /// Fit log(error) against the iteration over a window of a trace.
    RateFit(RateFitArgs),
    /// Run the certification suite; exits 0 iff every check passes.
    Check(CheckArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named run preset.
    #[arg(long, value_parser = RUN_PRESETS)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory for configs without an explicit output path.
    #[arg(long, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RateFitArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    /// Error column; defaults to the first known error column present.
    #[arg(long)]
    column: Option<String>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value = "all", value_parser = SUITES)]
    suite: String,
    /// Also write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn run_command(args: RunArgs) -> CliResult<()> {
    let configs = match (&args.source.config, &args.source.preset) {
        (Some(path), _) => vec![ExperimentConfig::load(path)?],
        (None, Some(name)) => run_preset(name)?,
        (None, None) => unreachable!("clap requires a source"),
    };
    for mut config in configs {
        if let (None, Some(dir)) = (&config.output, &args.out_dir) {
            config.output = Some(dir.join(format!("{}.csv", config.label())));
        }
        let path = run(&config)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn rate_fit_command(args: RateFitArgs) -> CliResult<()> {
    let trace = Trace::read(&args.trace)?;
    let fit = fit_trace(&trace, args.column.as_deref(), args.from, args.to)?;
    println!(
        "from={} to={} points={} slope={:e} intercept={:e} factor={} r_squared={}",
        fit.from, fit.to, fit.points, fit.slope, fit.intercept, fit.factor, fit.r_squared
    );
    Ok(())
}

fn check_command(args: CheckArgs) -> CliResult<bool> {
    let report = run_suite_with(&args.suite, |r| println!("{}", r.line()))?;
    let failed = report.results.iter().filter(|r| !r.passed).count();
    println!(
        "summary suite={} checks={} failed={failed} status={}",
        report.suite,
        report.results.len(),
        if report.passed { "pass" } else { "fail" }
    );
    if let Some(path) = args.json {
        std::fs::write(&path, report.to_json()).map_err(|source| CliError::Io { path, source })?;
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run_command(args).map(|_| true),
        Command::RateFit(args) => rate_fit_command(args).map(|_| true),
        Command::Check(args) => check_command(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("polgrad: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
