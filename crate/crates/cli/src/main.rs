//! `ddro run|oracle|sweep|validate <config.json> [--out DIR] [--quiet]`
//!
//! Exit codes: 0 converged or success, 1 `max_steps` or `diverged`,
//! 2 config error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddro_core::{run_experiment, Error, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "ddro", version, about = "Distributed data-driven DRO experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the distributed saddle-point dynamics.
    Run(Common),
    /// Solve the pooled problem with the centralized solver.
    Oracle(Common),
    /// Cooperation-versus-isolation sweep over group sizes.
    Sweep(Common),
    /// Validation loss of a given decision.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output root; artifacts go to DIR/{run_id}/.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Only errors on stderr, no summary line on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Run(a) => (Mode::Run, a),
        Command::Oracle(a) => (Mode::Oracle, a),
        Command::Sweep(a) => (Mode::Sweep, a),
        Command::Validate(a) => (Mode::Validate, a),
    };
    let level = if args.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match execute(mode, &args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}

fn execute(mode: Mode, args: &Common) -> Result<u8, Error> {
    let cfg = ExperimentConfig::from_path(&args.config).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read {}: {io}", args.config.display())),
        other => other,
    })?;
    if let Some(m) = cfg.mode {
        if m != mode {
            log::warn!("config mode {} overridden by subcommand {}", m.as_str(), mode.as_str());
        }
    }
    let run_id = cfg.run_id.clone().unwrap_or_else(|| default_run_id(&args.config));
    let report = run_experiment(&cfg, mode, &run_id, &args.out)?;
    log::info!("artifacts in {}", report.out_dir.display());
    for w in &report.summary.warnings {
        log::warn!("{w}");
    }
    if !args.quiet {
        println!("{}", serde_json::to_string(&report.summary)?);
    }
    Ok(report.exit_code() as u8)
}

fn default_run_id(config: &Path) -> String {
    config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}
