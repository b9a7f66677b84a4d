use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use degell_cli::config::Command;
use degell_cli::{load_config, report, run};

#[derive(Parser)]
#[command(
    name = "degell",
    version,
    about = "Degenerate elliptic solver, analysis studies and follower games"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap the grid size at N interior nodes per direction.
    #[arg(long, value_name = "N")]
    level_override: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the boundary-value problem once.
    Solve(Common),
    /// Solve and evaluate weak-form residuals.
    Verify(Common),
    /// Run a convergence / estimate / weight study.
    Study(Common),
    /// Compute and certify a follower equilibrium.
    Game(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match try_main() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn try_main() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    let (expected, args) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Study(a) => (Command::Study, a),
        Cmd::Game(a) => (Command::Game, a),
    };
    let mut cfg =
        load_config(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if cfg.command != expected {
        bail!(
            "{} is a `{:?}` configuration",
            args.config.display(),
            cfg.command
        );
    }
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(n) = args.level_override {
        cfg.apply_level_override(n);
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    let out = run(&cfg)?;
    let path = report::write_outputs(&cfg.output_dir, &out.report, &out.tables)?;
    log::info!("wrote {}", path.display());
    if let Some(v) = out.report.verdict {
        println!("verdict: {v:?}");
    }
    Ok(out.report.exit_code())
}
