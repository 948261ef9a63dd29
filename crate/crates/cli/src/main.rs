use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hkconf::commands::{self, Context};
use hkconf::config::{RunConfig, OUT_ENV};
use hkconf::CliError;

#[derive(Parser)]
#[command(name = "hkconf", version, about = "Heat-kernel embeddings, conformal defects and conformal perturbation")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides HKCONF_OUT and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random probes (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Dump eigenpairs to eigenpairs/<model>.jsonl.
    Spectrum,
    /// Conformal defect over t_grid, to tables/defect_scan.csv.
    DefectScan,
    /// Fixed-point solve for each k, to tables/iterations.csv.
    Perturb,
    /// Run the acceptance suite.
    Verify,
    /// Singular values and limit blocks of gram(P) and gram(P_c) at random points.
    Gram,
    /// Hölder-norm sweeps of Ψ_t and E on a flat model.
    Scaling,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let out = cli
        .out
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| config.output.clone());
    let ctx = Context { config, out };
    let report = match cli.command {
        Command::Spectrum => commands::spectrum(&ctx)?,
        Command::DefectScan => commands::defect_scan_cmd(&ctx)?,
        Command::Perturb => commands::perturb(&ctx)?,
        Command::Verify => commands::verify(&ctx)?,
        Command::Gram => commands::gram_cmd(&ctx)?,
        Command::Scaling => commands::scaling(&ctx)?,
    };
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("check failed: {}", c.describe());
    }
    eprintln!("report written to {}", ctx.out.join("report.json").display());
    Ok(report.pass || !matches!(cli.command, Command::Verify))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("hkconf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
