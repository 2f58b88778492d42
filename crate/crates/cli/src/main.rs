use clap::Parser;
use ipcc_cli::config::Overrides;
use std::path::PathBuf;
use std::process::ExitCode;

/// Log odds ratios from controls, incident and prevalent cases.
///
/// Exit status: 0 on success, 1 on configuration or input errors,
/// 2 when a fit or simulation did not converge.
#[derive(Parser, Debug)]
#[command(name = "ipcc", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for both the simulation and the optimizer restarts.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Number of simulation replications.
    #[arg(long)]
    replications: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides { out: args.out, seed: args.seed, threads: args.threads, replications: args.replications };
    match ipcc_cli::run(&args.config, &overrides) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
