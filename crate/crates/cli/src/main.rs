use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvqkd_sim::scenario::{
    bundled, bundled_all, emit_report, load_scenario, run_scenario, RunOptions, ScenarioConfig, ScenarioError,
};

const EXIT_RUNTIME: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NO_BLOCKS: u8 = 3;

#[derive(Parser)]
#[command(name = "cvqkd", version, about = "Drone-to-ground CV-QKD link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled fixture by name) and write reports.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "CVQKD_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// Simulate every pulse of each block instead of a subsample.
        #[arg(long)]
        exact_counts: bool,
    },
    /// List the bundled fixtures.
    List,
    /// Check a scenario file without running it.
    Validate { scenario: String },
}

fn resolve(arg: &str) -> Result<ScenarioConfig, ScenarioError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(cfg) = bundled(arg) {
            return Ok(cfg);
        }
    }
    load_scenario(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            println!("{:<20} {:>9} {:>10} {:>8}  description", "name", "loss_db", "range_m", "ref_kbps");
            for cfg in bundled_all() {
                let reference = cfg
                    .paper_reference
                    .as_ref()
                    .and_then(|r| r.key_rate_kbps)
                    .map_or_else(|| "-".to_string(), |v| v.to_string());
                println!(
                    "{:<20} {:>9} {:>10.1} {:>8}  {}",
                    cfg.name,
                    cfg.channel.loss_db,
                    cfg.geometry.slant_range_m(),
                    reference,
                    cfg.description
                );
            }
            ExitCode::SUCCESS
        }
        Command::Validate { scenario } => match resolve(&scenario) {
            Ok(cfg) => {
                println!("{}: ok ({})", scenario, cfg.name);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_INVALID)
            }
        },
        Command::Run {
            scenario,
            seed,
            out,
            exact_counts,
        } => {
            let cfg = match resolve(&scenario) {
                Ok(cfg) => cfg,
                Err(e @ ScenarioError::Io { .. }) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_INVALID);
                }
            };
            let report = run_scenario(&cfg, RunOptions { seed, exact_counts });
            let files = match emit_report(&report, &out) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            println!(
                "{}: {} blocks, mean key rate {:.3} kbps (seed {})",
                cfg.name,
                report.blocks.len(),
                report.mean_key_rate_kbps(),
                report.seed
            );
            for f in [&files.blocks, &files.pat, &files.summary] {
                println!("wrote {}", f.display());
            }
            if report.blocks.is_empty() {
                eprintln!("no blocks produced");
                return ExitCode::from(EXIT_NO_BLOCKS);
            }
            ExitCode::SUCCESS
        }
    }
}
