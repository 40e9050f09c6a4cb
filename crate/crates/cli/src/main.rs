use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hymlab::{run_file, Overrides, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS};

#[derive(Parser)]
#[command(name = "hymlab", version, about = "Hermitian-Yang-Mills experiments on the Riemann sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        /// Output directory for the report and CSV files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the grid, e.g. `64x128`.
        #[arg(long)]
        grid: Option<String>,
    },
}

fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("HYMLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("HYMLAB_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let Command::Run { config, out, seed, grid } = cli.command;
    match run_file(&config, &out, &Overrides { seed, grid }) {
        Ok(output) => {
            for a in &output.report.assertions {
                println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            for p in &output.written {
                println!("wrote {}", p.display());
            }
            ExitCode::from(if output.report.passed { EXIT_PASS } else { EXIT_FAIL } as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
