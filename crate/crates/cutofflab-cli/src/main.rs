use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cutofflab",
    about = "Finite-chain mixing diagnostics: reports, profiles, sweeps, verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a full analysis report for one configured model.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write distance/entropy/varentropy curves over a time grid.
    Profile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t0: f64,
        #[arg(long)]
        t1: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate mixing times across a family of growing models.
    Sweep {
        #[arg(long)]
        family: String,
        /// Comma-separated sizes, e.g. 6,8,10
        #[arg(long)]
        sizes: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every applicable inequality check and report PASS/FAIL lines.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn init_threads() {
    if let Ok(raw) = std::env::var("CUTOFFLAB_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("ignoring CUTOFFLAB_THREADS={raw:?} (need a positive integer)"),
        }
    }
}

fn parse_sizes(raw: &str) -> Option<Vec<usize>> {
    raw.split(',')
        .map(|s| s.trim().parse::<usize>().ok())
        .collect()
}

fn main() {
    init_threads();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Analyze { config, out } => cutofflab_cli::cmd_analyze(&config, &out),
        Command::Profile {
            config,
            t0,
            t1,
            steps,
            out,
        } => cutofflab_cli::cmd_profile(&config, t0, t1, steps, &out),
        Command::Sweep {
            family,
            sizes,
            epsilon,
            out,
        } => match parse_sizes(&sizes) {
            Some(list) => cutofflab_cli::cmd_sweep(&family, &list, epsilon, &out),
            None => {
                eprintln!("sweep: cannot parse size list {sizes:?}");
                cutofflab_cli::EXIT_INPUT
            }
        },
        Command::Verify { config } => cutofflab_cli::cmd_verify(&config),
    };
    std::process::exit(code);
}
