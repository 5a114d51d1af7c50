use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gala_core::harness::{compare_bounds, parse_config, run_experiment, spectra, sweep};
use gala_core::GalaError;

#[derive(Parser)]
#[command(name = "gala", version, about = "Gossip-based actor-learner experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured grid of learner counts, modes and tau values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a run's bounds.csv files and write bound_report.json.
    Bounds {
        #[arg(long)]
        run: PathBuf,
    },
    /// Print beta estimates, stationary distributions and stochasticity checks.
    Spectra {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_VIOLATION: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), GalaError> {
    let s = serde_json::to_string_pretty(v).map_err(|e| GalaError::Numerical(e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{s}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(GalaError::Io { path: "stdout".into(), source: e }),
        _ => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<bool, GalaError> {
    match cli.command {
        Command::Run { config, seed_override, out } => {
            let mut cfg = parse_config(&config)?;
            if let Some(s) = seed_override {
                cfg.seeds = vec![s];
            }
            let summary = run_experiment(&cfg, out.as_deref())?;
            for s in &summary.seeds {
                let eval = s.final_eval.map_or("-".to_string(), |v| format!("{v:.4}"));
                let ratio = s.bounds.as_ref().map_or("-".to_string(), |b| format!("{:.4}", b.max_ratio_geometric));
                let status = if s.passed { "ok" } else { "FAILED" };
                println!("seed {:>4}  eval {eval:>10}  max ratio {ratio:>8}  violations {}  {status}", s.seed, s.violations);
            }
            if let (Some(m), Some(se)) = (summary.mean_final_eval, summary.stderr_final_eval) {
                println!("mean eval {m:.4} +- {se:.4}");
            }
            if let Some(r) = summary.success_rate {
                println!("success rate {r:.3}");
            }
            Ok(summary.passed)
        }
        Command::Sweep { config, out } => {
            let cfg = parse_config(&config)?;
            let cells = sweep(&cfg, out.as_deref())?;
            for c in &cells {
                let rate = c
                    .summary
                    .as_ref()
                    .and_then(|s| s.success_rate)
                    .map_or("-".to_string(), |r| format!("{r:.3}"));
                println!("n={:<3} {:<13} tau={:<4} success {rate}", c.learners, c.mode.as_str(), format!("{:?}", c.tau));
            }
            Ok(cells.iter().all(|c| !c.failed()))
        }
        Command::Bounds { run } => {
            let reports = compare_bounds(&run)?;
            let mut clean = true;
            for r in &reports {
                println!(
                    "{}: rows {} max ratio {:.6} mean ratio {:.6} violations {}{}",
                    r.source.display(),
                    r.rows,
                    r.geometric.max_ratio,
                    r.geometric.mean_ratio,
                    r.violations,
                    r.degenerate.as_ref().map_or(String::new(), |d| format!(" ({d})"))
                );
                clean &= r.violations == 0;
            }
            Ok(clean)
        }
        Command::Spectra { config } => {
            let cfg = parse_config(&config)?;
            print_json(&spectra(&cfg)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GALA_LOG", "info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION),
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
