use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gibbsflow::experiments::CATALOG;
use gibbsflow::runner::{self, RunSummary};
use gibbsflow::scenario::ScenarioConfig;

/// Exit codes: 0 all properties PASS, 1 some FAIL (or replay mismatch),
/// 2 invalid scenario, 3 runtime or I/O error.
#[derive(Parser, Debug)]
#[command(name = "gibbsflow", version = runner::VERSION, about = "Birth-and-death dynamics experiments")]
struct Cli {
    /// Root seed; overrides GIBBSFLOW_SEED and the scenario file.
    #[arg(long, global = true, value_parser = parse_seed)]
    seed: Option<u64>,
    /// Worker threads; overrides GIBBSFLOW_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output root; overrides the scenario's output_dir (default `runs`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario file.
    Run { config: PathBuf },
    /// List the experiment kinds.
    ListExperiments,
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
    /// Re-run a finished run from its manifest and compare results.csv.
    Replay { run_dir: PathBuf },
}

fn parse_seed(raw: &str) -> Result<u64, String> {
    runner::parse_seed(raw).map_err(|e| e.to_string())
}

fn init_threads(flag: Option<usize>) -> anyhow::Result<()> {
    let env = std::env::var("GIBBSFLOW_THREADS").ok().filter(|s| !s.trim().is_empty());
    let n = match (flag, env) {
        (Some(n), _) => n,
        (None, Some(raw)) => raw.trim().parse().map_err(|_| anyhow::anyhow!("GIBBSFLOW_THREADS={raw:?} is not a count"))?,
        (None, None) => 0,
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn report(summary: &RunSummary) {
    for v in &summary.outcome.verdicts {
        println!("{} {:<32} {}", if v.pass { "PASS" } else { "FAIL" }, v.property, v.detail);
    }
    for note in &summary.outcome.notes {
        println!("note {note}");
    }
    println!("run directory: {}", summary.dir.display());
}

fn load(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    ScenarioConfig::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::ListExperiments => {
            for (name, about) in CATALOG {
                println!("{name:<16} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("{}: valid {} scenario", config.display(), cfg.experiment.kind());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config } => {
            let cfg = match load(&config) {
                Ok(cfg) => cfg,
                Err(code) => return code,
            };
            let env_seed = std::env::var("GIBBSFLOW_SEED").ok();
            let (seed, source) = match runner::resolve_seed(cli.seed, env_seed.as_deref(), &cfg) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            let root = cli.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
            match runner::run(&cfg, seed, source, &root) {
                Ok(summary) => {
                    report(&summary);
                    if summary.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(3)
                }
            }
        }
        Command::Replay { run_dir } => match runner::replay(&run_dir) {
            Ok((summary, identical)) => {
                report(&summary);
                println!("results.csv {}", if identical { "identical" } else { "DIFFERS" });
                if identical && summary.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(3)
            }
        },
    }
}
