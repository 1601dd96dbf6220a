use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use guardrail_cli::config::ScenarioConfig;
use guardrail_cli::runner::run_to_files;
use guardrail_cli::verify::{run_suite, Suite};

/// Seed resolution order: flag, then GUARDRAIL_SEED, then the config/default.
const SEED_ENV: &str = "GUARDRAIL_SEED";

#[derive(Parser)]
#[command(
    name = "guardrail",
    version,
    about = "Simulate and verify human-safeguarded algorithmic decisions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and emit results.csv plus manifest.toml.
    Run {
        /// Path to the TOML scenario config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed (wins over GUARDRAIL_SEED).
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's replication count.
        #[arg(long)]
        replications: Option<u64>,
        /// Output directory (default: config's `output`, else `results`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; affects speed only, never output bytes.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the acceptance suite and print one line per criterion.
    Verify {
        /// Which criteria to run: all, framework, competition, misspec, contamination.
        suite: String,
        /// Suite seed (wins over GUARDRAIL_SEED; default 42).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; affects speed only.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn env_seed() -> Option<u64> {
    std::env::var(SEED_ENV).ok().and_then(|s| s.parse().ok())
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, replications, out, threads } => {
            let mut parsed = match ScenarioConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::FAILURE;
                }
            };
            if let Some(seed) = seed.or_else(env_seed) {
                parsed.seed = seed;
            }
            if let Some(reps) = replications {
                parsed.replications = reps;
            }
            if parsed.replications < 1 {
                eprintln!("config error: replications must be >= 1");
                return ExitCode::FAILURE;
            }
            let out_dir = out
                .or_else(|| parsed.output.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            match with_threads(threads, || run_to_files(&parsed, &out_dir)) {
                Ok((csv, manifest)) => {
                    println!("scenario: {} (seed {})", parsed.scenario, parsed.seed);
                    println!("wrote {}", csv.display());
                    println!("wrote {}", manifest.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Verify { suite, seed, threads } => {
            let Some(suite) = Suite::parse(&suite) else {
                eprintln!(
                    "unknown suite '{suite}'; expected one of: all, framework, competition, misspec, contamination"
                );
                return ExitCode::FAILURE;
            };
            let seed = seed.or_else(env_seed).unwrap_or(42);
            let results = with_threads(threads, || run_suite(suite, seed));
            let mut all_passed = true;
            for result in &results {
                println!("{}", result.line());
                all_passed &= result.passed;
            }
            let passed = results.iter().filter(|r| r.passed).count();
            println!("{passed}/{} criteria passed (seed {seed})", results.len());
            if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
