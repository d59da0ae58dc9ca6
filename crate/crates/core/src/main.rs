use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparse_comm::harness::{
    find_sample_complexity, run_trial_detailed, run_trials, separation_table, summarize, sweep,
    write_csv, write_separation_csv, ExperimentConfig, SearchConfig,
};
use sparse_comm::verify::suite::{run_all, SuiteConfig};
use sparse_comm::Result;

#[derive(Parser)]
#[command(version, about = "Sparse mean estimation under communication constraints")]
struct Cli {
    /// Overrides the master seed of every config.
    #[arg(long, global = true, env = "SPARSE_COMM_SEED")]
    seed: Option<u64>,
    /// Worker threads for trials.
    #[arg(long, global = true, env = "SPARSE_COMM_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and print it with its estimate as JSON.
    Estimate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run every trial at each budget of a grid and write CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated, strictly increasing user budgets.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<u64>,
        /// CSV path; defaults to the config's output, then stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Second protocol to sweep on the same grid for a separation table.
        #[arg(long, requires = "targets")]
        compare: Option<PathBuf>,
        /// Target errors for the separation table.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<f64>,
        #[arg(long, requires = "compare")]
        separation_output: Option<PathBuf>,
    },
    /// Smallest budget with success rate at least the target.
    FindN {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 1)]
        n_min: u64,
        #[arg(long, default_value_t = 1 << 32)]
        n_max: u64,
        #[arg(long, default_value_t = 0.9)]
        target: f64,
        #[arg(long, default_value_t = 1.25)]
        factor: f64,
        #[arg(long, default_value_t = 40)]
        min_trials: usize,
    },
    /// Run a sensing config with the recovery certificate enforced and write CSV.
    Sensing {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the exact verification checks. Exits with status 2 if any fails.
    Verify {
        #[arg(long, default_value_t = 12)]
        baranyai_max_s: usize,
        #[arg(long, default_value_t = 1000)]
        measure_change_cases: usize,
        #[arg(long, default_value_t = 200)]
        chisq_cases: usize,
    },
}

fn load(arg: &ConfigArg, cli: &Cli) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(&arg.config)?.with_overrides(cli.seed, cli.workers);
    cfg.validate()?;
    Ok(cfg)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Estimate { config, trial } => {
            let cfg = load(config, cli)?;
            let outcome = run_trial_detailed(&cfg, *trial)?;
            println!("{}", serde_json::to_string_pretty(&outcome)?);
        }
        Command::Sweep {
            config,
            grid,
            output,
            compare,
            targets,
            separation_output,
        } => {
            let cfg = load(config, cli)?;
            let out = sweep(&cfg, grid)?;
            let path = output.as_deref().or(cfg.output.as_deref());
            write_csv(sink(path)?, &out.rows, &out.summaries)?;
            if let Some(other) = compare {
                let other = load(&ConfigArg { config: other.clone() }, cli)?;
                let b = sweep(&other, grid)?;
                let table = separation_table(&b.summaries, &out.summaries, targets)?;
                write_separation_csv(sink(separation_output.as_deref())?, &table)?;
            }
        }
        Command::FindN {
            config,
            n_min,
            n_max,
            target,
            factor,
            min_trials,
        } => {
            let cfg = load(config, cli)?;
            let search = SearchConfig {
                n_min: *n_min,
                n_max: *n_max,
                target: *target,
                factor: *factor,
                min_trials: *min_trials,
            };
            let outcome = find_sample_complexity(&cfg, &search)?;
            println!("{}", serde_json::to_string_pretty(&outcome)?);
        }
        Command::Sensing { config, output } => {
            let cfg = load(config, cli)?;
            if !cfg.protocol.is_sensing() {
                return Err(sparse_comm::Error::InvalidParameter(format!(
                    "{} is not a sensing protocol",
                    cfg.protocol
                )));
            }
            let rows = run_trials(&cfg)?;
            let summary = summarize(&cfg, &rows);
            let path = output.as_deref().or(cfg.output.as_deref());
            write_csv(sink(path)?, &rows, std::slice::from_ref(&summary))?;
            eprintln!(
                "{}: budget {}, median error {:.4}, success rate {:.3}",
                cfg.protocol, summary.budget, summary.median_error, summary.success_rate
            );
        }
        Command::Verify {
            baranyai_max_s,
            measure_change_cases,
            chisq_cases,
        } => {
            let suite = SuiteConfig {
                seed: cli.seed.unwrap_or(SuiteConfig::default().seed),
                baranyai_max_s: *baranyai_max_s,
                measure_change_cases: *measure_change_cases,
                chisq_cases: *chisq_cases,
            };
            let mut ok = true;
            for r in run_all(&suite) {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{status} {:<20} cases={:<5} failures={:<4} worst={:.3e} {}",
                    r.name, r.cases, r.failures, r.worst, r.detail
                );
                ok &= r.passed();
            }
            if !ok {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
