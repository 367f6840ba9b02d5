use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use swarmstore::scenario::{bundled, catalog, parse_scenario, parse_scenario_str, Scenario};
use swarmstore::sweep::{compare_policies, read_csv, run_sweep, write_records, SummaryRow};
use swarmstore::{ConfigError, Error, PolicyKind, Result};

#[derive(Parser)]
#[command(name = "swarmstore", version, about = "Risk-aware swarm storage simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario over its seeds and policies and write CSVs.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        /// Use seeds 1..=N instead of the scenario's list.
        #[arg(long)]
        seed_count: Option<u64>,
        /// Restrict to these policies (repeatable).
        #[arg(long)]
        policy: Vec<PolicyKind>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare policies from one or more summary CSVs.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
    /// List bundled scenarios, or print one.
    Catalog { name: Option<String> },
}

fn load(scenario: &str) -> Result<Scenario> {
    let path = PathBuf::from(scenario);
    if !path.exists() {
        if let Some(text) = bundled(scenario) {
            return Ok(parse_scenario_str(text, scenario)?);
        }
    }
    parse_scenario(&path)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed_count,
            policy,
            out,
        } => {
            let mut s = load(&scenario)?;
            if let Some(n) = seed_count {
                s.set_seed_count(n)?;
            }
            if !policy.is_empty() {
                s.policies = Vec::new();
                for p in policy {
                    if !s.policies.contains(&p) {
                        s.policies.push(p);
                    }
                }
            }
            if let Some(dir) = out {
                s.output_dir = dir;
            }
            let summary = run_sweep(&s)?;
            println!(
                "{:<10} {:>8} {:>10} {:>10} {:>9} {:>12}",
                "policy", "runs", "hops", "steps", "memory%", "reliability"
            );
            for r in &summary.rows {
                println!(
                    "{:<10} {:>8} {:>10.3} {:>10.3} {:>9.3} {:>7.4}±{:.4}",
                    r.policy.as_str(),
                    r.runs,
                    r.mean_transfer_hops,
                    r.mean_transfer_steps,
                    r.mean_memory_pct,
                    r.reliability_mean,
                    r.reliability_std
                );
            }
            println!("summary written to {}", summary.summary_path.display());
            Ok(())
        }
        Command::Compare { summaries } => {
            let mut rows: Vec<SummaryRow> = Vec::new();
            for path in &summaries {
                rows.extend(read_csv::<SummaryRow>(path)?);
            }
            let report = compare_policies(&rows)?;
            let stdout = std::io::stdout();
            write_records(stdout.lock(), &report).map_err(|source| Error::Csv {
                path: PathBuf::from("<stdout>"),
                source,
            })
        }
        Command::Catalog { name: None } => {
            for (name, description) in catalog() {
                println!("{name:<14} {description}");
            }
            Ok(())
        }
        Command::Catalog { name: Some(name) } => {
            let text = bundled(&name).ok_or_else(|| {
                ConfigError::invalid("catalog", format!("no bundled scenario named `{name}`"))
            })?;
            print!("{text}");
            std::io::stdout().flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
