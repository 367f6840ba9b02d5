//! Seed and policy sweeps, CSV output and policy comparison.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::engine::{run, DeliveryRecord, MetricsSeries, StepRow};
use crate::error::{ConfigError, Error, Result};
use crate::scenario::Scenario;
use crate::storage::PolicyKind;

/// First line of every CSV this crate writes.
pub const SCHEMA_LINE: &str = "# swarmstore-schema v1";

/// Per-seed subdirectory holding delivery logs.
pub const DELIVERIES_DIR: &str = "deliveries";

/// Provenance copy of the resolved scenario.
pub const RESOLVED_FILE: &str = "resolved.toml";

/// One finished simulation.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub policy: PolicyKind,
    pub seed: u64,
    pub metrics: MetricsSeries,
}

/// Aggregates for one (topology, policy) cell over the seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub topology: String,
    pub policy: PolicyKind,
    /// Space-separated seed list.
    pub seeds: String,
    pub runs: usize,
    pub deliveries: u64,
    /// Pooled over every delivery of every run.
    pub mean_transfer_hops: f64,
    pub mean_transfer_steps: f64,
    /// Per-run mean over steps, averaged over runs.
    pub mean_memory_pct: f64,
    pub reliability_mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub reliability_std: f64,
    pub total_stored_mean: f64,
}

impl SummaryRow {
    pub fn seed_list(&self) -> Result<Vec<u64>, ConfigError> {
        self.seeds
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| ConfigError::Pairing(format!("bad seed `{s}` in summary")))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
    pub summary_path: PathBuf,
    /// Every run, in [`simulate`] order.
    pub runs: Vec<RunOutcome>,
}

/// Runs every (policy, seed) cell in parallel. Results are ordered by the
/// scenario's policy list, then its seed list.
pub fn simulate(scenario: &Scenario) -> Result<Vec<RunOutcome>> {
    let cells: Vec<(PolicyKind, u64)> = scenario
        .policies
        .iter()
        .flat_map(|&p| scenario.seeds.iter().map(move |&s| (p, s)))
        .collect();
    cells
        .into_par_iter()
        .map(|(policy, seed)| {
            let metrics = run(scenario.run_config(policy, seed))?;
            Ok(RunOutcome {
                policy,
                seed,
                metrics,
            })
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Summary of one policy's runs, computed only from what the CSVs carry.
pub fn summarize_policy(
    topology: &str,
    policy: PolicyKind,
    runs: &[(u64, &[StepRow], &[DeliveryRecord])],
) -> SummaryRow {
    let hops: Vec<f64> = runs
        .iter()
        .flat_map(|(_, _, d)| d.iter().map(|r| f64::from(r.hops)))
        .collect();
    let steps: Vec<f64> = runs
        .iter()
        .flat_map(|(_, _, d)| d.iter().map(|r| (r.delivered_step - r.created_step) as f64))
        .collect();
    let memory: Vec<f64> = runs
        .iter()
        .map(|(_, rows, _)| mean(&rows.iter().map(|r| r.mean_memory_pct).collect::<Vec<_>>()))
        .collect();
    let finals: Vec<&StepRow> = runs.iter().filter_map(|(_, rows, _)| rows.last()).collect();
    let reliability: Vec<f64> = finals.iter().map(|r| r.reliability_cum).collect();
    let stored: Vec<f64> = finals.iter().map(|r| r.total_stored as f64).collect();
    SummaryRow {
        topology: topology.to_string(),
        policy,
        seeds: runs
            .iter()
            .map(|(s, _, _)| s.to_string())
            .collect::<Vec<_>>()
            .join(" "),
        runs: runs.len(),
        deliveries: hops.len() as u64,
        mean_transfer_hops: mean(&hops),
        mean_transfer_steps: mean(&steps),
        mean_memory_pct: mean(&memory),
        reliability_mean: mean(&reliability),
        reliability_std: sample_std(&reliability),
        total_stored_mean: mean(&stored),
    }
}

/// One summary row per policy, in the scenario's policy order.
pub fn summarize(scenario: &Scenario, outcomes: &[RunOutcome]) -> Vec<SummaryRow> {
    scenario
        .policies
        .iter()
        .map(|&policy| {
            let runs: Vec<_> = outcomes
                .iter()
                .filter(|o| o.policy == policy)
                .map(|o| (o.seed, o.metrics.rows.as_slice(), o.metrics.deliveries.as_slice()))
                .collect();
            summarize_policy(scenario.config.topology.name(), policy, &runs)
        })
        .collect()
}

pub fn series_file_name(scenario: &str, policy: PolicyKind, seed: u64) -> String {
    format!("{scenario}_{policy}_seed{seed}.csv")
}

pub fn summary_file_name(scenario: &str) -> String {
    format!("{scenario}_summary.csv")
}

/// Runs the whole sweep and writes per-run series, delivery logs, the
/// summary and the resolved scenario under `scenario.output_dir`.
pub fn run_sweep(scenario: &Scenario) -> Result<SweepSummary> {
    let out = &scenario.output_dir;
    let deliveries_dir = out.join(DELIVERIES_DIR);
    fs::create_dir_all(&deliveries_dir).map_err(|e| Error::io(&deliveries_dir, e))?;
    let resolved = out.join(RESOLVED_FILE);
    fs::write(&resolved, scenario.to_toml()).map_err(|e| Error::io(&resolved, e))?;

    let outcomes = simulate(scenario)?;
    outcomes.par_iter().try_for_each(|o| -> Result<()> {
        let name = series_file_name(&scenario.name, o.policy, o.seed);
        write_csv(&out.join(&name), &o.metrics.rows)?;
        write_csv(&deliveries_dir.join(&name), &o.metrics.deliveries)
    })?;

    let rows = summarize(scenario, &outcomes);
    let summary_path = out.join(summary_file_name(&scenario.name));
    write_csv(&summary_path, &rows)?;
    Ok(SweepSummary {
        rows,
        summary_path,
        runs: outcomes,
    })
}

/// A CSV row type with a fixed column order.
pub trait CsvRecord: Serialize {
    const COLUMNS: &'static [&'static str];
}

impl CsvRecord for StepRow {
    const COLUMNS: &'static [&'static str] = &[
        "step",
        "n_g",
        "n_l",
        "reliability_step",
        "reliability_cum",
        "items_on_agents",
        "items_at_base",
        "total_stored",
        "mean_memory_pct",
    ];
}

impl CsvRecord for DeliveryRecord {
    const COLUMNS: &'static [&'static str] = &[
        "datum_creator",
        "datum_seq",
        "created_step",
        "delivered_step",
        "hops",
    ];
}

impl CsvRecord for SummaryRow {
    const COLUMNS: &'static [&'static str] = &[
        "topology",
        "policy",
        "seeds",
        "runs",
        "deliveries",
        "mean_transfer_hops",
        "mean_transfer_steps",
        "mean_memory_pct",
        "reliability_mean",
        "reliability_std",
        "total_stored_mean",
    ];
}

impl CsvRecord for Comparison {
    const COLUMNS: &'static [&'static str] = &[
        "topology",
        "policy",
        "baseline",
        "hops_ratio",
        "steps_ratio",
        "reliability_delta",
        "memory_delta",
    ];
}

/// Writes the schema line, the header and the records.
pub fn write_records<T: CsvRecord, W: Write>(out: W, records: &[T]) -> std::result::Result<(), csv::Error> {
    let mut out = out;
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    csv.write_record(T::COLUMNS)?;
    for r in records {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_csv<T: CsvRecord>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(BufWriter::new(file), records).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a CSV written by [`write_csv`], checking the schema line.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ConfigError::MissingFile(path.to_path_buf()).into(),
        _ => Error::io(path, e),
    })?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    if first.trim_end() != SCHEMA_LINE {
        return Err(ConfigError::Syntax {
            path: path.display().to_string(),
            line: Some(1),
            message: format!("expected `{SCHEMA_LINE}`"),
        }
        .into());
    }
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

/// One policy measured against a baseline on the same topology and seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub topology: String,
    pub policy: PolicyKind,
    pub baseline: PolicyKind,
    pub hops_ratio: f64,
    pub steps_ratio: f64,
    pub reliability_delta: f64,
    pub memory_delta: f64,
}

/// Compares each policy with the hop-count baseline of its topology, or
/// with the first listed policy when hop-count is absent.
pub fn compare_policies(rows: &[SummaryRow]) -> Result<Vec<Comparison>, ConfigError> {
    let mut by_topology: BTreeMap<&str, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        let cell = by_topology.entry(&r.topology).or_default();
        if cell.iter().any(|o| o.policy == r.policy) {
            return Err(ConfigError::Pairing(format!(
                "{} / {} appears more than once",
                r.topology, r.policy
            )));
        }
        cell.push(r);
    }
    let mut out = Vec::new();
    for (topology, cell) in by_topology {
        let base = cell
            .iter()
            .find(|r| r.policy == PolicyKind::HopCount)
            .unwrap_or(&cell[0]);
        let mut base_seeds = base.seed_list()?;
        base_seeds.sort_unstable();
        for r in cell.iter().filter(|r| r.policy != base.policy) {
            let mut seeds = r.seed_list()?;
            seeds.sort_unstable();
            if seeds != base_seeds {
                return Err(ConfigError::Pairing(format!(
                    "{topology}: {} and {} ran on different seeds",
                    r.policy, base.policy
                )));
            }
            out.push(Comparison {
                topology: topology.to_string(),
                policy: r.policy,
                baseline: base.policy,
                hops_ratio: r.mean_transfer_hops / base.mean_transfer_hops,
                steps_ratio: r.mean_transfer_steps / base.mean_transfer_steps,
                reliability_delta: r.reliability_mean - base.reliability_mean,
                memory_delta: r.mean_memory_pct - base.mean_memory_pct,
            });
        }
    }
    if out.is_empty() {
        return Err(ConfigError::Pairing(
            "need at least two policies on one topology".into(),
        ));
    }
    Ok(out)
}
