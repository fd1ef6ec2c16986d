//! Experiment orchestration: run (config, seed) cells, collect metrics rows,
//! write/read CSV, and compare channel models on paired seeds.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::fading::ChannelModel;
use crate::network::{simulate, RunOptions, RunOutcome};
use crate::scenario::{ScenarioConfig, ScenarioKind};

/// One CSV line: the outcome of one (scenario, model, load, seed) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: ScenarioKind,
    pub model: ChannelModel,
    /// Total UEs for the grid, RLC buffer bytes for the line.
    pub load: u64,
    pub seed: u64,
    pub throughput_bps: f64,
    pub mac_latency_s: f64,
    pub pdcp_latency_s: f64,
    pub drops: u64,
    pub handovers: u64,
    pub wall_clock_s: f64,
    pub events: u64,
    pub air_losses: u64,
}

impl From<&RunOutcome> for MetricsRow {
    fn from(o: &RunOutcome) -> Self {
        MetricsRow {
            scenario: o.scenario,
            model: o.model,
            load: o.load,
            seed: o.seed,
            throughput_bps: o.throughput_bps,
            mac_latency_s: o.latency.mac_mean_s,
            pdcp_latency_s: o.latency.pdcp_mean_s,
            drops: o.rlc_drops,
            handovers: o.handovers,
            wall_clock_s: o.wall_clock_s,
            events: o.events,
            air_losses: o.air_losses,
        }
    }
}

pub const CSV_COLUMNS: [&str; 12] = [
    "scenario",
    "model",
    "load",
    "seed",
    "throughput_bps",
    "mac_latency_s",
    "pdcp_latency_s",
    "drops",
    "handovers",
    "wall_clock_s",
    "events",
    "air_losses",
];

fn cell_context(cfg: &ScenarioConfig, seed: u64) -> String {
    format!(
        "{} / {} / load {} / seed {seed}",
        cfg.scenario.as_str(),
        cfg.model,
        cfg.load()
    )
}

/// Runs every cell, in parallel, returning outcomes in input order.
pub fn run_cells(cells: &[(ScenarioConfig, u64)], options: &RunOptions) -> Result<Vec<RunOutcome>> {
    cells
        .par_iter()
        .map(|(cfg, seed)| {
            simulate(cfg, *seed, options).map_err(|e| e.context(cell_context(cfg, *seed)))
        })
        .collect()
}

/// One row per seed of `cfg`.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<Vec<MetricsRow>> {
    let cells: Vec<_> = cfg.seeds.iter().map(|&s| (cfg.clone(), s)).collect();
    Ok(run_cells(&cells, &RunOptions::default())?
        .iter()
        .map(MetricsRow::from)
        .collect())
}

/// Runs several configs, rows grouped by config then seed.
pub fn run_matrix(configs: &[ScenarioConfig]) -> Result<Vec<MetricsRow>> {
    let cells: Vec<_> = configs
        .iter()
        .flat_map(|c| c.seeds.iter().map(move |&s| (c.clone(), s)))
        .collect();
    Ok(run_cells(&cells, &RunOptions::default())?
        .iter()
        .map(MetricsRow::from)
        .collect())
}

pub fn write_csv_to<W: Write>(rows: &[MetricsRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Io(e).context(path.display().to_string()))?;
    write_csv_to(rows, std::io::BufWriter::new(file))
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::invalid(format!(
            "unexpected CSV header: {headers:?}"
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(e).context(path.display().to_string()))?;
    read_csv_from(file)
}

/// Mean and 95% confidence half-width (Student t).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

impl Estimate {
    pub fn of(xs: &[f64]) -> Estimate {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                ci95: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Estimate { mean, ci95: 0.0, n };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(f64::NAN);
        Estimate {
            mean,
            ci95: t * (var / n as f64).sqrt(),
            n,
        }
    }
}

/// `candidate` against `reference` at one (scenario, load) point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub scenario: ScenarioKind,
    pub load: u64,
    pub candidate: ChannelModel,
    pub reference: ChannelModel,
    pub candidate_throughput_bps: Estimate,
    pub reference_throughput_bps: Estimate,
    /// Paired `(candidate - reference) / reference`, percent.
    pub throughput_delta_pct: Estimate,
    pub mac_latency_delta_pct: Estimate,
    pub pdcp_latency_delta_pct: Estimate,
    /// Mean wall clock of the reference over that of the candidate.
    pub speedup: f64,
    pub candidate_not_above_reference: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub entries: Vec<ComparisonEntry>,
}

impl ComparisonReport {
    pub fn entry(
        &self,
        scenario: ScenarioKind,
        load: u64,
        candidate: ChannelModel,
    ) -> Option<&ComparisonEntry> {
        self.entries
            .iter()
            .find(|e| e.scenario == scenario && e.load == load && e.candidate == candidate)
    }
}

fn pct(candidate: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if candidate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (candidate - reference) / reference
    }
}

/// Pairs every other model's rows with the reference model's rows by seed.
pub fn compare_models(rows: &[MetricsRow], reference: ChannelModel) -> Result<ComparisonReport> {
    type Key = (ScenarioKind, u64);
    let mut groups: BTreeMap<(Key, ChannelModel), BTreeMap<u64, &MetricsRow>> = BTreeMap::new();
    for row in rows {
        let cell = groups
            .entry(((row.scenario, row.load), row.model))
            .or_default();
        if cell.insert(row.seed, row).is_some() {
            return Err(Error::Pairing(format!(
                "duplicate seed {} for {} / {} / load {}",
                row.seed,
                row.scenario.as_str(),
                row.model,
                row.load
            )));
        }
    }
    let mut report = ComparisonReport::default();
    let points: Vec<Key> = {
        let mut v: Vec<Key> = groups.keys().map(|(k, _)| *k).collect();
        v.dedup();
        v
    };
    for point in points {
        let models: Vec<ChannelModel> = groups
            .keys()
            .filter(|(k, _)| *k == point)
            .map(|(_, m)| *m)
            .collect();
        if models.len() < 2 {
            return Err(Error::Pairing(format!(
                "{} / load {}: need at least two models, found {:?}",
                point.0.as_str(),
                point.1,
                models
            )));
        }
        let base = groups.get(&(point, reference)).ok_or_else(|| {
            Error::Pairing(format!(
                "{} / load {}: no rows for reference model {reference}",
                point.0.as_str(),
                point.1
            ))
        })?;
        for &model in models.iter().filter(|&&m| m != reference) {
            let cand = &groups[&(point, model)];
            if cand.keys().ne(base.keys()) {
                return Err(Error::Pairing(format!(
                    "{} / load {}: seeds of {model} {:?} differ from {reference} {:?}",
                    point.0.as_str(),
                    point.1,
                    cand.keys().collect::<Vec<_>>(),
                    base.keys().collect::<Vec<_>>()
                )));
            }
            let pairs: Vec<(&MetricsRow, &MetricsRow)> =
                cand.values().copied().zip(base.values().copied()).collect();
            let col = |f: fn(&MetricsRow) -> f64| -> Vec<f64> {
                pairs.iter().map(|(c, r)| pct(f(c), f(r))).collect()
            };
            let wall =
                |sel: fn(&(&MetricsRow, &MetricsRow)) -> f64| pairs.iter().map(sel).sum::<f64>();
            let cand_tp = Estimate::of(
                &pairs
                    .iter()
                    .map(|(c, _)| c.throughput_bps)
                    .collect::<Vec<_>>(),
            );
            let ref_tp = Estimate::of(
                &pairs
                    .iter()
                    .map(|(_, r)| r.throughput_bps)
                    .collect::<Vec<_>>(),
            );
            let ref_wall = wall(|(_, r)| r.wall_clock_s);
            let cand_wall = wall(|(c, _)| c.wall_clock_s);
            report.entries.push(ComparisonEntry {
                scenario: point.0,
                load: point.1,
                candidate: model,
                reference,
                candidate_not_above_reference: cand_tp.mean <= ref_tp.mean,
                candidate_throughput_bps: cand_tp,
                reference_throughput_bps: ref_tp,
                throughput_delta_pct: Estimate::of(&col(|r| r.throughput_bps)),
                mac_latency_delta_pct: Estimate::of(&col(|r| r.mac_latency_s)),
                pdcp_latency_delta_pct: Estimate::of(&col(|r| r.pdcp_latency_s)),
                speedup: if cand_wall > 0.0 {
                    ref_wall / cand_wall
                } else {
                    f64::INFINITY
                },
            });
        }
    }
    Ok(report)
}
