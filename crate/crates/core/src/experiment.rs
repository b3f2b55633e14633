//! Experiment pipelines behind the `optchain` binary.
//!
//! Every command writes plain CSV / JSON into an output directory. Grid runs
//! put each `(strategy, k, rate)` cell in its own directory under `cells/`,
//! and a cell whose `report.json` already exists is skipped, so an
//! interrupted grid can be resumed by rerunning the same command.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{self, inject_double_spends, StreamFile, SynthConfig};
use crate::l2s::LatencyMode;
use crate::placement::{self, read_partition, StrategyConfig, StrategyKind};
use crate::sim::{self, RunOptions, SimConfig};
use crate::tan::{TanGraph, TxId, TxRecord};
use crate::{Error, Result};

/// A grid of simulations over one transaction stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seed: u64,
    /// Stream file to replay. When absent, `synth` generates one.
    pub dataset: Option<PathBuf>,
    pub synth: SynthConfig,
    pub k: Vec<usize>,
    pub rates: Vec<f64>,
    pub strategies: Vec<StrategyKind>,
    /// Partition file for the imported strategy.
    pub partition: Option<PathBuf>,
    /// Fraction of transactions that get a conflicting twin.
    pub double_spend_fraction: f64,
    pub event_log: bool,
    pub strict_paper_l2s: bool,
    /// Base simulator settings; `k`, `tx_rate`, seed and strategy kind are
    /// set per cell.
    pub sim: SimConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            seed: 1,
            dataset: None,
            synth: SynthConfig::default(),
            k: vec![4, 6, 8, 10, 12, 14, 16],
            rates: vec![2000.0, 3000.0, 4000.0, 5000.0, 6000.0],
            strategies: vec![StrategyKind::Random, StrategyKind::Greedy, StrategyKind::Optchain],
            partition: None,
            double_spend_fraction: 0.0,
            event_log: false,
            strict_paper_l2s: false,
            sim: SimConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.rates.is_empty() || self.strategies.is_empty() {
            return Err(Error::Config("grid needs at least one k, rate and strategy".into()));
        }
        if !(0.0..=0.5).contains(&self.double_spend_fraction) {
            return Err(Error::Config("double_spend_fraction must lie in [0, 0.5]".into()));
        }
        if self.strategies.contains(&StrategyKind::Imported) && self.partition.is_none() {
            return Err(Error::Config("imported strategy needs `partition`".into()));
        }
        for cell in self.cells() {
            self.cell_config(&cell).validate()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &k in &self.k {
                for &rate in &self.rates {
                    out.push(Cell { strategy, k, rate });
                }
            }
        }
        out
    }

    pub fn cell_config(&self, cell: &Cell) -> SimConfig {
        let mut cfg = self.sim.clone();
        cfg.k = cell.k;
        cfg.tx_rate = cell.rate;
        cfg.rng_seed = self.seed;
        cfg.strategy.kind = cell.strategy;
        cfg.strategy.k = cell.k;
        if self.strict_paper_l2s {
            cfg.strategy.latency_mode = LatencyMode::StrictPaper;
        }
        cfg
    }

    /// Loads the dataset or generates the synthetic stream.
    pub fn load_stream(&self) -> Result<Vec<TxRecord>> {
        match &self.dataset {
            Some(path) => Ok(load_stream(path)?.records),
            None => {
                let cfg = SynthConfig {
                    seed: self.seed,
                    ..self.synth.clone()
                };
                Ok(ingest::generate_synthetic(&cfg)?.records)
            }
        }
    }

    /// The stream plus `(original, twin)` conflict pairs when
    /// `double_spend_fraction` is set.
    pub fn load_stream_with_twins(&self) -> Result<(Vec<TxRecord>, Vec<(TxId, TxId)>)> {
        let base = self.load_stream()?;
        Ok(if self.double_spend_fraction > 0.0 {
            inject_double_spends(&base, self.double_spend_fraction, self.seed)
        } else {
            (base, Vec::new())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub strategy: StrategyKind,
    pub k: usize,
    pub rate: f64,
}

impl Cell {
    pub fn dir_name(&self) -> String {
        format!("{}_k{}_r{}", self.strategy.name(), self.k, self.rate)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_stream(path: &Path) -> Result<StreamFile> {
    Ok(StreamFile::read(open(path)?)?)
}

pub fn load_partition(path: &Path, k: Option<usize>) -> Result<Vec<u32>> {
    Ok(read_partition(open(path)?, k)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub nodes: usize,
    pub edges: u64,
    pub coinbase: u64,
    pub mean_in_degree: f64,
    pub mean_out_degree: f64,
    pub max_in_degree: u32,
    pub max_out_degree: u32,
}

/// Degree histograms, average-degree series and a JSON summary.
pub fn cmd_stats(records: impl IntoIterator<Item = Result<TxRecord>>, window: usize, out: &Path) -> Result<StatsSummary> {
    let mut graph = TanGraph::new();
    for r in records {
        graph.add_tx(r?)?;
    }
    let hist = graph.degree_histogram();
    let series = graph.avg_degree_series(window)?;
    fs::create_dir_all(out)?;
    for (name, map) in [("in_degree.csv", &hist.in_degree), ("out_degree.csv", &hist.out_degree)] {
        let mut w = csv::Writer::from_writer(create(&out.join(name))?);
        w.write_record(["degree", "count"])?;
        for (d, c) in map {
            w.write_record([d.to_string(), c.to_string()])?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_writer(create(&out.join("avg_degree.csv"))?);
    w.write_record(["window", "mean_degree"])?;
    for (i, m) in &series {
        w.write_record([i.to_string(), m.to_string()])?;
    }
    w.flush()?;
    let summary = StatsSummary {
        nodes: graph.len(),
        edges: graph.edge_count(),
        coinbase: hist.in_degree.get(&0).copied().unwrap_or(0),
        mean_in_degree: hist.mean_in_degree(),
        mean_out_degree: hist.mean_out_degree(),
        max_in_degree: hist.in_degree.keys().next_back().copied().unwrap_or(0),
        max_out_degree: hist.out_degree.keys().next_back().copied().unwrap_or(0),
    };
    write_json(&out.join("stats.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceSummary {
    pub strategy: String,
    pub k: usize,
    /// Transactions forced from the warm-start partition.
    pub warm_prefix: usize,
    pub full_events: u64,
    #[serde(flatten)]
    pub report: placement::CrossTxReport,
}

/// Places a stream and writes `decisions.csv` and `summary.json`.
///
/// With `warm`, the first `warm.len()` transactions are assigned from it and
/// only the remaining suffix is placed and reported.
pub fn cmd_place(
    records: impl IntoIterator<Item = Result<TxRecord>>,
    cfg: StrategyConfig,
    partition: Option<Vec<u32>>,
    warm: &[u32],
    out: &Path,
) -> Result<PlaceSummary> {
    let run = placement::place_stream(records, cfg.clone(), partition, warm)?;
    fs::create_dir_all(out)?;
    placement::write_decision_log(create(&out.join("decisions.csv"))?, &run.decisions)?;
    let summary = PlaceSummary {
        strategy: cfg.kind.name().to_owned(),
        k: cfg.k,
        warm_prefix: warm.len(),
        full_events: run.full_events,
        report: run.report,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulateOutcome {
    pub ran: Vec<Cell>,
    pub skipped: Vec<Cell>,
}

/// Number of latency CDF points written per cell.
pub const CDF_POINTS: usize = 100;
/// Width in seconds of the latency histogram bins.
pub const HISTOGRAM_BIN: f64 = 0.25;

/// Runs every grid cell that has no `report.json` yet.
pub fn cmd_simulate(spec: &ExperimentSpec, out: &Path) -> Result<SimulateOutcome> {
    spec.validate()?;
    fs::create_dir_all(out)?;
    let cells = spec.cells();
    write_json(&out.join("manifest.json"), &Manifest { cells: cells.clone() })?;
    let (todo, skipped): (Vec<Cell>, Vec<Cell>) = cells
        .into_iter()
        .partition(|c| !out.join("cells").join(c.dir_name()).join("report.json").exists());
    if todo.is_empty() {
        return Ok(SimulateOutcome { ran: todo, skipped });
    }
    let (records, conflicts) = spec.load_stream_with_twins()?;
    let partition = match &spec.partition {
        Some(p) => Some(load_partition(p, None)?),
        None => None,
    };
    todo.par_iter()
        .map(|cell| run_cell(spec, cell, &records, &conflicts, partition.as_ref(), out))
        .collect::<Result<Vec<()>>>()?;
    Ok(SimulateOutcome { ran: todo, skipped })
}

fn run_cell(
    spec: &ExperimentSpec,
    cell: &Cell,
    records: &[TxRecord],
    conflicts: &[(TxId, TxId)],
    partition: Option<&Vec<u32>>,
    out: &Path,
) -> Result<()> {
    let dir = out.join("cells").join(cell.dir_name());
    fs::create_dir_all(&dir)?;
    let cfg = spec.cell_config(cell);
    let partition = (cell.strategy == StrategyKind::Imported).then(|| partition.cloned()).flatten();
    let mut log = if spec.event_log {
        Some(create(&dir.join("events.ndjson"))?)
    } else {
        None
    };
    let output = sim::simulate(
        &cfg,
        records,
        RunOptions {
            partition,
            conflicts,
            event_log: log.as_mut().map(|w| w as &mut dyn Write),
        },
    )?;
    if let Some(mut w) = log {
        w.flush()?;
    }
    let latencies = output.latencies();
    sim::write_timeseries(create(&dir.join("timeseries.csv"))?, &output.samples)?;
    sim::write_latency_cdf(create(&dir.join("latency_cdf.csv"))?, &latencies, CDF_POINTS)?;
    sim::write_latency_histogram(create(&dir.join("latency_hist.csv"))?, &latencies, HISTOGRAM_BIN)?;
    write_json(&dir.join("config.json"), &cfg)?;
    // Written last: its presence marks the cell complete.
    let tmp = dir.join("report.json.tmp");
    write_json(&tmp, &output.report)?;
    fs::rename(tmp, dir.join("report.json"))?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportOutcome {
    pub rows: usize,
    /// Cells listed in the manifest without a report.
    pub missing: Vec<Cell>,
}

/// Throughput at or above this fraction of the offered rate counts as
/// sustained in the scalability table.
pub const SUSTAINED_FRACTION: f64 = 0.95;

/// Merges cell reports into `summary.csv`, `latency_cdf.csv` and
/// `scalability.csv`. Missing cells are listed, not fatal.
pub fn cmd_report(out: &Path) -> Result<ReportOutcome> {
    let manifest: Manifest = serde_json::from_reader(open(&out.join("manifest.json"))?)?;
    let mut reports = Vec::new();
    let mut missing = Vec::new();
    for cell in &manifest.cells {
        let dir = out.join("cells").join(cell.dir_name());
        let path = dir.join("report.json");
        if !path.exists() {
            missing.push(*cell);
            continue;
        }
        let report: sim::MetricsReport = serde_json::from_reader(open(&path)?)?;
        reports.push((*cell, report, dir));
    }

    let mut w = csv::Writer::from_writer(create(&out.join("summary.csv"))?);
    w.write_record([
        "strategy",
        "k",
        "rate",
        "throughput",
        "mean_latency",
        "p99_latency",
        "max_latency",
        "cross_tx_fraction",
        "mean_queue_ratio",
        "committed",
        "aborted",
    ])?;
    for (cell, r, _) in &reports {
        w.write_record([
            cell.strategy.name().to_owned(),
            cell.k.to_string(),
            cell.rate.to_string(),
            r.throughput.to_string(),
            r.mean_latency.to_string(),
            r.p99_latency.to_string(),
            r.max_latency.to_string(),
            r.cross_tx_fraction.to_string(),
            r.mean_queue_ratio.to_string(),
            r.committed.to_string(),
            r.aborted.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(&out.join("latency_cdf.csv"))?);
    w.write_record(["strategy", "k", "rate", "latency", "fraction"])?;
    for (cell, _, dir) in &reports {
        let path = dir.join("latency_cdf.csv");
        if !path.exists() {
            continue;
        }
        let mut r = csv::Reader::from_reader(open(&path)?);
        for row in r.records() {
            let row = row?;
            w.write_record([
                cell.strategy.name(),
                &cell.k.to_string(),
                &cell.rate.to_string(),
                &row[0],
                &row[1],
            ])?;
        }
    }
    w.flush()?;

    let table = scalability(reports.iter().map(|(c, r, _)| (*c, r.throughput)));
    let mut w = csv::Writer::from_writer(create(&out.join("scalability.csv"))?);
    w.write_record(["strategy", "k", "max_sustained_rate"])?;
    for ((strategy, k), rate) in table {
        w.write_record([strategy.name().to_owned(), k.to_string(), rate.to_string()])?;
    }
    w.flush()?;

    Ok(ReportOutcome {
        rows: reports.len(),
        missing,
    })
}

/// Highest offered rate whose throughput is sustained, per strategy and k.
/// Zero when no rate is sustained.
pub fn scalability(cells: impl IntoIterator<Item = (Cell, f64)>) -> BTreeMap<(StrategyKind, usize), f64> {
    let mut table: BTreeMap<(StrategyKind, usize), f64> = BTreeMap::new();
    for (cell, throughput) in cells {
        let entry = table.entry((cell.strategy, cell.k)).or_insert(0.0);
        if throughput >= SUSTAINED_FRACTION * cell.rate && cell.rate > *entry {
            *entry = cell.rate;
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertSummary {
    pub transactions: usize,
    pub dangling_inputs: u64,
}

/// Converts a hash-keyed CSV dump; writes the stream and `<out>.ids.csv`.
pub fn cmd_convert(input: &Path, out: &Path) -> Result<ConvertSummary> {
    let converted = ingest::convert_external(open(input)?)?;
    let mut w = create(out)?;
    converted.stream.write(&mut w)?;
    w.flush()?;
    let mut ids = out.as_os_str().to_owned();
    ids.push(".ids.csv");
    ingest::write_id_map(create(Path::new(&ids))?, &converted.hashes)?;
    Ok(ConvertSummary {
        transactions: converted.stream.len(),
        dangling_inputs: converted.dangling_inputs,
    })
}

pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<usize> {
    let stream = ingest::generate_synthetic(cfg)?;
    let mut w = create(out)?;
    stream.write(&mut w)?;
    w.flush()?;
    Ok(stream.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_from_toml() {
        let spec = ExperimentSpec::from_toml(
            r#"
            seed = 7
            k = [4]
            rates = [100.0]
            strategies = ["random", "optchain"]
            [synth]
            n = 50
            [sim]
            block_capacity = 100
            "#,
        )
        .unwrap();
        assert_eq!(spec.cells().len(), 2);
        assert_eq!(spec.sim.block_capacity, 100);
        let cfg = spec.cell_config(&spec.cells()[1]);
        assert_eq!(cfg.strategy.kind, StrategyKind::Optchain);
        assert_eq!(cfg.rng_seed, 7);
        spec.validate().unwrap();
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(ExperimentSpec::from_toml("sede = 1"), Err(Error::Toml(_))));
    }

    #[test]
    fn empty_grid_rejected() {
        let spec = ExperimentSpec {
            k: vec![],
            ..Default::default()
        };
        assert_eq!(spec.validate().unwrap_err().exit_code(), crate::EXIT_CONFIG);
    }

    #[test]
    fn scalability_picks_sustained_max() {
        let c = |rate| Cell {
            strategy: StrategyKind::Random,
            k: 4,
            rate,
        };
        let t = scalability([(c(1000.0), 990.0), (c(2000.0), 1960.0), (c(3000.0), 2000.0)]);
        assert_eq!(t[&(StrategyKind::Random, 4)], 2000.0);
    }
}
