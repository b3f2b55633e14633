//! Placement strategies.
//!
//! Every strategy maps an arriving transaction to a shard index. The
//! [`Placer`] keeps the state a strategy needs between decisions (shard
//! sizes, T2S scores, latency estimates) and is driven in arrival order both
//! by offline analysis and by the simulator.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::l2s::{L2sError, LatencyCache, LatencyMode, RatePair, ShardRateModel};
use crate::shard::{ShardSet, MAX_SHARDS};
use crate::t2s::{argmax_lowest, ScoreError, ScoreState, T2SVector, DEFAULT_ALPHA};
use crate::tan::{TanGraph, TxId, TxRecord};

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("invalid strategy config: {0}")]
    Config(String),
    #[error("no partition entry for transaction {0}")]
    MissingAssignment(TxId),
    #[error("partition line {line}: {msg}")]
    BadPartition { line: usize, msg: String },
    #[error("parent {parent} of {tx} has not been placed")]
    UnplacedParent { tx: TxId, parent: TxId },
    #[error("transactions must be placed in arrival order: expected {expected}, got {got}")]
    OutOfOrder { expected: TxId, got: TxId },
    #[error("transaction {0} is not in the graph")]
    UnknownTx(TxId),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Latency(#[from] L2sError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Hash-based placement, as in OmniLedger.
    Random,
    Greedy,
    T2s,
    Optchain,
    /// Replays a precomputed partition (e.g. a Metis output file).
    Imported,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Random,
        StrategyKind::Greedy,
        StrategyKind::T2s,
        StrategyKind::Optchain,
        StrategyKind::Imported,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Greedy => "greedy",
            StrategyKind::T2s => "t2s",
            StrategyKind::Optchain => "optchain",
            StrategyKind::Imported => "imported",
        }
    }

    fn uses_scores(self) -> bool {
        matches!(self, StrategyKind::T2s | StrategyKind::Optchain)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = PlacementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" | "omniledger" => Ok(StrategyKind::Random),
            "greedy" => Ok(StrategyKind::Greedy),
            "t2s" | "t2s-based" => Ok(StrategyKind::T2s),
            "optchain" => Ok(StrategyKind::Optchain),
            "imported" | "metis" => Ok(StrategyKind::Imported),
            other => Err(PlacementError::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub k: usize,
    /// Slack of the Greedy / T2S size cap `(1 + epsilon) * floor(n / k)`.
    pub epsilon: f64,
    /// Weight of the expected latency in the OptChain fitness.
    pub fitness_weight: f64,
    pub alpha: f64,
    /// Total transaction count for the size cap. `None` uses the number of
    /// transactions placed so far plus one.
    pub capacity_n: Option<u64>,
    pub latency_mode: LatencyMode,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::Optchain,
            k: 16,
            epsilon: 0.1,
            fitness_weight: 0.01,
            alpha: DEFAULT_ALPHA,
            capacity_n: None,
            latency_mode: LatencyMode::Convolved,
        }
    }
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, k: usize) -> Self {
        StrategyConfig {
            kind,
            k,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlacementError> {
        if self.k == 0 || self.k > MAX_SHARDS {
            return Err(PlacementError::Config(format!(
                "k must be in 1..={MAX_SHARDS}, got {}",
                self.k
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(PlacementError::Config("epsilon must be >= 0".into()));
        }
        if !self.fitness_weight.is_finite() {
            return Err(PlacementError::Config("fitness_weight must be finite".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(PlacementError::Config("alpha must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementDecision {
    pub tx: TxId,
    pub shard: usize,
    pub input_shards: ShardSet,
    pub is_cross_shard: bool,
}

impl PlacementDecision {
    pub fn new(tx: TxId, shard: usize, input_shards: ShardSet) -> Self {
        PlacementDecision {
            tx,
            shard,
            input_shards,
            is_cross_shard: !input_shards.is_empty() && input_shards != ShardSet::single(shard),
        }
    }
}

/// SplitMix64 finalizer; stable across platforms and runs.
pub fn stable_hash(tx: TxId) -> u64 {
    let mut z = u64::from(tx.0).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn place_random(tx: TxId, input_shards: ShardSet, k: usize) -> PlacementDecision {
    PlacementDecision::new(tx, (stable_hash(tx) % k as u64) as usize, input_shards)
}

/// Per-shard size cap, never below one so the first arrivals have room.
pub fn size_cap(n: u64, k: usize, epsilon: f64) -> f64 {
    ((1.0 + epsilon) * (n / k as u64) as f64).max(1.0)
}

fn least_loaded(counts: &[u64], eligible: impl Fn(usize) -> bool) -> Option<usize> {
    counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| eligible(i))
        .min_by_key(|&(i, &c)| (c, i))
        .map(|(i, _)| i)
}

/// Outcome of a capped choice; `fallback` marks an all-shards-full event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CappedChoice {
    pub shard: usize,
    pub fallback: bool,
}

/// Minimizes the number of parents living outside the candidate shard among
/// shards below `cap`; ties go to the lowest index.
pub fn greedy_choice(parent_shards: &[usize], counts: &[u64], cap: f64) -> CappedChoice {
    let best = (0..counts.len())
        .filter(|&j| (counts[j] as f64) < cap)
        .min_by_key(|&j| (parent_shards.iter().filter(|&&s| s != j).count(), j));
    match best {
        Some(shard) => CappedChoice {
            shard,
            fallback: false,
        },
        None => CappedChoice {
            shard: least_loaded(counts, |_| true).unwrap_or(0),
            fallback: true,
        },
    }
}

/// Highest normalized score among shards below `cap`. A zero best score
/// (coinbase) goes to the least-loaded eligible shard.
pub fn t2s_choice(score: &T2SVector, counts: &[u64], cap: f64) -> CappedChoice {
    let eligible = |j: usize| (counts[j] as f64) < cap;
    let best = argmax_lowest(
        score
            .values
            .iter()
            .copied()
            .enumerate()
            .filter(|&(j, _)| eligible(j)),
    );
    match best {
        Some(j) if score.values[j] > 0.0 => CappedChoice {
            shard: j,
            fallback: false,
        },
        Some(_) => CappedChoice {
            shard: least_loaded(counts, eligible).expect("an eligible shard exists"),
            fallback: false,
        },
        None => CappedChoice {
            shard: least_loaded(counts, |_| true).unwrap_or(0),
            fallback: true,
        },
    }
}

/// Maximizes `score[j] - weight * E(j)` where `E(j)` is the expected latency
/// with proof set `input_shards + {j}`.
pub fn optchain_choice(
    score: &T2SVector,
    input_shards: ShardSet,
    latency: &mut LatencyCache,
    weight: f64,
) -> Result<usize, L2sError> {
    let e = latency.candidate_latencies(input_shards)?;
    let fitness = score.values.iter().zip(e).enumerate().map(|(j, (s, e))| (j, s - weight * e));
    Ok(argmax_lowest(fitness).unwrap_or(0))
}

pub fn place_imported(tx: TxId, input_shards: ShardSet, partition: &[u32]) -> Result<PlacementDecision, PlacementError> {
    let shard = *partition
        .get(tx.index())
        .ok_or(PlacementError::MissingAssignment(tx))?;
    Ok(PlacementDecision::new(tx, shard as usize, input_shards))
}

/// Reads a Metis-style partition file: line `r` holds the shard of tx `r`.
pub fn read_partition<R: BufRead>(reader: R, k: Option<usize>) -> Result<Vec<u32>, PlacementError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let shard: u32 = trimmed.parse().map_err(|_| PlacementError::BadPartition {
            line: i + 1,
            msg: format!("`{trimmed}` is not a shard index"),
        })?;
        if let Some(k) = k {
            if shard as usize >= k {
                return Err(PlacementError::BadPartition {
                    line: i + 1,
                    msg: format!("shard {shard} >= k = {k}"),
                });
            }
        }
        out.push(shard);
    }
    Ok(out)
}

pub fn write_partition<W: Write>(mut w: W, shards: &[u32]) -> std::io::Result<()> {
    for s in shards {
        writeln!(w, "{s}")?;
    }
    Ok(())
}

/// Stateful placement driver.
#[derive(Debug, Clone)]
pub struct Placer {
    cfg: StrategyConfig,
    shard_of: Vec<u32>,
    counts: Vec<u64>,
    scores: Option<ScoreState>,
    latency: Option<LatencyCache>,
    partition: Option<Vec<u32>>,
    full_events: u64,
}

/// Rates assumed before any telemetry: 0.2 s round trip, 1 s verification.
pub const DEFAULT_RATES: RatePair = RatePair {
    lambda_c: 5.0,
    lambda_v: 1.0,
};

impl Placer {
    pub fn new(cfg: StrategyConfig) -> Result<Self, PlacementError> {
        cfg.validate()?;
        let scores = if cfg.kind.uses_scores() {
            Some(ScoreState::new(cfg.k, cfg.alpha)?)
        } else {
            None
        };
        let latency = if cfg.kind == StrategyKind::Optchain {
            let model = ShardRateModel::uniform(cfg.k, DEFAULT_RATES)?;
            Some(LatencyCache::new(model, cfg.latency_mode))
        } else {
            None
        };
        Ok(Placer {
            counts: vec![0; cfg.k],
            cfg,
            shard_of: Vec::new(),
            scores,
            latency,
            partition: None,
            full_events: 0,
        })
    }

    pub fn with_partition(mut self, partition: Vec<u32>) -> Result<Self, PlacementError> {
        if let Some(pos) = partition.iter().position(|&s| s as usize >= self.cfg.k) {
            return Err(PlacementError::BadPartition {
                line: pos + 1,
                msg: format!("shard {} >= k = {}", partition[pos], self.cfg.k),
            });
        }
        self.partition = Some(partition);
        Ok(self)
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.cfg
    }

    /// Replaces the latency snapshot used by OptChain. No-op otherwise.
    pub fn set_rate_model(&mut self, model: ShardRateModel) -> Result<(), PlacementError> {
        if model.k() != self.cfg.k {
            return Err(PlacementError::Config(format!(
                "rate model covers {} shards, strategy has {}",
                model.k(),
                self.cfg.k
            )));
        }
        if let Some(cache) = self.latency.as_mut() {
            cache.set_model(model);
        }
        Ok(())
    }

    pub fn shard_of(&self, tx: TxId) -> Option<usize> {
        self.shard_of.get(tx.index()).map(|&s| s as usize)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn placed(&self) -> usize {
        self.shard_of.len()
    }

    /// Number of decisions that hit the all-shards-full fallback.
    pub fn full_events(&self) -> u64 {
        self.full_events
    }

    pub fn scores(&self) -> Option<&ScoreState> {
        self.scores.as_ref()
    }

    fn parent_shards(&self, record: &TxRecord) -> Result<Vec<usize>, PlacementError> {
        record
            .inputs
            .iter()
            .map(|&p| {
                self.shard_of(p).ok_or(PlacementError::UnplacedParent {
                    tx: record.id,
                    parent: p,
                })
            })
            .collect()
    }

    fn check_next<'g>(&self, graph: &'g TanGraph, tx: TxId) -> Result<&'g TxRecord, PlacementError> {
        let expected = TxId::from_index(self.shard_of.len());
        if tx != expected {
            return Err(PlacementError::OutOfOrder { expected, got: tx });
        }
        graph.get(tx).ok_or(PlacementError::UnknownTx(tx))
    }

    fn record(&mut self, tx: TxId, shard: usize) -> Result<(), PlacementError> {
        if let Some(scores) = self.scores.as_mut() {
            scores.commit_placement(tx, shard)?;
        }
        self.shard_of.push(shard as u32);
        self.counts[shard] += 1;
        Ok(())
    }

    /// Places the next transaction with the configured strategy.
    pub fn place(&mut self, graph: &TanGraph, tx: TxId) -> Result<PlacementDecision, PlacementError> {
        let record = self.check_next(graph, tx)?;
        let parents = self.parent_shards(record)?;
        let input_shards: ShardSet = parents.iter().copied().collect();
        let k = self.cfg.k;
        let cap_n = self.cfg.capacity_n.unwrap_or(self.shard_of.len() as u64 + 1);
        let cap = size_cap(cap_n, k, self.cfg.epsilon);
        let shard = match self.cfg.kind {
            StrategyKind::Random => place_random(tx, input_shards, k).shard,
            StrategyKind::Greedy => {
                let choice = greedy_choice(&parents, &self.counts, cap);
                self.full_events += u64::from(choice.fallback);
                choice.shard
            }
            StrategyKind::T2s => {
                let score = self.scores.as_mut().expect("t2s keeps scores").compute_score(tx, graph)?;
                let choice = t2s_choice(&score, &self.counts, cap);
                self.full_events += u64::from(choice.fallback);
                choice.shard
            }
            StrategyKind::Optchain => {
                let score = self.scores.as_mut().expect("optchain keeps scores").compute_score(tx, graph)?;
                let cache = self.latency.as_mut().expect("optchain keeps latency");
                optchain_choice(&score, input_shards, cache, self.cfg.fitness_weight)?
            }
            StrategyKind::Imported => {
                let partition = self
                    .partition
                    .as_deref()
                    .ok_or_else(|| PlacementError::Config("imported strategy needs a partition".into()))?;
                place_imported(tx, input_shards, partition)?.shard
            }
        };
        self.record(tx, shard)?;
        Ok(PlacementDecision::new(tx, shard, input_shards))
    }

    /// Forces the next transaction into `shard` (warm start from a partition).
    pub fn assign(&mut self, graph: &TanGraph, tx: TxId, shard: usize) -> Result<PlacementDecision, PlacementError> {
        if shard >= self.cfg.k {
            return Err(PlacementError::Config(format!("shard {shard} >= k = {}", self.cfg.k)));
        }
        let record = self.check_next(graph, tx)?;
        let input_shards: ShardSet = self.parent_shards(record)?.into_iter().collect();
        if let Some(scores) = self.scores.as_mut() {
            scores.compute_score(tx, graph)?;
        }
        self.record(tx, shard)?;
        Ok(PlacementDecision::new(tx, shard, input_shards))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTxReport {
    pub total: u64,
    pub cross_count: u64,
    pub fraction: f64,
    pub per_shard: Vec<u64>,
}

pub fn cross_tx_report(decisions: &[PlacementDecision], k: usize) -> CrossTxReport {
    let mut per_shard = vec![0u64; k];
    let mut cross = 0u64;
    for d in decisions {
        if d.shard >= per_shard.len() {
            per_shard.resize(d.shard + 1, 0);
        }
        per_shard[d.shard] += 1;
        cross += u64::from(d.is_cross_shard);
    }
    let total = decisions.len() as u64;
    CrossTxReport {
        total,
        cross_count: cross,
        fraction: if total == 0 { 0.0 } else { cross as f64 / total as f64 },
        per_shard,
    }
}

/// Writes `tx_id,shard,is_cross,input_shards` rows.
pub fn write_decision_log<W: Write>(w: W, decisions: &[PlacementDecision]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tx_id", "shard", "is_cross", "input_shards"])?;
    for d in decisions {
        out.write_record([
            d.tx.to_string(),
            d.shard.to_string(),
            u8::from(d.is_cross_shard).to_string(),
            d.input_shards.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Result of placing a whole stream offline.
#[derive(Debug, Clone)]
pub struct PlacementRun {
    /// Decisions for the placed (non-warm-start) suffix.
    pub decisions: Vec<PlacementDecision>,
    pub report: CrossTxReport,
    pub full_events: u64,
}

/// Places every record of `records` in order. The first `warm.len()`
/// transactions are forced into the given shards and excluded from the report.
pub fn place_stream<I>(records: I, cfg: StrategyConfig, partition: Option<Vec<u32>>, warm: &[u32]) -> Result<PlacementRun, crate::Error>
where
    I: IntoIterator<Item = Result<TxRecord, crate::Error>>,
{
    let mut placer = Placer::new(cfg.clone())?;
    if let Some(p) = partition {
        placer = placer.with_partition(p)?;
    }
    let mut graph = TanGraph::new();
    let mut decisions = Vec::new();
    for record in records {
        let record = record?;
        let tx = graph.add_tx(record)?;
        if tx.index() < warm.len() {
            placer.assign(&graph, tx, warm[tx.index()] as usize)?;
        } else {
            decisions.push(placer.place(&graph, tx)?);
        }
    }
    let report = cross_tx_report(&decisions, cfg.k);
    Ok(PlacementRun {
        decisions,
        report,
        full_events: placer.full_events(),
    })
}
