use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::metrics::{mean, quantile, MetricsReport, SampleRow};
use super::{Arrival, SimConfig, SimError};
use crate::l2s::{estimate_rates, EstimatorConfig, ShardTelemetry};
use crate::placement::{Placer, StrategyKind};
use crate::shard::ShardSet;
use crate::tan::{TanGraph, TxId, TxRecord};

/// A spent output: `(parent, ordinal)`. The `i`-th distinct child of a
/// transaction spends its output `i`; a double-spend twin reuses the
/// outpoints of its original.
type Outpoint = (u32, u32);

/// Keeps the injection schedule independent of anything a strategy draws.
const INJECTION_STREAM: u64 = 0x696e_6a65_6374;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TxStatus {
    Pending,
    Committed,
    Aborted,
}

/// Final state of one injected transaction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TxOutcome {
    pub status: TxStatus,
    pub shard: usize,
    pub input_shards: ShardSet,
    pub cross: bool,
    pub submit_time: f64,
    /// Arrival of the last proof, for cross-shard transactions.
    pub last_proof: Option<f64>,
    pub commit_time: Option<f64>,
}

impl TxOutcome {
    pub fn latency(&self) -> Option<f64> {
        self.commit_time.map(|c| c - self.submit_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SpentEntry {
    pub parent: TxId,
    pub ordinal: u32,
    pub owner: TxId,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: MetricsReport,
    pub samples: Vec<SampleRow>,
    /// Indexed by transaction id.
    pub outcomes: Vec<TxOutcome>,
    /// Per shard, the outputs marked spent at the end of the run.
    pub ledger: Vec<Vec<SpentEntry>>,
}

impl SimOutput {
    /// Latencies of committed transactions in id order.
    pub fn latencies(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(TxOutcome::latency).collect()
    }
}

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Shard per transaction, for the imported strategy.
    pub partition: Option<Vec<u32>>,
    /// `(original, twin)` pairs: the twin spends the original's outputs.
    pub conflicts: &'a [(TxId, TxId)],
    /// Newline-delimited JSON trace of every processed event.
    pub event_log: Option<&'a mut dyn Write>,
}

#[derive(Debug, Clone, Copy)]
enum Request {
    Lock(u32),
    SameShard(u32),
    Commit(u32),
    Abort(u32),
}

impl Request {
    fn name(self) -> (&'static str, u32) {
        match self {
            Request::Lock(t) => ("lock", t),
            Request::SameShard(t) => ("same_shard", t),
            Request::Commit(t) => ("commit", t),
            Request::Abort(t) => ("abort", t),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Reply {
    Proof { tx: u32, accepted: bool },
    Confirm { tx: u32, committed: bool },
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    ConsensusDone { shard: usize },
    ToShard { shard: usize, req: Request },
    ToClient { shard: usize, sent: f64, reply: Reply },
    BlockTimer,
    RateRefresh,
    Submit,
    Sample,
}

impl Kind {
    fn priority(&self) -> u8 {
        match self {
            Kind::ConsensusDone { .. } => 0,
            Kind::ToShard { .. } => 1,
            Kind::ToClient { .. } => 2,
            Kind::BlockTimer => 3,
            Kind::RateRefresh => 4,
            Kind::Submit => 5,
            Kind::Sample => 6,
        }
    }
}

#[derive(Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl Event {
    fn key(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.priority().cmp(&other.kind.priority()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key(self)
    }
}

struct Life {
    shard: usize,
    inputs: ShardSet,
    cross: bool,
    submit: f64,
    awaiting: ShardSet,
    accepted: ShardSet,
    rejected: bool,
    last_proof: Option<f64>,
    commit: Option<f64>,
    status: TxStatus,
}

struct Shard {
    mempool: VecDeque<Request>,
    busy: bool,
    /// A timer tick fired during consensus; the next block starts on completion.
    tick_missed: bool,
    block_start: f64,
    results: Vec<Reply>,
    spent: HashMap<Outpoint, u32>,
    /// Requests sent to the shard and not yet taken into a block.
    backlog: usize,
    telemetry: ShardTelemetry,
}

struct Engine<'a, 'w> {
    cfg: &'a SimConfig,
    records: &'a [TxRecord],
    twin_of: HashMap<u32, u32>,
    graph: TanGraph,
    placer: Placer,
    optchain: bool,
    estimator: EstimatorConfig,
    msg_delay: f64,

    heap: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    inj_rng: ChaCha8Rng,
    next_arrival: f64,

    lives: Vec<Life>,
    outpoints: Vec<Vec<(Outpoint, usize)>>,
    next_ordinal: Vec<u32>,
    shards: Vec<Shard>,
    in_flight: u64,

    injected: u64,
    committed: u64,
    aborted: u64,
    cross_count: u64,
    committed_at_sample: u64,
    last_submit: f64,
    last_commit: f64,
    blocks: u64,
    unlock_aborts: u64,
    samples: Vec<SampleRow>,
    log: Option<&'w mut dyn Write>,
}

/// Runs the simulation over `records`, which must be in arrival order.
pub fn simulate(cfg: &SimConfig, records: &[TxRecord], opts: RunOptions<'_>) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let mut placer = Placer::new(cfg.strategy())?;
    if let Some(p) = opts.partition {
        placer = placer.with_partition(p)?;
    }
    let mut twin_of = HashMap::new();
    for &(orig, twin) in opts.conflicts {
        if orig >= twin || twin.index() >= records.len() {
            return Err(SimError::BadConflict(orig, twin));
        }
        twin_of.insert(twin.0, orig.0);
    }
    let msg_delay = cfg.message_delay();
    let mut engine = Engine {
        cfg,
        records,
        twin_of,
        graph: TanGraph::with_capacity(records.len()),
        optchain: placer.config().kind == StrategyKind::Optchain,
        placer,
        estimator: EstimatorConfig {
            half_life: cfg.telemetry_half_life,
            default_rtt: 2.0 * msg_delay,
            default_commit_interval: cfg.block_delay(0),
            block_capacity: cfg.block_capacity,
        },
        msg_delay,
        heap: BinaryHeap::new(),
        seq: 0,
        now: 0.0,
        inj_rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ INJECTION_STREAM),
        next_arrival: 0.0,
        lives: Vec::with_capacity(records.len()),
        outpoints: Vec::with_capacity(records.len()),
        next_ordinal: vec![0; records.len()],
        shards: (0..cfg.k)
            .map(|_| Shard {
                mempool: VecDeque::new(),
                busy: false,
                tick_missed: false,
                block_start: 0.0,
                results: Vec::new(),
                spent: HashMap::new(),
                backlog: 0,
                telemetry: ShardTelemetry::new(cfg.telemetry_half_life),
            })
            .collect(),
        in_flight: 0,
        injected: 0,
        committed: 0,
        aborted: 0,
        cross_count: 0,
        committed_at_sample: 0,
        last_submit: 0.0,
        last_commit: 0.0,
        blocks: 0,
        unlock_aborts: 0,
        samples: Vec::new(),
        log: opts.event_log,
    };
    engine.run()?;
    Ok(engine.finish())
}

impl Engine<'_, '_> {
    fn schedule(&mut self, time: f64, kind: Kind) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn emit(&mut self, line: serde_json::Value) -> Result<(), SimError> {
        if let Some(w) = self.log.as_mut() {
            serde_json::to_writer(&mut **w, &line).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn pending(&self) -> u64 {
        self.injected - self.committed - self.aborted
    }

    fn work_remaining(&self) -> bool {
        (self.injected as usize) < self.records.len()
            || self.in_flight > 0
            || self.pending() > 0
            || self.shards.iter().any(|s| s.busy || !s.mempool.is_empty())
    }

    fn draw_gap(&mut self) -> f64 {
        match self.cfg.arrival {
            Arrival::Fixed => 1.0 / self.cfg.tx_rate,
            Arrival::Poisson => {
                let u: f64 = self.inj_rng.random();
                -(1.0 - u).ln() / self.cfg.tx_rate
            }
        }
    }

    fn arrival_time(&mut self, index: usize) -> f64 {
        match self.cfg.arrival {
            Arrival::Fixed => index as f64 / self.cfg.tx_rate,
            Arrival::Poisson => {
                self.next_arrival += self.draw_gap();
                self.next_arrival
            }
        }
    }

    fn run(&mut self) -> Result<(), SimError> {
        if self.records.is_empty() {
            return Ok(());
        }
        let first = self.arrival_time(0);
        self.schedule(first, Kind::Submit);
        self.schedule(self.cfg.block_interval, Kind::BlockTimer);
        self.schedule(self.cfg.sample_period, Kind::Sample);
        if self.optchain {
            self.schedule(0.0, Kind::RateRefresh);
        }
        let mut timer_ticks = 1u64;
        let mut sample_ticks = 1u64;
        let mut refresh_ticks = 0u64;
        while let Some(ev) = self.heap.pop() {
            self.now = ev.time;
            match ev.kind {
                Kind::Submit => {
                    let index = self.injected as usize;
                    self.submit_tx(index)?;
                    if index + 1 < self.records.len() {
                        let t = self.arrival_time(index + 1);
                        self.schedule(t, Kind::Submit);
                    }
                }
                Kind::ToShard { shard, req } => {
                    self.in_flight -= 1;
                    let (name, tx) = req.name();
                    self.emit(json!({"t": self.now, "ev": "arrive", "shard": shard, "req": name, "tx": tx}))?;
                    let s = &mut self.shards[shard];
                    s.mempool.push_back(req);
                    if !s.busy && s.mempool.len() >= self.cfg.block_capacity {
                        self.form_block(shard)?;
                    }
                }
                Kind::ToClient { shard, sent, reply } => {
                    self.in_flight -= 1;
                    let rtt = 2.0 * (self.now - sent);
                    self.shards[shard].telemetry.rtt.observe(self.now, rtt);
                    self.client_reply(shard, reply)?;
                }
                Kind::ConsensusDone { shard } => self.finish_block(shard)?,
                Kind::BlockTimer => {
                    for shard in 0..self.shards.len() {
                        let s = &mut self.shards[shard];
                        if s.busy {
                            s.tick_missed = true;
                        } else if !s.mempool.is_empty() {
                            self.form_block(shard)?;
                        }
                    }
                    if self.work_remaining() {
                        timer_ticks += 1;
                        self.schedule(timer_ticks as f64 * self.cfg.block_interval, Kind::BlockTimer);
                    }
                }
                Kind::RateRefresh => {
                    self.refresh_rates()?;
                    if (self.injected as usize) < self.records.len() {
                        refresh_ticks += 1;
                        self.schedule(refresh_ticks as f64 * self.cfg.rate_refresh_period, Kind::RateRefresh);
                    }
                }
                Kind::Sample => {
                    let row = self.metrics_snapshot();
                    self.emit(json!({
                        "t": self.now, "ev": "sample", "committed": row.committed,
                        "aborted": row.aborted, "pending": row.pending,
                        "queue_max": row.queue_max, "queue_min": row.queue_min,
                    }))?;
                    self.samples.push(row);
                    if self.work_remaining() {
                        sample_ticks += 1;
                        self.schedule(sample_ticks as f64 * self.cfg.sample_period, Kind::Sample);
                    }
                }
            }
        }
        Ok(())
    }

    fn send_to_shard(&mut self, shard: usize, req: Request) {
        self.in_flight += 1;
        self.shards[shard].backlog += 1;
        self.schedule(self.now + self.msg_delay, Kind::ToShard { shard, req });
    }

    fn send_to_client(&mut self, shard: usize, reply: Reply) {
        self.in_flight += 1;
        let sent = self.now;
        self.schedule(self.now + self.msg_delay, Kind::ToClient { shard, sent, reply });
    }

    /// Places transaction `index` and sends its first protocol messages.
    fn submit_tx(&mut self, index: usize) -> Result<(), SimError> {
        let record = self.records[index].clone();
        let tx = self.graph.add_tx(record)?;
        let decision = self.placer.place(&self.graph, tx)?;
        let ops: Vec<(Outpoint, usize)> = match self.twin_of.get(&tx.0) {
            Some(&orig) => self.outpoints[orig as usize].clone(),
            None => self
                .graph
                .parents(tx)
                .iter()
                .map(|p| {
                    let ord = &mut self.next_ordinal[p.index()];
                    let op = (p.0, *ord);
                    *ord += 1;
                    let holder = self.placer.shard_of(*p).expect("parents are placed first");
                    (op, holder)
                })
                .collect(),
        };
        self.outpoints.push(ops);
        self.injected += 1;
        self.last_submit = self.now;
        self.cross_count += u64::from(decision.is_cross_shard);
        self.lives.push(Life {
            shard: decision.shard,
            inputs: decision.input_shards,
            cross: decision.is_cross_shard,
            submit: self.now,
            awaiting: if decision.is_cross_shard {
                decision.input_shards
            } else {
                ShardSet::EMPTY
            },
            accepted: ShardSet::EMPTY,
            rejected: false,
            last_proof: None,
            commit: None,
            status: TxStatus::Pending,
        });
        self.emit(json!({
            "t": self.now, "ev": "submit", "tx": tx.0, "shard": decision.shard,
            "inputs": decision.input_shards.to_string(), "cross": decision.is_cross_shard,
        }))?;
        if decision.is_cross_shard {
            for s in decision.input_shards.iter() {
                self.send_to_shard(s, Request::Lock(tx.0));
            }
        } else {
            self.send_to_shard(decision.shard, Request::SameShard(tx.0));
        }
        Ok(())
    }

    /// Locks the outputs `tx` spends on `shard` if none of them is spent.
    fn process_lock(&mut self, shard: usize, tx: u32) -> bool {
        let ops = &self.outpoints[tx as usize];
        let s = &mut self.shards[shard];
        let free = ops
            .iter()
            .filter(|(_, h)| *h == shard)
            .all(|(op, _)| !s.spent.contains_key(op));
        if free {
            for (op, _) in ops.iter().filter(|(_, h)| *h == shard) {
                s.spent.insert(*op, tx);
            }
        }
        free
    }

    fn release(&mut self, shard: usize, tx: u32) {
        let ops = &self.outpoints[tx as usize];
        let s = &mut self.shards[shard];
        for (op, _) in ops.iter().filter(|(_, h)| *h == shard) {
            if s.spent.get(op) == Some(&tx) {
                s.spent.remove(op);
            }
        }
    }

    fn form_block(&mut self, shard: usize) -> Result<(), SimError> {
        let take = self.shards[shard].mempool.len().min(self.cfg.block_capacity);
        if take == 0 {
            return Ok(());
        }
        let mut results = std::mem::take(&mut self.shards[shard].results);
        for _ in 0..take {
            let req = self.shards[shard].mempool.pop_front().expect("counted above");
            match req {
                Request::Lock(tx) => {
                    let accepted = self.process_lock(shard, tx);
                    results.push(Reply::Proof { tx, accepted });
                }
                Request::SameShard(tx) => {
                    let committed = self.process_lock(shard, tx);
                    results.push(Reply::Confirm { tx, committed });
                }
                Request::Commit(tx) => results.push(Reply::Confirm { tx, committed: true }),
                Request::Abort(tx) => self.release(shard, tx),
            }
        }
        let s = &mut self.shards[shard];
        s.results = results;
        s.busy = true;
        s.block_start = self.now;
        s.backlog -= take;
        self.blocks += 1;
        let done = self.now + self.cfg.block_delay(take);
        self.emit(json!({"t": self.now, "ev": "block", "shard": shard, "items": take, "done": done}))?;
        self.schedule(done, Kind::ConsensusDone { shard });
        Ok(())
    }

    fn finish_block(&mut self, shard: usize) -> Result<(), SimError> {
        let s = &mut self.shards[shard];
        s.busy = false;
        let took = self.now - s.block_start;
        s.telemetry.commit_interval.observe(self.now, took);
        let results = std::mem::take(&mut s.results);
        self.emit(json!({"t": self.now, "ev": "block_done", "shard": shard, "results": results.len()}))?;
        for reply in &results {
            self.send_to_client(shard, *reply);
        }
        let mut results = results;
        results.clear();
        self.shards[shard].results = results;
        let s = &mut self.shards[shard];
        let due = std::mem::take(&mut s.tick_missed);
        if s.mempool.len() >= self.cfg.block_capacity || (due && !s.mempool.is_empty()) {
            self.form_block(shard)?;
        }
        Ok(())
    }

    fn client_reply(&mut self, shard: usize, reply: Reply) -> Result<(), SimError> {
        match reply {
            Reply::Proof { tx, accepted } => {
                self.emit(json!({"t": self.now, "ev": "proof", "tx": tx, "shard": shard, "accepted": accepted}))?;
                let life = &mut self.lives[tx as usize];
                life.awaiting = ShardSet::from_bits(life.awaiting.bits() & !(1u64 << shard));
                life.last_proof = Some(self.now);
                if accepted {
                    life.accepted.insert(shard);
                } else {
                    life.rejected = true;
                }
                if !life.awaiting.is_empty() {
                    return Ok(());
                }
                if !life.rejected {
                    let out = life.shard;
                    self.send_to_shard(out, Request::Commit(tx));
                } else {
                    life.status = TxStatus::Aborted;
                    let accepted = life.accepted;
                    self.aborted += 1;
                    self.emit(json!({"t": self.now, "ev": "abort", "tx": tx}))?;
                    for s in accepted.iter() {
                        self.unlock_aborts += 1;
                        self.send_to_shard(s, Request::Abort(tx));
                    }
                }
            }
            Reply::Confirm { tx, committed } => {
                let life = &mut self.lives[tx as usize];
                if committed {
                    life.status = TxStatus::Committed;
                    life.commit = Some(self.now);
                    self.committed += 1;
                    self.last_commit = self.now;
                    self.emit(json!({"t": self.now, "ev": "commit", "tx": tx}))?;
                } else {
                    life.status = TxStatus::Aborted;
                    self.aborted += 1;
                    self.emit(json!({"t": self.now, "ev": "abort", "tx": tx}))?;
                }
            }
        }
        Ok(())
    }

    fn refresh_rates(&mut self) -> Result<(), SimError> {
        for s in self.shards.iter_mut() {
            s.telemetry.queue_len = s.backlog;
        }
        let telemetry: Vec<ShardTelemetry> = self.shards.iter().map(|s| s.telemetry.clone()).collect();
        let model = estimate_rates(&telemetry, &self.estimator);
        self.placer.set_rate_model(model)?;
        Ok(())
    }

    fn metrics_snapshot(&mut self) -> SampleRow {
        let queues = self.shards.iter().map(|s| s.mempool.len());
        let queue_max = queues.clone().max().unwrap_or(0);
        let queue_min = queues.min().unwrap_or(0);
        let row = SampleRow {
            time: self.now,
            committed_window: self.committed - self.committed_at_sample,
            queue_max,
            queue_min,
            ratio: queue_max as f64 / queue_min.max(1) as f64,
            cross_frac: if self.injected == 0 {
                0.0
            } else {
                self.cross_count as f64 / self.injected as f64
            },
            injected: self.injected,
            committed: self.committed,
            aborted: self.aborted,
            pending: self.pending(),
        };
        self.committed_at_sample = self.committed;
        row
    }

    fn finish(self) -> SimOutput {
        let outcomes: Vec<TxOutcome> = self
            .lives
            .iter()
            .map(|l| TxOutcome {
                status: l.status,
                shard: l.shard,
                input_shards: l.inputs,
                cross: l.cross,
                submit_time: l.submit,
                last_proof: l.last_proof,
                commit_time: l.commit,
            })
            .collect();
        let mut latencies: Vec<f64> = outcomes.iter().filter_map(TxOutcome::latency).collect();
        latencies.sort_by(f64::total_cmp);
        let lat_of = |cross: bool| {
            outcomes
                .iter()
                .filter(|o| o.cross == cross)
                .filter_map(TxOutcome::latency)
                .collect::<Vec<_>>()
        };
        let same = lat_of(false);
        let cross = lat_of(true);

        let span = if self.injected == 0 {
            0.0
        } else {
            self.last_commit.max(self.last_submit + 1.0 / self.cfg.tx_rate)
        };
        let warm = 0.1 * self.last_submit;
        let steady_commits = outcomes
            .iter()
            .filter_map(|o| o.commit_time)
            .filter(|&c| c >= warm && c <= self.last_submit)
            .count();
        let steady_span = self.last_submit - warm;

        let report = MetricsReport {
            strategy: self.placer.config().kind.name().to_owned(),
            k: self.cfg.k,
            tx_rate: self.cfg.tx_rate,
            injected: self.injected,
            committed: self.committed,
            aborted: self.aborted,
            pending: self.injected - self.committed - self.aborted,
            cross_tx_count: self.cross_count,
            cross_tx_fraction: if self.injected == 0 {
                0.0
            } else {
                self.cross_count as f64 / self.injected as f64
            },
            end_time: self.now,
            throughput: if span > 0.0 { self.committed as f64 / span } else { 0.0 },
            steady_throughput: if steady_span > 0.0 {
                steady_commits as f64 / steady_span
            } else {
                0.0
            },
            mean_latency: mean(latencies.iter().copied()),
            max_latency: latencies.last().copied().unwrap_or(0.0),
            p50_latency: quantile(&latencies, 0.5),
            p90_latency: quantile(&latencies, 0.9),
            p99_latency: quantile(&latencies, 0.99),
            mean_latency_same_shard: mean(same.iter().copied()),
            mean_latency_cross_shard: mean(cross.iter().copied()),
            same_shard_committed: same.len() as u64,
            cross_shard_committed: cross.len() as u64,
            mean_queue_ratio: if self.samples.is_empty() {
                1.0
            } else {
                mean(self.samples.iter().map(|r| r.ratio))
            },
            max_queue: self.samples.iter().map(|r| r.queue_max).max().unwrap_or(0),
            blocks: self.blocks,
            unlock_aborts: self.unlock_aborts,
            full_events: self.placer.full_events(),
        };
        let ledger = self
            .shards
            .iter()
            .map(|s| {
                let mut v: Vec<SpentEntry> = s
                    .spent
                    .iter()
                    .map(|(&(p, o), &owner)| SpentEntry {
                        parent: TxId(p),
                        ordinal: o,
                        owner: TxId(owner),
                    })
                    .collect();
                v.sort_by_key(|e| (e.parent, e.ordinal));
                v
            })
            .collect();
        SimOutput {
            report,
            samples: self.samples,
            outcomes,
            ledger,
        }
    }
}
