//! Transaction-to-Shard (T2S) scores.
//!
//! Each transaction `u` carries a raw vector `p'(u)` of length `k`:
//!
//! ```text
//! p'(u) = (1 - alpha) * sum_{v in parents(u)} p'(v) / |children(v)|
//! ```
//!
//! and, once `u` is placed in shard `s`, `p'(u)[s] += alpha`. The score used
//! for placement divides entry `i` by the current size of shard `i`. Placing
//! a transaction only moves the normalization denominators of other nodes,
//! so a query costs `O(k * |parents(u)|)`.
//!
//! `|children(v)|` is read once, right after `u`'s edges are attached, and
//! never revisited when `v` later gains more children.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::tan::{TanGraph, TxId};

pub const DEFAULT_ALPHA: f64 = 0.5;

const UNPLACED: u32 = u32::MAX;
const CHECKPOINT_MAGIC: &[u8; 4] = b"T2SS";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("alpha must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("shard count must be at least 1")]
    ZeroShards,
    #[error("parent {parent} of {tx} has no finalized score")]
    MissingParentScore { tx: TxId, parent: TxId },
    #[error("parent {parent} of {tx} has zero out-degree")]
    ZeroOutDegree { tx: TxId, parent: TxId },
    #[error("transaction {0} is not in the graph")]
    UnknownTx(TxId),
    #[error("scores must be computed in arrival order: expected {expected}, got {got}")]
    OutOfOrder { expected: TxId, got: TxId },
    #[error("graph already holds transactions after {0}; out-degree snapshot is gone")]
    GraphAhead(TxId),
    #[error("transaction {0} has no computed score")]
    NotScored(TxId),
    #[error("transaction {0} is already placed")]
    DoubleCommit(TxId),
    #[error("shard index {shard} out of range for k = {k}")]
    BadShardIndex { shard: usize, k: usize },
    #[error("checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Normalized T2S score of one transaction.
#[derive(Debug, Clone, PartialEq)]
pub struct T2SVector {
    pub values: Vec<f64>,
}

impl T2SVector {
    pub fn zeros(k: usize) -> Self {
        T2SVector {
            values: vec![0.0; k],
        }
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax_lowest(self.values.iter().copied().enumerate()).unwrap_or(0)
    }
}

pub(crate) fn argmax_lowest(items: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in items {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone)]
pub struct ScoreState {
    alpha: f64,
    k: usize,
    p_raw: Vec<f64>,
    placement: Vec<u32>,
    shard_sizes: Vec<u64>,
}

impl ScoreState {
    pub fn new(k: usize, alpha: f64) -> Result<Self, ScoreError> {
        if k == 0 {
            return Err(ScoreError::ZeroShards);
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ScoreError::BadAlpha(alpha));
        }
        Ok(ScoreState {
            alpha,
            k,
            p_raw: Vec::new(),
            placement: Vec::new(),
            shard_sizes: vec![0; k],
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of transactions with a stored raw vector.
    pub fn len(&self) -> usize {
        self.placement.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placement.is_empty()
    }

    pub fn shard_sizes(&self) -> &[u64] {
        &self.shard_sizes
    }

    pub fn raw(&self, u: TxId) -> Option<&[f64]> {
        (u.index() < self.len()).then(|| &self.p_raw[u.index() * self.k..(u.index() + 1) * self.k])
    }

    pub fn shard_of(&self, u: TxId) -> Option<usize> {
        match self.placement.get(u.index()) {
            Some(&s) if s != UNPLACED => Some(s as usize),
            _ => None,
        }
    }

    /// Raw vector of `u` without storing it. `u` must be the newest node of
    /// `graph` so that parent out-degrees are the arrival-time snapshot.
    pub fn preview_raw(&self, u: TxId, graph: &TanGraph) -> Result<Vec<f64>, ScoreError> {
        let record = graph.get(u).ok_or(ScoreError::UnknownTx(u))?;
        if graph.len() != u.index() + 1 {
            return Err(ScoreError::GraphAhead(u));
        }
        let mut raw = vec![0.0; self.k];
        if record.is_coinbase() {
            return Ok(raw);
        }
        let damping = 1.0 - self.alpha;
        for &parent in &record.inputs {
            if self.shard_of(parent).is_none() {
                return Err(ScoreError::MissingParentScore { tx: u, parent });
            }
            let degree = graph.out_degree(parent);
            if degree == 0 {
                return Err(ScoreError::ZeroOutDegree { tx: u, parent });
            }
            let scale = damping / f64::from(degree);
            let base = parent.index() * self.k;
            for (acc, &p) in raw.iter_mut().zip(&self.p_raw[base..base + self.k]) {
                *acc += scale * p;
            }
        }
        Ok(raw)
    }

    /// Divides each entry by `max(|S_i|, 1)`.
    pub fn normalize(&self, raw: &[f64]) -> T2SVector {
        T2SVector {
            values: raw
                .iter()
                .zip(&self.shard_sizes)
                .map(|(&p, &size)| p / size.max(1) as f64)
                .collect(),
        }
    }

    /// Computes and stores `p'(u)`, returning the normalized score.
    pub fn compute_score(&mut self, u: TxId, graph: &TanGraph) -> Result<T2SVector, ScoreError> {
        let next = self.len();
        let overwrite = u.index() + 1 == next && self.placement[u.index()] == UNPLACED;
        if u.index() != next && !overwrite {
            return Err(ScoreError::OutOfOrder {
                expected: TxId::from_index(next),
                got: u,
            });
        }
        let raw = self.preview_raw(u, graph)?;
        let score = self.normalize(&raw);
        if overwrite {
            let base = u.index() * self.k;
            self.p_raw[base..base + self.k].copy_from_slice(&raw);
        } else {
            self.p_raw.extend_from_slice(&raw);
            self.placement.push(UNPLACED);
        }
        Ok(score)
    }

    pub fn commit_placement(&mut self, u: TxId, shard: usize) -> Result<(), ScoreError> {
        if shard >= self.k {
            return Err(ScoreError::BadShardIndex { shard, k: self.k });
        }
        let slot = self
            .placement
            .get_mut(u.index())
            .ok_or(ScoreError::NotScored(u))?;
        if *slot != UNPLACED {
            return Err(ScoreError::DoubleCommit(u));
        }
        *slot = shard as u32;
        self.p_raw[u.index() * self.k + shard] += self.alpha;
        self.shard_sizes[shard] += 1;
        Ok(())
    }

    /// Writes a little-endian binary checkpoint.
    ///
    /// Layout: magic `T2SS`, `u32` version, `u32` k, `u64` n, `f64` alpha,
    /// k x `u64` shard sizes, n x `u32` placements (`u32::MAX` = unplaced),
    /// n*k x `f64` raw scores in row-major order.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), ScoreError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.k as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.alpha.to_le_bytes())?;
        for &s in &self.shard_sizes {
            w.write_all(&s.to_le_bytes())?;
        }
        for &p in &self.placement {
            w.write_all(&p.to_le_bytes())?;
        }
        for &v in &self.p_raw {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, ScoreError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(ScoreError::BadCheckpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(ScoreError::BadCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let k = read_u32(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        let alpha = f64::from_bits(read_u64(&mut r)?);
        let mut state = ScoreState::new(k, alpha)?;
        for size in state.shard_sizes.iter_mut() {
            *size = read_u64(&mut r)?;
        }
        state.placement.reserve(n);
        for _ in 0..n {
            let p = read_u32(&mut r)?;
            if p != UNPLACED && p as usize >= k {
                return Err(ScoreError::BadCheckpoint(format!("placement {p} >= k")));
            }
            state.placement.push(p);
        }
        state.p_raw.reserve(n * k);
        for _ in 0..n * k {
            state.p_raw.push(f64::from_bits(read_u64(&mut r)?));
        }
        let mut counts = vec![0u64; k];
        for &p in state.placement.iter().filter(|&&p| p != UNPLACED) {
            counts[p as usize] += 1;
        }
        if counts != state.shard_sizes {
            return Err(ScoreError::BadCheckpoint(
                "shard sizes disagree with placements".into(),
            ));
        }
        Ok(state)
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Recomputes every raw vector from scratch in one forward pass.
///
/// Out-degree snapshots are rebuilt by counting children as they appear, so
/// the result is independent of [`ScoreState`] bookkeeping.
/// `placements[i]` is the shard of transaction `i`.
pub fn batch_oracle(graph: &TanGraph, placements: &[usize], alpha: f64, k: usize) -> Vec<Vec<f64>> {
    assert_eq!(placements.len(), graph.len(), "placements must cover every tx");
    let mut children_seen = vec![0u64; graph.len()];
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(graph.len());
    for (record, &shard) in graph.records().iter().zip(placements) {
        let mut p = vec![0.0; k];
        for parent in &record.inputs {
            children_seen[parent.index()] += 1;
        }
        for parent in &record.inputs {
            let share = (1.0 - alpha) / children_seen[parent.index()] as f64;
            for (acc, &q) in p.iter_mut().zip(&raw[parent.index()]) {
                *acc += share * q;
            }
        }
        p[shard] += alpha;
        raw.push(p);
    }
    raw
}
