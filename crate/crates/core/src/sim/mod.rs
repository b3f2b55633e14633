//! Discrete-event simulator of a sharded UTXO ledger.
//!
//! Clients inject transactions at a fixed rate (or as a Poisson process),
//! place each one with a [`Placer`](crate::placement::Placer) and drive the
//! lock / unlock-to-commit protocol:
//!
//! - a same-shard transaction is sent once, to its output shard, which
//!   checks and spends its inputs and commits it in one step;
//! - a cross-shard transaction first sends a lock request to every input
//!   shard, collects the proofs, then sends an unlock-to-commit request to
//!   the output shard, or unlock-to-abort requests to the shards that
//!   accepted if any proof was a rejection.
//!
//! Each shard batches requests from a FIFO mempool into blocks. A block is
//! formed on the block timer or as soon as a full block is waiting, never
//! while the previous one is still in consensus, and its results leave the
//! shard after `consensus_base_delay` plus the block transmission time.
//!
//! The event loop is single-threaded. Simultaneous events are ordered by
//! kind and then by scheduling order, so a run is a pure function of its
//! config and input.

mod engine;
mod metrics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::placement::{PlacementError, StrategyConfig};
use crate::shard::MAX_SHARDS;
use crate::tan::{TanError, TxId};

pub use engine::{simulate, RunOptions, SimOutput, SpentEntry, TxOutcome, TxStatus};
pub use metrics::{
    latency_cdf, write_latency_cdf, write_latency_histogram, write_timeseries, MetricsReport, SampleRow,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("conflict pair ({0}, {1}): twin must come after its original")]
    BadConflict(TxId, TxId),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Tan(#[from] TanError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Arrival {
    /// One transaction every `1 / tx_rate` seconds.
    #[default]
    Fixed,
    /// Exponential inter-arrival times with mean `1 / tx_rate`.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub k: usize,
    /// Transactions per second offered by the clients.
    pub tx_rate: f64,
    /// Requests per block.
    pub block_capacity: usize,
    pub block_bytes: u64,
    pub avg_tx_bytes: u64,
    /// One-way client/shard latency in seconds.
    pub link_latency: f64,
    /// Bits per second.
    pub bandwidth: f64,
    pub consensus_base_delay: f64,
    pub block_interval: f64,
    pub rng_seed: u64,
    /// Placement strategy. Its `k` is overwritten by the simulator's.
    pub strategy: StrategyConfig,
    pub sample_period: f64,
    pub arrival: Arrival,
    /// How often the clients rebuild the shard rate model from telemetry.
    pub rate_refresh_period: f64,
    pub telemetry_half_life: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            k: 16,
            tx_rate: 2000.0,
            block_capacity: 2000,
            block_bytes: 1_048_576,
            avg_tx_bytes: 500,
            link_latency: 0.1,
            bandwidth: 20e6,
            consensus_base_delay: 0.5,
            block_interval: 1.0,
            rng_seed: 1,
            strategy: StrategyConfig::default(),
            sample_period: 50.0,
            arrival: Arrival::Fixed,
            rate_refresh_period: 0.005,
            telemetry_half_life: 30.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.k == 0 || self.k > MAX_SHARDS {
            return bad(format!("k must be in 1..={MAX_SHARDS}, got {}", self.k));
        }
        let positive = [
            ("tx_rate", self.tx_rate),
            ("link_latency", self.link_latency),
            ("bandwidth", self.bandwidth),
            ("consensus_base_delay", self.consensus_base_delay),
            ("block_interval", self.block_interval),
            ("sample_period", self.sample_period),
            ("rate_refresh_period", self.rate_refresh_period),
            ("telemetry_half_life", self.telemetry_half_life),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.block_capacity == 0 || self.avg_tx_bytes == 0 || self.block_bytes == 0 {
            return bad("block_capacity, avg_tx_bytes and block_bytes must be positive".into());
        }
        if self.block_capacity as u64 * self.avg_tx_bytes > self.block_bytes {
            return bad(format!(
                "{} requests of {} bytes do not fit a {}-byte block",
                self.block_capacity, self.avg_tx_bytes, self.block_bytes
            ));
        }
        self.strategy().validate()?;
        Ok(())
    }

    /// Strategy config with the simulator's shard count.
    pub fn strategy(&self) -> StrategyConfig {
        StrategyConfig {
            k: self.k,
            ..self.strategy.clone()
        }
    }

    /// Delay of one protocol message between a client and a shard.
    pub fn message_delay(&self) -> f64 {
        self.link_latency + (self.avg_tx_bytes * 8) as f64 / self.bandwidth
    }

    /// Time a shard spends on a block of `items` requests.
    pub fn block_delay(&self, items: usize) -> f64 {
        self.consensus_base_delay + (items as u64 * self.avg_tx_bytes * 8) as f64 / self.bandwidth
    }

    /// Requests per second one shard clears with a permanently full mempool.
    pub fn shard_capacity(&self) -> f64 {
        self.block_capacity as f64 / self.block_delay(self.block_capacity)
    }
}

/// Shard requests a transaction costs under the protocol: one for a
/// same-shard transaction, one lock per input shard plus the commit otherwise.
pub fn protocol_load(decision: &crate::placement::PlacementDecision) -> usize {
    if decision.is_cross_shard {
        decision.input_shards.len() + 1
    } else {
        1
    }
}
