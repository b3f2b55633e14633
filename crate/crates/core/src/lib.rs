//! Streaming transaction placement for sharded UTXO ledgers.
//!
//! The crate is organised bottom-up:
//!
//! - [`tan`]: the transactions-as-nodes DAG and its statistics.
//! - [`t2s`]: incremental transaction-to-shard fitness scores.
//! - [`l2s`]: the exponential latency model and rate estimation.
//! - [`placement`]: Random, Greedy, T2S, OptChain and imported strategies.
//! - [`sim`]: a deterministic discrete-event simulator of a sharded ledger
//!   running the lock/commit cross-shard protocol.
//! - [`ingest`]: stream files, external dump conversion, synthetic streams.
//! - [`experiment`]: the pipelines behind the `optchain` binary.

pub mod experiment;
pub mod ingest;
pub mod l2s;
pub mod placement;
pub mod shard;
pub mod sim;
pub mod t2s;
pub mod tan;

use thiserror::Error;

pub use ingest::{generate_synthetic, StreamFile, SynthConfig};
pub use l2s::{LatencyMode, RatePair, ShardRateModel};
pub use placement::{PlacementDecision, Placer, StrategyConfig, StrategyKind};
pub use shard::ShardSet;
pub use sim::{simulate, MetricsReport, SimConfig, SimOutput};
pub use t2s::{ScoreState, T2SVector};
pub use tan::{TanGraph, TxId, TxRecord};

/// Process exit code for invalid configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for unreadable or inconsistent data.
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Tan(#[from] tan::TanError),
    #[error(transparent)]
    Score(#[from] t2s::ScoreError),
    #[error(transparent)]
    Latency(#[from] l2s::L2sError),
    #[error(transparent)]
    Placement(#[from] placement::PlacementError),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Maps the error to the documented process exit code.
    pub fn exit_code(&self) -> i32 {
        use placement::PlacementError as P;
        match self {
            Error::Config(_) | Error::Toml(_) => EXIT_CONFIG,
            Error::Sim(sim::SimError::Config(_) | sim::SimError::Placement(P::Config(_))) => EXIT_CONFIG,
            Error::Ingest(ingest::IngestError::ConfigInvalid(_)) => EXIT_CONFIG,
            Error::Placement(P::Config(_)) => EXIT_CONFIG,
            Error::Score(t2s::ScoreError::BadAlpha(_) | t2s::ScoreError::ZeroShards) => EXIT_CONFIG,
            Error::Latency(l2s::L2sError::NonPositiveRate { .. } | l2s::L2sError::RateFile(_)) => EXIT_CONFIG,
            _ => EXIT_DATA,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
