//! Random, Greedy, T2S and OptChain on the same overloaded sharded ledger.
//!
//! The offered rate is `load` times the transaction service capacity of one
//! shard, per shard: `rate = load * k * capacity`.
//!
//! ```text
//! cargo run --release --example overload_comparison -- [n] [k] [load] [seed]
//! ```

use optchain::sim::{simulate, RunOptions};
use optchain::{generate_synthetic, SimConfig, StrategyConfig, StrategyKind, SynthConfig};

fn main() -> Result<(), optchain::Error> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(100_000);
    let k: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(8);
    let load: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1.5);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let stream = generate_synthetic(&SynthConfig {
        n,
        seed,
        ..Default::default()
    })?;

    let base = SimConfig {
        k,
        rng_seed: seed,
        sample_period: 1.0,
        ..Default::default()
    };
    let rate = load * base.shard_capacity() * k as f64;
    println!(
        "n={n} k={k}: shard capacity {:.0} tx/s, offered {rate:.0} tx/s",
        base.shard_capacity()
    );
    println!(
        "{:>9} {:>10} {:>9} {:>9} {:>9} {:>8} {:>9}",
        "strategy", "throughput", "mean lat", "p99 lat", "cross", "ratio", "end"
    );
    for kind in [StrategyKind::Random, StrategyKind::Greedy, StrategyKind::T2s, StrategyKind::Optchain] {
        let cfg = SimConfig {
            tx_rate: rate,
            strategy: StrategyConfig::new(kind, k),
            ..base.clone()
        };
        let t = std::time::Instant::now();
        let out = simulate(&cfg, &stream.records, RunOptions::default())?;
        let r = &out.report;
        println!(
            "{:>9} {:>10.0} {:>9.2} {:>9.2} {:>8.1}% {:>8.1} {:>9.2}  ({:.1?})",
            kind.name(),
            r.throughput,
            r.mean_latency,
            r.p99_latency,
            100.0 * r.cross_tx_fraction,
            r.mean_queue_ratio,
            r.end_time,
            t.elapsed()
        );
    }
    Ok(())
}
