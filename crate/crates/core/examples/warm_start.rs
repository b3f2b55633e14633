//! Warm-starts OptChain from a fixed partition of a stream prefix, then
//! places the rest online.
//!
//! ```text
//! cargo run --release --example warm_start -- [n] [prefix]
//! ```

use optchain::placement::place_stream;
use optchain::{generate_synthetic, StrategyConfig, StrategyKind, SynthConfig};

fn main() -> Result<(), optchain::Error> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(50_000);
    let prefix: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let k = 8;
    let stream = generate_synthetic(&SynthConfig {
        n,
        ..Default::default()
    })?;
    // Prefix placed by T2S, as if it came from an earlier run.
    let first = place_stream(
        stream.records[..prefix].iter().cloned().map(Ok),
        StrategyConfig::new(StrategyKind::T2s, k),
        None,
        &[],
    )?;
    let warm: Vec<u32> = first.decisions.iter().map(|d| d.shard as u32).collect();
    for (label, warm) in [("cold", &[][..]), ("warm", &warm[..])] {
        let run = place_stream(
            stream.records.iter().cloned().map(Ok),
            StrategyConfig::new(StrategyKind::T2s, k),
            None,
            warm,
        )?;
        println!(
            "{label}: {} placed online, cross {:.2}%, per shard {:?}",
            run.report.total,
            100.0 * run.report.fraction,
            run.report.per_shard
        );
    }
    Ok(())
}
