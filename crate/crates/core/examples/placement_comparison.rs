//! Cross-shard fractions of every online strategy on one synthetic stream.
//!
//! ```text
//! cargo run --release --example placement_comparison -- [n] [seed]
//! ```

use optchain::placement::place_stream;
use optchain::{generate_synthetic, StrategyConfig, StrategyKind, SynthConfig};

fn main() -> Result<(), optchain::Error> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(100_000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let stream = generate_synthetic(&SynthConfig {
        n,
        seed,
        ..Default::default()
    })?;
    let edges: usize = stream.records.iter().map(|r| r.inputs.len()).sum();
    println!("{n} transactions, mean in-degree {:.3}", edges as f64 / n as f64);

    let kinds = [
        StrategyKind::Random,
        StrategyKind::Greedy,
        StrategyKind::T2s,
        StrategyKind::Optchain,
    ];
    println!("{:>4} {:>10} {:>10} {:>10} {:>10}", "k", "random", "greedy", "t2s", "optchain");
    for k in [4, 8, 16] {
        print!("{k:>4}");
        for kind in kinds {
            let cfg = StrategyConfig {
                capacity_n: Some(n as u64),
                ..StrategyConfig::new(kind, k)
            };
            let run = place_stream(stream.records.iter().cloned().map(Ok), cfg, None, &[])?;
            print!(" {:>9.2}%", 100.0 * run.report.fraction);
        }
        println!();
    }
    Ok(())
}
