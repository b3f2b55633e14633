//! Conflicting twins race through the lock phase; exactly one of each pair
//! commits.
//!
//! ```text
//! cargo run --release --example double_spend -- [n] [fraction]
//! ```

use optchain::ingest::inject_double_spends;
use optchain::sim::{simulate, RunOptions, TxStatus};
use optchain::{generate_synthetic, SimConfig, StrategyConfig, StrategyKind, SynthConfig};

fn main() -> Result<(), optchain::Error> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let fraction: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.01);
    let base = generate_synthetic(&SynthConfig {
        n,
        ..Default::default()
    })?;
    let (records, pairs) = inject_double_spends(&base.records, fraction, 1);
    let cfg = SimConfig {
        k: 8,
        tx_rate: 2000.0,
        strategy: StrategyConfig::new(StrategyKind::Optchain, 8),
        ..Default::default()
    };
    let out = simulate(
        &cfg,
        &records,
        RunOptions {
            conflicts: &pairs,
            ..Default::default()
        },
    )?;
    let mut original_won = 0;
    for &(a, b) in &pairs {
        let (sa, sb) = (out.outcomes[a.index()].status, out.outcomes[b.index()].status);
        assert!(matches!(
            (sa, sb),
            (TxStatus::Committed, TxStatus::Aborted) | (TxStatus::Aborted, TxStatus::Committed)
        ));
        original_won += usize::from(sa == TxStatus::Committed);
    }
    let r = &out.report;
    println!(
        "{} pairs: original won {original_won}, twin won {}",
        pairs.len(),
        pairs.len() - original_won
    );
    println!(
        "committed {}, aborted {}, unlock-to-abort messages {}",
        r.committed, r.aborted, r.unlock_aborts
    );
    Ok(())
}
