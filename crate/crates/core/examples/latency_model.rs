//! Expected placement latency under per-shard exponential rates.
//!
//! Shard 2 is congested; the table shows how the proof set and the output
//! shard move the estimate.

use optchain::l2s::{L2SQuery, LatencyCache};
use optchain::{LatencyMode, RatePair, ShardRateModel, ShardSet};

fn main() -> Result<(), optchain::Error> {
    let model = ShardRateModel::new(vec![
        RatePair::new(5.0, 1.0),
        RatePair::new(5.0, 1.2),
        RatePair::new(5.0, 0.2),
    ])?;
    println!("shard  mean proof time");
    for (i, r) in model.shards().iter().enumerate() {
        println!("{i:>5}  {:.3} s", r.mean());
    }
    let mut cache = LatencyCache::new(model.clone(), LatencyMode::Convolved);
    for inputs in [ShardSet::EMPTY, ShardSet::single(0), ShardSet::single(2), ShardSet::from_bits(0b011)] {
        let e = cache.candidate_latencies(inputs)?;
        let row: Vec<String> = e.iter().map(|v| format!("{v:.3}")).collect();
        println!("inputs {{{inputs}}}: E(j) = [{}]", row.join(", "));
    }
    let strict = model.expected_latency(&L2SQuery::for_placement(0, ShardSet::single(1)), LatencyMode::StrictPaper)?;
    println!("literal double integral, inputs {{1}} output 0: {strict:.3}");
    Ok(())
}
