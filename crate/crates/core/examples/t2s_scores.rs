//! Incremental T2S scores on a small hand-built graph, checked against the
//! batch recomputation.

use optchain::t2s::batch_oracle;
use optchain::{ScoreState, TanGraph, TxId, TxRecord};

fn main() -> Result<(), optchain::Error> {
    // Two coinbases, then spenders that mix their lineages.
    let records = [
        TxRecord::coinbase(TxId(0), 2),
        TxRecord::coinbase(TxId(1), 2),
        TxRecord::new(TxId(2), [TxId(0)], 1),
        TxRecord::new(TxId(3), [TxId(0), TxId(1)], 2),
        TxRecord::new(TxId(4), [TxId(2), TxId(3)], 1),
        TxRecord::new(TxId(5), [TxId(1), TxId(3)], 1),
    ];
    let k = 2;
    let mut graph = TanGraph::new();
    let mut state = ScoreState::new(k, 0.5)?;
    let mut shards = Vec::new();
    for r in records {
        let tx = graph.add_tx(r)?;
        let score = state.compute_score(tx, &graph)?;
        let shard = score.argmax();
        state.commit_placement(tx, shard)?;
        shards.push(shard);
        println!(
            "tx {tx}: score {:?} -> shard {shard}, raw {:?}",
            score.values,
            state.raw(tx).unwrap()
        );
    }
    let oracle = batch_oracle(&graph, &shards, 0.5, k);
    let worst = oracle
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            let got = state.raw(TxId::from_index(i)).unwrap();
            row.iter().zip(got).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    println!("shard sizes {:?}, max gap to batch oracle {worst:e}", state.shard_sizes());
    Ok(())
}
