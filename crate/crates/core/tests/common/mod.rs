#![allow(dead_code)]

use optchain::{TxId, TxRecord};
use proptest::prelude::*;

/// Topologically ordered records: each transaction spends up to four earlier
/// ones, possibly repeating a parent, and declares 1..=5 outputs.
pub fn stream(max_len: usize) -> impl Strategy<Value = Vec<TxRecord>> {
    prop::collection::vec((prop::collection::vec(any::<prop::sample::Index>(), 0..5), 1u32..=5), 1..max_len)
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (picks, outputs))| {
                    let spent: Vec<TxId> = if i == 0 {
                        Vec::new()
                    } else {
                        picks.iter().map(|p| TxId::from_index(p.index(i))).collect()
                    };
                    TxRecord::new(TxId::from_index(i), spent, outputs)
                })
                .collect()
        })
}
