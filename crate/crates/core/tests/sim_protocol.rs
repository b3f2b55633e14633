mod common;

use std::collections::HashSet;

use optchain::ingest::inject_double_spends;
use optchain::sim::{simulate, RunOptions, SimOutput, TxStatus};
use optchain::{generate_synthetic, SimConfig, StrategyConfig, StrategyKind, SynthConfig, TxId, TxRecord};
use proptest::prelude::*;
use serde_json::Value;

fn config(kind: StrategyKind, k: usize, rate: f64) -> SimConfig {
    SimConfig {
        k,
        tx_rate: rate,
        strategy: StrategyConfig::new(kind, k),
        sample_period: 0.5,
        ..Default::default()
    }
}

fn run_logged(cfg: &SimConfig, records: &[TxRecord], opts: RunOptions<'_>) -> (SimOutput, Vec<Value>) {
    let mut log = Vec::new();
    let out = simulate(
        cfg,
        records,
        RunOptions {
            event_log: Some(&mut log),
            ..opts
        },
    )
    .unwrap();
    let events = String::from_utf8(log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (out, events)
}

fn arrivals_of(events: &[Value], tx: u64) -> Vec<(String, u64)> {
    events
        .iter()
        .filter(|e| e["ev"] == "arrive" && e["tx"] == tx)
        .map(|e| (e["req"].as_str().unwrap().to_owned(), e["shard"].as_u64().unwrap()))
        .collect()
}

#[test]
fn empty_stream() {
    let out = simulate(&config(StrategyKind::Random, 4, 100.0), &[], RunOptions::default()).unwrap();
    assert_eq!(out.report.committed, 0);
    assert_eq!(out.report.throughput, 0.0);
}

#[test]
fn single_coinbase_closed_form() {
    let cfg = config(StrategyKind::Random, 1, 10.0);
    let out = simulate(&cfg, &[TxRecord::coinbase(TxId(0), 1)], RunOptions::default()).unwrap();
    // Message 0.1 + 500 B at 20 Mbit/s, wait for the tick at 1 s, a one-item
    // block of 0.5 + 0.0002 s, then the reply.
    let msg = 0.1 + 500.0 * 8.0 / 20e6;
    assert!((cfg.message_delay() - msg).abs() < 1e-15);
    let expect = 1.0 + cfg.block_delay(1) + msg;
    assert!((expect - 1.6004).abs() < 1e-12);
    let latency = out.outcomes[0].latency().unwrap();
    assert!((latency - expect).abs() < 1e-9, "{latency}");
    assert_eq!(out.report.committed, 1);
}

#[test]
fn block_transmission_term() {
    let cfg = SimConfig::default();
    assert!((cfg.block_delay(2000) - cfg.consensus_base_delay - 0.4).abs() < 1e-12);
    assert_eq!(cfg.block_delay(0), cfg.consensus_base_delay);
}

#[test]
fn cross_shard_walk() {
    // tx 1 lives on shard 1 and spends tx 0 on shard 0.
    let records = vec![TxRecord::coinbase(TxId(0), 1), TxRecord::new(TxId(1), [TxId(0)], 1)];
    let cfg = config(StrategyKind::Imported, 2, 1.0);
    let (out, events) = run_logged(
        &cfg,
        &records,
        RunOptions {
            partition: Some(vec![0, 1]),
            ..Default::default()
        },
    );
    assert_eq!(arrivals_of(&events, 0), vec![("same_shard".to_owned(), 0)]);
    assert_eq!(
        arrivals_of(&events, 1),
        vec![("lock".to_owned(), 0), ("commit".to_owned(), 1)]
    );
    let tx1 = &out.outcomes[1];
    assert!(tx1.cross);
    let msg = cfg.message_delay();
    // Submit at 1 s; lock waits for the tick at 2 s, the commit request for 3 s.
    let proof = 2.0 + cfg.block_delay(1) + msg;
    assert!((tx1.last_proof.unwrap() - proof).abs() < 1e-9);
    let commit = 3.0 + cfg.block_delay(1) + msg;
    assert!((tx1.commit_time.unwrap() - commit).abs() < 1e-9);
}

#[test]
fn overfull_mempool_splits_blocks() {
    // 2500 coinbases arrive within one interval on a single shard.
    let records: Vec<TxRecord> = (0..2500).map(|i| TxRecord::coinbase(TxId(i), 1)).collect();
    let cfg = SimConfig {
        block_interval: 5.0,
        ..config(StrategyKind::Random, 1, 1e5)
    };
    let (_, events) = run_logged(&cfg, &records, RunOptions::default());
    let blocks: Vec<u64> = events
        .iter()
        .filter(|e| e["ev"] == "block")
        .map(|e| e["items"].as_u64().unwrap())
        .collect();
    assert_eq!(blocks, vec![2000, 500]);
}

#[test]
fn identical_seeds_identical_logs() {
    let stream = generate_synthetic(&SynthConfig {
        n: 3000,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    for kind in [StrategyKind::Random, StrategyKind::Optchain] {
        let cfg = config(kind, 4, 800.0);
        let (a, la) = run_logged(&cfg, &stream.records, RunOptions::default());
        let (b, lb) = run_logged(&cfg, &stream.records, RunOptions::default());
        assert_eq!(la, lb);
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
    }
}

#[test]
fn twins_one_commit_one_abort() {
    let stream = generate_synthetic(&SynthConfig {
        n: 4000,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let (records, pairs) = inject_double_spends(&stream.records, 0.02, 8);
    assert!(!pairs.is_empty());
    for kind in [StrategyKind::Random, StrategyKind::Greedy, StrategyKind::Optchain] {
        let out = simulate(
            &config(kind, 4, 1000.0),
            &records,
            RunOptions {
                conflicts: &pairs,
                ..Default::default()
            },
        )
        .unwrap();
        for &(a, b) in &pairs {
            let sa = out.outcomes[a.index()].status;
            let sb = out.outcomes[b.index()].status;
            let mut got = [sa, sb].map(|s| s == TxStatus::Committed);
            got.sort();
            assert_eq!(got, [false, true], "{kind}: pair ({a}, {b}) ended {sa:?}/{sb:?}");
        }
        for ledger in &out.ledger {
            let mut seen = HashSet::new();
            for e in ledger {
                assert!(seen.insert((e.parent, e.ordinal)), "{kind}: outpoint spent twice");
            }
        }
        assert_eq!(out.report.aborted as usize, pairs.len());
    }
}

#[test]
fn twin_must_follow_original() {
    let records = vec![TxRecord::coinbase(TxId(0), 1), TxRecord::coinbase(TxId(1), 1)];
    let bad = [(TxId(1), TxId(0))];
    let err = simulate(
        &config(StrategyKind::Random, 2, 10.0),
        &records,
        RunOptions {
            conflicts: &bad,
            ..Default::default()
        },
    );
    assert!(err.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_and_causality(
        records in common::stream(400),
        k in 1usize..6,
        rate in 50.0f64..5000.0,
        kind in prop::sample::select(vec![
            StrategyKind::Random,
            StrategyKind::Greedy,
            StrategyKind::T2s,
            StrategyKind::Optchain,
        ]),
    ) {
        let cfg = SimConfig {
            sample_period: 0.05,
            ..config(kind, k, rate)
        };
        let out = simulate(&cfg, &records, RunOptions::default()).unwrap();
        for s in &out.samples {
            prop_assert_eq!(s.injected, s.committed + s.aborted + s.pending);
        }
        prop_assert_eq!(out.report.committed as usize, records.len());
        prop_assert!(out.report.throughput <= rate * (1.0 + 1e-9) || records.len() == 1);
        for o in &out.outcomes {
            let commit = o.commit_time.unwrap();
            prop_assert!(commit >= o.submit_time);
            if let Some(p) = o.last_proof {
                prop_assert!(o.cross);
                prop_assert!(commit >= p && p >= o.submit_time);
            }
        }
    }
}

#[test]
fn optchain_keeps_up_below_capacity() {
    let stream = generate_synthetic(&SynthConfig {
        n: 100_000,
        ..Default::default()
    })
    .unwrap();
    let out = simulate(&config(StrategyKind::Optchain, 16, 2000.0), &stream.records, RunOptions::default()).unwrap();
    let steady = out.report.steady_throughput;
    assert!((steady - 2000.0).abs() < 100.0, "{steady}");
}
