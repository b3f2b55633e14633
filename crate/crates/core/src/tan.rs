//! Transactions-as-Nodes (TaN) graph.
//!
//! Every transaction is a node; an edge `u -> v` exists when `u` spends at
//! least one output of `v`. Transactions arrive in topological order, so a
//! node's parents always carry smaller ids and the graph stays acyclic
//! without any explicit cycle check.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense transaction index assigned in arrival order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub u32);

impl TxId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn from_index(index: usize) -> Self {
        TxId(u32::try_from(index).expect("transaction index exceeds u32 range"))
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxRecord {
    pub id: TxId,
    /// Distinct parent transactions, ascending.
    pub inputs: Vec<TxId>,
    /// Number of spent UTXOs before collapsing repeated parents.
    pub input_count_raw: u32,
    pub output_count: u32,
}

impl TxRecord {
    /// Builds a record from the UTXO-level input list. Repeated parents
    /// collapse to a single edge; `input_count_raw` keeps the original count.
    pub fn new(id: TxId, spent: impl IntoIterator<Item = TxId>, output_count: u32) -> Self {
        let mut inputs: Vec<TxId> = spent.into_iter().collect();
        let raw = inputs.len() as u32;
        inputs.sort_unstable();
        inputs.dedup();
        TxRecord {
            id,
            inputs,
            input_count_raw: raw,
            output_count,
        }
    }

    pub fn coinbase(id: TxId, output_count: u32) -> Self {
        TxRecord {
            id,
            inputs: Vec::new(),
            input_count_raw: 0,
            output_count,
        }
    }

    #[inline]
    pub fn is_coinbase(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TanError {
    #[error("transaction {child} references unknown parent {parent}")]
    UnknownParent { child: TxId, parent: TxId },
    #[error("transaction id {0} already present")]
    DuplicateId(TxId),
    #[error("expected transaction id {expected}, got {got}")]
    IdGap { expected: TxId, got: TxId },
    #[error("degree window must be at least 1")]
    ZeroWindow,
}

/// Degree histograms over all inserted nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DegreeHistogram {
    pub in_degree: BTreeMap<u32, u64>,
    pub out_degree: BTreeMap<u32, u64>,
}

impl DegreeHistogram {
    pub fn mean_in_degree(&self) -> f64 {
        mean_of(&self.in_degree)
    }

    pub fn mean_out_degree(&self) -> f64 {
        mean_of(&self.out_degree)
    }
}

fn mean_of(hist: &BTreeMap<u32, u64>) -> f64 {
    let nodes: u64 = hist.values().sum();
    if nodes == 0 {
        return 0.0;
    }
    let mass: u64 = hist.iter().map(|(&d, &c)| u64::from(d) * c).sum();
    mass as f64 / nodes as f64
}

/// Append-only TaN graph.
#[derive(Debug, Clone, Default)]
pub struct TanGraph {
    nodes: Vec<TxRecord>,
    out_degree: Vec<u32>,
    edges: u64,
}

impl TanGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        TanGraph {
            nodes: Vec::with_capacity(n),
            out_degree: Vec::with_capacity(n),
            edges: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> u64 {
        self.edges
    }

    pub fn next_id(&self) -> TxId {
        TxId::from_index(self.nodes.len())
    }

    pub fn add_tx(&mut self, record: TxRecord) -> Result<TxId, TanError> {
        let expected = self.next_id();
        if record.id < expected {
            return Err(TanError::DuplicateId(record.id));
        }
        if record.id > expected {
            return Err(TanError::IdGap {
                expected,
                got: record.id,
            });
        }
        for &parent in &record.inputs {
            if parent >= expected {
                return Err(TanError::UnknownParent {
                    child: record.id,
                    parent,
                });
            }
        }
        let mut record = record;
        // Records built outside `TxRecord::new` may carry repeats.
        if !record.inputs.windows(2).all(|w| w[0] < w[1]) {
            record.inputs.sort_unstable();
            record.inputs.dedup();
        }
        for &parent in &record.inputs {
            self.out_degree[parent.index()] += 1;
        }
        self.edges += record.inputs.len() as u64;
        self.nodes.push(record);
        self.out_degree.push(0);
        Ok(expected)
    }

    pub fn get(&self, id: TxId) -> Option<&TxRecord> {
        self.nodes.get(id.index())
    }

    pub fn records(&self) -> &[TxRecord] {
        &self.nodes
    }

    pub fn parents(&self, id: TxId) -> &[TxId] {
        &self.nodes[id.index()].inputs
    }

    pub fn in_degree(&self, id: TxId) -> u32 {
        self.nodes[id.index()].inputs.len() as u32
    }

    /// Distinct children observed so far.
    pub fn out_degree(&self, id: TxId) -> u32 {
        self.out_degree[id.index()]
    }

    pub fn degree_histogram(&self) -> DegreeHistogram {
        let mut hist = DegreeHistogram::default();
        for (record, &out) in self.nodes.iter().zip(&self.out_degree) {
            *hist.in_degree.entry(record.inputs.len() as u32).or_default() += 1;
            *hist.out_degree.entry(out).or_default() += 1;
        }
        hist
    }

    /// Mean in-degree over consecutive windows of `window` nodes in arrival
    /// order. The final window may be partial.
    pub fn avg_degree_series(&self, window: usize) -> Result<Vec<(usize, f64)>, TanError> {
        if window == 0 {
            return Err(TanError::ZeroWindow);
        }
        Ok(self
            .nodes
            .chunks(window)
            .enumerate()
            .map(|(i, chunk)| {
                let edges: usize = chunk.iter().map(|r| r.inputs.len()).sum();
                (i, edges as f64 / chunk.len() as f64)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(id: u32, parents: &[u32]) -> TxRecord {
        TxRecord::new(TxId(id), parents.iter().map(|&p| TxId(p)), 1)
    }

    #[test]
    fn coinbase_has_no_in_edges() {
        let mut g = TanGraph::new();
        let id = g.add_tx(TxRecord::coinbase(TxId(0), 2)).unwrap();
        assert_eq!(id, TxId(0));
        assert_eq!(g.in_degree(id), 0);
        assert!(g.get(id).unwrap().is_coinbase());
    }

    #[test]
    fn first_child_increments_each_parent_once() {
        let mut g = TanGraph::new();
        g.add_tx(tx(0, &[])).unwrap();
        g.add_tx(tx(1, &[])).unwrap();
        g.add_tx(tx(2, &[0, 1, 0])).unwrap();
        assert_eq!(g.out_degree(TxId(0)), 1);
        assert_eq!(g.out_degree(TxId(1)), 1);
        assert_eq!(g.get(TxId(2)).unwrap().input_count_raw, 3);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn rejects_bad_ids() {
        let mut g = TanGraph::new();
        g.add_tx(tx(0, &[])).unwrap();
        assert_eq!(g.add_tx(tx(0, &[])), Err(TanError::DuplicateId(TxId(0))));
        assert_eq!(
            g.add_tx(tx(5, &[])),
            Err(TanError::IdGap {
                expected: TxId(1),
                got: TxId(5)
            })
        );
        assert_eq!(
            g.add_tx(tx(1, &[1])),
            Err(TanError::UnknownParent {
                child: TxId(1),
                parent: TxId(1)
            })
        );
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn unsorted_inputs_are_normalized() {
        let mut g = TanGraph::new();
        for i in 0..3 {
            g.add_tx(tx(i, &[])).unwrap();
        }
        let raw = TxRecord {
            id: TxId(3),
            inputs: vec![TxId(2), TxId(0), TxId(2)],
            input_count_raw: 3,
            output_count: 1,
        };
        g.add_tx(raw).unwrap();
        assert_eq!(g.parents(TxId(3)), &[TxId(0), TxId(2)]);
        assert_eq!(g.out_degree(TxId(2)), 1);
    }

    #[test]
    fn empty_histogram() {
        let h = TanGraph::new().degree_histogram();
        assert!(h.in_degree.is_empty());
        assert!(h.out_degree.is_empty());
    }

    #[test]
    fn chain_histogram() {
        let mut g = TanGraph::new();
        g.add_tx(tx(0, &[])).unwrap();
        g.add_tx(tx(1, &[0])).unwrap();
        g.add_tx(tx(2, &[1])).unwrap();
        let h = g.degree_histogram();
        assert_eq!(h.in_degree, BTreeMap::from([(0, 1), (1, 2)]));
        assert_eq!(h.out_degree, BTreeMap::from([(0, 1), (1, 2)]));
    }

    #[test]
    fn degree_series() {
        let mut g = TanGraph::new();
        for i in 0..10 {
            g.add_tx(tx(i, &[])).unwrap();
        }
        assert_eq!(g.avg_degree_series(5).unwrap(), vec![(0, 0.0), (1, 0.0)]);
        assert_eq!(g.avg_degree_series(0), Err(TanError::ZeroWindow));

        let mut chain = TanGraph::new();
        chain.add_tx(tx(0, &[])).unwrap();
        for i in 1..11 {
            chain.add_tx(tx(i, &[i - 1])).unwrap();
        }
        let series = chain.avg_degree_series(10).unwrap();
        assert!((series[0].1 - 0.9).abs() < 1e-12);
    }
}
