//! Synthetic TaN streams.
//!
//! Non-coinbase transactions draw their parent count from a truncated power
//! law whose exponent is solved so that the mean in-degree over all nodes
//! hits `mean_in_degree`.
//!
//! Every transaction belongs to one of `communities` long-lived entities,
//! chosen uniformly. A parent comes from the same entity with probability
//! `locality`, otherwise from anywhere by preferential attachment on
//! out-degree. Within an entity, a parent is either recent (geometric lag
//! over the entity's own transactions) or chosen by preferential attachment
//! among them. The first transaction of an entity is a coinbase.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IngestError, StreamFile};
use crate::tan::{TxId, TxRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Coinbase share among transactions that are not an entity's first.
    pub coinbase_fraction: f64,
    /// Target mean in-degree over all nodes, coinbase included.
    pub mean_in_degree: f64,
    pub in_degree_cap: u32,
    /// Every transaction after the first `d` gets exactly `d` distinct
    /// parents; entities then do not start with a coinbase.
    pub fixed_in_degree: Option<u32>,
    pub communities: usize,
    /// Probability that a parent belongs to the child's entity.
    pub locality: f64,
    /// Probability that a same-entity parent is picked by attachment
    /// rather than recency.
    pub attachment: f64,
    /// Mean lag, in the entity's own transactions, of a recent parent.
    pub recency_mean: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 100_000,
            seed: 1,
            coinbase_fraction: 0.02,
            mean_in_degree: 2.3,
            in_degree_cap: 64,
            fixed_in_degree: None,
            communities: 1000,
            locality: 0.9,
            attachment: 0.5,
            recency_mean: 10.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::ConfigInvalid(m.into()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.communities == 0 {
            return bad("communities must be at least 1");
        }
        if !(0.0..1.0).contains(&self.coinbase_fraction) {
            return bad("coinbase_fraction must lie in [0, 1)");
        }
        for (name, v) in [("locality", self.locality), ("attachment", self.attachment)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(IngestError::ConfigInvalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.recency_mean > 0.0) {
            return bad("recency_mean must be positive");
        }
        if self.in_degree_cap == 0 {
            return bad("in_degree_cap must be at least 1");
        }
        if self.fixed_in_degree == Some(0) {
            return bad("fixed_in_degree must be at least 1");
        }
        if self.fixed_in_degree.is_none() {
            let target = self.mean_in_degree / (1.0 - self.coinbase_fraction);
            let max_mean = f64::from(self.in_degree_cap + 1) / 2.0;
            if !(target >= 1.0 && target < max_mean) {
                return bad("mean_in_degree unreachable with this cap and coinbase fraction");
            }
        }
        Ok(())
    }

    /// Expected share of coinbase transactions, entity roots included.
    fn coinbase_share(&self) -> f64 {
        let roots = self.communities.min(self.n) as f64 / self.n as f64;
        roots + (1.0 - roots) * self.coinbase_fraction
    }

    /// Mean in-degree of spending transactions. Short streams are mostly
    /// entity roots, so the overall target is clamped to what the cap allows.
    fn non_coinbase_mean(&self) -> f64 {
        let max_mean = f64::from(self.in_degree_cap + 1) / 2.0;
        (self.mean_in_degree / (1.0 - self.coinbase_share())).clamp(1.0, 0.999 * max_mean)
    }
}

fn zipf_mean(exponent: f64, cap: u32) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for d in 1..=cap {
        let w = f64::from(d).powf(-exponent);
        num += f64::from(d) * w;
        den += w;
    }
    num / den
}

/// Exponent of the truncated power law on `1..=cap` with the given mean.
pub(crate) fn solve_exponent(mean: f64, cap: u32) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 20.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if zipf_mean(mid, cap) > mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct PowerLaw {
    cdf: Vec<f64>,
}

impl PowerLaw {
    fn new(exponent: f64, cap: u32) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=cap)
            .map(|d| {
                acc += f64::from(d).powf(-exponent);
                acc
            })
            .collect();
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        PowerLaw { cdf }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1) as u32 + 1
    }
}

fn geometric<R: Rng>(rng: &mut R, mean: f64) -> usize {
    let p = 1.0 / (1.0 + mean);
    let u: f64 = rng.random();
    ((1.0 - u).ln() / (1.0 - p).ln()).floor() as usize
}

/// Transactions of one entity plus its attachment list (one entry per
/// member and one per edge a member received).
#[derive(Default)]
struct Entity {
    members: Vec<u32>,
    attach: Vec<u32>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<StreamFile, IngestError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let degrees = PowerLaw::new(
        solve_exponent(cfg.non_coinbase_mean(), cfg.in_degree_cap),
        cfg.in_degree_cap,
    );
    let outputs = PowerLaw::new(solve_exponent(2.5, 64), 64);
    let mut entities: Vec<Entity> = (0..cfg.communities).map(|_| Entity::default()).collect();
    let mut entity_of: Vec<u32> = Vec::with_capacity(cfg.n);
    let mut attach: Vec<u32> = Vec::with_capacity(cfg.n * 4);
    let mut out_degree = vec![0u32; cfg.n];
    let mut records = Vec::with_capacity(cfg.n);
    let mut parents: Vec<u32> = Vec::new();

    for u in 0..cfg.n {
        let e = rng.random_range(0..cfg.communities);
        let want = match cfg.fixed_in_degree {
            Some(d) if (d as usize) > u => 0,
            Some(d) => d as usize,
            None if u == 0 || entities[e].members.is_empty() => 0,
            None if rng.random::<f64>() < cfg.coinbase_fraction => 0,
            None => (degrees.sample(&mut rng) as usize).min(u),
        };
        parents.clear();
        let mut attempts = 0;
        while parents.len() < want && attempts < 8 * want {
            attempts += 1;
            let own = &entities[e];
            let candidate = if !own.members.is_empty() && rng.random::<f64>() < cfg.locality {
                if rng.random::<f64>() < cfg.attachment {
                    own.attach[rng.random_range(0..own.attach.len())]
                } else {
                    let lag = geometric(&mut rng, cfg.recency_mean);
                    own.members[own.members.len() - 1 - lag.min(own.members.len() - 1)]
                }
            } else {
                attach[rng.random_range(0..attach.len())]
            };
            if !parents.contains(&candidate) {
                parents.push(candidate);
            }
        }
        if parents.len() < want && cfg.fixed_in_degree.is_some() {
            for p in index::sample(&mut rng, u, want.min(u)).into_iter() {
                if parents.len() == want {
                    break;
                }
                let p = p as u32;
                if !parents.contains(&p) {
                    parents.push(p);
                }
            }
        }
        for &p in &parents {
            out_degree[p as usize] += 1;
            attach.push(p);
            entities[entity_of[p as usize] as usize].attach.push(p);
        }
        attach.push(u as u32);
        entity_of.push(e as u32);
        entities[e].members.push(u as u32);
        entities[e].attach.push(u as u32);
        records.push(TxRecord::new(
            TxId::from_index(u),
            parents.iter().map(|&p| TxId(p)),
            outputs.sample(&mut rng),
        ));
    }
    for (r, &deg) in records.iter_mut().zip(&out_degree) {
        r.output_count = r.output_count.max(deg);
    }
    Ok(StreamFile { records })
}

/// Inserts a conflicting twin right after a `fraction` of the non-coinbase
/// transactions. A twin spends exactly the UTXOs of its original. Returns the
/// rewritten stream and the `(original, twin)` id pairs in the new numbering.
pub fn inject_double_spends(records: &[TxRecord], fraction: f64, seed: u64) -> (Vec<TxRecord>, Vec<(TxId, TxId)>) {
    let eligible: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_coinbase())
        .map(|(i, _)| i)
        .collect();
    let count = ((records.len() as f64 * fraction).round() as usize).min(eligible.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; records.len()];
    for i in index::sample(&mut rng, eligible.len(), count) {
        chosen[eligible[i]] = true;
    }
    let mut remap = Vec::with_capacity(records.len());
    let mut out = Vec::with_capacity(records.len() + count);
    let mut pairs = Vec::with_capacity(count);
    for (old, r) in records.iter().enumerate() {
        let id = TxId::from_index(out.len());
        remap.push(id);
        let inputs: Vec<TxId> = r.inputs.iter().map(|p| remap[p.index()]).collect();
        out.push(TxRecord {
            id,
            inputs: inputs.clone(),
            input_count_raw: r.input_count_raw,
            output_count: r.output_count,
        });
        if chosen[old] {
            let twin = TxId::from_index(out.len());
            out.push(TxRecord {
                id: twin,
                inputs,
                input_count_raw: r.input_count_raw,
                output_count: r.output_count,
            });
            pairs.push((id, twin));
        }
    }
    (out, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tan::TanGraph;

    #[test]
    fn exponent_hits_mean() {
        for &(m, cap) in &[(2.35, 64u32), (1.5, 10), (3.0, 100)] {
            let g = solve_exponent(m, cap);
            assert!((zipf_mean(g, cap) - m).abs() < 1e-9);
        }
    }

    #[test]
    fn single_node_is_coinbase() {
        let s = generate_synthetic(&SynthConfig {
            n: 1,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.records[0].is_coinbase());
    }

    #[test]
    fn deterministic_and_valid() {
        let cfg = SynthConfig {
            n: 5_000,
            seed: 9,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        let mut g = TanGraph::new();
        for r in a.records {
            g.add_tx(r).unwrap();
        }
        for r in g.records() {
            assert!(g.out_degree(r.id) <= r.output_count);
        }
    }

    #[test]
    fn fixed_degree_two() {
        let s = generate_synthetic(&SynthConfig {
            n: 2_000,
            fixed_in_degree: Some(2),
            coinbase_fraction: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert!(s.records[..2].iter().all(|r| r.is_coinbase()));
        assert!(s.records[2..].iter().all(|r| r.inputs.len() == 2));
    }

    #[test]
    fn bad_configs() {
        let base = SynthConfig::default();
        assert!(generate_synthetic(&SynthConfig { n: 0, ..base.clone() }).is_err());
        assert!(generate_synthetic(&SynthConfig {
            mean_in_degree: 40.0,
            in_degree_cap: 8,
            ..base.clone()
        })
        .is_err());
        assert!(generate_synthetic(&SynthConfig {
            locality: 1.5,
            ..base
        })
        .is_err());
    }

    #[test]
    fn twins_follow_originals() {
        let s = generate_synthetic(&SynthConfig {
            n: 1_000,
            ..Default::default()
        })
        .unwrap();
        let (out, pairs) = inject_double_spends(&s.records, 0.01, 3);
        assert_eq!(pairs.len(), 10);
        assert_eq!(out.len(), 1_010);
        let mut g = TanGraph::new();
        for r in out.iter().cloned() {
            g.add_tx(r).unwrap();
        }
        for &(a, b) in &pairs {
            assert_eq!(b.index(), a.index() + 1);
            assert_eq!(out[a.index()].inputs, out[b.index()].inputs);
            assert!(!out[a.index()].is_coinbase());
        }
    }
}
