//! Latency-to-Shard (L2S) model.
//!
//! Reaching shard `i` and getting a transaction verified there are modelled
//! as two independent exponential stages with rates `lambda_c` and
//! `lambda_v`. Their sum is hypoexponential. A client that places a
//! transaction in shard `j` asks every shard in the proof set for a
//! proof-of-acceptance in parallel, so the proof phase finishes at the
//! maximum of the per-shard times; confirmation at `j` follows.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shard::{ShardSet, MAX_SHARDS};

/// Simpson panels used for every integral in this module.
pub const PANELS: usize = 4096;
/// Integration horizon as a multiple of the summed stage means.
pub const HORIZON_FACTOR: f64 = 20.0;
/// Mass allowed beyond the horizon.
pub const TAIL_TOLERANCE: f64 = 1e-6;
/// Relative rate gap below which the Erlang-2 limit is used.
pub const DEGENERATE_GAP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum L2sError {
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("proof shard set is empty")]
    EmptyProofSet,
    #[error("shard {shard} has a non-positive or non-finite rate")]
    NonPositiveRate { shard: usize },
    #[error("shard {shard} is not covered by a rate model of {k} shards")]
    UnknownShard { shard: usize, k: usize },
    #[error("tail mass did not fall below tolerance")]
    TailNotConverged,
    #[error("rate file: {0}")]
    RateFile(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exponential rates (per second) of one shard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub lambda_c: f64,
    pub lambda_v: f64,
}

impl RatePair {
    pub fn new(lambda_c: f64, lambda_v: f64) -> Self {
        RatePair { lambda_c, lambda_v }
    }

    pub fn is_valid(&self) -> bool {
        self.lambda_c.is_finite() && self.lambda_v.is_finite() && self.lambda_c > 0.0 && self.lambda_v > 0.0
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.lambda_c + 1.0 / self.lambda_v
    }

    pub fn scaled(&self, factor: f64) -> Self {
        RatePair::new(self.lambda_c * factor, self.lambda_v * factor)
    }

    fn ordered(&self) -> (f64, f64) {
        if self.lambda_c <= self.lambda_v {
            (self.lambda_c, self.lambda_v)
        } else {
            (self.lambda_v, self.lambda_c)
        }
    }

    fn pdf_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        // The density is symmetric in the two rates; factoring out the slower
        // exponential keeps every term bounded.
        let (a, b) = self.ordered();
        let gap = b - a;
        if gap <= DEGENERATE_GAP * b {
            a * a * t * (-a * t).exp()
        } else {
            a * b * t * (-a * t).exp() * relative_expm1(gap * t)
        }
    }

    fn cdf_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (a, b) = self.ordered();
        let gap = b - a;
        let shape = if gap <= DEGENERATE_GAP * b {
            1.0
        } else {
            relative_expm1(gap * t)
        };
        let value = -(-a * t).exp_m1() - a * t * (-a * t).exp() * shape;
        value.clamp(0.0, 1.0)
    }
}

/// `(1 - e^{-x}) / x`, continuous at zero.
fn relative_expm1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Density of the hypoexponential proof-of-acceptance time.
pub fn proof_time_pdf(rates: RatePair, t: f64) -> Result<f64, L2sError> {
    if t < 0.0 {
        return Err(L2sError::NegativeTime(t));
    }
    Ok(rates.pdf_unchecked(t))
}

/// CDF of the hypoexponential proof-of-acceptance time.
pub fn proof_time_cdf(rates: RatePair, t: f64) -> Result<f64, L2sError> {
    if t < 0.0 {
        return Err(L2sError::NegativeTime(t));
    }
    Ok(rates.cdf_unchecked(t))
}

/// Composite Simpson rule over `[a, b]`; `panels` must be even.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    debug_assert!(panels >= 2 && panels % 2 == 0);
    let h = (b - a) / panels as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..panels {
        let x = a + h * i as f64;
        if i % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    (f(a) + f(b) + 4.0 * odd + 2.0 * even) * h / 3.0
}

/// How the L2S expectation combines its two phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyMode {
    /// Proof phase followed by confirmation at the output shard.
    #[default]
    Convolved,
    /// Proof-phase density convolved with itself, integrated literally.
    StrictPaper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2SQuery {
    pub output_shard: usize,
    pub proof_shards: ShardSet,
}

impl L2SQuery {
    /// Proof set for placing a transaction with `input_shards` into `output_shard`.
    pub fn for_placement(output_shard: usize, input_shards: ShardSet) -> Self {
        L2SQuery {
            output_shard,
            proof_shards: input_shards.with(output_shard),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RateFile {
    shards: Vec<RatePair>,
}

/// Per-shard rate snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardRateModel {
    shards: Vec<RatePair>,
}

impl ShardRateModel {
    pub fn new(shards: Vec<RatePair>) -> Result<Self, L2sError> {
        if let Some(shard) = shards.iter().position(|r| !r.is_valid()) {
            return Err(L2sError::NonPositiveRate { shard });
        }
        Ok(ShardRateModel { shards })
    }

    pub fn uniform(k: usize, rates: RatePair) -> Result<Self, L2sError> {
        Self::new(vec![rates; k])
    }

    /// Reads `{"shards": [{"lambda_c": .., "lambda_v": ..}, ...]}`.
    pub fn from_json<R: Read>(reader: R) -> Result<Self, L2sError> {
        let file: RateFile = serde_json::from_reader(reader)?;
        Self::new(file.shards)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RateFile {
            shards: self.shards.clone(),
        })
        .expect("rate model serializes")
    }

    pub fn k(&self) -> usize {
        self.shards.len()
    }

    pub fn rates(&self, shard: usize) -> Result<RatePair, L2sError> {
        self.shards.get(shard).copied().ok_or(L2sError::UnknownShard {
            shard,
            k: self.shards.len(),
        })
    }

    pub fn shards(&self) -> &[RatePair] {
        &self.shards
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, L2sError> {
        Self::new(self.shards.iter().map(|r| r.scaled(factor)).collect())
    }

    pub fn proof_time_pdf(&self, shard: usize, t: f64) -> Result<f64, L2sError> {
        proof_time_pdf(self.rates(shard)?, t)
    }

    pub fn proof_time_cdf(&self, shard: usize, t: f64) -> Result<f64, L2sError> {
        proof_time_cdf(self.rates(shard)?, t)
    }

    fn collect(&self, set: ShardSet) -> Result<Vec<RatePair>, L2sError> {
        if set.is_empty() {
            return Err(L2sError::EmptyProofSet);
        }
        set.iter().map(|s| self.rates(s)).collect()
    }

    /// Probability that every shard in `set` has answered by `t`.
    pub fn all_proofs_cdf(&self, set: ShardSet, t: f64) -> Result<f64, L2sError> {
        if t < 0.0 {
            return Err(L2sError::NegativeTime(t));
        }
        Ok(max_cdf(&self.collect(set)?, t))
    }

    /// Density of the time at which the last proof arrives.
    pub fn all_proofs_pdf(&self, set: ShardSet, t: f64) -> Result<f64, L2sError> {
        if t < 0.0 {
            return Err(L2sError::NegativeTime(t));
        }
        Ok(max_pdf(&self.collect(set)?, t))
    }

    /// Mean of the proof phase.
    pub fn expected_proof_time(&self, set: ShardSet) -> Result<f64, L2sError> {
        let rates = self.collect(set)?;
        let horizon = horizon(&rates)?;
        // Survival form of the mean: O(m) per node instead of O(m^2).
        Ok(simpson(|t| 1.0 - max_cdf(&rates, t), 0.0, horizon, PANELS))
    }

    /// Mean confirmation time at `shard`.
    pub fn expected_confirm_time(&self, shard: usize) -> Result<f64, L2sError> {
        let rates = [self.rates(shard)?];
        let horizon = horizon(&rates)?;
        Ok(simpson(|t| t * rates[0].pdf_unchecked(t), 0.0, horizon, PANELS))
    }

    /// Literal double integral of `t * (f_v * f_v)(t)`.
    pub fn expected_latency_strict(&self, set: ShardSet) -> Result<f64, L2sError> {
        let rates = self.collect(set)?;
        let horizon = horizon(&rates)?;
        let n = PANELS;
        let h = horizon / n as f64;
        let f: Vec<f64> = (0..=n).map(|i| max_pdf(&rates, h * i as f64)).collect();
        // Trapezoid convolution on the grid, then Simpson over [0, 2T].
        let conv: Vec<f64> = (0..=2 * n)
            .map(|m| {
                let lo = m.saturating_sub(n);
                let hi = m.min(n);
                if lo >= hi {
                    return 0.0;
                }
                let inner: f64 = (lo..=hi).map(|i| f[i] * f[m - i]).sum();
                h * (inner - 0.5 * (f[lo] * f[m - lo] + f[hi] * f[m - hi]))
            })
            .collect();
        let mut odd = 0.0;
        let mut even = 0.0;
        for (m, &g) in conv.iter().enumerate().take(2 * n).skip(1) {
            let term = h * m as f64 * g;
            if m % 2 == 1 {
                odd += term;
            } else {
                even += term;
            }
        }
        let end = h * (2 * n) as f64 * conv[2 * n];
        Ok((end + 4.0 * odd + 2.0 * even) * h / 3.0)
    }

    /// Expected end-to-end latency of a placement, in seconds.
    pub fn expected_latency(&self, query: &L2SQuery, mode: LatencyMode) -> Result<f64, L2sError> {
        match mode {
            LatencyMode::Convolved => Ok(self.expected_proof_time(query.proof_shards)?
                + self.expected_confirm_time(query.output_shard)?),
            LatencyMode::StrictPaper => self.expected_latency_strict(query.proof_shards),
        }
    }
}

fn max_cdf(rates: &[RatePair], t: f64) -> f64 {
    rates.iter().map(|r| r.cdf_unchecked(t)).product()
}

fn max_pdf(rates: &[RatePair], t: f64) -> f64 {
    match rates {
        [only] => only.pdf_unchecked(t),
        _ => {
            // Prefix/suffix products of the cdfs; at most 64 shards.
            let mut cdfs = [0.0; MAX_SHARDS];
            for (c, r) in cdfs.iter_mut().zip(rates) {
                *c = r.cdf_unchecked(t);
            }
            let m = rates.len();
            let mut suffix = [1.0; MAX_SHARDS + 1];
            for i in (0..m).rev() {
                suffix[i] = suffix[i + 1] * cdfs[i];
            }
            let mut prefix = 1.0;
            let mut sum = 0.0;
            for i in 0..m {
                sum += rates[i].pdf_unchecked(t) * prefix * suffix[i + 1];
                prefix *= cdfs[i];
            }
            sum
        }
    }
}

fn horizon(rates: &[RatePair]) -> Result<f64, L2sError> {
    let mut horizon = HORIZON_FACTOR * rates.iter().map(RatePair::mean).sum::<f64>();
    for _ in 0..8 {
        if 1.0 - max_cdf(rates, horizon) < TAIL_TOLERANCE {
            return Ok(horizon);
        }
        horizon *= 2.0;
    }
    Err(L2sError::TailNotConverged)
}

/// Memoizes L2S values for one rate snapshot, keyed by proof set.
#[derive(Debug, Clone)]
pub struct LatencyCache {
    model: ShardRateModel,
    mode: LatencyMode,
    proofs: HashMap<u64, f64>,
    grid: Option<CdfGrid>,
}

/// Panels of the shared grid used by [`LatencyCache`].
const GRID_PANELS: usize = 1024;

/// Every shard's CDF on one grid `t = end * u^2` with uniform `u`, which puts
/// nodes densely near zero and sparsely in the tail so fast and slow shards
/// share it. The end only has to cover the slowest single shard, since the
/// tail of a maximum is at most the sum of the shard tails.
#[derive(Debug, Clone)]
struct CdfGrid {
    /// Simpson weight times `dt/du` at each node.
    weights: Vec<f64>,
    cdfs: Vec<Vec<f64>>,
}

impl CdfGrid {
    fn new(model: &ShardRateModel) -> Result<Self, L2sError> {
        let shards = model.shards();
        let tail = TAIL_TOLERANCE / shards.len() as f64;
        let mut end = HORIZON_FACTOR * shards.iter().map(RatePair::mean).fold(0.0, f64::max);
        let mut converged = false;
        for _ in 0..8 {
            if shards.iter().all(|r| 1.0 - r.cdf_unchecked(end) < tail) {
                converged = true;
                break;
            }
            end *= 2.0;
        }
        if !converged {
            return Err(L2sError::TailNotConverged);
        }
        let du = 1.0 / GRID_PANELS as f64;
        let nodes: Vec<f64> = (0..=GRID_PANELS).map(|i| end * (i as f64 * du).powi(2)).collect();
        let weights = (0..=GRID_PANELS)
            .map(|i| {
                let simpson = if i == 0 || i == GRID_PANELS {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                simpson * 2.0 * end * i as f64 * du * du / 3.0
            })
            .collect();
        let cdfs = shards
            .iter()
            .map(|r| nodes.iter().map(|&t| r.cdf_unchecked(t)).collect())
            .collect();
        Ok(CdfGrid { weights, cdfs })
    }

    /// Joint CDF of `set` at every node.
    fn joint(&self, set: ShardSet) -> Vec<f64> {
        let mut out = vec![1.0; GRID_PANELS + 1];
        for s in set.iter() {
            for (o, c) in out.iter_mut().zip(&self.cdfs[s]) {
                *o *= c;
            }
        }
        out
    }

    /// Mean of the maximum, given the joint CDF of some members and
    /// optionally one more shard.
    fn mean_of_max(&self, joint: &[f64], extra: Option<usize>) -> f64 {
        match extra {
            None => joint.iter().zip(&self.weights).map(|(f, w)| w * (1.0 - f)).sum(),
            Some(s) => joint
                .iter()
                .zip(&self.cdfs[s])
                .zip(&self.weights)
                .map(|((f, c), w)| w * (1.0 - f * c))
                .sum(),
        }
    }
}

impl LatencyCache {
    pub fn new(model: ShardRateModel, mode: LatencyMode) -> Self {
        LatencyCache {
            model,
            mode,
            proofs: HashMap::new(),
            grid: None,
        }
    }

    pub fn model(&self) -> &ShardRateModel {
        &self.model
    }

    pub fn mode(&self) -> LatencyMode {
        self.mode
    }

    pub fn set_model(&mut self, model: ShardRateModel) {
        self.proofs.clear();
        self.grid = None;
        self.model = model;
    }

    fn grid(&mut self) -> Result<&CdfGrid, L2sError> {
        if self.grid.is_none() {
            self.grid = Some(CdfGrid::new(&self.model)?);
        }
        Ok(self.grid.as_ref().expect("grid built"))
    }

    fn proof_term(&mut self, set: ShardSet) -> Result<f64, L2sError> {
        if let Some(&v) = self.proofs.get(&set.bits()) {
            return Ok(v);
        }
        self.model.collect(set)?;
        let v = match self.mode {
            LatencyMode::Convolved => {
                let grid = self.grid()?;
                grid.mean_of_max(&grid.joint(set), None)
            }
            LatencyMode::StrictPaper => self.model.expected_latency_strict(set)?,
        };
        self.proofs.insert(set.bits(), v);
        Ok(v)
    }

    pub fn expected_latency(&mut self, query: &L2SQuery) -> Result<f64, L2sError> {
        let proof = self.proof_term(query.proof_shards)?;
        if self.mode == LatencyMode::StrictPaper {
            return Ok(proof);
        }
        // The confirmation stage is one hypoexponential; its mean is exact.
        Ok(proof + self.model.rates(query.output_shard)?.mean())
    }

    /// `E(j)` for every shard `j` when the inputs live in `input_shards`.
    /// Shares the inputs' joint CDF across candidates.
    pub fn candidate_latencies(&mut self, input_shards: ShardSet) -> Result<Vec<f64>, L2sError> {
        let k = self.model.k();
        if self.mode == LatencyMode::StrictPaper || input_shards.is_empty() {
            return (0..k)
                .map(|j| self.expected_latency(&L2SQuery::for_placement(j, input_shards)))
                .collect();
        }
        self.model.collect(input_shards)?;
        let mut joint: Option<Vec<f64>> = None;
        let mut out = Vec::with_capacity(k);
        for j in 0..k {
            let set = input_shards.with(j);
            let proof = match self.proofs.get(&set.bits()) {
                Some(&v) => v,
                None => {
                    let grid = self.grid()?;
                    let joint = joint.get_or_insert_with(|| grid.joint(input_shards));
                    let extra = (!input_shards.contains(j)).then_some(j);
                    let v = grid.mean_of_max(joint, extra);
                    self.proofs.insert(set.bits(), v);
                    v
                }
            };
            out.push(proof + self.model.shards[j].mean());
        }
        Ok(out)
    }
}

/// Time-decayed running mean; older samples lose half their weight every
/// `half_life` seconds of simulated time.
#[derive(Debug, Clone, PartialEq)]
pub struct Ewma {
    half_life: f64,
    weighted_sum: f64,
    weight: f64,
    last_time: f64,
}

impl Ewma {
    pub fn new(half_life: f64) -> Self {
        Ewma {
            half_life,
            weighted_sum: 0.0,
            weight: 0.0,
            last_time: 0.0,
        }
    }

    pub fn observe(&mut self, now: f64, sample: f64) {
        if self.weight > 0.0 && now > self.last_time {
            let decay = 0.5f64.powf((now - self.last_time) / self.half_life);
            self.weighted_sum *= decay;
            self.weight *= decay;
        }
        self.last_time = self.last_time.max(now);
        self.weighted_sum += sample;
        self.weight += 1.0;
    }

    pub fn value(&self) -> Option<f64> {
        (self.weight > 0.0).then(|| self.weighted_sum / self.weight)
    }
}

/// Observations a client can gather about one shard.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardTelemetry {
    pub rtt: Ewma,
    pub commit_interval: Ewma,
    pub queue_len: usize,
}

impl ShardTelemetry {
    pub fn new(half_life: f64) -> Self {
        ShardTelemetry {
            rtt: Ewma::new(half_life),
            commit_interval: Ewma::new(half_life),
            queue_len: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub half_life: f64,
    pub default_rtt: f64,
    pub default_commit_interval: f64,
    pub block_capacity: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            half_life: 30.0,
            default_rtt: 0.2,
            default_commit_interval: 1.0,
            block_capacity: 2000,
        }
    }
}

/// `lambda_c = 1 / rtt`, `lambda_v = 1 / (interval * (1 + queue / capacity))`.
pub fn estimate_rates(telemetry: &[ShardTelemetry], cfg: &EstimatorConfig) -> ShardRateModel {
    let capacity = cfg.block_capacity.max(1) as f64;
    let shards = telemetry
        .iter()
        .map(|t| {
            let rtt = t.rtt.value().unwrap_or(cfg.default_rtt);
            let interval = t.commit_interval.value().unwrap_or(cfg.default_commit_interval);
            let verify = interval * (1.0 + t.queue_len as f64 / capacity);
            RatePair::new(1.0 / rtt, 1.0 / verify)
        })
        .collect();
    ShardRateModel { shards }
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn pdf_values() {
        let r = RatePair::new(1.0, 2.0);
        assert_eq!(proof_time_pdf(r, 0.0).unwrap(), 0.0);
        let expected = 2.0 * (1.0 / E - 1.0 / (E * E));
        assert!((proof_time_pdf(r, 1.0).unwrap() - expected).abs() < 1e-14);
        assert!((proof_time_pdf(RatePair::new(2.0, 1.0), 1.0).unwrap() - expected).abs() < 1e-14);
        let erlang = proof_time_pdf(RatePair::new(1.0, 1.0), 1.0).unwrap();
        assert!((erlang - 1.0 / E).abs() < 1e-15);
        assert!(matches!(
            proof_time_pdf(r, -1.0),
            Err(L2sError::NegativeTime(_))
        ));
    }

    #[test]
    fn cdf_values() {
        let r = RatePair::new(1.0, 2.0);
        assert_eq!(proof_time_cdf(r, 0.0).unwrap(), 0.0);
        assert!((proof_time_cdf(r, 1e6).unwrap() - 1.0).abs() < 1e-15);
        let expected = 2.0 * (1.0 - 1.0 / E) - (1.0 - 1.0 / (E * E));
        let got = proof_time_cdf(r, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-14);
        let integral = simpson(|t| r.pdf_unchecked(t), 0.0, 1.0, PANELS);
        assert!((integral - got).abs() < 1e-6);
    }

    #[test]
    fn erlang_continuity() {
        // Just above the switch to the Erlang formula and further out.
        for &rel in &[2e-9, 1e-8, 1e-7] {
            for &lc in &[0.1, 1.0, 7.5] {
                let near = RatePair::new(lc, lc * (1.0 + rel));
                let exact = RatePair::new(lc, lc);
                for &t in &[0.01, 0.5, 1.0, 3.0, 10.0] {
                    let t = t / lc;
                    assert!((near.pdf_unchecked(t) - exact.pdf_unchecked(t)).abs() < 1e-6);
                    assert!((near.cdf_unchecked(t) - exact.cdf_unchecked(t)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn singleton_all_proofs_matches_single() {
        let m = ShardRateModel::new(vec![RatePair::new(1.0, 2.0), RatePair::new(3.0, 0.5)]).unwrap();
        for &t in &[0.0, 0.3, 1.0, 4.0] {
            assert_eq!(
                m.all_proofs_pdf(ShardSet::single(1), t).unwrap(),
                m.proof_time_pdf(1, t).unwrap()
            );
        }
        assert!(matches!(
            m.all_proofs_pdf(ShardSet::EMPTY, 1.0),
            Err(L2sError::EmptyProofSet)
        ));
    }

    #[test]
    fn two_shard_pdf_normalizes() {
        let m = ShardRateModel::uniform(2, RatePair::new(1.0, 2.0)).unwrap();
        let set: ShardSet = [0, 1].into_iter().collect();
        let mass = simpson(|t| m.all_proofs_pdf(set, t).unwrap(), 0.0, 60.0, PANELS);
        assert!((mass - 1.0).abs() < 1e-4);
    }

    #[test]
    fn same_shard_unit_rates() {
        let m = ShardRateModel::uniform(1, RatePair::new(1.0, 1.0)).unwrap();
        let q = L2SQuery::for_placement(0, ShardSet::EMPTY);
        let e = m.expected_latency(&q, LatencyMode::Convolved).unwrap();
        assert!((e - 4.0).abs() < 1e-6, "{e}");
    }

    #[test]
    fn time_rescaling() {
        let m = ShardRateModel::new(vec![
            RatePair::new(1.0, 2.0),
            RatePair::new(0.7, 3.0),
            RatePair::new(5.0, 0.2),
        ])
        .unwrap();
        let q = L2SQuery::for_placement(2, [0, 1].into_iter().collect());
        let base = m.expected_latency(&q, LatencyMode::Convolved).unwrap();
        let fast = m.scaled(10.0).unwrap().expected_latency(&q, LatencyMode::Convolved).unwrap();
        assert!((fast * 10.0 - base).abs() / base < 1e-9);
    }

    #[test]
    fn superset_never_decreases() {
        let m = ShardRateModel::new(vec![
            RatePair::new(1.0, 2.0),
            RatePair::new(0.7, 3.0),
            RatePair::new(5.0, 0.2),
        ])
        .unwrap();
        let one = m.expected_proof_time(ShardSet::single(0)).unwrap();
        let two = m.expected_proof_time([0, 1].into_iter().collect()).unwrap();
        let three = m.expected_proof_time([0, 1, 2].into_iter().collect()).unwrap();
        assert!(one <= two && two <= three);
    }

    #[test]
    fn strict_mode_doubles_proof_mean() {
        let m = ShardRateModel::new(vec![RatePair::new(1.0, 2.0), RatePair::new(2.0, 4.0)]).unwrap();
        let set: ShardSet = [0, 1].into_iter().collect();
        let proof = m.expected_proof_time(set).unwrap();
        let strict = m.expected_latency_strict(set).unwrap();
        assert!((strict - 2.0 * proof).abs() / strict < 1e-4, "{strict} vs {proof}");
    }

    #[test]
    fn cache_matches_direct() {
        let m = ShardRateModel::new(vec![
            RatePair::new(1.0, 2.0),
            RatePair::new(2.0, 4.0),
            RatePair::new(5.0, 0.05),
        ])
        .unwrap();
        let mut cache = LatencyCache::new(m.clone(), LatencyMode::Convolved);
        for (j, inputs) in [(1, 0b001), (0, 0b000), (2, 0b011), (1, 0b100)] {
            let q = L2SQuery::for_placement(j, ShardSet::from_bits(inputs));
            let direct = m.expected_latency(&q, LatencyMode::Convolved).unwrap();
            let cached = cache.expected_latency(&q).unwrap();
            assert!((cached - direct).abs() < 1e-7 * direct, "{cached} vs {direct}");
            assert_eq!(cache.expected_latency(&q).unwrap(), cached);
        }
        let mut fresh = LatencyCache::new(m.clone(), LatencyMode::Convolved);
        let all = fresh.candidate_latencies(ShardSet::from_bits(0b101)).unwrap();
        for (j, e) in all.into_iter().enumerate() {
            let q = L2SQuery::for_placement(j, ShardSet::from_bits(0b101));
            assert!((cache.expected_latency(&q).unwrap() - e).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(matches!(
            ShardRateModel::new(vec![RatePair::new(1.0, 0.0)]),
            Err(L2sError::NonPositiveRate { shard: 0 })
        ));
        let json = r#"{"shards":[{"lambda_c":5.0,"lambda_v":1.0},{"lambda_c":-1.0,"lambda_v":1.0}]}"#;
        assert!(ShardRateModel::from_json(json.as_bytes()).is_err());
        let good = r#"{"shards":[{"lambda_c":5.0,"lambda_v":1.0}]}"#;
        let m = ShardRateModel::from_json(good.as_bytes()).unwrap();
        assert_eq!(m.rates(0).unwrap(), RatePair::new(5.0, 1.0));
        assert_eq!(ShardRateModel::from_json(m.to_json().as_bytes()).unwrap(), m);
    }

    #[test]
    fn estimator_defaults_and_samples() {
        let cfg = EstimatorConfig::default();
        let empty = estimate_rates(&vec![ShardTelemetry::new(cfg.half_life); 3], &cfg);
        assert_eq!(empty.shards(), &[RatePair::new(5.0, 1.0); 3]);

        let mut t = ShardTelemetry::new(cfg.half_life);
        for i in 0..10 {
            t.rtt.observe(i as f64, 0.2);
        }
        t.commit_interval.observe(0.0, 1.0);
        t.queue_len = 4000;
        let m = estimate_rates(&[t], &cfg);
        let r = m.rates(0).unwrap();
        assert!((r.lambda_c - 5.0).abs() < 1e-12);
        assert!((1.0 / r.lambda_v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ewma_decays_toward_recent() {
        let mut e = Ewma::new(30.0);
        assert_eq!(e.value(), None);
        e.observe(0.0, 1.0);
        e.observe(0.0, 3.0);
        assert_eq!(e.value(), Some(2.0));
        e.observe(30.0, 4.0);
        // Old weight 2 halves to 1; (2 + 4) / 2.
        assert!((e.value().unwrap() - 3.0).abs() < 1e-12);
    }
}
