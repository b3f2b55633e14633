use std::io::Write;

use serde::{Deserialize, Serialize};

/// One row of the sampled time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub time: f64,
    /// Commits since the previous sample.
    pub committed_window: u64,
    pub queue_max: usize,
    pub queue_min: usize,
    /// `queue_max / max(queue_min, 1)`.
    pub ratio: f64,
    /// Cumulative fraction of injected transactions that are cross-shard.
    pub cross_frac: f64,
    pub injected: u64,
    pub committed: u64,
    pub aborted: u64,
    pub pending: u64,
}

/// Summary of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: String,
    pub k: usize,
    pub tx_rate: f64,
    pub injected: u64,
    pub committed: u64,
    pub aborted: u64,
    pub pending: u64,
    pub cross_tx_count: u64,
    pub cross_tx_fraction: f64,
    /// Time of the last processed event.
    pub end_time: f64,
    /// Committed transactions over the run time.
    pub throughput: f64,
    /// Commit rate between 10% of the injection span and the last submission.
    pub steady_throughput: f64,
    pub mean_latency: f64,
    pub max_latency: f64,
    pub p50_latency: f64,
    pub p90_latency: f64,
    pub p99_latency: f64,
    pub mean_latency_same_shard: f64,
    pub mean_latency_cross_shard: f64,
    pub same_shard_committed: u64,
    pub cross_shard_committed: u64,
    /// Mean of the sampled max/min queue ratios.
    pub mean_queue_ratio: f64,
    pub max_queue: usize,
    pub blocks: u64,
    pub unlock_aborts: u64,
    /// Decisions that hit the all-shards-full fallback of a capped strategy.
    pub full_events: u64,
}

/// Nearest-rank quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub(crate) fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn write_timeseries<W: Write>(w: W, rows: &[SampleRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "committed_window", "queue_max", "queue_min", "ratio", "cross_frac"])?;
    for r in rows {
        out.write_record([
            r.time.to_string(),
            r.committed_window.to_string(),
            r.queue_max.to_string(),
            r.queue_min.to_string(),
            r.ratio.to_string(),
            r.cross_frac.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Empirical CDF at `points` evenly spaced quantiles: `(latency, fraction)`.
pub fn latency_cdf(latencies: &[f64], points: usize) -> Vec<(f64, f64)> {
    let mut sorted = latencies.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() || points == 0 {
        return Vec::new();
    }
    (1..=points)
        .map(|i| {
            let q = i as f64 / points as f64;
            (quantile(&sorted, q), q)
        })
        .collect()
}

pub fn write_latency_cdf<W: Write>(w: W, latencies: &[f64], points: usize) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["latency", "fraction"])?;
    for (l, q) in latency_cdf(latencies, points) {
        out.write_record([l.to_string(), q.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Fixed-width histogram: `bin_start,bin_end,count`.
pub fn write_latency_histogram<W: Write>(w: W, latencies: &[f64], bin_width: f64) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_start", "bin_end", "count"])?;
    let mut counts: Vec<u64> = Vec::new();
    for &l in latencies {
        let b = (l / bin_width).floor().max(0.0) as usize;
        if b >= counts.len() {
            counts.resize(b + 1, 0);
        }
        counts[b] += 1;
    }
    for (b, c) in counts.iter().enumerate() {
        out.write_record([
            (b as f64 * bin_width).to_string(),
            ((b + 1) as f64 * bin_width).to_string(),
            c.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&[], 0.5), 0.0);
    }

    #[test]
    fn histogram_rows() {
        let mut buf = Vec::new();
        write_latency_histogram(&mut buf, &[0.1, 0.2, 1.7], 0.5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "bin_start,bin_end,count\n0,0.5,2\n0.5,1,0\n1,1.5,0\n1.5,2,1\n");
    }

    #[test]
    fn cdf_is_monotone() {
        let cdf = latency_cdf(&[3.0, 1.0, 2.0], 3);
        assert_eq!(cdf, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
    }
}
