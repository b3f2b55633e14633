//! Degree structure of a synthetic transaction graph.
//!
//! ```text
//! cargo run --release --example graph_stats -- [n]
//! ```

use optchain::{generate_synthetic, SynthConfig, TanGraph};

fn main() -> Result<(), optchain::Error> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(50_000);
    let stream = generate_synthetic(&SynthConfig {
        n,
        ..Default::default()
    })?;
    let mut graph = TanGraph::with_capacity(n);
    for r in stream.records {
        graph.add_tx(r)?;
    }
    let hist = graph.degree_histogram();
    println!("{} nodes, {} edges", graph.len(), graph.edge_count());
    println!(
        "mean in-degree {:.3}, mean out-degree {:.3}",
        hist.mean_in_degree(),
        hist.mean_out_degree()
    );
    println!("in-degree head:");
    for (d, c) in hist.in_degree.iter().take(6) {
        println!("  {d:>3} {c}");
    }
    println!("out-degree tail:");
    for (d, c) in hist.out_degree.iter().rev().take(4) {
        println!("  {d:>3} {c}");
    }
    let series = graph.avg_degree_series(n / 10)?;
    let line: Vec<String> = series.iter().map(|(_, m)| format!("{m:.2}")).collect();
    println!("windowed mean in-degree: {}", line.join(" "));
    Ok(())
}
