//! Generates a synthetic stream and writes it in the canonical format.
//!
//! ```text
//! cargo run --release --example synth_stream -- [n] [communities] [path]
//! ```

use optchain::{generate_synthetic, SynthConfig};

fn main() -> Result<(), optchain::Error> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let communities: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let path = args.next().unwrap_or_else(|| "synth.tan".into());
    let cfg = SynthConfig {
        n,
        communities,
        ..Default::default()
    };
    let stream = generate_synthetic(&cfg)?;
    let coinbase = stream.records.iter().filter(|r| r.inputs.is_empty()).count();
    let edges: usize = stream.records.iter().map(|r| r.inputs.len()).sum();
    stream.write(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    println!(
        "{path}: {n} txs, {coinbase} coinbase, mean in-degree {:.3}",
        edges as f64 / n as f64
    );
    Ok(())
}
