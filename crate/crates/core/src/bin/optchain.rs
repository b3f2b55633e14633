use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use optchain::experiment::{self, ExperimentSpec};
use optchain::ingest::parse_stream;
use optchain::l2s::LatencyMode;
use optchain::{Error, StrategyConfig, StrategyKind};

#[derive(Parser)]
#[command(name = "optchain", version, about = "Transaction placement and sharded ledger simulation")]
struct Cli {
    /// Experiment config (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (file for `convert` and `synth`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use the literal latency integral instead of proof time plus confirmation.
    #[arg(long, global = true)]
    strict_paper_l2s: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Degree histograms and average-degree series of a stream.
    Stats {
        stream: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        window: usize,
    },
    /// Place a stream offline and report cross-shard transactions.
    Place(PlaceArgs),
    /// Run the simulation grid.
    Simulate(SimulateArgs),
    /// Merge finished grid cells into summary tables.
    Report,
    /// Convert a `tx_hash,inputs,output_count` CSV dump to a stream file.
    Convert { input: PathBuf },
    /// Generate a synthetic stream.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        fixed_in_degree: Option<u32>,
        #[arg(long)]
        mean_in_degree: Option<f64>,
    },
}

#[derive(Args)]
struct PlaceArgs {
    stream: PathBuf,
    #[arg(long, default_value = "optchain")]
    strategy: StrategyKind,
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    fitness_weight: Option<f64>,
    /// Total transaction count for the size cap; defaults to the stream length.
    #[arg(long)]
    capacity_n: Option<u64>,
    /// Partition file for `--strategy imported`.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Partition of a stream prefix used to warm-start the shards.
    #[arg(long)]
    warm: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    rates: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<StrategyKind>,
    /// Synthetic stream length when no dataset is given.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    event_log: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn out_dir(cli: &Cli) -> Result<&Path, Error> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required".into()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut spec = match &cli.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.strict_paper_l2s |= cli.strict_paper_l2s;
    let out = out_dir(&cli)?;
    match &cli.command {
        Command::Stats { stream, window } => {
            let records = parse_stream(stream)?.map(|r| r.map_err(Error::from));
            print_json(&experiment::cmd_stats(records, *window, out)?)
        }
        Command::Place(a) => {
            let mut cfg = StrategyConfig {
                kind: a.strategy,
                k: a.k,
                ..spec.sim.strategy.clone()
            };
            cfg.epsilon = a.epsilon.unwrap_or(cfg.epsilon);
            cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
            cfg.fitness_weight = a.fitness_weight.unwrap_or(cfg.fitness_weight);
            if spec.strict_paper_l2s {
                cfg.latency_mode = LatencyMode::StrictPaper;
            }
            let reader = parse_stream(&a.stream)?;
            cfg.capacity_n = a.capacity_n.or(cfg.capacity_n).or(Some(reader.expected_len() as u64));
            cfg.validate()?;
            let partition = match &a.partition {
                Some(p) => Some(experiment::load_partition(p, Some(a.k))?),
                None => None,
            };
            let warm = match &a.warm {
                Some(p) => experiment::load_partition(p, Some(a.k))?,
                None => Vec::new(),
            };
            let records = reader.map(|r| r.map_err(Error::from));
            print_json(&experiment::cmd_place(records, cfg, partition, &warm, out)?)
        }
        Command::Simulate(a) => {
            if a.dataset.is_some() {
                spec.dataset = a.dataset.clone();
            }
            if !a.k.is_empty() {
                spec.k = a.k.clone();
            }
            if !a.rates.is_empty() {
                spec.rates = a.rates.clone();
            }
            if !a.strategies.is_empty() {
                spec.strategies = a.strategies.clone();
            }
            if let Some(n) = a.n {
                spec.synth.n = n;
            }
            spec.event_log |= a.event_log;
            let done = experiment::cmd_simulate(&spec, out)?;
            eprintln!("ran {} cells, skipped {} finished", done.ran.len(), done.skipped.len());
            Ok(())
        }
        Command::Report => {
            let r = experiment::cmd_report(out)?;
            for cell in &r.missing {
                eprintln!("missing cell: {}", cell.dir_name());
            }
            eprintln!("{} rows", r.rows);
            Ok(())
        }
        Command::Convert { input } => print_json(&experiment::cmd_convert(input, out)?),
        Command::Synth {
            n,
            fixed_in_degree,
            mean_in_degree,
        } => {
            let mut cfg = spec.synth.clone();
            cfg.seed = spec.seed;
            cfg.n = n.unwrap_or(cfg.n);
            cfg.fixed_in_degree = fixed_in_degree.or(cfg.fixed_in_degree);
            cfg.mean_in_degree = mean_in_degree.unwrap_or(cfg.mean_in_degree);
            let n = experiment::cmd_synth(&cfg, out)?;
            eprintln!("wrote {n} transactions to {}", out.display());
            Ok(())
        }
    }
}
