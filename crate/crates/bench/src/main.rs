use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use funnel_bench::{parse_cache, run, BenchSpec, Format, HeapKind, OracleMismatch, Scenario, Shape};
use funnel_core::funnel::SweepMode;
use funnel_core::sop::Variant;

#[derive(Parser)]
#[command(name = "funnel-bench", about = "Counter tables for Funnel Heap experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Simulated cache as `M,B` in words.
    #[arg(long, value_parser = parse_cache)]
    cache: Option<(u64, u64)>,
    #[arg(long, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the refined sweep target rule.
    #[arg(long)]
    refined: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Push N, pop N/2, push N/2, pop N.
    GenericPq {
        #[arg(long, default_value_t = 1 << 16)]
        n: usize,
        /// binary | funnel | all
        #[arg(long, default_value = "all")]
        variant: String,
        #[command(flatten)]
        common: Common,
    },
    /// Sums of products of random sparse polynomials.
    Hensel {
        /// Degree bound of every operand.
        #[arg(long, default_value_t = 256)]
        n: u64,
        #[arg(long, default_value_t = 64)]
        terms: usize,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        prime: u64,
        /// ser-hl | pq-binary | pq-binary-chain | pq-funnel | fh-hl | fh-rank | all
        #[arg(long, default_value = "all")]
        variant: String,
        #[command(flatten)]
        common: Common,
    },
    /// Stream merging with a k-merger and a Funnel Heap.
    Merger {
        #[arg(long, default_value_t = 64)]
        k: usize,
        /// ksq-k | k-k | k-ksq | all
        #[arg(long, default_value = "all")]
        shape: String,
        #[command(flatten)]
        common: Common,
    },
}

fn pick<T: std::str::FromStr<Err = E> + Copy, E: Into<anyhow::Error>>(s: &str, all: &[T]) -> Result<Vec<T>> {
    if s == "all" {
        return Ok(all.to_vec());
    }
    s.split(',').map(|x| x.trim().parse().map_err(Into::into)).collect()
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<OracleMismatch>() => {
            eprintln!("oracle mismatch: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    let (scenario, common) = match cli.cmd {
        Cmd::GenericPq { n, variant, common } => {
            let heaps = pick(&variant, &[HeapKind::Binary, HeapKind::Funnel])?;
            (Scenario::GenericPq { n, heaps }, common)
        }
        Cmd::Hensel { n, terms, k, prime, variant, common } => {
            let variants = pick(&variant, &Variant::ALL)?;
            (Scenario::Hensel { n, terms, k, prime, variants }, common)
        }
        Cmd::Merger { k, shape, common } => {
            let shapes = pick(&shape, &Shape::ALL)?;
            (Scenario::Merger { k, shapes }, common)
        }
    };
    let spec = BenchSpec {
        scenario,
        seed: common.seed,
        cache: common.cache,
        sweep_mode: if common.refined { SweepMode::Refined } else { SweepMode::Canonical },
    };
    let out: Box<dyn Write> = match &common.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    run(&spec, common.format, out)
}
