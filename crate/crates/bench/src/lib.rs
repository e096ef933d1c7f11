//! Counter tables for the three experiment families: a generic priority-queue
//! workload, sums-of-products kernels and stream merging.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use funnel_core::baseline::BinaryMaxHeap;
use funnel_core::cache_sim::{Arena, CacheModel};
use funnel_core::funnel::{FunnelHeap, SweepMode};
use funnel_core::kmerger::StreamMerger;
use funnel_core::poly::{naive_sum_of_products, FieldSpec, SopInstance, SparsePoly};
use funnel_core::queue::MaxQueue;
use funnel_core::sop::{run_variant, KernelConfig, KernelRun, Variant};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeapKind {
    Binary,
    Funnel,
}

impl HeapKind {
    pub fn name(self) -> &'static str {
        match self {
            HeapKind::Binary => "binary",
            HeapKind::Funnel => "funnel",
        }
    }
}

impl FromStr for HeapKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(HeapKind::Binary),
            "funnel" => Ok(HeapKind::Funnel),
            _ => bail!("unknown heap `{s}` (binary | funnel)"),
        }
    }
}

/// Stream shapes, named by (stream count) x (stream length).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `k` streams of `isqrt(k)` elements.
    Wide,
    /// `k` streams of `k` elements.
    Square,
    /// `k` streams of `k^2` elements.
    Deep,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Wide, Shape::Square, Shape::Deep];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Wide => "ksq-k",
            Shape::Square => "k-k",
            Shape::Deep => "k-ksq",
        }
    }

    pub fn stream_len(self, k: usize) -> usize {
        match self {
            Shape::Wide => k.isqrt(),
            Shape::Square => k,
            Shape::Deep => k * k,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ksq-k" => Ok(Shape::Wide),
            "k-k" => Ok(Shape::Square),
            "k-ksq" => Ok(Shape::Deep),
            _ => bail!("unknown shape `{s}` (ksq-k | k-k | k-ksq)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => bail!("unknown format `{s}` (csv | json)"),
        }
    }
}

/// Parses `M,B` in words.
pub fn parse_cache(s: &str) -> Result<(u64, u64)> {
    let (m, b) = s.split_once(',').context("expected M,B")?;
    let (m, b) = (m.trim().parse()?, b.trim().parse()?);
    ensure!(b > 0 && m >= b, "need M >= B > 0");
    Ok((m, b))
}

#[derive(Debug, Clone)]
pub enum Scenario {
    GenericPq { n: usize, heaps: Vec<HeapKind> },
    Hensel { n: u64, terms: usize, k: usize, prime: u64, variants: Vec<Variant> },
    Merger { k: usize, shapes: Vec<Shape> },
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub scenario: Scenario,
    pub seed: u64,
    pub cache: Option<(u64, u64)>,
    pub sweep_mode: SweepMode,
}

fn arena(cache: Option<(u64, u64)>) -> Arena {
    let mut a = Arena::new();
    if let Some((m, b)) = cache {
        a.attach_cache(CacheModel::new(m, b));
    }
    a
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenericPqRow {
    pub heap: &'static str,
    pub n: usize,
    pub max_capacity: u64,
    pub misses: u64,
    pub comparisons: u64,
}

/// Push `n`, pop `n/2`, push `n/2`, pop `n` random keys; every pop is
/// checked against a sorted reference.
pub fn generic_pq(kind: HeapKind, n: usize, seed: u64, cache: Option<(u64, u64)>, mode: SweepMode) -> Result<GenericPqRow> {
    ensure!(n >= 2 && n.is_multiple_of(2), "N must be even and at least 2, got {n}");
    let (max_capacity, misses, comparisons) = match kind {
        HeapKind::Binary => drive(BinaryMaxHeap::<()>::new(arena(cache))?, n, seed)?,
        HeapKind::Funnel => drive(FunnelHeap::<(), _>::new(arena(cache), mode)?, n, seed)?,
    };
    Ok(GenericPqRow {
        heap: kind.name(),
        n,
        max_capacity,
        misses,
        comparisons,
    })
}

fn drive<Q: MaxQueue<()>>(mut q: Q, n: usize, seed: u64) -> Result<(u64, u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reference = std::collections::BinaryHeap::with_capacity(n);
    let mut push = |q: &mut Q, reference: &mut std::collections::BinaryHeap<u64>, m: usize| -> Result<()> {
        for _ in 0..m {
            let x = rng.gen::<u32>() as u64;
            q.insert(x, ())?;
            reference.push(x);
        }
        Ok(())
    };
    let pop = |q: &mut Q, reference: &mut std::collections::BinaryHeap<u64>, m: usize| -> Result<()> {
        for _ in 0..m {
            let got = q.extract_max()?.order;
            ensure!(Some(got) == reference.pop(), "heap returned {got} out of order");
        }
        Ok(())
    };
    push(&mut q, &mut reference, n)?;
    pop(&mut q, &mut reference, n / 2)?;
    push(&mut q, &mut reference, n / 2)?;
    pop(&mut q, &mut reference, n)?;
    Ok((q.counters().peak_size, q.arena().misses(), q.counters().comparisons))
}

/// `terms` distinct orders drawn from `[0, n]` with coefficients in `[1, p-1]`.
pub fn random_poly<R: Rng>(rng: &mut R, field: FieldSpec, n: u64, terms: usize) -> SparsePoly {
    let span = (n + 1) as usize;
    let p = field.modulus();
    let raw = sample(rng, span, terms.min(span))
        .into_iter()
        .map(|o| (rng.gen_range(1..p) as i64, o as u64));
    SparsePoly::normalize(field, raw)
}

/// `k - 1` pairs of random polynomials of degree at most `n`.
pub fn hensel_instance(seed: u64, n: u64, terms: usize, k: usize, prime: u64) -> Result<SopInstance> {
    ensure!(k >= 2, "k must be at least 2");
    let field = FieldSpec::new(prime)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gs = (1..k).map(|_| random_poly(&mut rng, field, n, terms)).collect();
    let hs = (1..k).map(|_| random_poly(&mut rng, field, n, terms)).collect();
    Ok(SopInstance::new(field, gs, hs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HenselRow {
    pub variant: &'static str,
    pub k: usize,
    pub n: u64,
    pub terms: usize,
    pub prime: u64,
    pub seed: u64,
    pub comparisons: u64,
    pub misses: u64,
    /// Semicolon separated, link 1 first.
    pub sweeps_per_link: String,
    pub links: usize,
    pub peak_size: u64,
    pub chain_events: u64,
    pub result_terms: usize,
    pub time_ms: f64,
}

#[derive(Debug)]
pub struct HenselOutcome {
    pub rows: Vec<HenselRow>,
    pub runs: Vec<KernelRun>,
}

#[derive(Debug)]
pub struct OracleMismatch {
    pub variant: Variant,
    pub instance: String,
    pub want: SparsePoly,
    pub got: SparsePoly,
}

impl fmt::Display for OracleMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} disagrees with the reference product", self.variant.name())?;
        writeln!(f, "want {:?}", self.want.as_pairs())?;
        writeln!(f, "got  {:?}", self.got.as_pairs())?;
        write!(f, "instance:\n{}", self.instance)
    }
}

impl std::error::Error for OracleMismatch {}

/// Runs each variant on its own thread and checks every result against the
/// naive product before anything is reported.
pub fn hensel(inst: &SopInstance, variants: &[Variant], cfg: &KernelConfig, seed: u64, n: u64, terms: usize) -> Result<HenselOutcome> {
    let want = naive_sum_of_products(inst);
    let timed: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = variants
            .iter()
            .map(|&v| {
                s.spawn(move || {
                    let t = Instant::now();
                    run_variant(inst, v, cfg).map(|r| (r, t.elapsed()))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("kernel thread panicked")).collect()
    });
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for res in timed {
        let (run, took) = res?;
        if run.result != want {
            return Err(OracleMismatch {
                variant: run.variant,
                instance: inst.to_text(),
                want,
                got: run.result,
            }
            .into());
        }
        let c = &run.counters;
        rows.push(HenselRow {
            variant: run.variant.name(),
            k: inst.k,
            n,
            terms,
            prime: inst.field.modulus(),
            seed,
            comparisons: c.comparisons,
            misses: run.misses,
            sweeps_per_link: c.sweeps_per_link.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
            links: run.links,
            peak_size: c.peak_size,
            chain_events: c.chain_events,
            result_terms: run.result.len(),
            time_ms: took.as_secs_f64() * 1e3,
        });
        runs.push(run);
    }
    Ok(HenselOutcome { rows, runs })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergerRow {
    pub structure: &'static str,
    pub shape: &'static str,
    pub k: usize,
    pub stream_len: usize,
    pub total: usize,
    pub comparisons: u64,
    pub misses: u64,
}

/// `k` descending streams of random keys.
pub fn random_streams(seed: u64, k: usize, len: usize) -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            let mut s: Vec<u64> = (0..len).map(|_| rng.gen::<u32>() as u64).collect();
            s.sort_unstable_by(|a, b| b.cmp(a));
            s
        })
        .collect()
}

/// Merges the same streams with a k-merger and with a Funnel Heap; both
/// outputs are checked against the sorted union.
pub fn merger(shape: Shape, k: usize, seed: u64, cache: Option<(u64, u64)>, mode: SweepMode) -> Result<[MergerRow; 2]> {
    ensure!(k >= 2 && k.is_power_of_two() && k <= 512, "k must be a power of two in [2, 512]");
    let len = shape.stream_len(k);
    let streams = random_streams(seed, k, len);
    let mut want: Vec<u64> = streams.iter().flatten().copied().collect();
    want.sort_unstable_by(|a, b| b.cmp(a));

    let mut a = arena(cache);
    let mut m = StreamMerger::new(k, streams.clone(), &mut a)?;
    let got = m.merge_all(&mut a);
    ensure!(got == want, "k-merger output differs from the sorted union");
    let km = MergerRow {
        structure: "kmerger",
        shape: shape.name(),
        k,
        stream_len: len,
        total: want.len(),
        comparisons: m.comparisons(),
        misses: a.misses(),
    };

    let mut f = FunnelHeap::<(), _>::new(arena(cache), mode)?;
    for s in &streams {
        for &x in s {
            f.insert(x, ())?;
        }
    }
    let mut got = Vec::with_capacity(want.len());
    while !f.is_empty() {
        got.push(f.extract_max()?.order);
    }
    ensure!(got == want, "Funnel Heap output differs from the sorted union");
    let fh = MergerRow {
        structure: "funnel",
        shape: shape.name(),
        k,
        stream_len: len,
        total: want.len(),
        comparisons: f.counters().comparisons,
        misses: f.arena().misses(),
    };
    Ok([fh, km])
}

/// Writes rows as CSV with a header, or as a JSON array of the same records.
pub fn write_rows<T: Serialize, W: Write>(rows: &[T], format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Runs a whole spec and writes its table.
pub fn run<W: Write>(spec: &BenchSpec, format: Format, out: W) -> Result<()> {
    match &spec.scenario {
        Scenario::GenericPq { n, heaps } => {
            let rows = heaps
                .iter()
                .map(|&h| generic_pq(h, *n, spec.seed, spec.cache, spec.sweep_mode))
                .collect::<Result<Vec<_>>>()?;
            write_rows(&rows, format, out)
        }
        Scenario::Hensel { n, terms, k, prime, variants } => {
            let inst = hensel_instance(spec.seed, *n, *terms, *k, *prime)?;
            let cfg = KernelConfig {
                cache: spec.cache,
                sweep_mode: spec.sweep_mode,
                ..KernelConfig::default()
            };
            let o = hensel(&inst, variants, &cfg, spec.seed, *n, *terms)?;
            write_rows(&o.rows, format, out)
        }
        Scenario::Merger { k, shapes } => {
            let mut rows = Vec::new();
            for &s in shapes {
                rows.extend(merger(s, *k, spec.seed, spec.cache, spec.sweep_mode)?);
            }
            write_rows(&rows, format, out)
        }
    }
}
