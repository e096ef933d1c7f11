//! Sums-of-products kernels `S_k = sum_i g_i * h_{k-i}`.
//!
//! Every kernel streams monomial products in decreasing order and sums the
//! coefficients of each order before emitting a term. They differ in how the
//! products are ordered:
//!
//! | variant            | ordering structure                                  |
//! |--------------------|-----------------------------------------------------|
//! | `SerHl`            | one binary heap per pair, then a k-merger over them |
//! | `PqBinary`         | one global binary heap                              |
//! | `PqBinaryChain`    | global binary heap with replica scan on insert      |
//! | `PqFunnel`         | global Funnel Heap                                  |
//! | `FunnelChain`      | Funnel Heap with batched chaining into a chain store|
//! | `FunnelRank`       | as above, with pairs activated by their head order  |

use std::collections::HashSet;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{BinaryMaxHeap, NaiveChainedHeap};
use crate::cache_sim::{Arena, CacheModel};
use crate::entry::{Counters, HeapEntry};
use crate::error::{Error, Result};
use crate::funnel::{DuplicateHandler, FunnelHeap, SweepMode};
use crate::kmerger::StreamMerger;
use crate::poly::{SopInstance, SparsePoly, Term};
use crate::queue::MaxQueue;

/// Position `(u, w)` in the product table of pair `pair`, all 1-based. The
/// product is `g_pair[u] * h_{k-pair}[w]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ProductCursor {
    pub pair: u32,
    pub u: u32,
    pub w: u32,
}

impl ProductCursor {
    pub fn head(pair: usize) -> Self {
        Self {
            pair: pair as u32,
            u: 1,
            w: 1,
        }
    }

    pub fn order(&self, inst: &SopInstance) -> u64 {
        let (g, h) = inst.pair(self.pair as usize);
        g.terms()[self.u as usize - 1].order + h.terms()[self.w as usize - 1].order
    }

    fn coeff_product(&self, inst: &SopInstance) -> u64 {
        let (g, h) = inst.pair(self.pair as usize);
        g.terms()[self.u as usize - 1].coeff * h.terms()[self.w as usize - 1].coeff
    }

    /// Horizontal successor `(u, w + 1)` and, on the first column, the
    /// vertical successor `(u + 1, 1)`.
    pub fn successors(&self, g_len: usize, h_len: usize) -> [Option<Self>; 2] {
        let right = ((self.w as usize) < h_len).then(|| Self {
            w: self.w + 1,
            ..*self
        });
        let down = (self.w == 1 && (self.u as usize) < g_len).then(|| Self {
            u: self.u + 1,
            ..*self
        });
        [right, down]
    }
}

const LOG_BASE: u64 = 1 << 40;

/// Chains of duplicate products, one dynamic array per order.
///
/// `D[alpha]` is a static array of chain heads indexed by order. Chain nodes
/// are taken from a pool in append order. When tracing, each append reports
/// the `D[alpha]` word and the pool slot it writes.
#[derive(Debug, Clone)]
pub struct ChainStore {
    slots: Vec<Vec<HeapEntry<ProductCursor>>>,
    len: usize,
    appended: u64,
    trace: Option<Vec<u64>>,
    seen: Vec<bool>,
    first_appends: Vec<u64>,
    batches: Vec<Vec<u64>>,
    in_sweep: bool,
}

impl ChainStore {
    pub fn new(deg_bound: u64) -> Self {
        let n = deg_bound as usize + 1;
        Self {
            slots: vec![Vec::new(); n],
            len: 0,
            appended: 0,
            trace: None,
            seen: vec![false; n],
            first_appends: Vec::new(),
            batches: Vec::new(),
            in_sweep: false,
        }
    }

    pub fn record_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn deg_bound(&self) -> u64 {
        self.slots.len() as u64 - 1
    }

    pub fn chain_of(&self, order: u64) -> &[HeapEntry<ProductCursor>] {
        &self.slots[order as usize]
    }

    /// Total appends over the run.
    pub fn appended(&self) -> u64 {
        self.appended
    }

    pub fn trace(&self) -> Option<&[u64]> {
        self.trace.as_deref()
    }

    /// Orders in the sequence they first received an append.
    pub fn first_appends(&self) -> &[u64] {
        &self.first_appends
    }

    /// Orders appended by each sweep that chained anything, in append order.
    pub fn batches(&self) -> &[Vec<u64>] {
        &self.batches
    }
}

impl DuplicateHandler<ProductCursor> for ChainStore {
    fn chain(&mut self, e: HeapEntry<ProductCursor>) {
        let a = e.order as usize;
        if let Some(t) = self.trace.as_mut() {
            t.push(a as u64);
            t.push(LOG_BASE + self.appended);
        }
        if !self.seen[a] {
            self.seen[a] = true;
            self.first_appends.push(e.order);
        }
        if self.in_sweep {
            self.batches.last_mut().unwrap().push(e.order);
        }
        self.slots[a].push(e);
        self.len += 1;
        self.appended += 1;
    }

    fn take(&mut self, order: u64, out: &mut Vec<HeapEntry<ProductCursor>>) {
        if let Some(v) = self.slots.get_mut(order as usize) {
            self.len -= v.len();
            out.append(v);
        }
    }

    fn chained(&self) -> usize {
        self.len
    }

    fn sweep_begin(&mut self) {
        self.in_sweep = true;
        if self.batches.last().is_none_or(|b| !b.is_empty()) {
            self.batches.push(Vec::new());
        }
    }

    fn sweep_done(&mut self) {
        self.in_sweep = false;
        if self.batches.last().is_some_and(Vec::is_empty) {
            self.batches.pop();
        }
    }
}

/// Pairs grouped by the order of their head product, highest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderSchedule {
    /// `(alpha, pairs)` strictly decreasing on `alpha`.
    pub entries: Vec<(u64, Vec<usize>)>,
    next: usize,
    counting: bool,
}

impl OrderSchedule {
    pub fn peek_alpha(&self) -> Option<u64> {
        self.entries.get(self.next).map(|e| e.0)
    }

    /// Returns the next group and advances.
    pub fn advance(&mut self) -> Option<&(u64, Vec<usize>)> {
        let e = self.entries.get(self.next)?;
        self.next += 1;
        Some(e)
    }

    pub fn pending(&self) -> usize {
        self.entries.len() - self.next
    }

    pub fn used_counting_sort(&self) -> bool {
        self.counting
    }
}

/// Computes every non-zero pair's head order and sorts the pairs on it.
/// Counting sort is used when the span of head orders is at most
/// `4 (k - 1)`, a comparison sort otherwise.
pub fn build_order_schedule(inst: &SopInstance) -> OrderSchedule {
    let heads: Vec<(u64, usize)> = (1..=inst.pairs())
        .filter_map(|i| {
            let (g, h) = inst.pair(i);
            Some((g.max_order()? + h.max_order()?, i))
        })
        .collect();
    let (Some(lo), Some(hi)) = (
        heads.iter().map(|x| x.0).min(),
        heads.iter().map(|x| x.0).max(),
    ) else {
        return OrderSchedule {
            entries: Vec::new(),
            next: 0,
            counting: false,
        };
    };
    let counting = hi - lo <= 4 * inst.pairs() as u64;
    let mut entries: Vec<(u64, Vec<usize>)> = Vec::new();
    if counting {
        let mut buckets = vec![Vec::new(); (hi - lo) as usize + 1];
        for &(a, i) in &heads {
            buckets[(a - lo) as usize].push(i);
        }
        for (off, b) in buckets.into_iter().enumerate().rev() {
            if !b.is_empty() {
                entries.push((lo + off as u64, b));
            }
        }
    } else {
        let mut sorted = heads;
        sorted.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (a, i) in sorted {
            match entries.last_mut() {
                Some((last, v)) if *last == a => v.push(i),
                _ => entries.push((a, vec![i])),
            }
        }
    }
    OrderSchedule {
        entries,
        next: 0,
        counting,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventOp {
    Insert,
    Extract,
    Chain,
    Activate,
}

/// One kernel event. `chain` events are cursors handed back from a chain
/// rather than extracted from the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub op: EventOp,
    pub order: u64,
    pub pair: u32,
    pub u: u32,
    pub w: u32,
    pub tick: u64,
}

/// Writes one JSON object per line.
pub fn write_events<W: Write>(mut out: W, events: &[Event]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events<R: BufRead>(input: R) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(events)
}

/// Indices of insert events that are neither the head of a pair activated
/// just before nor a successor of a cursor consumed in the current round.
/// A round is a maximal run of extract and chain events.
pub fn unjustified_inserts(events: &[Event]) -> Vec<usize> {
    let mut bad = Vec::new();
    let mut consumed: HashSet<(u32, u32, u32)> = HashSet::new();
    let mut activated: HashSet<u32> = HashSet::new();
    let mut in_round = false;
    for (idx, e) in events.iter().enumerate() {
        match e.op {
            EventOp::Extract | EventOp::Chain => {
                if !in_round {
                    consumed.clear();
                    in_round = true;
                }
                consumed.insert((e.pair, e.u, e.w));
            }
            EventOp::Activate => {
                in_round = false;
                activated.insert(e.pair);
            }
            EventOp::Insert => {
                in_round = false;
                let ok = if e.u == 1 && e.w == 1 {
                    activated.remove(&e.pair)
                } else if e.w > 1 {
                    consumed.contains(&(e.pair, e.u, e.w - 1))
                } else {
                    consumed.contains(&(e.pair, e.u - 1, 1))
                };
                if !ok {
                    bad.push(idx);
                }
            }
        }
    }
    bad
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    SerHl,
    PqBinary,
    PqBinaryChain,
    PqFunnel,
    FunnelChain,
    FunnelRank,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::SerHl,
        Variant::PqBinary,
        Variant::PqBinaryChain,
        Variant::PqFunnel,
        Variant::FunnelChain,
        Variant::FunnelRank,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::SerHl => "ser-hl",
            Variant::PqBinary => "pq-binary",
            Variant::PqBinaryChain => "pq-binary-chain",
            Variant::PqFunnel => "pq-funnel",
            Variant::FunnelChain => "fh-hl",
            Variant::FunnelRank => "fh-rank",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("unknown variant `{s}`"),
            })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KernelConfig {
    /// `(M, B)` in words.
    pub cache: Option<(u64, u64)>,
    pub sweep_mode: SweepMode,
    pub events: bool,
    pub chain_trace: bool,
    pub lifetimes: bool,
}

#[derive(Debug, Clone)]
pub struct KernelRun {
    pub variant: Variant,
    pub result: SparsePoly,
    pub counters: Counters,
    pub misses: u64,
    /// Links allocated by a Funnel Heap queue, zero otherwise.
    pub links: usize,
    pub events: Option<Vec<Event>>,
    pub chains: Option<ChainStore>,
}

fn arena(cfg: &KernelConfig) -> Arena {
    let mut a = Arena::new();
    if let Some((m, b)) = cfg.cache {
        a.attach_cache(CacheModel::new(m, b));
    }
    a
}

struct Log<'a> {
    events: Option<&'a mut Vec<Event>>,
}

impl Log<'_> {
    fn push(&mut self, op: EventOp, order: u64, c: ProductCursor) {
        if let Some(ev) = self.events.as_mut() {
            let tick = ev.len() as u64;
            ev.push(Event {
                op,
                order,
                pair: c.pair,
                u: c.u,
                w: c.w,
                tick,
            });
        }
    }
}

fn insert_cursor<Q: MaxQueue<ProductCursor>>(
    q: &mut Q,
    inst: &SopInstance,
    c: ProductCursor,
    log: &mut Log<'_>,
) -> Result<()> {
    let order = c.order(inst);
    q.insert(order, c)?;
    log.push(EventOp::Insert, order, c);
    Ok(())
}

/// The priority-queue kernel over any max-queue. With a schedule, pairs are
/// seeded only once the queue maximum has fallen to their head order.
pub fn pq_kernel<Q: MaxQueue<ProductCursor>>(
    inst: &SopInstance,
    q: &mut Q,
    mut schedule: Option<OrderSchedule>,
    events: Option<&mut Vec<Event>>,
) -> Result<SparsePoly> {
    let p = inst.field.modulus() as u128;
    let mut log = Log { events };
    let nonzero = |i: usize| {
        let (g, h) = inst.pair(i);
        !g.is_zero() && !h.is_zero()
    };
    if schedule.is_none() {
        for i in (1..=inst.pairs()).filter(|&i| nonzero(i)) {
            insert_cursor(q, inst, ProductCursor::head(i), &mut log)?;
        }
    }

    let mut terms = Vec::new();
    let mut round: Vec<HeapEntry<ProductCursor>> = Vec::new();
    loop {
        let Some(beta) = q.peek_max_order() else {
            match schedule.as_mut().and_then(|s| s.advance().cloned()) {
                Some((alpha, pairs)) => {
                    activate(q, inst, alpha, &pairs, &mut log)?;
                    continue;
                }
                None => break,
            }
        };
        round.clear();
        while q.peek_max_order() == Some(beta) {
            let e = q.extract_max()?;
            log.push(EventOp::Extract, e.order, e.payload);
            round.push(e);
            let before = round.len();
            q.take_chained(beta, &mut round);
            for c in &round[before..] {
                log.push(EventOp::Chain, c.order, c.payload);
            }
        }
        let mut acc: u128 = 0;
        for e in &round {
            acc += e.payload.coeff_product(inst) as u128;
        }
        let a = (acc % p) as u64;
        if a != 0 {
            terms.push(Term::new(a, beta));
        }
        for e in &round {
            let (g, h) = inst.pair(e.payload.pair as usize);
            for s in e.payload.successors(g.len(), h.len()).into_iter().flatten() {
                insert_cursor(q, inst, s, &mut log)?;
            }
        }
        if let Some(s) = schedule.as_mut() {
            if let Some(next_max) = q.peek_max_order() {
                while s.peek_alpha().is_some_and(|a| a >= next_max) {
                    let (alpha, pairs) = s.advance().cloned().unwrap();
                    activate(q, inst, alpha, &pairs, &mut log)?;
                }
            }
        }
    }
    Ok(SparsePoly::from_sorted_terms(inst.field, terms).expect("terms emitted in decreasing order"))
}

fn activate<Q: MaxQueue<ProductCursor>>(
    q: &mut Q,
    inst: &SopInstance,
    alpha: u64,
    pairs: &[usize],
    log: &mut Log<'_>,
) -> Result<()> {
    for &i in pairs {
        let c = ProductCursor::head(i);
        log.push(EventOp::Activate, alpha, c);
        insert_cursor(q, inst, c, log)?;
    }
    Ok(())
}

fn run_pq<Q: MaxQueue<ProductCursor>>(
    inst: &SopInstance,
    q: &mut Q,
    schedule: Option<OrderSchedule>,
    cfg: &KernelConfig,
) -> Result<(SparsePoly, Option<Vec<Event>>)> {
    let mut events = cfg.events.then(Vec::new);
    let result = pq_kernel(inst, q, schedule, events.as_mut())?;
    Ok((result, events))
}

/// Runs one variant end to end.
pub fn run_variant(inst: &SopInstance, variant: Variant, cfg: &KernelConfig) -> Result<KernelRun> {
    let counters = if cfg.lifetimes {
        Counters::with_lifetimes()
    } else {
        Counters::default()
    };
    let mut run = KernelRun {
        variant,
        result: SparsePoly::zero(),
        counters: Counters::default(),
        misses: 0,
        links: 0,
        events: None,
        chains: None,
    };
    match variant {
        Variant::SerHl => {
            let (result, counters, misses) = ser_hl(inst, cfg)?;
            run.result = result;
            run.counters = counters;
            run.misses = misses;
        }
        Variant::PqBinary => {
            let mut q = BinaryMaxHeap::with_counters(arena(cfg), counters)?;
            (run.result, run.events) = run_pq(inst, &mut q, None, cfg)?;
            run.counters = q.counters().clone();
            run.misses = q.arena().misses();
        }
        Variant::PqBinaryChain => {
            let mut q = NaiveChainedHeap::with_counters(arena(cfg), counters)?;
            (run.result, run.events) = run_pq(inst, &mut q, None, cfg)?;
            run.counters = q.counters().clone();
            run.misses = q.arena().misses();
        }
        Variant::PqFunnel => {
            let mut q = FunnelHeap::new(arena(cfg), cfg.sweep_mode)?;
            if cfg.lifetimes {
                q.record_lifetimes();
            }
            (run.result, run.events) = run_pq(inst, &mut q, None, cfg)?;
            run.links = q.link_count();
            run.counters = q.counters().clone();
            run.misses = q.arena().misses();
        }
        Variant::FunnelChain | Variant::FunnelRank => {
            let mut store = ChainStore::new(inst.degree_bound());
            if cfg.chain_trace {
                store.record_trace();
            }
            let mut q = FunnelHeap::with_handler(arena(cfg), cfg.sweep_mode, store)?;
            if cfg.lifetimes {
                q.record_lifetimes();
            }
            let schedule = (variant == Variant::FunnelRank).then(|| build_order_schedule(inst));
            (run.result, run.events) = run_pq(inst, &mut q, schedule, cfg)?;
            run.links = q.link_count();
            run.misses = q.arena().misses();
            let (_, counters, store) = q.into_parts();
            run.counters = counters;
            run.chains = Some(store);
        }
    }
    Ok(run)
}

/// Multiplies each pair on its own binary heap, then merges the products
/// with a k-merger over `k - 1` streams (rounded up to a power of two),
/// summing equal orders during the final merge.
fn ser_hl(inst: &SopInstance, cfg: &KernelConfig) -> Result<(SparsePoly, Counters, u64)> {
    let p = inst.field.modulus();
    let mut arena = arena(cfg);
    let mut counters = Counters::default();
    let mut streams = Vec::with_capacity(inst.pairs());
    let mut seq = 0u64;
    for i in 1..=inst.pairs() {
        let (g, h) = inst.pair(i);
        if g.is_zero() || h.is_zero() {
            continue;
        }
        let single = SopInstance::new(inst.field, vec![g.clone()], vec![h.clone()]);
        let mut q = BinaryMaxHeap::new(arena)?;
        let product = pq_kernel(&single, &mut q, None, None)?;
        let c = q.counters();
        counters.comparisons += c.comparisons;
        counters.inserts += c.inserts;
        counters.extracts += c.extracts;
        counters.peak_size = counters.peak_size.max(c.peak_size);
        arena = q.into_arena();
        // stream entries carry the coefficient; seq only breaks ties
        let stream: Vec<HeapEntry<u64>> = product
            .terms()
            .iter()
            .map(|t| {
                seq += 1;
                HeapEntry::new(t.order, u64::MAX - seq, t.coeff)
            })
            .collect();
        streams.push(stream);
    }
    let k = inst.pairs().next_power_of_two().max(2);
    let mut merger = StreamMerger::new(k, streams, &mut arena)?;
    let mut terms: Vec<Term> = Vec::new();
    let mut current: Option<(u64, u64)> = None;
    loop {
        let chunk = merger.invoke(&mut arena);
        if chunk.is_empty() {
            break;
        }
        for e in chunk {
            match current.as_mut() {
                Some((o, c)) if *o == e.order => *c = (*c + e.payload) % p,
                _ => {
                    if let Some((o, c)) = current.take() {
                        if c != 0 {
                            terms.push(Term::new(c, o));
                        }
                    }
                    current = Some((e.order, e.payload % p));
                }
            }
        }
    }
    if let Some((o, c)) = current {
        if c != 0 {
            terms.push(Term::new(c, o));
        }
    }
    counters.comparisons += merger.comparisons();
    let result = SparsePoly::from_sorted_terms(inst.field, terms).expect("merged in decreasing order");
    let misses = arena.misses();
    Ok((result, counters, misses))
}
