//! Funnel Heap: a cache-oblivious max-priority queue.
//!
//! The heap is an insertion buffer `S01` followed by a growing sequence of
//! links. Link `i` owns a counter `c_i`, two buffers `A_i` and `B_i`, a
//! binary merger `v_i`, a `k_i`-merger `K_i` and `k_i` input buffers of
//! `s_i = k_i^3` elements each. `K_i` merges the inputs into `B_i`, and `v_i`
//! merges `B_i` with `A_{i+1}` into `A_i`, so the buffers form one merge tree
//! rooted at `v_1`. Arities grow as `k_1 = 2`,
//! `k_{i+1} = next power of two >= k_i^{4/3}`.
//!
//! Arena layout is `S01`, then link 1, link 2, ..., and inside a link
//! `c_i, A_i, v_i, B_i, K_i, S_{i,1..k_i}`. Links are allocated on the first
//! sweep that needs them.
//!
//! When a [`DuplicateHandler`] is active, equal orders are collapsed at two
//! points only: on insertion into `S01` and while the sweep stream is formed.
//! The surviving entry stays in the heap and the others go to the handler.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::buffer::{Buffer, Scratch};
use crate::cache_sim::Arena;
use crate::entry::{Counters, HeapEntry};
use crate::error::{Error, Result};
use crate::kmerger::{is_sorted_desc, KMerger};
use crate::queue::MaxQueue;

/// Capacity of the insertion buffer, `k_1^3`.
pub const INSERTION_CAPACITY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMode {
    /// Sweep into the first link with an unused input buffer.
    #[default]
    Canonical,
    /// Prefer the first link whose input buffers are less than half full,
    /// reusing its least occupied buffer.
    Refined,
}

/// Receives entries removed as duplicates of an equal-order survivor.
pub trait DuplicateHandler<P> {
    fn active(&self) -> bool {
        true
    }

    fn chain(&mut self, e: HeapEntry<P>);

    /// Moves every chained entry of `order` into `out`.
    fn take(&mut self, order: u64, out: &mut Vec<HeapEntry<P>>);

    /// Entries currently held.
    fn chained(&self) -> usize;

    /// Brackets every sweep.
    fn sweep_begin(&mut self) {}

    fn sweep_done(&mut self) {}
}

/// Handler that disables deduplication.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoChaining;

impl<P> DuplicateHandler<P> for NoChaining {
    fn active(&self) -> bool {
        false
    }

    fn chain(&mut self, _e: HeapEntry<P>) {
        unreachable!("chaining disabled")
    }

    fn take(&mut self, _order: u64, _out: &mut Vec<HeapEntry<P>>) {}

    fn chained(&self) -> usize {
        0
    }
}

/// Keeps chained entries grouped by order.
#[derive(Debug, Clone)]
pub struct Collect<P> {
    chains: BTreeMap<u64, Vec<HeapEntry<P>>>,
    len: usize,
}

impl<P> Default for Collect<P> {
    fn default() -> Self {
        Self {
            chains: BTreeMap::new(),
            len: 0,
        }
    }
}

impl<P> DuplicateHandler<P> for Collect<P> {
    fn chain(&mut self, e: HeapEntry<P>) {
        self.chains.entry(e.order).or_default().push(e);
        self.len += 1;
    }

    fn take(&mut self, order: u64, out: &mut Vec<HeapEntry<P>>) {
        if let Some(mut v) = self.chains.remove(&order) {
            self.len -= v.len();
            out.append(&mut v);
        }
    }

    fn chained(&self) -> usize {
        self.len
    }
}

/// Arity of link `i` (0-based).
pub fn link_arity(i: usize) -> usize {
    let mut k = 2usize;
    for _ in 0..i {
        k = next_arity(k);
    }
    k
}

fn next_arity(k: usize) -> usize {
    // smallest power of two p with p^3 >= k^4
    let k4 = (k as u128).pow(4);
    let mut p = 1u128;
    while p * p * p < k4 {
        p *= 2;
    }
    p as usize
}

/// Where the most recent sweep wrote its tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepTarget {
    /// 1-based link index.
    pub link: usize,
    /// 1-based input buffer index.
    pub buffer: usize,
}

#[derive(Debug)]
struct Link<P> {
    k: usize,
    s: usize,
    /// `c_i`: 1-based index of the first unused input buffer.
    next: usize,
    counter_addr: u64,
    merge_addr: u64,
    a: Buffer<HeapEntry<P>>,
    b: Buffer<HeapEntry<P>>,
    merger: KMerger<HeapEntry<P>>,
    inputs: Vec<Buffer<HeapEntry<P>>>,
    /// Nothing left below `v_i`.
    exhausted: bool,
}

impl<P: Copy> Link<P> {
    fn alloc(k: usize, arena: &mut Arena) -> Result<Self> {
        let s = k * k * k;
        let counter_addr = arena.alloc(1)?.base;
        let a = Buffer::new(arena.alloc(s as u64)?);
        let merge_addr = arena.alloc(1)?.base;
        let b = Buffer::new(arena.alloc(s as u64)?);
        let merger = KMerger::new(k, arena)?;
        let mut inputs = Vec::with_capacity(k);
        for _ in 0..k {
            inputs.push(Buffer::new(arena.alloc(s as u64)?));
        }
        Ok(Self {
            k,
            s,
            next: 1,
            counter_addr,
            merge_addr,
            a,
            b,
            merger,
            inputs,
            exhausted: true,
        })
    }

    fn input_len(&self) -> usize {
        self.inputs.iter().map(Buffer::len).sum()
    }

    /// Elements below `A_i` inside this link.
    fn body_len(&self) -> usize {
        self.b.len() + self.merger.internal_len() + self.input_len()
    }

    fn len(&self) -> usize {
        self.a.len() + self.body_len()
    }

    fn least_occupied(&self) -> usize {
        (0..self.k).min_by_key(|&j| (self.inputs[j].len(), j)).unwrap()
    }
}

#[derive(Debug)]
pub struct FunnelHeap<P, H = NoChaining> {
    mode: SweepMode,
    insertion: Buffer<HeapEntry<P>>,
    links: Vec<Link<P>>,
    arena: Arena,
    counters: Counters,
    handler: H,
    next_seq: u64,
    stored: usize,
    sigma: Scratch<HeapEntry<P>>,
    last_sweep: Option<SweepTarget>,
}

impl<P: Copy> FunnelHeap<P, NoChaining> {
    pub fn new(arena: Arena, mode: SweepMode) -> Result<Self> {
        Self::with_handler(arena, mode, NoChaining)
    }
}

impl<P: Copy, H: DuplicateHandler<P>> FunnelHeap<P, H> {
    pub fn with_handler(mut arena: Arena, mode: SweepMode, handler: H) -> Result<Self> {
        let insertion = Buffer::new(arena.alloc(INSERTION_CAPACITY as u64)?);
        Ok(Self {
            mode,
            insertion,
            links: Vec::new(),
            arena,
            counters: Counters::default(),
            handler,
            next_seq: 0,
            stored: 0,
            sigma: Scratch::new(),
            last_sweep: None,
        })
    }

    /// Starts recording per-insert lifetimes. Call before the first insert.
    pub fn record_lifetimes(&mut self) {
        self.counters.lifetimes.get_or_insert_with(Default::default);
    }

    pub fn mode(&self) -> SweepMode {
        self.mode
    }

    pub fn handler(&self) -> &H {
        &self.handler
    }

    pub fn handler_mut(&mut self) -> &mut H {
        &mut self.handler
    }

    pub fn into_parts(self) -> (Arena, Counters, H) {
        (self.arena, self.counters, self.handler)
    }

    pub fn insertion_capacity(&self) -> usize {
        self.insertion.capacity()
    }

    pub fn insertion_len(&self) -> usize {
        self.insertion.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// `c_i` for every allocated link.
    pub fn link_counters(&self) -> Vec<usize> {
        self.links.iter().map(|l| l.next).collect()
    }

    pub fn link_arities(&self) -> Vec<usize> {
        self.links.iter().map(|l| l.k).collect()
    }

    /// Input buffer occupancies of link `i` (1-based).
    pub fn input_occupancy(&self, i: usize) -> Vec<usize> {
        self.links[i - 1].inputs.iter().map(Buffer::len).collect()
    }

    pub fn last_sweep(&self) -> Option<SweepTarget> {
        self.last_sweep
    }

    fn stamp(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.counters.note_insert(seq);
        seq
    }

    fn chain(&mut self, e: HeapEntry<P>) {
        self.handler.chain(e);
        self.counters.chain_events += 1;
    }

    pub fn insert(&mut self, order: u64, payload: P) -> Result<u64> {
        let seq = self.stamp();
        let e = HeapEntry::new(order, seq, payload);
        let mut pos = 0;
        while let Some(x) = self.insertion.read(pos, &mut self.arena) {
            self.counters.comparisons += 1;
            if *x < e {
                break;
            }
            pos += 1;
        }
        if self.handler.active() {
            if let Some(x) = self.insertion.get(pos) {
                if x.order == order {
                    self.chain(e);
                    return Ok(seq);
                }
            }
        }
        if self.insertion.is_full() {
            self.sweep()?;
            pos = 0;
        }
        self.insertion.insert_at(pos, e, &mut self.arena);
        self.stored += 1;
        self.counters.note_stored();
        Ok(seq)
    }

    /// Makes sure `A_1` holds the body maximum if the body is non-empty.
    fn prepare_top(&mut self) {
        if self.stored > self.insertion.len() && self.links[0].a.is_empty() {
            self.fill(0);
        }
    }

    fn top(&mut self) -> Option<(bool, HeapEntry<P>)> {
        self.prepare_top();
        let from_a = self.links.first().and_then(|l| l.a.front().copied());
        let from_s = self.insertion.front().copied();
        if from_a.is_some() {
            self.arena.touch(self.links[0].a.base());
        }
        if from_s.is_some() {
            self.arena.touch(self.insertion.base());
        }
        match (from_a, from_s) {
            (None, None) => None,
            (Some(a), None) => Some((true, a)),
            (None, Some(s)) => Some((false, s)),
            (Some(a), Some(s)) => {
                self.counters.comparisons += 1;
                Some(if a > s { (true, a) } else { (false, s) })
            }
        }
    }

    pub fn extract_max(&mut self) -> Result<HeapEntry<P>> {
        let (from_a, _) = self.top().ok_or(Error::EmptyHeap)?;
        let e = if from_a {
            self.links[0].a.pop_front(&mut self.arena)
        } else {
            self.insertion.pop_front(&mut self.arena)
        }
        .expect("top present");
        self.stored -= 1;
        self.counters.note_extract(e.seq);
        Ok(e)
    }

    /// Order of the maximum without removing it. Runs at most one fill of
    /// `v_1`, which a following extract then does not repeat.
    pub fn peek_max_order(&mut self) -> Option<u64> {
        self.top().map(|(_, e)| e.order)
    }

    /// Merges into `A_i` (0-based `i`) until it is full or nothing is left
    /// below `v_i`.
    fn fill(&mut self, i: usize) {
        self.counters.fills += 1;
        let addr = self.links[i].merge_addr;
        self.arena.touch(addr);
        loop {
            if self.links[i].a.is_full() {
                return;
            }
            let from_b = {
                let l = &mut self.links[i];
                if l.b.is_empty() && !l.merger.root_dry() {
                    l.merger.fill_root(
                        &mut l.b,
                        &mut l.inputs,
                        &mut self.arena,
                        &mut self.counters.comparisons,
                    );
                }
                l.b.front().copied()
            };
            let from_next = if i + 1 < self.links.len() {
                if self.links[i + 1].a.is_empty() && !self.links[i + 1].exhausted {
                    self.fill(i + 1);
                }
                self.links[i + 1].a.front().copied()
            } else {
                None
            };
            let take_b = match (from_b, from_next) {
                (None, None) => {
                    self.links[i].exhausted = true;
                    return;
                }
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(x), Some(y)) => {
                    self.counters.comparisons += 1;
                    x > y
                }
            };
            let x = if take_b {
                self.links[i].b.pop_front(&mut self.arena)
            } else {
                self.links[i + 1].a.pop_front(&mut self.arena)
            }
            .expect("head present");
            self.links[i].a.push_back(x, &mut self.arena);
        }
    }

    /// Picks the sweep destination `(link, input buffer)`, both 0-based,
    /// allocating a new link when no existing one qualifies.
    fn choose_target(&mut self) -> Result<(usize, usize)> {
        // elements the sweep would have to place below the path of link i
        let mut carry = Vec::with_capacity(self.links.len() + 1);
        let mut acc = self.insertion.len();
        for l in &self.links {
            carry.push(acc);
            acc += l.body_len();
        }
        carry.push(acc);

        if self.mode == SweepMode::Refined {
            for (i, l) in self.links.iter().enumerate() {
                self.arena.touch(l.counter_addr);
                if 2 * l.input_len() < l.k * l.s {
                    let d = l.least_occupied();
                    if carry[i] + l.inputs[d].len() <= l.s {
                        return Ok((i, d));
                    }
                }
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            self.arena.touch(l.counter_addr);
            if l.next <= l.k && carry[i] <= l.s {
                return Ok((i, l.next - 1));
            }
        }
        let i = self.links.len();
        let link = Link::alloc(link_arity(i), &mut self.arena)?;
        assert!(carry[i] <= link.s, "sweep stream exceeds new input buffer");
        self.links.push(link);
        Ok((i, 0))
    }

    fn sweep(&mut self) -> Result<()> {
        let (i, d) = self.choose_target()?;
        let dedup = self.handler.active();
        self.handler.sweep_begin();
        let nodes = self.links[i].merger.path_nodes(d);

        // the path from A_1 down to the destination is already sorted
        let mut parts: Vec<Vec<HeapEntry<P>>> = Vec::new();
        let mut path = Vec::new();
        let mut bounds = Vec::with_capacity(i + 2 + nodes.len());
        for j in 0..=i {
            self.links[j].a.drain_into(&mut path, &mut self.arena);
            bounds.push(path.len());
        }
        {
            let l = &mut self.links[i];
            l.b.drain_into(&mut path, &mut self.arena);
            bounds.push(path.len());
            for &n in &nodes {
                l.merger.buffer_mut(n).drain_into(&mut path, &mut self.arena);
                bounds.push(path.len());
            }
        }
        parts.push(path);

        let mut ins = Vec::with_capacity(self.insertion.len());
        self.insertion.drain_into(&mut ins, &mut self.arena);
        parts.push(ins);

        for j in 0..i {
            let l = &mut self.links[j];
            let mut body = Vec::with_capacity(l.body_len());
            l.b.drain_into(&mut body, &mut self.arena);
            l.merger.fill_root(
                &mut body,
                &mut l.inputs,
                &mut self.arena,
                &mut self.counters.comparisons,
            );
            debug_assert_eq!(l.body_len(), 0);
            for s in &mut l.inputs {
                s.reset();
            }
            l.merger.mark_all_dry();
            l.next = 1;
            self.arena.touch(l.counter_addr);
            parts.push(body);
        }

        if self.mode == SweepMode::Refined {
            let mut old = Vec::new();
            self.links[i].inputs[d].drain_into(&mut old, &mut self.arena);
            parts.push(old);
        }

        // merge all parts into sigma; survivors[t] counts the entries kept
        // among the first bounds[t] merged ones
        self.sigma.clear();
        let mut heads = vec![0usize; parts.len()];
        let mut survivors = Vec::with_capacity(bounds.len());
        let mut bi = 0;
        let mut rank = 0;
        let mut last_order = None;
        while bi < bounds.len() && bounds[bi] == 0 {
            survivors.push(0);
            bi += 1;
        }
        loop {
            let mut best: Option<usize> = None;
            for (p, part) in parts.iter().enumerate() {
                if heads[p] < part.len() {
                    best = match best {
                        None => Some(p),
                        Some(q) => {
                            self.counters.comparisons += 1;
                            if part[heads[p]] > parts[q][heads[q]] {
                                Some(p)
                            } else {
                                Some(q)
                            }
                        }
                    };
                }
            }
            let Some(p) = best else { break };
            let x = parts[p][heads[p]];
            heads[p] += 1;
            rank += 1;
            if dedup {
                self.counters.comparisons += 1;
            }
            if dedup && last_order == Some(x.order) {
                self.chain(x);
                self.stored -= 1;
                self.counters.live -= 1;
            } else {
                self.sigma.push(x, &mut self.arena);
                last_order = Some(x.order);
            }
            while bi < bounds.len() && bounds[bi] == rank {
                survivors.push(self.sigma.len());
                bi += 1;
            }
        }
        debug_assert_eq!(survivors.len(), bounds.len());

        // refill the path top down, then the tail into the destination
        let mut pos = 0;
        for (t, &end) in survivors.iter().enumerate() {
            let chunk = self.sigma.read(pos, end, &mut self.arena);
            let l = &mut self.links[if t <= i { t } else { i }];
            let buf = if t <= i {
                &mut l.a
            } else if t == i + 1 {
                &mut l.b
            } else {
                l.merger.buffer_mut(nodes[t - i - 2])
            };
            for &x in chunk {
                buf.push_back(x, &mut self.arena);
            }
            pos = end;
        }
        let tail = self.sigma.read(pos, self.sigma.len(), &mut self.arena);
        let l = &mut self.links[i];
        assert!(tail.len() <= l.s, "sweep tail exceeds input buffer");
        for &x in tail {
            l.inputs[d].push_back(x, &mut self.arena);
        }

        for j in 0..=i {
            self.links[j].exhausted = false;
        }
        let l = &mut self.links[i];
        l.merger.reopen_path(d);
        if d + 1 == l.next {
            l.next += 1;
        }
        self.arena.touch(l.counter_addr);
        self.counters.note_sweep(i + 1);
        self.last_sweep = Some(SweepTarget {
            link: i + 1,
            buffer: d + 1,
        });
        self.handler.sweep_done();
        Ok(())
    }

    /// Largest entry strictly below `v_i`.
    fn max_below(&self, i: usize) -> Option<HeapEntry<P>> {
        let l = &self.links[i];
        let mut m = l.b.front().copied().max(l.merger.max_below(1, &l.inputs));
        if let Some(n) = self.links.get(i + 1) {
            m = m.max(n.a.front().copied()).max(self.max_below(i + 1));
        }
        m
    }

    /// Full scan of the structure. Checks buffer sortedness, heap order
    /// along the merge tree, link counters and the element count.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if !is_sorted_desc(&self.insertion) {
            return Err("insertion buffer not sorted".into());
        }
        let mut total = self.insertion.len();
        for (i, l) in self.links.iter().enumerate() {
            let li = i + 1;
            if !(1..=l.k + 1).contains(&l.next) {
                return Err(format!("link {li} counter {} out of range", l.next));
            }
            if l.inputs[l.next - 1..].iter().any(|s| !s.is_empty()) {
                return Err(format!("link {li} has data past its counter"));
            }
            if !is_sorted_desc(&l.a) || !is_sorted_desc(&l.b) {
                return Err(format!("link {li} A or B not sorted"));
            }
            l.merger
                .check_invariants(&l.inputs, Some(&l.b))
                .map_err(|e| format!("link {li}: {e}"))?;
            let below = self.max_below(i);
            if let (Some(low), Some(b)) = (l.a.back(), below) {
                if *low < b {
                    return Err(format!("heap order broken at A_{li}"));
                }
            }
            if l.exhausted && below.is_some() {
                return Err(format!("link {li} marked exhausted but not empty"));
            }
            total += l.len();
        }
        if total != self.stored {
            return Err(format!("stored {} but found {total}", self.stored));
        }
        if self.handler.active() {
            self.check_no_replicas()?;
        }
        Ok(())
    }

    /// No insertion or input buffer holds two entries of equal order.
    pub fn check_no_replicas(&self) -> std::result::Result<(), String> {
        let distinct = |b: &Buffer<HeapEntry<P>>| {
            let v: Vec<u64> = b.iter().map(|e| e.order).collect();
            v.windows(2).all(|w| w[0] != w[1])
        };
        if !distinct(&self.insertion) {
            return Err("replica in insertion buffer".into());
        }
        for (i, l) in self.links.iter().enumerate() {
            for (j, s) in l.inputs.iter().enumerate() {
                if !distinct(s) {
                    return Err(format!("replica in input buffer {} of link {}", j + 1, i + 1));
                }
            }
        }
        Ok(())
    }

    /// One line per buffer: `link <i> buffer <name> <occupancy>/<capacity>`.
    /// The insertion buffer is link 0.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut line = |i: usize, name: &str, b: &Buffer<HeapEntry<P>>| {
            let _ = writeln!(out, "link {i} buffer {name} {}/{}", b.len(), b.capacity());
        };
        line(0, "S1", &self.insertion);
        for (i, l) in self.links.iter().enumerate() {
            let li = i + 1;
            line(li, "A", &l.a);
            line(li, "B", &l.b);
            for &n in l.merger.layout() {
                line(li, &format!("K{n}"), l.merger.buffer(n).unwrap());
            }
            for (j, s) in l.inputs.iter().enumerate() {
                line(li, &format!("S{}", j + 1), s);
            }
        }
        out
    }
}

impl<P: Copy, H: DuplicateHandler<P>> MaxQueue<P> for FunnelHeap<P, H> {
    fn insert(&mut self, order: u64, payload: P) -> Result<u64> {
        FunnelHeap::insert(self, order, payload)
    }

    fn extract_max(&mut self) -> Result<HeapEntry<P>> {
        FunnelHeap::extract_max(self)
    }

    fn peek_max_order(&mut self) -> Option<u64> {
        FunnelHeap::peek_max_order(self)
    }

    fn take_chained(&mut self, order: u64, out: &mut Vec<HeapEntry<P>>) {
        self.handler.take(order, out);
    }

    fn len(&self) -> usize {
        self.stored
    }

    fn counters(&self) -> &Counters {
        &self.counters
    }

    fn arena(&self) -> &Arena {
        &self.arena
    }

    fn arena_mut(&mut self) -> &mut Arena {
        &mut self.arena
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn heap(mode: SweepMode) -> FunnelHeap<()> {
        FunnelHeap::new(Arena::new(), mode).unwrap()
    }

    fn chained(mode: SweepMode) -> FunnelHeap<(), Collect<()>> {
        FunnelHeap::with_handler(Arena::new(), mode, Collect::default()).unwrap()
    }

    #[test]
    fn arities_and_sizes() {
        let ks: Vec<usize> = (0..6).map(link_arity).collect();
        assert_eq!(ks, vec![2, 4, 8, 16, 64, 256]);
        assert_eq!(next_arity(256), 2048);
    }

    #[test]
    fn new_heap_is_empty() {
        let mut h = heap(SweepMode::Canonical);
        assert!(MaxQueue::is_empty(&h));
        assert_eq!(h.insertion_capacity(), 8);
        assert_eq!(h.link_count(), 0);
        assert_eq!(h.peek_max_order(), None);
        assert_eq!(h.extract_max().unwrap_err(), Error::EmptyHeap);
    }

    #[test]
    fn ninth_insert_sweeps_into_link_one() {
        let mut h = heap(SweepMode::Canonical);
        for o in 0..8 {
            h.insert(o, ()).unwrap();
        }
        assert_eq!(h.link_count(), 0);
        assert_eq!(h.counters().sweeps(1), 0);
        h.insert(8, ()).unwrap();
        assert_eq!(h.counters().sweeps_per_link, vec![1]);
        assert_eq!(h.link_counters(), vec![2]);
        assert_eq!(h.insertion_len(), 1);
        assert_eq!(h.input_occupancy(1), vec![8, 0]);
        h.check_invariants().unwrap();
    }

    #[test]
    fn extract_small() {
        let mut h = heap(SweepMode::Canonical);
        for o in [3, 1, 2] {
            h.insert(o, ()).unwrap();
        }
        assert_eq!(h.extract_max().unwrap().order, 3);
    }

    #[test]
    fn duplicate_in_insertion_buffer_is_chained() {
        let mut h = chained(SweepMode::Canonical);
        h.insert(4, ()).unwrap();
        h.insert(4, ()).unwrap();
        assert_eq!(h.insertion_len(), 1);
        assert_eq!(h.counters().chain_events, 1);
        let e = h.extract_max().unwrap();
        let mut rest = Vec::new();
        h.take_chained(e.order, &mut rest);
        assert_eq!(rest.len(), 1);
        assert_eq!(rest[0].seq, 1);
        assert_eq!(e.seq, 0);
    }

    #[test]
    fn all_equal_orders_collapse() {
        let mut h = chained(SweepMode::Canonical);
        // different orders fill S01 so that equal orders also meet in a sweep
        for o in 0..8 {
            h.insert(100 + o, ()).unwrap();
        }
        h.insert(5, ()).unwrap();
        for _ in 0..50 {
            h.insert(5, ()).unwrap();
        }
        assert_eq!(h.len(), 9);
        assert_eq!(h.handler().chained(), 50);
        h.check_invariants().unwrap();

        let mut h = chained(SweepMode::Refined);
        for _ in 0..100 {
            h.insert(7, ()).unwrap();
        }
        assert_eq!(h.len(), 1);
        assert_eq!(h.counters().chain_events, 99);
    }

    #[test]
    fn peek_does_not_refill_twice() {
        let mut h = heap(SweepMode::Canonical);
        for o in 0..40 {
            h.insert(o, ()).unwrap();
        }
        let fills = h.counters().fills;
        let a = h.peek_max_order();
        let after_first = h.counters().fills;
        assert!(after_first > fills);
        assert_eq!(h.peek_max_order(), a);
        assert_eq!(h.counters().fills, after_first);
        assert_eq!(h.extract_max().unwrap().order, a.unwrap());
        assert_eq!(h.counters().fills, after_first);
    }

    #[test]
    fn random_inserts_drain_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [SweepMode::Canonical, SweepMode::Refined] {
            let mut h = heap(mode);
            let mut keys = Vec::new();
            for seq in 0..100_000u64 {
                let o = rng.gen_range(0..1_000_000);
                h.insert(o, ()).unwrap();
                keys.push((o, seq));
            }
            h.check_invariants().unwrap();
            keys.sort_unstable_by(|a, b| b.cmp(a));
            let got: Vec<(u64, u64)> = (0..keys.len()).map(|_| h.extract_max().unwrap().key()).collect();
            assert_eq!(got, keys);
            assert!(MaxQueue::is_empty(&h));
        }
    }

    #[test]
    fn refined_reuses_half_empty_link() {
        let run = |mode| {
            let mut h = heap(mode);
            for o in 0..24 {
                h.insert(o, ()).unwrap();
            }
            for _ in 0..20 {
                h.extract_max().unwrap();
            }
            for o in 0..9 {
                h.insert(o, ()).unwrap();
            }
            h.check_invariants().unwrap();
            h
        };
        let refined = run(SweepMode::Refined);
        assert_eq!(refined.link_count(), 1);
        assert_eq!(refined.counters().sweeps(1), 3);
        let canonical = run(SweepMode::Canonical);
        assert_eq!(canonical.link_count(), 2);
        assert_eq!(canonical.counters().sweeps(2), 1);
    }

    #[test]
    fn refined_falls_through_when_links_are_dense() {
        let mut h = heap(SweepMode::Refined);
        for o in 0..25 {
            h.insert(o, ()).unwrap();
        }
        // link 1 is full after two sweeps, so the third opens link 2
        assert_eq!(h.counters().sweeps_per_link, vec![2, 1]);
        assert_eq!(h.last_sweep(), Some(SweepTarget { link: 2, buffer: 1 }));
    }

    #[test]
    fn sweep_counts_follow_link_recurrence() {
        // every sweep into a deeper link empties link j, so
        // T_j = k_j * (T_{j+1} + ... + T_l) and T_l = c_l - 1
        let mut h = heap(SweepMode::Canonical);
        let mut seen = 0;
        for o in 0..60_000u64 {
            h.insert(o, ()).unwrap();
            let total: u64 = h.counters().sweeps_per_link.iter().sum();
            if total == seen {
                continue;
            }
            seen = total;
            let last = h.link_count();
            if h.last_sweep().unwrap().link != last {
                continue;
            }
            let c = h.link_counters();
            let ks = h.link_arities();
            let t = |j: usize| h.counters().sweeps(j);
            assert_eq!(t(last), c[last - 1] as u64 - 1);
            for j in 1..last {
                let deeper: u64 = (j + 1..=last).map(t).sum();
                assert_eq!(t(j), ks[j - 1] as u64 * deeper);
            }
        }
        assert!(h.link_count() >= 4);
    }

    #[test]
    fn dump_lists_every_buffer() {
        let mut h = heap(SweepMode::Canonical);
        for o in 0..9 {
            h.insert(o, ()).unwrap();
        }
        let d = h.dump();
        let lines: Vec<&str> = d.lines().collect();
        assert_eq!(lines[0], "link 0 buffer S1 1/8");
        assert_eq!(lines[1], "link 1 buffer A 0/8");
        assert_eq!(lines[2], "link 1 buffer B 0/8");
        assert_eq!(lines[3], "link 1 buffer S1 8/8");
        assert_eq!(lines[4], "link 1 buffer S2 0/8");
    }

    #[test]
    fn arena_limit_is_reported() {
        let mut h = FunnelHeap::new(Arena::with_limit(20), SweepMode::Canonical).unwrap();
        for o in 0..8 {
            h.insert(o, ()).unwrap();
        }
        assert!(matches!(h.insert(9, ()), Err(Error::ArenaExhausted { .. })));
    }

    #[test]
    fn lifetimes_are_recorded() {
        let mut h = heap(SweepMode::Canonical);
        h.record_lifetimes();
        h.insert(1, ()).unwrap();
        h.insert(2, ()).unwrap();
        h.extract_max().unwrap();
        h.insert(0, ()).unwrap();
        let l = h.counters().lifetimes.as_ref().unwrap();
        assert_eq!(l.resolved, vec![(1, 1)]);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(u64),
        Extract,
    }

    fn ops() -> impl Strategy<Value = Vec<Op>> {
        proptest::collection::vec(
            prop_oneof![3 => (0u64..200).prop_map(Op::Insert), 1 => Just(Op::Extract)],
            0..1500,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_reference_and_keeps_invariants(ops in ops(), refined in any::<bool>()) {
            let mode = if refined { SweepMode::Refined } else { SweepMode::Canonical };
            let mut h = heap(mode);
            let mut reference = std::collections::BTreeSet::new();
            let mut seq = 0;
            for (step, op) in ops.into_iter().enumerate() {
                match op {
                    Op::Insert(o) => {
                        h.insert(o, ()).unwrap();
                        reference.insert((o, seq));
                        seq += 1;
                    }
                    Op::Extract => {
                        let want = reference.pop_last();
                        prop_assert_eq!(h.peek_max_order(), want.map(|k| k.0));
                        prop_assert_eq!(h.extract_max().ok().map(|e| e.key()), want);
                    }
                }
                if step % 16 == 0 {
                    h.check_invariants().map_err(TestCaseError::fail)?;
                }
            }
            h.check_invariants().map_err(TestCaseError::fail)?;
        }

        #[test]
        fn chained_conservation(ops in ops(), refined in any::<bool>()) {
            let mode = if refined { SweepMode::Refined } else { SweepMode::Canonical };
            let mut h = chained(mode);
            let mut out = 0usize;
            let mut inserted = 0usize;
            let mut last = Vec::new();
            for op in ops {
                match op {
                    Op::Insert(o) => {
                        h.insert(o, ()).unwrap();
                        inserted += 1;
                        h.check_no_replicas().map_err(TestCaseError::fail)?;
                    }
                    Op::Extract => {
                        if let Ok(e) = h.extract_max() {
                            last.clear();
                            h.take_chained(e.order, &mut last);
                            prop_assert!(last.iter().all(|x| x.order == e.order));
                            out += 1 + last.len();
                        }
                    }
                }
                prop_assert_eq!(inserted, out + h.len() + h.handler().chained());
                let c = h.counters();
                prop_assert_eq!(c.inserts, c.extracts + c.live + c.chain_events);
                prop_assert_eq!(c.live as usize, h.len());
            }
            h.check_invariants().map_err(TestCaseError::fail)?;
        }
    }
}
