//! Binary max-heap baseline and its naively chained variant.
//!
//! Both are instrumented exactly like the Funnel Heap: every key comparison
//! is counted and every slot touched is reported to the arena, so counters
//! and simulated misses are directly comparable.

use crate::cache_sim::{Arena, Region};
use crate::entry::{Counters, HeapEntry};
use crate::error::{Error, Result};
use crate::queue::MaxQueue;

const RESERVE: u64 = 1 << 32;
const NO_CHAIN: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Slot<P> {
    entry: HeapEntry<P>,
    chain: u32,
}

/// Implicit binary max-heap over `(order, seq)`.
#[derive(Debug)]
pub struct BinaryMaxHeap<P> {
    slots: Vec<Slot<P>>,
    region: Region,
    arena: Arena,
    counters: Counters,
    next_seq: u64,
}

impl<P: Copy> BinaryMaxHeap<P> {
    pub fn new(arena: Arena) -> Result<Self> {
        Self::with_counters(arena, Counters::default())
    }

    pub fn with_counters(mut arena: Arena, counters: Counters) -> Result<Self> {
        let region = arena.alloc(RESERVE)?;
        Ok(Self {
            slots: Vec::new(),
            region,
            arena,
            counters,
            next_seq: 0,
        })
    }

    #[inline]
    fn touch(&mut self, i: usize) {
        if self.arena.tracing() {
            self.arena.touch(self.region.base + i as u64);
        }
    }

    fn stamp(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.counters.note_insert(seq);
        seq
    }

    fn push_slot(&mut self, slot: Slot<P>) {
        let mut i = self.slots.len();
        self.slots.push(slot);
        self.touch(i);
        while i > 0 {
            let parent = (i - 1) / 2;
            self.touch(parent);
            self.counters.comparisons += 1;
            if self.slots[parent].entry >= slot.entry {
                break;
            }
            self.slots[i] = self.slots[parent];
            self.touch(i);
            i = parent;
        }
        self.slots[i] = slot;
        self.touch(i);
        self.counters.note_stored();
    }

    fn pop_slot(&mut self) -> Option<Slot<P>> {
        let last = self.slots.pop()?;
        let n = self.slots.len();
        self.touch(n);
        if n == 0 {
            return Some(last);
        }
        let top = self.slots[0];
        self.touch(0);
        let mut i = 0;
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            self.touch(l);
            let mut c = l;
            if r < n {
                self.touch(r);
                self.counters.comparisons += 1;
                if self.slots[r].entry > self.slots[l].entry {
                    c = r;
                }
            }
            self.counters.comparisons += 1;
            if last.entry >= self.slots[c].entry {
                break;
            }
            self.slots[i] = self.slots[c];
            self.touch(i);
            i = c;
        }
        self.slots[i] = last;
        self.touch(i);
        Some(top)
    }

    /// Index of the first slot holding `order`, scanning the slot array.
    fn scan_for(&mut self, order: u64) -> Option<usize> {
        for i in 0..self.slots.len() {
            self.touch(i);
            self.counters.comparisons += 1;
            if self.slots[i].entry.order == order {
                return Some(i);
            }
        }
        None
    }

    pub fn into_arena(self) -> Arena {
        self.arena
    }
}

impl<P: Copy> MaxQueue<P> for BinaryMaxHeap<P> {
    fn insert(&mut self, order: u64, payload: P) -> Result<u64> {
        let seq = self.stamp();
        self.push_slot(Slot {
            entry: HeapEntry::new(order, seq, payload),
            chain: NO_CHAIN,
        });
        Ok(seq)
    }

    fn extract_max(&mut self) -> Result<HeapEntry<P>> {
        let slot = self.pop_slot().ok_or(Error::EmptyHeap)?;
        self.counters.note_extract(slot.entry.seq);
        Ok(slot.entry)
    }

    fn peek_max_order(&mut self) -> Option<u64> {
        let order = self.slots.first()?.entry.order;
        self.touch(0);
        Some(order)
    }

    fn len(&self) -> usize {
        self.slots.len()
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

/// Binary heap that keeps at most one slot per order. An insert first scans
/// the whole slot array for a replica and, if one is found, appends the new
/// entry to that slot's chain instead of storing it.
#[derive(Debug)]
pub struct NaiveChainedHeap<P> {
    heap: BinaryMaxHeap<P>,
    chains: Vec<Vec<HeapEntry<P>>>,
    free_chains: Vec<u32>,
    pool: Region,
    pool_next: u64,
    last_chain: Vec<HeapEntry<P>>,
}

impl<P: Copy> NaiveChainedHeap<P> {
    pub fn new(arena: Arena) -> Result<Self> {
        Self::with_counters(arena, Counters::default())
    }

    pub fn with_counters(arena: Arena, counters: Counters) -> Result<Self> {
        let mut heap = BinaryMaxHeap::with_counters(arena, counters)?;
        let pool = heap.arena.alloc(RESERVE)?;
        Ok(Self {
            heap,
            chains: Vec::new(),
            free_chains: Vec::new(),
            pool,
            pool_next: 0,
            last_chain: Vec::new(),
        })
    }

    /// Stores `order` or chains it to an existing replica. Returns the
    /// assigned sequence number.
    pub fn chained_insert(&mut self, order: u64, payload: P) -> u64 {
        let seq = self.heap.stamp();
        let entry = HeapEntry::new(order, seq, payload);
        match self.heap.scan_for(order) {
            Some(i) => {
                let mut chain = self.heap.slots[i].chain;
                if chain == NO_CHAIN {
                    chain = match self.free_chains.pop() {
                        Some(c) => c,
                        None => {
                            self.chains.push(Vec::new());
                            (self.chains.len() - 1) as u32
                        }
                    };
                    self.heap.slots[i].chain = chain;
                    self.heap.touch(i);
                }
                // each chain node comes from the shared pool
                if self.heap.arena.tracing() {
                    self.heap.arena.touch(self.pool.base + self.pool_next);
                }
                self.pool_next += 1;
                self.chains[chain as usize].push(entry);
                self.heap.counters.chain_events += 1;
            }
            None => self.heap.push_slot(Slot {
                entry,
                chain: NO_CHAIN,
            }),
        }
        seq
    }

    /// Removes the maximum slot together with its whole chain.
    pub fn chained_extract_max(&mut self) -> Result<(HeapEntry<P>, Vec<HeapEntry<P>>)> {
        let slot = self.heap.pop_slot().ok_or(Error::EmptyHeap)?;
        self.heap.counters.note_extract(slot.entry.seq);
        let chained = if slot.chain == NO_CHAIN {
            Vec::new()
        } else {
            let chain = std::mem::take(&mut self.chains[slot.chain as usize]);
            self.free_chains.push(slot.chain);
            chain
        };
        Ok((slot.entry, chained))
    }

    /// Entries currently held in chains.
    pub fn chained_len(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }
}

impl<P: Copy> MaxQueue<P> for NaiveChainedHeap<P> {
    fn insert(&mut self, order: u64, payload: P) -> Result<u64> {
        Ok(self.chained_insert(order, payload))
    }

    fn extract_max(&mut self) -> Result<HeapEntry<P>> {
        let (e, chained) = self.chained_extract_max()?;
        self.last_chain.extend(chained);
        Ok(e)
    }

    fn peek_max_order(&mut self) -> Option<u64> {
        self.heap.peek_max_order()
    }

    fn take_chained(&mut self, order: u64, out: &mut Vec<HeapEntry<P>>) {
        debug_assert!(self.last_chain.iter().all(|e| e.order == order));
        out.append(&mut self.last_chain);
    }

    fn len(&self) -> usize {
        self.heap.len()
    }

    fn counters(&self) -> &Counters {
        &self.heap.counters
    }

    fn arena(&self) -> &Arena {
        &self.heap.arena
    }

    fn arena_mut(&mut self) -> &mut Arena {
        &mut self.heap.arena
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn drain<P: Copy>(h: &mut BinaryMaxHeap<P>) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        while let Ok(e) = h.extract_max() {
            out.push(e.key());
        }
        out
    }

    #[test]
    fn single_and_small() {
        let mut h = BinaryMaxHeap::new(Arena::new()).unwrap();
        h.insert(5, ()).unwrap();
        assert_eq!(h.extract_max().unwrap().order, 5);
        for x in [1, 3, 2] {
            h.insert(x, ()).unwrap();
        }
        let orders: Vec<u64> = drain(&mut h).into_iter().map(|k| k.0).collect();
        assert_eq!(orders, vec![3, 2, 1]);
    }

    #[test]
    fn empty_extract_errors() {
        let mut h = BinaryMaxHeap::<()>::new(Arena::new()).unwrap();
        assert_eq!(h.extract_max().unwrap_err(), Error::EmptyHeap);
        let mut c = NaiveChainedHeap::<()>::new(Arena::new()).unwrap();
        assert_eq!(c.chained_extract_max().unwrap_err(), Error::EmptyHeap);
    }

    #[test]
    fn random_inserts_extract_in_sorted_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut h = BinaryMaxHeap::new(Arena::new()).unwrap();
        let mut keys = Vec::new();
        for seq in 0..10_000u64 {
            let o = rng.gen_range(0..1_000);
            h.insert(o, ()).unwrap();
            keys.push((o, seq));
        }
        keys.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(drain(&mut h), keys);
    }

    #[test]
    fn chaining_examples() {
        let mut c = NaiveChainedHeap::new(Arena::new()).unwrap();
        c.chained_insert(7, ());
        c.chained_insert(7, ());
        assert_eq!((c.len(), c.chained_len()), (1, 1));
        let (e, chained) = c.chained_extract_max().unwrap();
        assert_eq!((e.order, chained.len()), (7, 1));

        let mut c = NaiveChainedHeap::new(Arena::new()).unwrap();
        for o in [7, 5, 7, 5] {
            c.chained_insert(o, ());
        }
        assert_eq!((c.len(), c.chained_len()), (2, 2));
    }

    #[test]
    fn no_duplicates_means_empty_chains() {
        let mut c = NaiveChainedHeap::new(Arena::new()).unwrap();
        for o in 0..50 {
            c.chained_insert(o * 3 % 50, ());
        }
        while let Ok((_, chained)) = c.chained_extract_max() {
            assert!(chained.is_empty());
        }
    }

    #[test]
    fn chained_multiset_conservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut c = NaiveChainedHeap::new(Arena::new()).unwrap();
        let orders: Vec<u64> = (0..1_000).map(|_| rng.gen_range(0..200)).collect();
        for &o in &orders {
            c.chained_insert(o, ());
        }
        let distinct: BTreeSet<u64> = orders.iter().copied().collect();
        assert_eq!(c.len(), distinct.len());
        let mut calls = 0;
        let mut total = 0;
        let mut last = u64::MAX;
        while let Ok((e, chained)) = c.chained_extract_max() {
            assert!(e.order < last);
            last = e.order;
            assert!(chained.iter().all(|x| x.order == e.order));
            calls += 1;
            total += 1 + chained.len();
        }
        assert_eq!(calls, distinct.len());
        assert_eq!(total, orders.len());
    }

    #[test]
    fn slots_are_traced() {
        let mut arena = Arena::new();
        arena.record_trace();
        let mut h = BinaryMaxHeap::new(arena).unwrap();
        h.insert(1, ()).unwrap();
        h.insert(2, ()).unwrap();
        assert!(!h.arena().trace().unwrap().is_empty());
        assert!(h.counters().comparisons >= 1);
    }

    proptest! {
        #[test]
        fn interleaved_ops_match_sorted_reference(ops in proptest::collection::vec(proptest::option::of(0u64..64), 0..400)) {
            let mut h = BinaryMaxHeap::new(Arena::new()).unwrap();
            let mut reference: Vec<(u64, u64)> = Vec::new();
            let mut seq = 0;
            for op in ops {
                match op {
                    Some(o) => {
                        h.insert(o, ()).unwrap();
                        reference.push((o, seq));
                        seq += 1;
                    }
                    None => {
                        reference.sort_unstable();
                        let want = reference.pop();
                        let got = h.extract_max().ok().map(|e| e.key());
                        prop_assert_eq!(got, want);
                    }
                }
            }
        }

        #[test]
        fn chained_conservation_under_interleaving(ops in proptest::collection::vec(proptest::option::of(0u64..16), 0..300)) {
            let mut c = NaiveChainedHeap::new(Arena::new()).unwrap();
            let (mut inn, mut out) = (0usize, 0usize);
            for op in ops {
                match op {
                    Some(o) => { c.chained_insert(o, ()); inn += 1; }
                    None => if let Ok((_, ch)) = c.chained_extract_max() { out += 1 + ch.len(); },
                }
                let orders: BTreeSet<u64> = c.heap.slots.iter().map(|s| s.entry.order).collect();
                prop_assert_eq!(orders.len(), c.len());
                prop_assert_eq!(inn, out + c.len() + c.chained_len());
            }
        }
    }
}
