//! Static cache-oblivious k-merger.
//!
//! A k-merger is a complete binary tree of binary mergers with `k` input
//! streams. Nodes are numbered heap style: the root merger is node 1, node
//! `n` has children `2n` and `2n + 1`, and the leaves `k..2k` stand for the
//! input streams. The buffer on the edge above internal node `n` (for
//! `2 <= n < k`) is `out(n)`; the root's output buffer belongs to the caller.
//!
//! Buffer sizes follow the van Emde Boas recursion: a merger of height `h`
//! splits into a top tree of height `floor(h/2)` and `2^floor(h/2)` bottom
//! trees of height `ceil(h/2)`; the buffers between them hold
//! `2^ceil(1.5 h)` elements, i.e. `k^{3/2}` rounded up to a power of two.
//! Buffers are allocated in the same recursive order: top tree first, then
//! each bottom buffer followed by its subtree.

use crate::buffer::{Buffer, Scratch};
use crate::cache_sim::Arena;
use crate::error::{Error, Result};

/// Destination of a merge.
pub trait Sink<T> {
    fn is_full(&self) -> bool;
    fn put(&mut self, x: T, arena: &mut Arena);
}

impl<T: Copy> Sink<T> for Buffer<T> {
    #[inline]
    fn is_full(&self) -> bool {
        Buffer::is_full(self)
    }

    #[inline]
    fn put(&mut self, x: T, arena: &mut Arena) {
        self.push_back(x, arena)
    }
}

impl<T: Copy> Sink<T> for Scratch<T> {
    #[inline]
    fn is_full(&self) -> bool {
        false
    }

    #[inline]
    fn put(&mut self, x: T, arena: &mut Arena) {
        self.push(x, arena)
    }
}

impl<T> Sink<T> for Vec<T> {
    #[inline]
    fn is_full(&self) -> bool {
        false
    }

    #[inline]
    fn put(&mut self, x: T, _arena: &mut Arena) {
        self.push(x)
    }
}

/// Capacity of the buffers joining the top and bottom trees of a height-`h`
/// merger.
pub fn middle_capacity(h: u32) -> usize {
    1usize << (3 * h).div_ceil(2)
}

#[derive(Debug, Clone)]
pub struct KMerger<T> {
    k: usize,
    /// `bufs[n]` is `out(n)` for internal non-root nodes.
    bufs: Vec<Option<Buffer<T>>>,
    /// `dry[n]`: the subtree below node `n` was found empty by a fill.
    dry: Vec<bool>,
    layout: Vec<usize>,
}

impl<T: Copy + Ord> KMerger<T> {
    /// Allocates the internal buffers of a `k`-merger in van Emde Boas order.
    pub fn new(k: usize, arena: &mut Arena) -> Result<Self> {
        if k < 2 || !k.is_power_of_two() {
            return Err(Error::BadArity(k));
        }
        let h = k.trailing_zeros();
        let mut caps = vec![0usize; k];
        let mut layout = Vec::with_capacity(k.saturating_sub(2));
        assign_capacities(1, h, &mut caps, &mut layout);
        let mut bufs: Vec<Option<Buffer<T>>> = vec![None; k];
        for &n in &layout {
            bufs[n] = Some(Buffer::new(arena.alloc(caps[n] as u64)?));
        }
        Ok(Self {
            k,
            bufs,
            dry: vec![false; k],
            layout,
        })
    }

    #[inline]
    pub fn arity(&self) -> usize {
        self.k
    }

    /// Capacity of `out(n)` for internal node `2 <= n < k`.
    pub fn buffer_capacity(&self, n: usize) -> Option<usize> {
        self.bufs.get(n)?.as_ref().map(Buffer::capacity)
    }

    /// Internal node ids in allocation order.
    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn buffer(&self, n: usize) -> Option<&Buffer<T>> {
        self.bufs.get(n)?.as_ref()
    }

    /// Elements held in internal buffers.
    pub fn internal_len(&self) -> usize {
        self.bufs.iter().flatten().map(Buffer::len).sum()
    }

    /// Internal buffers on the path from the root down to `leaf`, top first.
    pub fn path_nodes(&self, leaf: usize) -> Vec<usize> {
        let mut nodes = Vec::new();
        let mut n = (self.k + leaf) / 2;
        while n >= 2 {
            nodes.push(n);
            n /= 2;
        }
        nodes.reverse();
        nodes
    }

    pub(crate) fn buffer_mut(&mut self, n: usize) -> &mut Buffer<T> {
        self.bufs[n].as_mut().expect("not an internal buffer")
    }

    /// Marks the ancestors of `leaf` as possibly non-empty again.
    pub fn reopen_path(&mut self, leaf: usize) {
        let mut n = (self.k + leaf) / 2;
        while n >= 1 {
            self.dry[n] = false;
            n /= 2;
        }
    }

    pub fn mark_all_dry(&mut self) {
        self.dry.fill(true);
    }

    #[inline]
    pub fn root_dry(&self) -> bool {
        self.dry[1]
    }

    /// Runs the root merger until `out` is full or every input is exhausted.
    /// Returns true when the whole tree below the root is now empty.
    pub fn fill_root<S: Sink<T>>(
        &mut self,
        out: &mut S,
        leaves: &mut [Buffer<T>],
        arena: &mut Arena,
        cmp: &mut u64,
    ) -> bool {
        debug_assert_eq!(leaves.len(), self.k);
        let exhausted = self.run(1, out, leaves, arena, cmp);
        self.dry[1] = exhausted;
        exhausted
    }

    fn fill_internal(&mut self, n: usize, leaves: &mut [Buffer<T>], arena: &mut Arena, cmp: &mut u64) {
        let mut out = self.bufs[n].take().expect("internal node");
        self.run(n, &mut out, leaves, arena, cmp);
        let empty = out.is_empty();
        self.bufs[n] = Some(out);
        if empty {
            self.dry[n] = true;
        }
    }

    #[inline]
    fn head(&mut self, c: usize, leaves: &mut [Buffer<T>], arena: &mut Arena, cmp: &mut u64) -> Option<T> {
        if c >= self.k {
            return leaves[c - self.k].read(0, arena).copied();
        }
        let empty = self.bufs[c].as_ref().is_none_or(Buffer::is_empty);
        if empty {
            if self.dry[c] {
                return None;
            }
            self.fill_internal(c, leaves, arena, cmp);
        }
        self.bufs[c].as_ref().and_then(|b| b.read(0, arena).copied())
    }

    #[inline]
    fn take(&mut self, c: usize, leaves: &mut [Buffer<T>], arena: &mut Arena) -> T {
        let src = if c >= self.k {
            &mut leaves[c - self.k]
        } else {
            self.bufs[c].as_mut().expect("internal node")
        };
        src.pop_front(arena).expect("head present")
    }

    /// Binary merge at node `n` into `out`. Returns true if it stopped
    /// because both children ran dry.
    fn run<S: Sink<T>>(
        &mut self,
        n: usize,
        out: &mut S,
        leaves: &mut [Buffer<T>],
        arena: &mut Arena,
        cmp: &mut u64,
    ) -> bool {
        let (l, r) = (2 * n, 2 * n + 1);
        while !out.is_full() {
            let pick = match (self.head(l, leaves, arena, cmp), self.head(r, leaves, arena, cmp)) {
                (None, None) => return true,
                (Some(_), None) => l,
                (None, Some(_)) => r,
                (Some(a), Some(b)) => {
                    *cmp += 1;
                    if a >= b {
                        l
                    } else {
                        r
                    }
                }
            };
            let x = self.take(pick, leaves, arena);
            out.put(x, arena);
        }
        false
    }

    /// Checks that every internal buffer is sorted descending and that every
    /// element of `out(n)` dominates the subtree below `n`.
    pub fn check_invariants(&self, leaves: &[Buffer<T>], root_out: Option<&Buffer<T>>) -> std::result::Result<(), String> {
        for n in 2..self.k {
            let b = self.bufs[n].as_ref().unwrap();
            if !is_sorted_desc(b) {
                return Err(format!("k-merger buffer {n} not sorted"));
            }
        }
        for (j, leaf) in leaves.iter().enumerate() {
            if !is_sorted_desc(leaf) {
                return Err(format!("input {j} not sorted"));
            }
        }
        let check = |n: usize, out: &Buffer<T>| -> std::result::Result<(), String> {
            if let (Some(low), Some(below)) = (out.back(), self.max_below(n, leaves)) {
                if *low < below {
                    return Err(format!("heap order broken below node {n}"));
                }
            }
            Ok(())
        };
        if let Some(out) = root_out {
            check(1, out)?;
        }
        for n in 2..self.k {
            check(n, self.bufs[n].as_ref().unwrap())?;
        }
        Ok(())
    }

    /// Largest element anywhere strictly below node `n`.
    pub fn max_below(&self, n: usize, leaves: &[Buffer<T>]) -> Option<T> {
        [2 * n, 2 * n + 1]
            .into_iter()
            .filter_map(|c| {
                if c >= self.k {
                    leaves[c - self.k].front().copied()
                } else {
                    let here = self.bufs[c].as_ref().unwrap().front().copied();
                    here.max(self.max_below(c, leaves))
                }
            })
            .max()
    }
}

fn assign_capacities(root: usize, h: u32, caps: &mut [usize], layout: &mut Vec<usize>) {
    if h <= 1 {
        return;
    }
    let top = h / 2;
    let bottom = h - top;
    assign_capacities(root, top, caps, layout);
    let cap = middle_capacity(h);
    for t in 0..(1usize << top) {
        let b = (root << top) + t;
        caps[b] = cap;
        layout.push(b);
        assign_capacities(b, bottom, caps, layout);
    }
}

pub(crate) fn is_sorted_desc<T: Ord + Copy>(b: &Buffer<T>) -> bool {
    let mut prev: Option<T> = None;
    for &x in b.iter() {
        if prev.is_some_and(|p| p < x) {
            return false;
        }
        prev = Some(x);
    }
    true
}

/// A standalone k-merger bound to `k` in-memory input streams and an output
/// buffer of `k^3` elements.
#[derive(Debug)]
pub struct StreamMerger<T> {
    merger: KMerger<T>,
    output: Buffer<T>,
    inputs: Vec<Buffer<T>>,
    comparisons: u64,
}

impl<T: Copy + Ord> StreamMerger<T> {
    /// Lays out the output buffer, the merger and then the input streams.
    /// Fewer than `k` streams are padded with empty ones. Each stream must be
    /// sorted descending.
    pub fn new(k: usize, streams: Vec<Vec<T>>, arena: &mut Arena) -> Result<Self> {
        if k < 2 || !k.is_power_of_two() {
            return Err(Error::BadArity(k));
        }
        assert!(streams.len() <= k, "more streams than merger inputs");
        let output = Buffer::new(arena.alloc((k as u64).pow(3))?);
        let merger = KMerger::new(k, arena)?;
        let mut inputs = Vec::with_capacity(k);
        let mut streams = streams.into_iter();
        let mut untraced = Arena::new();
        for _ in 0..k {
            let s = streams.next().unwrap_or_default();
            debug_assert!(s.windows(2).all(|w| w[0] >= w[1]), "input stream not sorted");
            let mut b = Buffer::new(arena.alloc(s.len().max(1) as u64)?);
            for x in s {
                b.push_back(x, &mut untraced);
            }
            inputs.push(b);
        }
        Ok(Self {
            merger,
            output,
            inputs,
            comparisons: 0,
        })
    }

    /// One invocation: fills the output buffer with the next (at most `k^3`)
    /// elements of the merge and hands them back.
    pub fn invoke(&mut self, arena: &mut Arena) -> Vec<T> {
        self.merger
            .fill_root(&mut self.output, &mut self.inputs, arena, &mut self.comparisons);
        let mut out = Vec::with_capacity(self.output.len());
        while let Some(x) = self.output.pop_front(arena) {
            out.push(x);
        }
        out
    }

    /// Invokes until every input is drained.
    pub fn merge_all(&mut self, arena: &mut Arena) -> Vec<T> {
        let mut all = Vec::new();
        loop {
            let chunk = self.invoke(arena);
            if chunk.is_empty() {
                return all;
            }
            all.extend(chunk);
        }
    }

    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }

    pub fn merger(&self) -> &KMerger<T> {
        &self.merger
    }

    pub fn output_capacity(&self) -> usize {
        self.output.capacity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn merge(k: usize, streams: Vec<Vec<u64>>) -> (Vec<u64>, u64) {
        let mut arena = Arena::new();
        let mut m = StreamMerger::new(k, streams, &mut arena).unwrap();
        let out = m.merge_all(&mut arena);
        (out, m.comparisons())
    }

    #[test]
    fn rejects_bad_arity() {
        let mut arena = Arena::new();
        assert!(matches!(KMerger::<u64>::new(3, &mut arena), Err(Error::BadArity(3))));
        assert!(matches!(KMerger::<u64>::new(1, &mut arena), Err(Error::BadArity(1))));
    }

    #[test]
    fn buffer_sizes() {
        let mut arena = Arena::new();
        let m2 = StreamMerger::<u64>::new(2, vec![], &mut arena).unwrap();
        assert_eq!(m2.output_capacity(), 8);
        assert!(m2.merger().layout().is_empty());

        let m4 = KMerger::<u64>::new(4, &mut arena).unwrap();
        assert_eq!(m4.buffer_capacity(2), Some(8));
        assert_eq!(m4.buffer_capacity(3), Some(8));

        let m16 = KMerger::<u64>::new(16, &mut arena).unwrap();
        for n in 4..8 {
            assert_eq!(m16.buffer_capacity(n), Some(64));
        }
        for n in [2, 3, 8, 15] {
            assert_eq!(m16.buffer_capacity(n), Some(8));
        }

        // odd height: 8^{3/2} = 22.6 rounds up to 32
        let m8 = KMerger::<u64>::new(8, &mut arena).unwrap();
        assert_eq!(m8.buffer_capacity(2), Some(32));
        assert_eq!(m8.buffer_capacity(4), Some(8));
    }

    #[test]
    fn every_internal_node_is_laid_out_once() {
        let mut arena = Arena::new();
        for h in 1..=9 {
            let k = 1usize << h;
            let m = KMerger::<u64>::new(k, &mut arena).unwrap();
            let mut ids = m.layout().to_vec();
            ids.sort_unstable();
            assert_eq!(ids, (2..k).collect::<Vec<_>>(), "k = {k}");
        }
    }

    #[test]
    fn layout_is_van_emde_boas() {
        let mut arena = Arena::new();
        let m = KMerger::<u64>::new(16, &mut arena).unwrap();
        // top tree (2, 3), then each bottom root followed by its subtree
        assert_eq!(m.layout(), &[2, 3, 4, 8, 9, 5, 10, 11, 6, 12, 13, 7, 14, 15]);
        let bases: Vec<u64> = m.layout().iter().map(|&n| m.buffer(n).unwrap().base()).collect();
        assert!(bases.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn small_merges() {
        assert_eq!(merge(2, vec![vec![5, 3], vec![4]]).0, vec![5, 4, 3]);
        assert_eq!(merge(4, vec![vec![2, 1]; 4]).0, vec![2, 2, 2, 2, 1, 1, 1, 1]);
        assert_eq!(merge(8, vec![vec![], vec![7], vec![]]).0, vec![7]);
        assert_eq!(merge(4, vec![]).0, Vec::<u64>::new());
    }

    #[test]
    fn ties_favour_lower_stream() {
        let mut arena = Arena::new();
        #[derive(Clone, Copy, PartialEq, Eq, Debug)]
        struct K(u64, usize);
        impl PartialOrd for K {
            fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for K {
            fn cmp(&self, o: &Self) -> std::cmp::Ordering {
                self.0.cmp(&o.0)
            }
        }
        let streams = (0..4).map(|s| vec![K(2, s), K(1, s)]).collect();
        let mut m = StreamMerger::new(4, streams, &mut arena).unwrap();
        let tags: Vec<usize> = m.merge_all(&mut arena).iter().map(|k| k.1).collect();
        assert_eq!(tags, vec![0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn single_invocation_is_bounded_by_k_cubed() {
        let mut arena = Arena::new();
        let streams: Vec<Vec<u64>> = (0..2).map(|s| (0..20).rev().map(|x| x * 2 + s).collect()).collect();
        let mut m = StreamMerger::new(2, streams, &mut arena).unwrap();
        let first = m.invoke(&mut arena);
        assert_eq!(first, vec![39, 38, 37, 36, 35, 34, 33, 32]);
        let rest = m.merge_all(&mut arena);
        assert_eq!(rest.len(), 32);
    }

    #[test]
    fn fill_stops_when_output_full() {
        let mut arena = Arena::new();
        let mut m = KMerger::<u64>::new(2, &mut arena).unwrap();
        let mut leaves: Vec<Buffer<u64>> = (0..2).map(|_| Buffer::new(arena.alloc(4).unwrap())).collect();
        leaves[0].push_back(5, &mut arena);
        leaves[1].push_back(4, &mut arena);
        leaves[1].push_back(2, &mut arena);
        let mut out = Buffer::new(arena.alloc(2).unwrap());
        let mut cmp = 0;
        let exhausted = m.fill_root(&mut out, &mut leaves, &mut arena, &mut cmp);
        assert!(!exhausted);
        assert_eq!(out.iter().copied().collect::<Vec<_>>(), vec![5, 4]);
        assert_eq!(leaves[1].iter().copied().collect::<Vec<_>>(), vec![2]);

        // both inputs empty: a no-op
        let mut empty: Vec<Buffer<u64>> = (0..2).map(|_| Buffer::new(arena.alloc(1).unwrap())).collect();
        let mut out = Buffer::new(arena.alloc(2).unwrap());
        assert!(m.fill_root(&mut out, &mut empty, &mut arena, &mut cmp));
        assert!(out.is_empty());
    }

    proptest! {
        #[test]
        fn merge_equals_sorted_union(
            h in 1u32..7,
            raw in proptest::collection::vec(proptest::collection::vec(0u64..1_000, 0..40), 0..64),
        ) {
            let k = 1usize << h;
            let mut streams: Vec<Vec<u64>> = raw.into_iter().take(k).collect();
            for s in &mut streams {
                s.sort_unstable_by(|a, b| b.cmp(a));
            }
            let total: usize = streams.iter().map(Vec::len).sum();
            let mut expect: Vec<u64> = streams.iter().flatten().copied().collect();
            expect.sort_unstable_by(|a, b| b.cmp(a));

            let mut arena = Arena::new();
            let mut m = StreamMerger::new(k, streams, &mut arena).unwrap();
            let mut out = Vec::new();
            loop {
                let chunk = m.invoke(&mut arena);
                prop_assert!(chunk.len() <= k * k * k);
                if chunk.is_empty() { break; }
                out.extend(chunk);
                let leaves = &m.inputs;
                prop_assert!(m.merger.check_invariants(leaves, Some(&m.output)).is_ok());
            }
            prop_assert_eq!(out, expect);
            prop_assert!(m.comparisons() <= (total as u64) * h as u64);
        }
    }
}
