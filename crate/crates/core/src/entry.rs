use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

/// An element flowing through the priority queues.
///
/// Entries compare lexicographically on `(order, seq)`; the larger entry has
/// higher priority. `seq` is stamped by the queue at insertion time, which
/// makes every queue in this crate deterministic and lets runs on different
/// queues be compared element by element.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeapEntry<P> {
    pub order: u64,
    pub seq: u64,
    pub payload: P,
}

impl<P> HeapEntry<P> {
    #[inline]
    pub fn new(order: u64, seq: u64, payload: P) -> Self {
        Self {
            order,
            seq,
            payload,
        }
    }

    #[inline]
    pub fn key(&self) -> (u64, u64) {
        (self.order, self.seq)
    }
}

impl<P> PartialEq for HeapEntry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for HeapEntry<P> {}

impl<P> PartialOrd for HeapEntry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for HeapEntry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Per-insert lifetimes `N_r = t - r`, where `t` is the index of the first
/// insertion that follows the extraction of the `r`'th inserted element.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LifetimeLog {
    /// `(r, N_r)` pairs in resolution order.
    pub resolved: Vec<(u64, u64)>,
    #[serde(skip)]
    pending: Vec<u64>,
}

impl LifetimeLog {
    fn on_insert(&mut self, t: u64) {
        for r in self.pending.drain(..) {
            self.resolved.push((r, t - r));
        }
    }

    fn on_extract(&mut self, r: u64) {
        self.pending.push(r);
    }

    pub fn total(&self) -> u64 {
        self.resolved.iter().map(|&(_, n)| n).sum()
    }
}

/// Instrumentation shared by every queue so their numbers are comparable.
///
/// All fields except `live` only ever grow during a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub comparisons: u64,
    /// `T_j` for link `j` at index `j - 1`.
    pub sweeps_per_link: Vec<u64>,
    pub inserts: u64,
    pub extracts: u64,
    /// Entries currently stored in the structure (a gauge).
    pub live: u64,
    pub peak_size: u64,
    pub fills: u64,
    pub chain_events: u64,
    pub lifetimes: Option<LifetimeLog>,
}

impl Counters {
    pub fn with_lifetimes() -> Self {
        Self {
            lifetimes: Some(LifetimeLog::default()),
            ..Self::default()
        }
    }

    #[inline]
    pub(crate) fn note_insert(&mut self, seq: u64) {
        self.inserts += 1;
        if let Some(l) = self.lifetimes.as_mut() {
            l.on_insert(seq);
        }
    }

    #[inline]
    pub(crate) fn note_stored(&mut self) {
        self.live += 1;
        self.peak_size = self.peak_size.max(self.live);
    }

    #[inline]
    pub(crate) fn note_extract(&mut self, seq: u64) {
        self.extracts += 1;
        self.live -= 1;
        if let Some(l) = self.lifetimes.as_mut() {
            l.on_extract(seq);
        }
    }

    pub(crate) fn note_sweep(&mut self, link: usize) {
        if self.sweeps_per_link.len() < link {
            self.sweeps_per_link.resize(link, 0);
        }
        self.sweeps_per_link[link - 1] += 1;
    }

    /// Sweeps into link `j` (1-based); zero for links never swept.
    pub fn sweeps(&self, j: usize) -> u64 {
        self.sweeps_per_link.get(j - 1).copied().unwrap_or(0)
    }

    /// Flat `name -> value` view used by the benchmark tables.
    pub fn to_map(&self) -> BTreeMap<String, u64> {
        let mut m = BTreeMap::new();
        m.insert("comparisons".into(), self.comparisons);
        m.insert("inserts".into(), self.inserts);
        m.insert("extracts".into(), self.extracts);
        m.insert("live".into(), self.live);
        m.insert("peak_size".into(), self.peak_size);
        m.insert("fills".into(), self.fills);
        m.insert("chain_events".into(), self.chain_events);
        m.insert("links".into(), self.sweeps_per_link.len() as u64);
        for (j, t) in self.sweeps_per_link.iter().enumerate() {
            m.insert(format!("sweeps_link_{}", j + 1), *t);
        }
        if let Some(l) = &self.lifetimes {
            m.insert("lifetimes_resolved".into(), l.resolved.len() as u64);
            m.insert("lifetimes_total".into(), l.total());
        }
        m
    }
}
