use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Hit,
    Miss,
}

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Slot {
    line: u64,
    prev: u32,
    next: u32,
}

/// Fully associative LRU cache of `m` words split into lines of `b` words.
///
/// Residency is tracked with an intrusive doubly linked list over a slab of
/// `floor(m / b)` slots; the head is the most recently used line.
#[derive(Debug, Clone)]
pub struct CacheModel {
    m: u64,
    b: u64,
    lines: usize,
    slots: Vec<Slot>,
    index: HashMap<u64, u32>,
    head: u32,
    tail: u32,
    hits: u64,
    misses: u64,
}

impl CacheModel {
    /// Panics unless `b >= 1` and `m >= b`.
    pub fn new(m: u64, b: u64) -> Self {
        assert!(b >= 1, "line size must be positive");
        assert!(m >= b, "cache must hold at least one line");
        let lines = (m / b) as usize;
        Self {
            m,
            b,
            lines,
            slots: Vec::with_capacity(lines.min(1 << 20)),
            index: HashMap::with_capacity(lines.min(1 << 20)),
            head: NIL,
            tail: NIL,
            hits: 0,
            misses: 0,
        }
    }

    pub fn capacity_words(&self) -> u64 {
        self.m
    }

    pub fn line_words(&self) -> u64 {
        self.b
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn resident_lines(&self) -> usize {
        self.index.len()
    }

    pub fn max_lines(&self) -> usize {
        self.lines
    }

    pub fn access(&mut self, address: u64) -> Access {
        let line = address / self.b;
        if let Some(&slot) = self.index.get(&line) {
            self.hits += 1;
            if slot != self.head {
                self.unlink(slot);
                self.push_front(slot);
            }
            return Access::Hit;
        }
        self.misses += 1;
        let slot = if self.slots.len() < self.lines {
            self.slots.push(Slot {
                line,
                prev: NIL,
                next: NIL,
            });
            (self.slots.len() - 1) as u32
        } else {
            let victim = self.tail;
            self.unlink(victim);
            let old = self.slots[victim as usize].line;
            self.index.remove(&old);
            self.slots[victim as usize].line = line;
            victim
        };
        self.index.insert(line, slot);
        self.push_front(slot);
        Access::Miss
    }

    fn unlink(&mut self, slot: u32) {
        let Slot { prev, next, .. } = self.slots[slot as usize];
        if prev != NIL {
            self.slots[prev as usize].next = next;
        } else {
            self.head = next;
        }
        if next != NIL {
            self.slots[next as usize].prev = prev;
        } else {
            self.tail = prev;
        }
    }

    fn push_front(&mut self, slot: u32) {
        let s = &mut self.slots[slot as usize];
        s.prev = NIL;
        s.next = self.head;
        if self.head != NIL {
            self.slots[self.head as usize].prev = slot;
        }
        self.head = slot;
        if self.tail == NIL {
            self.tail = slot;
        }
    }
}

/// Outcome of replaying a trace against the traversal bound
/// `misses <= c * ceil(n / B) + M / B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundCheck {
    pub misses: u64,
    pub bound: u64,
    pub pass: bool,
}

/// Replays `trace` through a fresh `(m, b)` cache and compares the miss count
/// with what a linear traversal of `n` words would cost.
pub fn traversal_miss_bound_check(trace: &[u64], n: u64, m: u64, b: u64, c: u64) -> BoundCheck {
    let mut cache = CacheModel::new(m, b);
    for &addr in trace {
        cache.access(addr);
    }
    let bound = c * n.div_ceil(b) + m / b;
    BoundCheck {
        misses: cache.misses(),
        bound,
        pass: cache.misses() <= bound,
    }
}
