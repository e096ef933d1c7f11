//! Fixed-capacity FIFO buffers living at an arena address range.
//!
//! A buffer is a circular array: elements are appended at the tail and
//! consumed from the head, and the word address of a slot is
//! `base + (ring position mod capacity)`. Storage is allocated lazily so a
//! large, mostly idle buffer costs nothing until elements arrive.

use std::collections::VecDeque;

use crate::cache_sim::{Arena, Region, SCRATCH_BASE};

#[derive(Debug, Clone)]
pub struct Buffer<T> {
    base: u64,
    cap: usize,
    head: usize,
    data: VecDeque<T>,
}

impl<T: Copy> Buffer<T> {
    pub fn new(region: Region) -> Self {
        assert!(region.len > 0, "zero-capacity buffer");
        Self {
            base: region.base,
            cap: region.len as usize,
            head: 0,
            data: VecDeque::new(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn is_full(&self) -> bool {
        self.data.len() >= self.cap
    }

    #[inline]
    pub fn capacity(&self) -> usize {
        self.cap
    }

    #[inline]
    pub fn base(&self) -> u64 {
        self.base
    }

    #[inline]
    pub fn front(&self) -> Option<&T> {
        self.data.front()
    }

    #[inline]
    pub fn back(&self) -> Option<&T> {
        self.data.back()
    }

    #[inline]
    fn addr(&self, offset: usize) -> u64 {
        self.base + ((self.head + offset) % self.cap) as u64
    }

    #[inline]
    pub fn push_back(&mut self, x: T, arena: &mut Arena) {
        debug_assert!(!self.is_full(), "push into full buffer");
        if arena.tracing() {
            arena.touch(self.addr(self.data.len()));
        }
        self.data.push_back(x);
    }

    #[inline]
    pub fn pop_front(&mut self, arena: &mut Arena) -> Option<T> {
        let x = self.data.pop_front()?;
        if arena.tracing() {
            arena.touch(self.base + self.head as u64);
        }
        self.head = (self.head + 1) % self.cap;
        Some(x)
    }

    /// Inserts `x` at `pos`, shifting the tail one slot towards the end.
    pub fn insert_at(&mut self, pos: usize, x: T, arena: &mut Arena) {
        debug_assert!(!self.is_full(), "insert into full buffer");
        if arena.tracing() {
            for off in (pos..=self.data.len()).rev() {
                arena.touch(self.addr(off));
            }
        }
        self.data.insert(pos, x);
    }

    /// Empties the buffer and releases its storage.
    pub fn reset(&mut self) {
        self.data = VecDeque::new();
        self.head = 0;
    }

    /// Removes every element without tracing; used by reorganisations that
    /// trace their reads element by element themselves.
    pub fn drain_into(&mut self, out: &mut Vec<T>, arena: &mut Arena) {
        if arena.tracing() {
            for off in 0..self.data.len() {
                arena.touch(self.addr(off));
            }
        }
        out.extend(self.data.drain(..));
        self.reset();
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        self.data.iter()
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.data.get(i)
    }

    /// Like `get`, but reports the slot access.
    #[inline]
    pub fn read(&self, i: usize, arena: &mut Arena) -> Option<&T> {
        let x = self.data.get(i)?;
        if arena.tracing() {
            arena.touch(self.addr(i));
        }
        Some(x)
    }
}

/// Growable temporary stream in the scratch area.
#[derive(Debug, Default)]
pub struct Scratch<T> {
    data: Vec<T>,
}

impl<T: Copy> Scratch<T> {
    pub fn new() -> Self {
        Self { data: Vec::new() }
    }

    #[inline]
    pub fn push(&mut self, x: T, arena: &mut Arena) {
        if arena.tracing() {
            arena.touch(SCRATCH_BASE + self.data.len() as u64);
        }
        self.data.push(x);
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reads `[from, to)` back, tracing every slot.
    pub fn read(&self, from: usize, to: usize, arena: &mut Arena) -> &[T] {
        if arena.tracing() {
            for i in from..to {
                arena.touch(SCRATCH_BASE + i as u64);
            }
        }
        &self.data[from..to]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn clear(&mut self) {
        self.data.clear();
    }
}
