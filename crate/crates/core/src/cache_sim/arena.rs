use super::model::CacheModel;
use crate::error::{Error, Result};

/// Start of the temporary area used for merged streams during
/// reorganisations. It lies far above anything the bump allocator hands out
/// so the two never alias.
pub const SCRATCH_BASE: u64 = 1 << 48;

/// A contiguous range of word addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Region {
    pub base: u64,
    pub len: u64,
}

impl Region {
    pub fn end(&self) -> u64 {
        self.base + self.len
    }
}

/// Flat, word-addressed address space with bump allocation.
///
/// The arena hands out address ranges only; element storage lives with the
/// structure that owns the range. Allocations are contiguous and never move,
/// so the sequence of `alloc` calls is the memory layout seen by the cache
/// model. Every access a structure makes is reported through [`Arena::touch`].
#[derive(Debug, Default)]
pub struct Arena {
    next_free: u64,
    limit: Option<u64>,
    cache: Option<CacheModel>,
    recorder: Option<Vec<u64>>,
    accesses: u64,
}

impl Arena {
    pub fn new() -> Self {
        Self::default()
    }

    /// An arena that refuses to grow past `words` addresses.
    pub fn with_limit(words: u64) -> Self {
        Self {
            limit: Some(words),
            ..Self::default()
        }
    }

    pub fn attach_cache(&mut self, cache: CacheModel) {
        self.cache = Some(cache);
    }

    pub fn record_trace(&mut self) {
        self.recorder = Some(Vec::new());
    }

    pub fn alloc(&mut self, words: u64) -> Result<Region> {
        let end = self.next_free + words;
        if let Some(limit) = self.limit {
            if end > limit {
                return Err(Error::ArenaExhausted {
                    requested: words,
                    available: limit - self.next_free,
                });
            }
        }
        let region = Region {
            base: self.next_free,
            len: words,
        };
        self.next_free = end;
        Ok(region)
    }

    /// Words handed out so far.
    pub fn used(&self) -> u64 {
        self.next_free
    }

    #[inline]
    pub fn tracing(&self) -> bool {
        self.cache.is_some() || self.recorder.is_some()
    }

    #[inline]
    pub fn touch(&mut self, addr: u64) {
        if let Some(cache) = self.cache.as_mut() {
            cache.access(addr);
        }
        if let Some(rec) = self.recorder.as_mut() {
            rec.push(addr);
        }
        self.accesses += 1;
    }

    pub fn accesses(&self) -> u64 {
        self.accesses
    }

    pub fn cache(&self) -> Option<&CacheModel> {
        self.cache.as_ref()
    }

    pub fn misses(&self) -> u64 {
        self.cache.as_ref().map_or(0, CacheModel::misses)
    }

    pub fn trace(&self) -> Option<&[u64]> {
        self.recorder.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<u64>> {
        self.recorder.take()
    }
}
