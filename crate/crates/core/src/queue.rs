use crate::cache_sim::Arena;
use crate::entry::{Counters, HeapEntry};
use crate::error::Result;

/// The max-priority-queue surface the sums-of-products kernels drive.
///
/// `insert` stamps the entry's sequence number and returns it. Queues that
/// keep duplicates outside the structure hand them back through
/// `take_chained` once the caller has extracted an entry of that order.
pub trait MaxQueue<P> {
    fn insert(&mut self, order: u64, payload: P) -> Result<u64>;

    fn extract_max(&mut self) -> Result<HeapEntry<P>>;

    /// Order of the current maximum without removing it.
    fn peek_max_order(&mut self) -> Option<u64>;

    /// Moves every chained entry of `order` into `out`.
    fn take_chained(&mut self, _order: u64, _out: &mut Vec<HeapEntry<P>>) {}

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn counters(&self) -> &Counters;

    fn arena(&self) -> &Arena;

    fn arena_mut(&mut self) -> &mut Arena;
}
