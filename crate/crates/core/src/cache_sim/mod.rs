//! Software memory hierarchy: a flat word-addressed arena that every
//! instrumented structure allocates from, and an ideal-cache (fully
//! associative LRU) model that counts block transfers for the accesses the
//! arena reports.

mod arena;
mod model;
mod trace;

pub use arena::{Arena, Region, SCRATCH_BASE};
pub use model::{traversal_miss_bound_check, Access, BoundCheck, CacheModel};
pub use trace::{read_trace, write_trace};
