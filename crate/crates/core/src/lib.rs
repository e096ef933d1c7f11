//! Cache-oblivious priority queues and merge networks, plus sums-of-products
//! kernels for sparse polynomials over a prime field.
//!
//! The crate is organised bottom-up:
//!
//! * [`cache_sim`]: word-addressed arena and an ideal-cache simulator that
//!   counts block transfers for every structure below.
//! * [`kmerger`]: the static k-merger with van Emde Boas buffer sizing.
//! * [`funnel`]: Funnel Heap with canonical and refined SWEEP and batched
//!   duplicate chaining.
//! * [`baseline`]: binary max-heap and its naively chained variant.
//! * [`poly`] and [`sop`]: sparse polynomials, the dense reference and the
//!   priority-queue kernels computing `S_k = sum g_i * h_{k-i}`.

pub mod baseline;
pub mod buffer;
pub mod cache_sim;
pub mod entry;
pub mod error;
pub mod funnel;
pub mod kmerger;
pub mod poly;
pub mod queue;
pub mod sop;

pub use entry::{Counters, HeapEntry};
pub use error::{Error, Result};
