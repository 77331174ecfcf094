//! Ordered map over work items.
//!
//! Algorithms fan out per tensor through an [`Executor`]. Results always come
//! back in input order, so merged output never depends on scheduling.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map<I, R, F>(&self, items: &[I], f: F) -> Vec<R>
    where
        I: Sync,
        R: Send,
        F: Fn(&I) -> R + Sync + Send;
}

/// Runs every item on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<I, R, F>(&self, items: &[I], f: F) -> Vec<R>
    where
        I: Sync,
        R: Send,
        F: Fn(&I) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}
