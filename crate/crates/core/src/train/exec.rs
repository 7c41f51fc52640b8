use alloc::vec::Vec;

/// Runs independent per-item work, returning results in item order.
pub trait Executor: Sync {
    fn map<I: Sync, R: Send>(&self, items: &[I], f: &(dyn Fn(&I) -> R + Sync)) -> Vec<R>;
}

/// Runs everything on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<I: Sync, R: Send>(&self, items: &[I], f: &(dyn Fn(&I) -> R + Sync)) -> Vec<R> {
        items.iter().map(f).collect()
    }
}
