use flowpl_core::train::{Executor, Sequential};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Sequential with one thread, a private rayon pool otherwise. Results are
/// always combined in item order, so the thread count never changes them.
pub struct Pool(Option<rayon::ThreadPool>);

impl Pool {
    pub fn new(threads: usize) -> Result<Self> {
        match threads {
            0 => Err(Error::Usage("--threads must be at least 1".into())),
            1 => Ok(Pool(None)),
            n => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map(|p| Pool(Some(p)))
                .map_err(|e| Error::Usage(format!("thread pool: {e}"))),
        }
    }
}

impl Executor for Pool {
    fn map<I: Sync, R: Send>(&self, items: &[I], f: &(dyn Fn(&I) -> R + Sync)) -> Vec<R> {
        match &self.0 {
            None => Sequential.map(items, f),
            Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }
}
