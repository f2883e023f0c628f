//! Execution strategy for the embarrassingly parallel loops (per-vertex
//! pencils, Monte-Carlo samples).
//!
//! Results are always collected in index order, so reports do not depend on
//! the thread count. Without the `parallel` feature every strategy runs
//! sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Executor {
    Sequential,
    #[default]
    Parallel,
}

impl Executor {
    /// Evaluate `f(0..n)` and collect in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Executor::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Executor::Parallel
    }
}


/// Independent random stream for task `task` under master seed `seed`.
pub fn task_rng(seed: u64, task: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}
