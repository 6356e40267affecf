//! Execution backends for independent jobs (multi-start runs, sweep rows).
//!
//! With the default `parallel` feature the parallel backend runs on a rayon
//! pool; without it every backend degrades to a plain loop. Results always
//! come back in input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Execution {
    Sequential,
    /// `jobs == 0` means one worker per available processor.
    Parallel { jobs: usize },
    #[default]
    Auto,
}

impl Execution {
    pub fn with_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Execution::Sequential,
            Some(jobs) => Execution::Parallel { jobs },
            None => Execution::Auto,
        }
    }

    pub fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.into_iter().map(f).collect(),
            Execution::Parallel { jobs } => parallel_map(*jobs, items, f),
            Execution::Auto => parallel_map(0, items, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(jobs: usize, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if items.len() < 2 {
        return items.into_iter().map(f).collect();
    }
    let run = || items.into_par_iter().map(&f).collect();
    if jobs == 0 {
        run()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(_jobs: usize, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..64).collect();
        let expect: Vec<u64> = items.iter().map(|x| x * x).collect();
        for exec in [Execution::Sequential, Execution::Parallel { jobs: 3 }, Execution::Auto] {
            assert_eq!(exec.map(items.clone(), |x| x * x), expect);
        }
    }
}
