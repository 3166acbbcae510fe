//! Ordered map over independent work items, on rayon when the `parallel`
//! feature is enabled and sequentially otherwise. Output order always
//! matches input order, so results do not depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// Use a worker pool. `None` means rayon's global pool.
    Parallel { jobs: Option<usize> },
}

impl Execution {
    /// `jobs <= 1` is sequential; anything more is a dedicated pool of that size.
    pub fn with_jobs(jobs: usize) -> Self {
        if jobs <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { jobs: Some(jobs) }
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Execution::Parallel { .. })
    }
}

pub fn map_ordered<T, U, F>(exec: Execution, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel { jobs } => match jobs {
            None => items.par_iter().map(&f).collect(),
            Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(e) => {
                    log::warn!("could not build a {n}-thread pool ({e}); running sequentially");
                    items.iter().map(f).collect()
                }
            },
        },
        _ => items.iter().map(f).collect(),
    }
}

/// Derive an independent sub-seed from a master seed, a user id and an index.
/// SplitMix64 finaliser applied to each component in turn.
pub fn derive_seed(master: u64, user_id: u32, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ user_id as u64) ^ index)
}
