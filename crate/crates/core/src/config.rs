//! Run configuration shared by the command line and pipelines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embed::{InpcaOptions, LanczosOptions};
use crate::error::{Error, Result};
use crate::trajectory::{LengthOptions, ProgressOptions};

/// Environment variable consulted when no thread count is given.
pub const THREADS_ENV: &str = "TASKGEO_THREADS";

/// Default memory budget for in-memory distance matrices: 1 GiB.
pub const DEFAULT_MEMORY_BUDGET: u64 = 1 << 30;

/// Tolerance names accepted in [`RunConfig::tolerances`].
pub const TOLERANCE_KEYS: [&str; 3] = ["progress", "length_rel", "lanczos"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub threads: usize,
    pub determinism: bool,
    pub memory_budget_bytes: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            threads: 1,
            determinism: false,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET,
            tolerances: BTreeMap::new(),
            seed: 0,
        }
    }
}

/// Thread count from the flag, else [`THREADS_ENV`], else the hardware.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                Error::Validation(format!("{THREADS_ENV}={v:?} is not a thread count"))
            })?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(Error::Validation("thread count must be at least 1".into()));
    }
    Ok(n)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Validation("thread count must be at least 1".into()));
        }
        for (k, v) in &self.tolerances {
            if !TOLERANCE_KEYS.contains(&k.as_str()) {
                return Err(Error::Validation(format!(
                    "unknown tolerance {k:?}; expected one of {TOLERANCE_KEYS:?}"
                )));
            }
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("tolerance {k} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn tolerance(&self, key: &str) -> Option<f64> {
        self.tolerances.get(key).copied()
    }

    pub fn progress_options(&self) -> ProgressOptions {
        let mut o = ProgressOptions::default();
        if let Some(t) = self.tolerance("progress") {
            o.tol = t;
        }
        o
    }

    pub fn length_options(&self) -> LengthOptions {
        let mut o = LengthOptions::default();
        if let Some(t) = self.tolerance("length_rel") {
            o.rel_tol = t;
        }
        o
    }

    pub fn inpca_options(&self) -> InpcaOptions {
        let mut lanczos = LanczosOptions {
            seed: self.seed,
            ..LanczosOptions::default()
        };
        if let Some(t) = self.tolerance("lanczos") {
            lanczos.tol = t;
        }
        InpcaOptions {
            lanczos,
            ..InpcaOptions::default()
        }
    }

    /// Sizes the global worker pool. Fails if a pool of a different size
    /// already exists.
    pub fn install_thread_pool(&self) -> Result<()> {
        #[cfg(feature = "parallel")]
        {
            let built = rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build_global();
            if built.is_err() && rayon::current_num_threads() != self.threads {
                return Err(Error::Validation(format!(
                    "worker pool already running with {} threads",
                    rayon::current_num_threads()
                )));
            }
        }
        Ok(())
    }
}
