//! Grid and random hyperparameter search and the repeated-seed study.

mod search;
mod space;
mod study;

pub use search::{
    grid_search, random_search, rank, run_trials, sample_configs, write_trials_csv, write_trials_csv_to, SearchReport,
    TrialConfig, TrialResult,
};
pub use space::{Grid, SearchSpace};
pub use study::{
    seed_study, seed_study_with_seeds, write_roc_points_csv, write_seed_rows, write_seed_study_csv, write_summary_rows,
    Aggregate, SeedResult,
    SeedStudyReport, STUDY_METRICS,
};

use crate::error::{Error, Result};

/// Runs `f` on a pool of `workers` threads; zero uses the default pool size.
pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}
