//! Quantitative probes: prediction errors, climate matching, memory capacity,
//! the neuron × lag trade-off grid, the dimension test, delayed mutual
//! information and the lag budget.

mod budget;
mod dimension;
mod dmi;
mod memory;
mod metrics;
mod sweep;

pub use budget::{lag_budget_check, LagBudget};
pub use dimension::{
    dimension_test, elbow, DimensionPolicy, DimensionReport, DimensionRow, DimensionSpec, ELBOW_IMPROVEMENT,
    PLATEAU_FLOOR,
};
pub use dmi::{
    binned_entropy, delayed_mutual_information, dmi_of_traces, mi_bias, mutual_information, neuron_dmi, recommend_tau,
    DmiCurve, SAMPLES_PER_BIN,
};
pub use memory::{memory_capacity, recall_capacity, squared_correlation, MCResult, MemoryOptions, MC_SLACK};
pub use metrics::{
    climate_test, mse, mse_with, normalized_error_curve, valid_prediction_time, ClimateOptions, ClimateReport,
    DEFAULT_VPT_THRESHOLD,
};
pub use sweep::{median, sweep_cell_seed, tradeoff_grid, CellOutcome, SweepCell, SweepResult, SweepSpec};

use crate::error::{Error, Result};

/// Maps `f` over `items` on a pool of `jobs` threads (0 means one per core).
/// Output order follows input order, so results do not depend on `jobs`.
pub fn parallel_map<I, O, F>(jobs: usize, items: &[I], f: F) -> Result<Vec<O>>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Send + Sync,
{
    use rayon::prelude::*;
    if jobs == 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}
