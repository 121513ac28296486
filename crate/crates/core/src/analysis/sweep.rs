use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::readout::{train_readout, DelaySpec, TrainOptions};
use crate::reservoir::{Reservoir, ReservoirConfig};
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::series::TimeSeries;

use super::parallel_map;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
#[serde(bound = "")]
pub enum CellOutcome<T: Real> {
    Mse(T),
    Failed(String),
}

impl<T: Real> CellOutcome<T> {
    pub fn mse(&self) -> Option<T> {
        match self {
            Self::Mse(v) => Some(*v),
            Self::Failed(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SweepCell<T: Real> {
    pub neurons: usize,
    pub n_lag: usize,
    pub repeat: usize,
    pub seed: u64,
    pub outcome: CellOutcome<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SweepResult<T: Real> {
    pub neurons: Vec<usize>,
    pub lags: Vec<usize>,
    pub repeats: usize,
    pub tau: usize,
    pub beta: T,
    pub seed_base: u64,
    /// Ordered by neuron index, then lag index, then repeat.
    pub cells: Vec<SweepCell<T>>,
}

impl<T: Real> SweepResult<T> {
    pub fn cell(&self, neuron_index: usize, lag_index: usize) -> &[SweepCell<T>] {
        let start = (neuron_index * self.lags.len() + lag_index) * self.repeats;
        &self.cells[start..start + self.repeats]
    }

    /// Median training MSE of one grid cell over its successful repeats.
    pub fn median(&self, neuron_index: usize, lag_index: usize) -> Option<T> {
        let values: Vec<T> = self
            .cell(neuron_index, lag_index)
            .iter()
            .filter_map(|c| c.outcome.mse())
            .collect();
        median(values)
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.mse().is_none()).count()
    }

    /// Tidy CSV, one row per cell and repeat.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "neurons",
            "n_lag",
            "tau",
            "repeat",
            "seed",
            "status",
            "training_mse",
            "message",
        ])?;
        for c in &self.cells {
            let (status, mse, msg) = match &c.outcome {
                CellOutcome::Mse(v) => ("ok", format!("{v:e}"), String::new()),
                CellOutcome::Failed(m) => ("failed", String::new(), m.clone()),
            };
            w.write_record([
                c.neurons.to_string(),
                c.n_lag.to_string(),
                self.tau.to_string(),
                c.repeat.to_string(),
                c.seed.to_string(),
                status.into(),
                mse,
                msg,
            ])?;
        }
        w.flush().map_err(|e| crate::Error::io("<csv>", e))
    }
}

pub fn median<T: Real>(mut values: Vec<T>) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / T::of(2.0)
    })
}

#[derive(Clone, Debug)]
pub struct SweepSpec<T: Real> {
    /// Reservoir settings shared by every cell; `neurons` and `seed` are
    /// overridden per cell.
    pub template: ReservoirConfig<T>,
    pub neurons: Vec<usize>,
    pub lags: Vec<usize>,
    pub tau: usize,
    pub train: TrainOptions<T>,
    pub repeats: usize,
    pub seed: u64,
}

/// Reservoir seed of grid cell `(i, j)`, repeat `r`.
pub fn sweep_cell_seed(base: u64, i: usize, j: usize, r: usize) -> u64 {
    derive_seed(base, "sweep-cell", &[i as u64, j as u64, r as u64])
}

/// Training MSE over the neuron × lag grid, `repeats` fresh reservoirs per
/// cell, evaluated on up to `jobs` threads.
pub fn tradeoff_grid<T: Real>(series: &TimeSeries<T>, spec: &SweepSpec<T>, jobs: usize) -> Result<SweepResult<T>> {
    ensure(!spec.neurons.is_empty() && !spec.lags.is_empty(), || {
        "sweep needs non-empty neuron and lag lists".into()
    })?;
    ensure(spec.repeats >= 1, || "sweep needs at least one repeat".into())?;
    ensure(
        spec.neurons.iter().all(|&n| n >= 1) && spec.lags.iter().all(|&l| l >= 1),
        || "neuron and lag counts must be positive".into(),
    )?;
    let mut tasks = Vec::new();
    for (i, &n) in spec.neurons.iter().enumerate() {
        for (j, &l) in spec.lags.iter().enumerate() {
            for r in 0..spec.repeats {
                tasks.push((i, j, r, n, l));
            }
        }
    }
    let cells = parallel_map(jobs, &tasks, |&(i, j, r, n, l)| {
        let seed = sweep_cell_seed(spec.seed, i, j, r);
        let outcome = match run_cell(series, spec, n, l, seed) {
            Ok(v) => CellOutcome::Mse(v),
            Err(e) => CellOutcome::Failed(e.to_string()),
        };
        SweepCell {
            neurons: n,
            n_lag: l,
            repeat: r,
            seed,
            outcome,
        }
    })?;
    Ok(SweepResult {
        neurons: spec.neurons.clone(),
        lags: spec.lags.clone(),
        repeats: spec.repeats,
        tau: spec.tau,
        beta: spec.train.beta,
        seed_base: spec.seed,
        cells,
    })
}

fn run_cell<T: Real>(
    series: &TimeSeries<T>,
    spec: &SweepSpec<T>,
    neurons: usize,
    n_lag: usize,
    seed: u64,
) -> Result<T> {
    let mut cfg = spec.template.clone();
    cfg.neurons = neurons;
    cfg.seed = seed;
    let res = Reservoir::build(&cfg)?;
    let delays = DelaySpec::uniform(neurons, n_lag, spec.tau)?;
    let trained = train_readout(&res, series, &delays, &spec.train)?;
    if trained.training_mse.finite() {
        Ok(trained.training_mse)
    } else {
        Err(crate::Error::NonFinite("training MSE".into()))
    }
}
