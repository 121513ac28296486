use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::readout::{assemble_delayed_features, drive_normalized, train_ridge, DelaySpec};
use crate::reservoir::{Reservoir, ReservoirConfig};
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::series::{Normalization, TimeSeries};

use super::parallel_map;
use super::sweep::median;

/// Relative validation improvement below which the dimension ladder stops.
pub const ELBOW_IMPROVEMENT: f64 = 0.05;
/// Normalized MSE treated as exact.
pub const PLATEAU_FLOOR: f64 = 1e-12;

/// How a target effective dimension `d` is split into neurons and lags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimensionPolicy {
    /// `d` neurons without delays.
    Neurons,
    /// A fixed neuron count; lags differ by at most one across neurons.
    FixedNeurons { neurons: usize, tau: usize },
    /// A fixed lag count; `⌈d / n_lag⌉` neurons, the last one taking the
    /// remainder.
    FixedLag { n_lag: usize, tau: usize },
}

impl DimensionPolicy {
    pub fn layout(&self, d: usize) -> Result<DelaySpec> {
        ensure(d >= 1, || "effective dimension must be at least 1".into())?;
        match *self {
            Self::Neurons => Ok(DelaySpec::undelayed(d)),
            Self::FixedNeurons { neurons, tau } => {
                ensure(neurons >= 1 && d >= neurons, || {
                    format!("dimension {d} cannot be spread over {neurons} neurons")
                })?;
                let lags = (0..neurons)
                    .map(|i| d / neurons + usize::from(i < d % neurons))
                    .collect();
                DelaySpec::new(tau, lags)
            }
            Self::FixedLag { n_lag, tau } => {
                ensure(n_lag >= 1, || "n_lag must be at least 1".into())?;
                let full = d / n_lag;
                let mut lags = vec![n_lag; full];
                if !d.is_multiple_of(n_lag) {
                    lags.push(d % n_lag);
                }
                DelaySpec::new(tau, lags)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct DimensionSpec<T: Real> {
    /// `neurons` and `seed` are overridden per evaluation.
    pub template: ReservoirConfig<T>,
    pub d_list: Vec<usize>,
    pub policy: DimensionPolicy,
    pub beta: T,
    pub washout: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Fraction of the series used for training; the rest validates.
    pub train_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DimensionRow<T: Real> {
    pub d: usize,
    pub neurons: usize,
    pub train_mse: Option<T>,
    pub validation_mse: Option<T>,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DimensionReport<T: Real> {
    pub rows: Vec<DimensionRow<T>>,
    pub recommended: usize,
}

impl<T: Real> DimensionReport<T> {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["d", "neurons", "train_mse", "validation_mse", "failures", "recommended"])?;
        let opt = |v: Option<T>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.d.to_string(),
                r.neurons.to_string(),
                opt(r.train_mse),
                opt(r.validation_mse),
                r.failures.to_string(),
                (r.d == self.recommended).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Smallest `d_i` whose validation MSE improves on the previous successful
/// entry by less than [`ELBOW_IMPROVEMENT`]; the last entry when none does.
pub fn elbow<T: Real>(rows: &[DimensionRow<T>]) -> Option<usize> {
    let ok: Vec<(usize, T)> = rows.iter().filter_map(|r| r.validation_mse.map(|v| (r.d, v))).collect();
    for w in ok.windows(2) {
        let (prev, cur) = (w[0].1, w[1].1);
        // an MSE at rounding level counts as a plateau
        let improvement = if prev > T::of(PLATEAU_FLOOR) {
            (prev - cur) / prev
        } else {
            T::zero()
        };
        if improvement < T::of(ELBOW_IMPROVEMENT) {
            return Some(w[1].0);
        }
    }
    ok.last().map(|&(d, _)| d)
}

/// Train and validation one-step MSE (normalized units) versus effective
/// dimension, with the elbow recommendation.
pub fn dimension_test<T: Real>(
    series: &TimeSeries<T>,
    spec: &DimensionSpec<T>,
    jobs: usize,
) -> Result<DimensionReport<T>> {
    ensure(!spec.d_list.is_empty(), || "d_list must not be empty".into())?;
    ensure(spec.d_list.windows(2).all(|w| w[0] < w[1]), || {
        "d_list must be strictly ascending".into()
    })?;
    ensure(spec.repeats >= 1, || "dimension test needs at least one repeat".into())?;
    ensure(spec.train_fraction > 0.0 && spec.train_fraction < 1.0, || {
        "train_fraction must lie strictly between 0 and 1".into()
    })?;
    let layouts = spec
        .d_list
        .iter()
        .map(|&d| spec.policy.layout(d))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..layouts.len())
        .flat_map(|i| (0..spec.repeats).map(move |r| (i, r)))
        .collect();
    let results = parallel_map(jobs, &tasks, |&(i, r)| {
        let seed = derive_seed(spec.seed, "dimension-test", &[i as u64, r as u64]);
        evaluate(series, spec, &layouts[i], seed)
    })?;
    let mut rows = Vec::with_capacity(layouts.len());
    for (i, layout) in layouts.iter().enumerate() {
        let cell = &results[i * spec.repeats..(i + 1) * spec.repeats];
        let ok: Vec<&(T, T)> = cell.iter().filter_map(|r| r.as_ref().ok()).collect();
        rows.push(DimensionRow {
            d: spec.d_list[i],
            neurons: layout.neurons(),
            train_mse: median(ok.iter().map(|p| p.0).collect()),
            validation_mse: median(ok.iter().map(|p| p.1).collect()),
            failures: cell.len() - ok.len(),
        });
    }
    let recommended = match elbow(&rows) {
        Some(d) => d,
        None => {
            let msg = results
                .iter()
                .find_map(|r| r.as_ref().err().map(|e| e.to_string()))
                .unwrap_or_default();
            return Err(Error::Solve(format!("every dimension-test evaluation failed: {msg}")));
        }
    };
    Ok(DimensionReport { rows, recommended })
}

fn evaluate<T: Real>(series: &TimeSeries<T>, spec: &DimensionSpec<T>, layout: &DelaySpec, seed: u64) -> Result<(T, T)> {
    let n = series.n_steps();
    let split = ((n as f64) * spec.train_fraction).round() as usize;
    let mut cfg = spec.template.clone();
    cfg.neurons = layout.neurons();
    cfg.seed = seed;
    let res = Reservoir::build(&cfg)?;
    let norm = Normalization::fit(&series.slice(0, split)?);
    let (x, states) = drive_normalized(&res, &norm, series, spec.washout)?;
    let features = assemble_delayed_features(&states, layout)?;
    // feature column k predicts x_{k+1}
    if features.first + 1 >= split || split >= n {
        return Err(Error::InsufficientData(format!(
            "split at step {split} leaves no training or validation pairs (first feature at {})",
            features.first
        )));
    }
    let n_train = split - 1 - features.first;
    let r_train = features.matrix.columns(0, n_train).into_owned();
    let y_train = x.columns(features.first + 1, n_train).into_owned();
    let w = train_ridge(&r_train, &y_train, spec.beta)?.w_out;
    let n_val = n - split;
    let r_val = features.matrix.columns(n_train, n_val).into_owned();
    let y_val = x.columns(split, n_val).into_owned();
    let mean_sq = |e: nalgebra::DMatrix<T>| e.norm_squared() / T::of_usize(e.len());
    Ok((mean_sq(&y_train - &w * r_train), mean_sq(&y_val - &w * r_val)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::Activation;
    use nalgebra::DMatrix;

    fn row(d: usize, v: Option<f64>) -> DimensionRow<f64> {
        DimensionRow {
            d,
            neurons: d,
            train_mse: v,
            validation_mse: v,
            failures: usize::from(v.is_none()),
        }
    }

    #[test]
    fn elbow_rule() {
        let rows = vec![
            row(1, Some(1.0)),
            row(2, Some(0.5)),
            row(4, Some(0.49)),
            row(8, Some(0.1)),
        ];
        assert_eq!(elbow(&rows), Some(4));
        assert_eq!(elbow(&rows[..2]), Some(2));
        assert_eq!(elbow(&[row(3, Some(0.2))]), Some(3));
        assert_eq!(elbow(&[row(1, Some(1.0)), row(2, None), row(3, Some(0.99))]), Some(3));
    }

    #[test]
    fn layouts_sum_to_d() {
        for d in 1..30 {
            assert_eq!(DimensionPolicy::Neurons.layout(d).unwrap().effective_dimension(), d);
            let f = DimensionPolicy::FixedLag { n_lag: 4, tau: 2 }.layout(d).unwrap();
            assert_eq!(f.effective_dimension(), d);
            if d >= 3 {
                let g = DimensionPolicy::FixedNeurons { neurons: 3, tau: 1 }.layout(d).unwrap();
                assert_eq!((g.effective_dimension(), g.neurons()), (d, 3));
            }
        }
        assert!(DimensionPolicy::FixedNeurons { neurons: 3, tau: 1 }.layout(2).is_err());
    }

    fn linear_spec(d_list: Vec<usize>) -> DimensionSpec<f64> {
        let mut template = ReservoirConfig::new(1, 1, 0);
        template.activation = Activation::Identity;
        template.spectral_radius = 0.5;
        template.density = 1.0;
        DimensionSpec {
            template,
            d_list,
            policy: DimensionPolicy::FixedNeurons { neurons: 1, tau: 1 },
            beta: 1e-12,
            washout: 100,
            repeats: 1,
            seed: 3,
            train_fraction: 0.8,
        }
    }

    #[test]
    fn linear_teacher_saturates_at_small_dimension() {
        // a sampled sinusoid obeys x_{k+1} = 2cos(ω) x_k − x_{k−1}; a linear
        // neuron's current and previous states span the map exactly
        let n = 1500;
        let series = TimeSeries::unnamed(DMatrix::from_fn(1, n, |_, k| (0.3 * k as f64).sin()), 1.0).unwrap();
        let report = dimension_test(&series, &linear_spec(vec![1, 2, 3, 4, 5, 6, 8]), 2).unwrap();
        assert!(report.recommended <= 4, "{report:?}");
        let at = |d: usize| report.rows.iter().find(|r| r.d == d).unwrap().validation_mse.unwrap();
        assert!(at(4) < 1e-12 && at(8) < 1e-12, "{report:?}");
    }

    #[test]
    fn single_entry_is_recommended() {
        let series = TimeSeries::unnamed(DMatrix::from_fn(1, 500, |_, k| (k as f64 * 0.2).sin()), 1.0).unwrap();
        let report = dimension_test(&series, &linear_spec(vec![5]), 1).unwrap();
        assert_eq!(report.recommended, 5);
        assert_eq!(report.rows.len(), 1);
    }
}
