//! Delayed readouts: feature assembly, ridge training, open- and closed-loop
//! prediction.

mod delay;
mod ridge;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::reservoir::{Reservoir, StateSequence};
use crate::scalar::Real;
use crate::series::{Normalization, TimeSeries};

pub use delay::{assemble_delayed_features, DelaySpec, DelayedFeatures, LagDistribution};
pub use ridge::{ridge_loss, train_ridge, RidgeSolution, CONDITION_LIMIT, SVD_CUTOFF};

/// Trained output layer together with everything needed to replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ReadoutModel<T: Real> {
    /// `l × d` weights, `l × (d+1)` when `bias` is set (constant feature last).
    pub w_out: DMatrix<T>,
    pub delay_spec: DelaySpec,
    pub beta: T,
    /// Applied to inputs before driving the reservoir; inverted on outputs.
    pub normalization: Normalization<T>,
    pub bias: bool,
    /// Transient prefix discarded during training.
    pub washout: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainOptions<T: Real> {
    pub beta: T,
    pub washout: usize,
    /// Standardize each input variable on the training data.
    pub normalize: bool,
    /// Append a constant feature.
    pub bias: bool,
}

impl<T: Real> TrainOptions<T> {
    pub fn new(beta: T, washout: usize) -> Self {
        Self {
            beta,
            washout,
            normalize: true,
            bias: false,
        }
    }
}

/// Output of [`train_readout`].
#[derive(Clone, Debug)]
pub struct TrainedReadout<T: Real> {
    pub model: ReadoutModel<T>,
    /// One-step MSE on the (normalized) training targets.
    pub training_mse: T,
    pub used_fallback: bool,
    pub condition_estimate: T,
    pub samples: usize,
}

impl<T: Real> ReadoutModel<T> {
    pub fn outputs(&self) -> usize {
        self.w_out.nrows()
    }

    /// Columns `w_out` expects: `d`, plus one with a bias.
    pub fn feature_width(&self) -> usize {
        self.delay_spec.effective_dimension() + usize::from(self.bias)
    }

    /// Minimum warmup for closed-loop prediction.
    pub fn required_warmup(&self) -> usize {
        self.washout + self.delay_spec.depth() + 1
    }

    /// `y = W_out r̃` per column, in normalized units.
    pub fn apply(&self, features: &DMatrix<T>) -> Result<DMatrix<T>> {
        let d = self.delay_spec.effective_dimension();
        if features.nrows() != d {
            return Err(Error::DimensionMismatch(format!(
                "model expects {d} delayed features, got {}",
                features.nrows()
            )));
        }
        if self.bias {
            Ok(self.w_out.columns(0, d) * features
                + self.w_out.column(d) * DMatrix::from_element(1, features.ncols(), T::one()))
        } else {
            Ok(&self.w_out * features)
        }
    }

    /// Teacher-forced predictions, de-normalized.
    pub fn predict_open_loop(&self, features: &DelayedFeatures<T>, dt: T) -> Result<TimeSeries<T>> {
        let y = self.apply(&features.matrix)?;
        TimeSeries::unnamed(self.normalization.invert_matrix(&y), dt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile<T> = serde_json::from_str(&text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Config(format!("unsupported model format `{}`", file.format)));
        }
        Ok(file.model)
    }
}

const MODEL_FORMAT: &str = "delay-rc/readout/v1";

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct ModelFile<T: Real> {
    format: String,
    model: ReadoutModel<T>,
}

fn with_bias<T: Real>(features: &DMatrix<T>, bias: bool) -> DMatrix<T> {
    if bias {
        let mut f = features.clone().insert_row(features.nrows(), T::one());
        f.row_mut(features.nrows()).fill(T::one());
        f
    } else {
        features.clone()
    }
}

fn check_series<T: Real>(res: &Reservoir<T>, series: &TimeSeries<T>) -> Result<()> {
    if series.n_vars() != res.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "reservoir has {} inputs, series has {} variables",
            res.inputs(),
            series.n_vars()
        )));
    }
    Ok(())
}

/// Drives `res` with the (normalized) series from the zero state.
pub fn drive_normalized<T: Real>(
    res: &Reservoir<T>,
    norm: &Normalization<T>,
    series: &TimeSeries<T>,
    washout: usize,
) -> Result<(DMatrix<T>, StateSequence<T>)> {
    check_series(res, series)?;
    let x = norm.apply_matrix(series.values());
    let zero = vec![T::zero(); res.neurons()];
    let states = res.drive_matrix(&x, &zero)?.with_washout(washout);
    Ok((x, states))
}

/// Trains `W_out` so that feature column `k` predicts input `x_{k+1}`.
pub fn train_readout<T: Real>(
    res: &Reservoir<T>,
    series: &TimeSeries<T>,
    spec: &DelaySpec,
    opts: &TrainOptions<T>,
) -> Result<TrainedReadout<T>> {
    check_series(res, series)?;
    let norm = if opts.normalize {
        Normalization::fit(series)
    } else {
        Normalization::identity(series.n_vars())
    };
    let (x, states) = drive_normalized(res, &norm, series, opts.washout)?;
    let features = assemble_delayed_features(&states, spec)?;
    let n = series.n_steps();
    if features.end() < 2 || features.first + 1 >= n {
        return Err(Error::InsufficientData(format!(
            "no training pairs: first valid feature at step {}, series has {n} steps",
            features.first
        )));
    }
    // pairs (r̃_k, x_{k+1}) for k = first .. n−2
    let count = n - 1 - features.first;
    let r = with_bias(&features.matrix.columns(0, count).into_owned(), opts.bias);
    let y = x.columns(features.first + 1, count).into_owned();
    let sol = train_ridge(&r, &y, opts.beta)?;
    let resid = &y - &sol.w_out * &r;
    let training_mse = resid.norm_squared() / T::of_usize(resid.len());
    Ok(TrainedReadout {
        model: ReadoutModel {
            w_out: sol.w_out,
            delay_spec: spec.clone(),
            beta: opts.beta,
            normalization: norm,
            bias: opts.bias,
            washout: opts.washout,
        },
        training_mse,
        used_fallback: sol.used_fallback,
        condition_estimate: sol.condition_estimate,
        samples: count,
    })
}

/// Teacher-forced one-step predictions over `series` aligned with the true
/// next values, both in original units: `(predicted, truth)`.
pub fn one_step_predictions<T: Real>(
    res: &Reservoir<T>,
    model: &ReadoutModel<T>,
    series: &TimeSeries<T>,
) -> Result<(TimeSeries<T>, TimeSeries<T>)> {
    let (_, states) = drive_normalized(res, &model.normalization, series, model.washout)?;
    let features = assemble_delayed_features(&states, &model.delay_spec)?;
    let n = series.n_steps();
    ensure(features.first + 1 < n, || {
        "series too short for one-step predictions".into()
    })?;
    let count = n - 1 - features.first;
    let y = model.apply(&features.matrix.columns(0, count).into_owned())?;
    let pred = TimeSeries::new(
        model.normalization.invert_matrix(&y),
        series.dt(),
        series.var_names().to_vec(),
    )?;
    let truth = series.slice(features.first + 1, n)?;
    Ok((pred, truth))
}

/// Last `depth + 1` reservoir states.
struct StateRing<T> {
    slots: Vec<Vec<T>>,
    head: usize,
}

impl<T: Real> StateRing<T> {
    fn new(cap: usize, neurons: usize) -> Self {
        Self {
            slots: vec![vec![T::zero(); neurons]; cap],
            head: cap - 1,
        }
    }

    fn push(&mut self, state: &[T]) {
        self.head = (self.head + 1) % self.slots.len();
        self.slots[self.head].copy_from_slice(state);
    }

    fn back(&self, steps: usize) -> &[T] {
        let cap = self.slots.len();
        &self.slots[(self.head + cap - steps % cap) % cap]
    }
}

/// Autonomous prediction: drive with `warmup`, then feed each output back as
/// the next input for `n_steps` steps. The first output predicts the step
/// right after the warmup.
pub fn predict_closed_loop<T: Real>(
    res: &Reservoir<T>,
    model: &ReadoutModel<T>,
    warmup: &TimeSeries<T>,
    n_steps: usize,
) -> Result<TimeSeries<T>> {
    check_series(res, warmup)?;
    if model.outputs() != res.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "closed loop needs as many outputs ({}) as reservoir inputs ({})",
            model.outputs(),
            res.inputs()
        )));
    }
    if model.delay_spec.neurons() != res.neurons() {
        return Err(Error::DimensionMismatch(format!(
            "model delay spec covers {} neurons, reservoir has {}",
            model.delay_spec.neurons(),
            res.neurons()
        )));
    }
    let required = model.required_warmup();
    if warmup.n_steps() < required {
        return Err(Error::WarmupTooShort {
            required,
            got: warmup.n_steps(),
        });
    }
    let m = res.neurons();
    let spec = &model.delay_spec;
    let mut ring = StateRing::new(spec.depth() + 1, m);
    let mut state = vec![T::zero(); m];
    let mut scratch = vec![T::zero(); m];
    let x = model.normalization.apply_matrix(warmup.values());
    for col in x.column_iter() {
        res.step(&mut state, col.as_slice(), &mut scratch);
        ring.push(&state);
    }

    let d = spec.effective_dimension();
    let mut feat = vec![T::zero(); d];
    let mut out = DMatrix::zeros(model.outputs(), n_steps);
    for k in 0..n_steps {
        spec.fill(|i, back| ring.back(back)[i], &mut feat);
        let y = model.apply(&DMatrix::from_column_slice(d, 1, &feat))?;
        let y = DVector::from_column_slice(y.as_slice());
        out.column_mut(k).copy_from(&y);
        res.step(&mut state, y.as_slice(), &mut scratch);
        ring.push(&state);
    }
    TimeSeries::new(
        model.normalization.invert_matrix(&out),
        warmup.dt(),
        warmup.var_names().to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{Activation, CsrMatrix, ReservoirConfig};

    fn sine_series(n: usize) -> TimeSeries<f64> {
        TimeSeries::unnamed(DMatrix::from_fn(2, n, |i, k| ((k as f64) * 0.1 + i as f64).sin()), 0.1).unwrap()
    }

    #[test]
    fn zero_weights_predict_the_offset() {
        let model = ReadoutModel {
            w_out: DMatrix::zeros(1, 2),
            delay_spec: DelaySpec::undelayed(2),
            beta: 0.0,
            normalization: Normalization {
                offset: vec![3.0],
                scale: vec![2.0],
            },
            bias: false,
            washout: 0,
        };
        let f = DelayedFeatures {
            matrix: DMatrix::from_element(2, 4, 0.7),
            first: 0,
        };
        let y = model.predict_open_loop(&f, 1.0).unwrap();
        assert!(y.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn warmup_too_short_names_the_minimum() {
        let res = Reservoir::build(&ReservoirConfig::new(10, 2, 1)).unwrap();
        let series = sine_series(300);
        let spec = DelaySpec::uniform(10, 3, 2).unwrap();
        let trained = train_readout(&res, &series, &spec, &TrainOptions::new(1e-6, 20)).unwrap();
        let need = trained.model.required_warmup();
        assert_eq!(need, 20 + 4 + 1);
        match predict_closed_loop(&res, &trained.model, &series.slice(0, need - 1).unwrap(), 5) {
            Err(Error::WarmupTooShort { required, got }) => {
                assert_eq!((required, got), (need, need - 1))
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(predict_closed_loop(&res, &trained.model, &series.slice(0, need).unwrap(), 5).is_ok());
    }

    #[test]
    fn first_autonomous_step_equals_open_loop() {
        let res = Reservoir::build(&ReservoirConfig::new(30, 2, 2)).unwrap();
        let series = sine_series(600);
        let spec = DelaySpec::uniform(30, 2, 3).unwrap();
        let trained = train_readout(&res, &series, &spec, &TrainOptions::new(1e-6, 50)).unwrap();
        let warm = series.slice(0, 400).unwrap();
        let auto = predict_closed_loop(&res, &trained.model, &warm, 3).unwrap();
        let (open, _) = one_step_predictions(&res, &trained.model, &series.slice(0, 401).unwrap()).unwrap();
        let last = open.column(open.n_steps() - 1);
        for v in 0..2 {
            assert!((auto.values()[(v, 0)] - last[v]).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_linear_map_is_reproduced_in_closed_loop() {
        // linear reservoir driven by a rotation: states are an exact linear
        // function of the current input, so the one-step map is learnable
        let theta: f64 = 0.2;
        let n = 600;
        let values = DMatrix::from_fn(2, n, |i, k| {
            let a = theta * k as f64;
            if i == 0 {
                a.cos()
            } else {
                a.sin()
            }
        });
        let series = TimeSeries::unnamed(values, 1.0).unwrap();
        let mut cfg = ReservoirConfig::<f64>::new(6, 2, 3);
        cfg.activation = Activation::Identity;
        cfg.input_scale = 1.0;
        let w_res = DMatrix::from_fn(6, 6, |i, j| if (i + 1) % 6 == j { 0.5 } else { 0.0 });
        let w_in = DMatrix::from_fn(6, 2, |i, j| ((i * 2 + j) as f64 * 0.7).sin());
        let res = Reservoir::from_parts(cfg, w_in, CsrMatrix::from_dense(&w_res)).unwrap();
        for spec in [DelaySpec::undelayed(6), DelaySpec::uniform(6, 3, 4).unwrap()] {
            let mut opts = TrainOptions::new(0.0, 100);
            opts.normalize = false;
            let trained = train_readout(&res, &series, &spec, &opts).unwrap();
            assert!(trained.training_mse < 1e-20);
            let warm = series.slice(0, 300).unwrap();
            let auto = predict_closed_loop(&res, &trained.model, &warm, 100).unwrap();
            let truth = series.slice(300, 400).unwrap();
            let err = (auto.values() - truth.values()).abs().max();
            assert!(err < 1e-6, "max error {err} with {} lags", spec.depth());
        }
    }

    #[test]
    fn bias_feature_fits_offsets() {
        let res = Reservoir::build(&ReservoirConfig::new(20, 2, 4)).unwrap();
        let series = sine_series(500);
        let spec = DelaySpec::undelayed(20);
        let mut opts = TrainOptions::new(1e-8, 50);
        opts.bias = true;
        let trained = train_readout(&res, &series, &spec, &opts).unwrap();
        assert_eq!(trained.model.w_out.ncols(), 21);
        assert_eq!(trained.model.feature_width(), 21);
        let (pred, truth) = one_step_predictions(&res, &trained.model, &series).unwrap();
        assert_eq!(pred.n_steps(), truth.n_steps());
    }

    #[test]
    fn model_file_round_trip() {
        let res = Reservoir::build(&ReservoirConfig::new(8, 2, 6)).unwrap();
        let trained = train_readout(
            &res,
            &sine_series(200),
            &DelaySpec::uniform(8, 2, 1).unwrap(),
            &TrainOptions::new(1e-4, 10),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        trained.model.save(&path).unwrap();
        assert_eq!(ReadoutModel::<f64>::load(&path).unwrap(), trained.model);
    }
}
