//! Fixed random reservoirs and the leaky state recursion
//! `r_k = (1−α)·r_{k−1} + α·φ(W_res·r_{k−1} + W_in·x_k)`.

mod sparse;
mod spectral;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng;
use crate::scalar::Real;
use crate::series::TimeSeries;

pub use sparse::CsrMatrix;
pub use spectral::{spectral_radius, spectral_radius_dense, spectral_radius_power, PowerOptions, DENSE_LIMIT};

/// Neuron nonlinearity `φ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Linear neurons; only meant for diagnostics with exactly solvable readouts.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ReservoirConfig<T: Real> {
    pub neurons: usize,
    pub inputs: usize,
    pub spectral_radius: T,
    pub input_scale: T,
    /// Fraction of nonzero recurrent weights, in `(0, 1]`.
    pub density: T,
    /// Leakage factor α. `0` is accepted as the degenerate frozen reservoir.
    pub leak: T,
    #[serde(default)]
    pub activation: Activation,
    pub seed: u64,
}

impl<T: Real> ReservoirConfig<T> {
    /// Defaults ρ = 0.9, σ_in = 0.1, density 0.05, α = 1, tanh.
    pub fn new(neurons: usize, inputs: usize, seed: u64) -> Self {
        Self {
            neurons,
            inputs,
            spectral_radius: T::of(0.9),
            input_scale: T::of(0.1),
            density: T::of(0.05),
            leak: T::one(),
            activation: Activation::Tanh,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.neurons >= 1, || "reservoir needs at least one neuron".into())?;
        ensure(self.inputs >= 1, || "reservoir needs at least one input".into())?;
        ensure(
            self.spectral_radius >= T::zero() && self.spectral_radius.finite(),
            || format!("spectral radius must be non-negative, got {}", self.spectral_radius),
        )?;
        ensure(self.input_scale >= T::zero() && self.input_scale.finite(), || {
            format!("input scale must be non-negative, got {}", self.input_scale)
        })?;
        ensure(self.density > T::zero() && self.density <= T::one(), || {
            format!("density must lie in (0, 1], got {}", self.density)
        })?;
        ensure(self.leak >= T::zero() && self.leak <= T::one(), || {
            format!("leak must lie in [0, 1], got {}", self.leak)
        })
    }
}

/// Reservoir states, one column per input step.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSequence<T: Real> {
    pub states: DMatrix<T>,
    /// Leading columns treated as transient.
    pub washout: usize,
}

impl<T: Real> StateSequence<T> {
    pub fn new(states: DMatrix<T>, washout: usize) -> Self {
        Self { states, washout }
    }

    pub fn with_washout(mut self, washout: usize) -> Self {
        self.washout = washout;
        self
    }

    pub fn neurons(&self) -> usize {
        self.states.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.states.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EchoStateReport<T> {
    pub converged: bool,
    /// Largest pairwise distance between trial trajectories at each step.
    pub distances: Vec<T>,
}

/// The frozen triple `(W_in, W_res, α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reservoir<T: Real> {
    w_in: DMatrix<T>,
    w_res: CsrMatrix<T>,
    config: ReservoirConfig<T>,
    achieved_spectral_radius: T,
}

impl<T: Real> Reservoir<T> {
    /// Samples `W_in ~ U[−σ_in, σ_in]` and an Erdős–Rényi `W_res` with
    /// `U[−1, 1]` nonzeros, then rescales `W_res` to the requested radius.
    pub fn build(config: &ReservoirConfig<T>) -> Result<Self> {
        config.validate()?;
        let (m, n) = (config.neurons, config.inputs);
        let mut in_stream = rng::child_stream(config.seed, "w_in", &[]);
        let w_in = DMatrix::from_fn(m, n, |_, _| rng::symmetric(&mut in_stream, config.input_scale));

        let mut res_stream = rng::child_stream(config.seed, "w_res", &[]);
        let rows: Vec<Vec<(usize, T)>> = (0..m)
            .map(|_| {
                (0..m)
                    .filter_map(|j| {
                        let keep = rng::unit::<T, _>(&mut res_stream) < config.density;
                        let v: T = rng::symmetric(&mut res_stream, T::one());
                        keep.then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        let mut w_res = CsrMatrix::from_rows(m, rows);

        let raw = spectral_radius(&w_res);
        if config.spectral_radius == T::zero() {
            w_res.scale(T::zero());
        } else if raw == T::zero() {
            return Err(Error::Construction(format!(
                "sampled recurrent matrix ({m}x{m}, density {}) has zero spectral radius; \
                 increase density or change the seed",
                config.density
            )));
        } else {
            w_res.scale(config.spectral_radius / raw);
        }
        Self::from_parts(config.clone(), w_in, w_res)
    }

    /// Assembles a reservoir from explicit matrices.
    pub fn from_parts(config: ReservoirConfig<T>, w_in: DMatrix<T>, w_res: CsrMatrix<T>) -> Result<Self> {
        config.validate()?;
        let (m, n) = (config.neurons, config.inputs);
        if w_in.shape() != (m, n) || (w_res.nrows(), w_res.ncols()) != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "expected W_in {m}x{n} and W_res {m}x{m}, got {:?} and {}x{}",
                w_in.shape(),
                w_res.nrows(),
                w_res.ncols()
            )));
        }
        let achieved_spectral_radius = spectral_radius(&w_res);
        Ok(Self {
            w_in,
            w_res,
            config,
            achieved_spectral_radius,
        })
    }

    pub fn config(&self) -> &ReservoirConfig<T> {
        &self.config
    }

    pub fn neurons(&self) -> usize {
        self.config.neurons
    }

    pub fn inputs(&self) -> usize {
        self.config.inputs
    }

    pub fn w_in(&self) -> &DMatrix<T> {
        &self.w_in
    }

    pub fn w_res(&self) -> &CsrMatrix<T> {
        &self.w_res
    }

    pub fn achieved_spectral_radius(&self) -> T {
        self.achieved_spectral_radius
    }

    /// One recursion step in place: `state ← RN(state, input)`.
    pub fn step(&self, state: &mut [T], input: &[T], scratch: &mut [T]) {
        self.w_res.mul_vec(state, scratch);
        let drive = &self.w_in * DVector::from_column_slice(input);
        self.mix(state, scratch, drive.as_slice());
    }

    #[inline]
    fn mix(&self, state: &mut [T], recurrent: &[T], drive: &[T]) {
        let alpha = self.config.leak;
        let keep = T::one() - alpha;
        let act = self.config.activation;
        for ((s, &rec), &u) in state.iter_mut().zip(recurrent).zip(drive) {
            *s = keep * *s + alpha * act.apply(rec + u);
        }
    }

    /// Drives the reservoir from `r0`; column `k` holds the state after
    /// consuming input column `k`.
    pub fn drive(&self, inputs: &TimeSeries<T>, r0: &[T]) -> Result<StateSequence<T>> {
        self.drive_matrix(inputs.values(), r0)
    }

    pub fn drive_matrix(&self, inputs: &DMatrix<T>, r0: &[T]) -> Result<StateSequence<T>> {
        let m = self.neurons();
        if inputs.nrows() != self.inputs() {
            return Err(Error::DimensionMismatch(format!(
                "reservoir expects {} input variables, series has {}",
                self.inputs(),
                inputs.nrows()
            )));
        }
        if r0.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "initial state has {} entries for {m} neurons",
                r0.len()
            )));
        }
        ensure(r0.iter().all(|&v| v > -T::one() && v < T::one()), || {
            "initial state entries must lie in (-1, 1)".into()
        })?;
        let drive = &self.w_in * inputs;
        let mut states = DMatrix::zeros(m, inputs.ncols());
        let mut state = r0.to_vec();
        let mut recurrent = vec![T::zero(); m];
        for (k, u) in drive.column_iter().enumerate() {
            self.w_res.mul_vec(&state, &mut recurrent);
            self.mix(&mut state, &recurrent, u.as_slice());
            states.column_mut(k).copy_from_slice(&state);
        }
        Ok(StateSequence::new(states, 0))
    }

    /// Drives `trials` copies from seeded random initial states and tracks
    /// the largest pairwise distance. Converged iff the final distance `< tol`.
    pub fn echo_state_check(
        &self,
        inputs: &TimeSeries<T>,
        trials: usize,
        tol: T,
        seed: u64,
    ) -> Result<EchoStateReport<T>> {
        ensure(trials >= 2, || "echo state check needs at least two trials".into())?;
        let m = self.neurons();
        let runs = (0..trials)
            .map(|t| {
                let mut s = rng::child_stream(seed, "echo-initial-state", &[t as u64]);
                let r0: Vec<T> = (0..m).map(|_| rng::symmetric(&mut s, T::of(1.0 - 1e-9))).collect();
                self.drive(inputs, &r0).map(|seq| seq.states)
            })
            .collect::<Result<Vec<_>>>()?;
        let n = inputs.n_steps();
        let distances: Vec<T> = (0..n)
            .map(|k| {
                let mut worst = T::zero();
                for a in 0..trials {
                    for b in a + 1..trials {
                        let d = (runs[a].column(k) - runs[b].column(k)).norm();
                        worst = worst.max(d);
                    }
                }
                worst
            })
            .collect();
        let converged = distances.last().is_some_and(|&d| d < tol);
        Ok(EchoStateReport { converged, distances })
    }

    /// Default washout: the larger of 500 steps and the first step where the
    /// echo-state distance curve on `inputs` drops below `1e-8`.
    pub fn recommended_washout(&self, inputs: &TimeSeries<T>, seed: u64) -> Result<usize> {
        let report = self.echo_state_check(inputs, 2, T::of(1e-8), seed)?;
        let crossing = report
            .distances
            .iter()
            .position(|&d| d < T::of(1e-8))
            .unwrap_or(report.distances.len());
        Ok(crossing.max(500))
    }

    pub fn to_file(&self, include_matrices: bool) -> ReservoirFile<T> {
        ReservoirFile {
            format: RESERVOIR_FORMAT.into(),
            config: self.config.clone(),
            achieved_spectral_radius: self.achieved_spectral_radius,
            matrices: include_matrices.then(|| ReservoirMatrices {
                w_in: self.w_in.clone(),
                w_res: self.w_res.clone(),
            }),
        }
    }

    /// Rebuilds from the explicit matrices when present, else from the seed.
    pub fn from_file(file: ReservoirFile<T>) -> Result<Self> {
        if file.format != RESERVOIR_FORMAT {
            return Err(Error::Config(format!("unsupported reservoir format `{}`", file.format)));
        }
        match file.matrices {
            Some(ReservoirMatrices { w_in, w_res }) => Self::from_parts(file.config, w_in, w_res),
            None => Self::build(&file.config),
        }
    }

    pub fn save(&self, path: &Path, include_matrices: bool) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file(include_matrices))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

const RESERVOIR_FORMAT: &str = "delay-rc/reservoir/v1";

/// JSON representation of a reservoir.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ReservoirFile<T: Real> {
    pub format: String,
    pub config: ReservoirConfig<T>,
    pub achieved_spectral_radius: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<ReservoirMatrices<T>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ReservoirMatrices<T: Real> {
    pub w_in: DMatrix<T>,
    pub w_res: CsrMatrix<T>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: usize) -> ReservoirConfig<f64> {
        ReservoirConfig::new(m, 1, 5)
    }

    fn scalar_reservoir(w_res: f64, w_in: f64, leak: f64) -> Reservoir<f64> {
        let mut c = cfg(1);
        c.leak = leak;
        c.density = 1.0;
        Reservoir::from_parts(
            c,
            DMatrix::from_element(1, 1, w_in),
            CsrMatrix::from_dense(&DMatrix::from_element(1, 1, w_res)),
        )
        .unwrap()
    }

    #[test]
    fn single_neuron_radius_is_entry_modulus() {
        let mut c = cfg(1);
        c.density = 1.0;
        let r = Reservoir::build(&c).unwrap();
        let w = r.w_res().to_dense()[(0, 0)];
        assert!((w.abs() - 0.9).abs() < 1e-15);
        assert!((r.achieved_spectral_radius() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_radius_zeroes_recurrence() {
        let mut c = cfg(30);
        c.spectral_radius = 0.0;
        let r = Reservoir::build(&c).unwrap();
        assert!(r.w_res().is_zero());
        assert_eq!(r.achieved_spectral_radius(), 0.0);
    }

    #[test]
    fn empty_sample_with_positive_radius_is_an_error() {
        let mut c = cfg(2);
        c.density = 1e-9;
        assert!(matches!(Reservoir::build(&c), Err(Error::Construction(_))));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = cfg(3);
        c.density = 0.0;
        assert!(Reservoir::build(&c).is_err());
        let mut c = cfg(3);
        c.leak = 1.5;
        assert!(Reservoir::build(&c).is_err());
        let c = ReservoirConfig::<f64>::new(0, 1, 0);
        assert!(Reservoir::build(&c).is_err());
    }

    #[test]
    fn all_zero_weights_give_zero_states() {
        let res = scalar_reservoir(0.0, 0.0, 1.0);
        let x = TimeSeries::unnamed(DMatrix::from_element(1, 10, 3.0), 1.0).unwrap();
        let seq = res.drive(&x, &[0.7]).unwrap();
        assert!(seq.states.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_leak_freezes_the_state() {
        let res = scalar_reservoir(0.5, 1.0, 0.0);
        let x = TimeSeries::unnamed(DMatrix::from_fn(1, 10, |_, j| j as f64), 1.0).unwrap();
        let seq = res.drive(&x, &[0.3]).unwrap();
        assert!(seq.states.iter().all(|&v| v == 0.3));
    }

    #[test]
    fn scalar_hand_evaluation() {
        let res = scalar_reservoir(0.5, 1.0, 1.0);
        let x = TimeSeries::unnamed(DMatrix::zeros(1, 2), 1.0).unwrap();
        let seq = res.drive(&x, &[0.5]).unwrap();
        // tanh(0.25)
        assert!((seq.states[(0, 0)] - 0.244_918_662_403_709_13).abs() < 1e-15);
        assert!((seq.states[(0, 1)] - (0.5 * 0.244_918_662_403_709_13f64).tanh()).abs() < 1e-15);
    }

    #[test]
    fn drive_rejects_mismatches() {
        let res = scalar_reservoir(0.5, 1.0, 1.0);
        let x2 = TimeSeries::unnamed(DMatrix::zeros(2, 3), 1.0).unwrap();
        assert!(matches!(res.drive(&x2, &[0.0]), Err(Error::DimensionMismatch(_))));
        let x1 = TimeSeries::unnamed(DMatrix::zeros(1, 3), 1.0).unwrap();
        assert!(res.drive(&x1, &[1.0]).is_err());
        assert!(res.drive(&x1, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn step_matches_drive() {
        let res = Reservoir::build(&ReservoirConfig::<f64>::new(20, 2, 3)).unwrap();
        let x = TimeSeries::unnamed(DMatrix::from_fn(2, 5, |i, j| (i + j) as f64 * 0.3), 1.0).unwrap();
        let seq = res.drive(&x, &[0.0; 20]).unwrap();
        let mut s = vec![0.0; 20];
        let mut scratch = vec![0.0; 20];
        for k in 0..5 {
            res.step(&mut s, x.column(k).as_slice(), &mut scratch);
        }
        let last = seq.states.column(4);
        for (a, b) in s.iter().zip(last.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn memoryless_reservoir_forgets_after_one_step() {
        let mut c = cfg(10);
        c.spectral_radius = 0.0;
        let res = Reservoir::build(&c).unwrap();
        let x = TimeSeries::unnamed(DMatrix::from_fn(1, 5, |_, j| j as f64), 1.0).unwrap();
        let rep = res.echo_state_check(&x, 3, 1e-12, 1).unwrap();
        assert!(rep.converged);
        assert!(rep.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn frozen_reservoir_fails_echo_check() {
        let mut c = cfg(10);
        c.leak = 0.0;
        let res = Reservoir::build(&c).unwrap();
        let x = TimeSeries::unnamed(DMatrix::zeros(1, 50), 1.0).unwrap();
        let rep = res.echo_state_check(&x, 3, 1e-6, 1).unwrap();
        assert!(!rep.converged);
        assert!(res.echo_state_check(&x, 1, 1e-6, 1).is_err());
    }

    #[test]
    fn file_round_trip_with_and_without_matrices() {
        let res = Reservoir::build(&ReservoirConfig::<f64>::new(15, 2, 8)).unwrap();
        for explicit in [true, false] {
            let text = serde_json::to_string(&res.to_file(explicit)).unwrap();
            let back = Reservoir::from_file(serde_json::from_str(&text).unwrap()).unwrap();
            assert_eq!(back, res);
        }
    }
}
