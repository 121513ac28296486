use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::random_input_sequence;
use crate::error::{ensure, Error, Result};
use crate::readout::{assemble_delayed_features, train_ridge, DelaySpec};
use crate::reservoir::Reservoir;
use crate::scalar::Real;

/// Slack allowed above 1 for a squared correlation.
pub const MC_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryOptions {
    pub k_max: usize,
    pub beta: f64,
    pub seed: u64,
    pub amplitude: f64,
    /// Steps driven for training, transient included.
    pub n_train: usize,
    /// Held-out steps evaluated right after the training block.
    pub n_test: usize,
    pub washout: usize,
}

impl Default for MemoryOptions {
    fn default() -> Self {
        Self {
            k_max: 100,
            beta: 1e-8,
            seed: 0,
            amplitude: 0.5,
            n_train: 4000,
            n_test: 1000,
            washout: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MCResult<T: Real> {
    /// `mc_k[k-1]` is the capacity at delay `k`.
    pub mc_k: Vec<T>,
    pub total: T,
    pub neurons: usize,
    pub effective_dimension: usize,
    pub max_lag: usize,
    pub tau: usize,
    pub beta: f64,
    pub seed: u64,
}

impl<T: Real> MCResult<T> {
    pub fn k_max(&self) -> usize {
        self.mc_k.len()
    }

    /// Mean over the last quarter of delays is below the mean over the first.
    pub fn is_fading(&self) -> bool {
        let q = (self.mc_k.len() / 4).max(1);
        let mean = |s: &[T]| s.iter().fold(T::zero(), |a, &v| a + v) / T::of_usize(s.len());
        mean(&self.mc_k[self.mc_k.len() - q..]) < mean(&self.mc_k[..q])
    }
}

/// Squared correlation `cov(a, b)² / (var a · var b)`; zero when `b` has
/// (numerically) zero variance.
pub fn squared_correlation<T: Real>(a: &[T], b: &[T]) -> T {
    let n = T::of_usize(a.len());
    let ma = a.iter().fold(T::zero(), |s, &v| s + v) / n;
    let mb = b.iter().fold(T::zero(), |s, &v| s + v) / n;
    let (mut cov, mut va, mut vb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    // relative floor: a variance at rounding level of the mean is zero
    let floor = T::of(1e-24) * n * mb * mb;
    if vb <= floor || vb <= T::zero() || va <= T::zero() {
        return T::zero();
    }
    cov * cov / (va * vb)
}

/// Recall capacity of fixed features. `features` has one column per time
/// index `first + c`; for each `k` in `delays` a readout is trained on
/// `train` (time indices) to reproduce `input[t − k]` and scored on `test`.
/// One ridge solve with one output row per delay is used, which is the same
/// as independent per-delay readouts.
pub fn recall_capacity<T: Real>(
    features: &DMatrix<T>,
    first: usize,
    input: &[T],
    delays: &[usize],
    train: std::ops::Range<usize>,
    test: std::ops::Range<usize>,
    beta: T,
) -> Result<Vec<T>> {
    let kmax = delays.iter().copied().max().unwrap_or(0);
    ensure(!delays.is_empty(), || "no delays requested".into())?;
    ensure(
        train.start >= first && train.start >= kmax && train.start < train.end,
        || format!("training window {train:?} must start at or after {}", first.max(kmax)),
    )?;
    ensure(
        test.start < test.end && test.end <= first + features.ncols() && test.end <= input.len(),
        || format!("test window {test:?} exceeds the available data"),
    )?;
    let targets = |range: &std::ops::Range<usize>| {
        DMatrix::from_fn(delays.len(), range.len(), |r, c| input[range.start + c - delays[r]])
    };
    let r_train = features.columns(train.start - first, train.len()).into_owned();
    let sol = train_ridge(&r_train, &targets(&train), beta)?;
    let r_test = features.columns(test.start - first, test.len()).into_owned();
    let y_test = &sol.w_out * r_test;
    let truth = targets(&test);
    Ok((0..delays.len())
        .map(|r| {
            let a: Vec<T> = truth.row(r).iter().copied().collect();
            let b: Vec<T> = y_test.row(r).iter().copied().collect();
            squared_correlation(&a, &b)
        })
        .collect())
}

/// Memory capacity curve `MC_1 … MC_kmax` of a delayed readout on `res`
/// driven by i.i.d. uniform input.
pub fn memory_capacity<T: Real>(res: &Reservoir<T>, spec: &DelaySpec, opts: &MemoryOptions) -> Result<MCResult<T>> {
    if res.inputs() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "memory capacity needs a single-input reservoir, got {} inputs",
            res.inputs()
        )));
    }
    ensure(opts.k_max >= 1, || "k_max must be at least 1".into())?;
    let total = opts.n_train + opts.n_test;
    let input = random_input_sequence(opts.seed, total, T::of(opts.amplitude))?;
    let zero = vec![T::zero(); res.neurons()];
    let states = res.drive(&input, &zero)?.with_washout(opts.washout);
    let features = assemble_delayed_features(&states, spec)?;
    let start = features.first.max(opts.k_max);
    if opts.n_train <= start {
        return Err(Error::InsufficientData(format!(
            "n_train {} must exceed washout {} + lag depth {} and k_max {}",
            opts.n_train,
            opts.washout,
            spec.depth(),
            opts.k_max
        )));
    }
    let delays: Vec<usize> = (1..=opts.k_max).collect();
    let x: Vec<T> = input.values().row(0).iter().copied().collect();
    let mc = recall_capacity(
        &features.matrix,
        features.first,
        &x,
        &delays,
        start..opts.n_train,
        opts.n_train..total,
        T::of(opts.beta),
    )?;
    Ok(MCResult {
        total: mc.iter().fold(T::zero(), |a, &v| a + v),
        mc_k: mc,
        neurons: res.neurons(),
        effective_dimension: spec.effective_dimension(),
        max_lag: spec.lags.iter().copied().max().unwrap_or(1),
        tau: spec.stride,
        beta: opts.beta,
        seed: opts.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::ReservoirConfig;

    #[test]
    fn squared_correlation_of_affine_copy_is_one() {
        let a = [0.3, -1.0, 2.0, 0.7, 0.1];
        let b: Vec<f64> = a.iter().map(|x| 3.0 - 2.0 * x).collect();
        assert!((squared_correlation(&a, &b) - 1.0).abs() < 1e-14);
        assert_eq!(squared_correlation(&a, &[4.0; 5]), 0.0);
    }

    #[test]
    fn silent_reservoir_has_zero_capacity() {
        let mut cfg = ReservoirConfig::<f64>::new(10, 1, 3);
        cfg.spectral_radius = 0.0;
        cfg.input_scale = 0.0;
        let res = Reservoir::build(&cfg).unwrap();
        let opts = MemoryOptions {
            k_max: 10,
            n_train: 800,
            n_test: 200,
            washout: 100,
            ..MemoryOptions::default()
        };
        let mc = memory_capacity(&res, &DelaySpec::undelayed(10), &opts).unwrap();
        assert!(mc.mc_k.iter().all(|&v| v == 0.0));
        assert_eq!(mc.total, 0.0);
    }

    #[test]
    fn input_as_feature_gives_perfect_recall() {
        let input = random_input_sequence::<f64>(5, 600, 0.5).unwrap();
        let x: Vec<f64> = input.values().row(0).iter().copied().collect();
        let mut features = DMatrix::from_fn(3, 600, |i, k| ((i + 1) as f64 * k as f64 * 0.01).sin());
        features = features.insert_row(3, 0.0);
        for k in 0..600 {
            features[(3, k)] = x[k];
        }
        let mc = recall_capacity(&features, 0, &x, &[0], 10..400, 400..600, 1e-10).unwrap();
        assert!((mc[0] - 1.0).abs() < 1e-9, "{}", mc[0]);
    }

    #[test]
    fn too_short_training_is_rejected() {
        let mut cfg = ReservoirConfig::<f64>::new(5, 1, 1);
        cfg.density = 1.0;
        let res = Reservoir::build(&cfg).unwrap();
        let opts = MemoryOptions {
            k_max: 50,
            n_train: 40,
            n_test: 20,
            washout: 10,
            ..MemoryOptions::default()
        };
        assert!(matches!(
            memory_capacity(&res, &DelaySpec::undelayed(5), &opts),
            Err(Error::InsufficientData(_))
        ));
    }
}
