use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::reservoir::StateSequence;
use crate::scalar::Real;

/// Layout of the delayed readout vector: neuron `i` contributes its states at
/// `k, k−τ, …, k−(d_i−1)τ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub stride: usize,
    pub lags: Vec<usize>,
}

impl DelaySpec {
    pub fn new(stride: usize, lags: Vec<usize>) -> Result<Self> {
        let spec = Self { stride, lags };
        spec.validate()?;
        Ok(spec)
    }

    /// Every neuron contributes only its current state.
    pub fn undelayed(neurons: usize) -> Self {
        Self {
            stride: 1,
            lags: vec![1; neurons],
        }
    }

    pub fn uniform(neurons: usize, n_lag: usize, stride: usize) -> Result<Self> {
        Self::new(stride, vec![n_lag; neurons])
    }

    pub fn random<R: Rng + ?Sized>(neurons: usize, stride: usize, dist: &LagDistribution, rng: &mut R) -> Result<Self> {
        let lags = (0..neurons).map(|_| dist.sample(rng)).collect::<Result<Vec<_>>>()?;
        Self::new(stride, lags)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.stride >= 1, || "delay stride must be at least 1".into())?;
        ensure(!self.lags.is_empty(), || "delay spec needs at least one neuron".into())?;
        ensure(self.lags.iter().all(|&d| d >= 1), || {
            "every lag count must be at least 1".into()
        })
    }

    pub fn neurons(&self) -> usize {
        self.lags.len()
    }

    /// `d = Σ d_i`.
    pub fn effective_dimension(&self) -> usize {
        self.lags.iter().sum()
    }

    /// Steps of history needed beyond the current one, `(max d_i − 1)·τ`.
    pub fn depth(&self) -> usize {
        (self.lags.iter().copied().max().unwrap_or(1) - 1) * self.stride
    }

    pub fn is_undelayed(&self) -> bool {
        self.lags.iter().all(|&d| d == 1)
    }

    /// Fills `out` (length `d`) with the delayed vector, reading neuron `i`
    /// `b` steps back through `state(i, b)`.
    pub fn fill<T: Real>(&self, state: impl Fn(usize, usize) -> T, out: &mut [T]) {
        let mut row = 0;
        for (i, &d) in self.lags.iter().enumerate() {
            for j in 0..d {
                out[row] = state(i, j * self.stride);
                row += 1;
            }
        }
    }
}

/// Truncated discrete Gaussian over `min..=max`, `P(k) ∝ exp(−(k−mean)²/(2σ²))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagDistribution {
    pub mean: f64,
    pub sigma: f64,
    pub min: usize,
    pub max: usize,
}

impl Default for LagDistribution {
    fn default() -> Self {
        Self {
            mean: 5.0,
            sigma: 2.0,
            min: 1,
            max: 9,
        }
    }
}

impl LagDistribution {
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        ensure(self.min >= 1 && self.min <= self.max && self.sigma > 0.0, || {
            format!("lag distribution needs 1 <= min <= max and sigma > 0, got {self:?}")
        })?;
        let w: Vec<f64> = (self.min..=self.max)
            .map(|k| {
                let z = (k as f64 - self.mean) / self.sigma;
                (-0.5 * z * z).exp()
            })
            .collect();
        let total: f64 = w.iter().sum();
        Ok(w.into_iter().map(|p| p / total).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let probs = self.probabilities()?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(self.min + i);
            }
        }
        Ok(self.max)
    }
}

/// Delayed feature matrix; column `c` belongs to time index `first + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayedFeatures<T: Real> {
    pub matrix: DMatrix<T>,
    pub first: usize,
}

impl<T: Real> DelayedFeatures<T> {
    pub fn len(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.ncols() == 0
    }

    /// One past the last covered time index.
    pub fn end(&self) -> usize {
        self.first + self.matrix.ncols()
    }

    /// Columns for time indices `start..end`.
    pub fn window(&self, start: usize, end: usize) -> Result<DMatrix<T>> {
        ensure(start >= self.first && start < end && end <= self.end(), || {
            format!("feature window {start}..{end} outside {}..{}", self.first, self.end())
        })?;
        Ok(self.matrix.columns(start - self.first, end - start).into_owned())
    }
}

/// Stacks `[r_{1,k}, r_{1,k−τ}, …, r_{q,k−(d_q−1)τ}]` for every valid `k`,
/// starting at `max(washout, depth)`.
pub fn assemble_delayed_features<T: Real>(states: &StateSequence<T>, spec: &DelaySpec) -> Result<DelayedFeatures<T>> {
    spec.validate()?;
    if states.neurons() != spec.neurons() {
        return Err(Error::DimensionMismatch(format!(
            "delay spec covers {} neurons, states have {}",
            spec.neurons(),
            states.neurons()
        )));
    }
    let first = states.washout.max(spec.depth());
    let n = states.n_steps();
    if n <= first {
        return Err(Error::InsufficientData(format!(
            "{n} steps cannot cover washout {} plus lag depth {} (max lag {}, stride {})",
            states.washout,
            spec.depth(),
            spec.lags.iter().max().copied().unwrap_or(1),
            spec.stride
        )));
    }
    let d = spec.effective_dimension();
    let s = &states.states;
    let mut matrix = DMatrix::zeros(d, n - first);
    let mut col = vec![T::zero(); d];
    for k in first..n {
        spec.fill(|i, back| s[(i, k - back)], &mut col);
        matrix.column_mut(k - first).copy_from_slice(&col);
    }
    Ok(DelayedFeatures { matrix, first })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(neurons: usize, n: usize, offset: usize) -> StateSequence<f64> {
        StateSequence::new(DMatrix::from_fn(neurons, n, |i, k| (100 * i + k + offset) as f64), 0)
    }

    #[test]
    fn undelayed_features_equal_states() {
        let states = ramp(3, 10, 0).with_washout(2);
        let f = assemble_delayed_features(&states, &DelaySpec::undelayed(3)).unwrap();
        assert_eq!(f.first, 2);
        assert_eq!(f.matrix, states.states.columns(2, 8).into_owned());
    }

    #[test]
    fn single_neuron_three_lags_stride_two() {
        let states = ramp(1, 10, 0);
        let spec = DelaySpec::new(2, vec![3]).unwrap();
        assert_eq!(spec.depth(), 4);
        let f = assemble_delayed_features(&states, &spec).unwrap();
        assert_eq!(f.first, 4);
        // column for k = 7 is [r_7, r_5, r_3]
        let c = f.matrix.column(7 - f.first);
        assert_eq!(c.as_slice(), &[7.0, 5.0, 3.0]);
    }

    #[test]
    fn neuron_major_recency_first_order() {
        let states = ramp(2, 6, 0);
        let spec = DelaySpec::new(1, vec![2, 3]).unwrap();
        let f = assemble_delayed_features(&states, &spec).unwrap();
        let c = f.matrix.column(5 - f.first);
        assert_eq!(c.as_slice(), &[5.0, 4.0, 105.0, 104.0, 103.0]);
    }

    #[test]
    fn constant_states_give_constant_features() {
        let states = StateSequence::new(DMatrix::from_element(2, 12, 0.25), 0);
        let spec = DelaySpec::new(3, vec![2, 4]).unwrap();
        let f = assemble_delayed_features(&states, &spec).unwrap();
        assert_eq!(f.matrix.nrows(), 6);
        assert!(f.matrix.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn too_few_steps_is_an_error() {
        let states = ramp(1, 4, 0);
        let spec = DelaySpec::new(2, vec![3]).unwrap();
        assert!(matches!(
            assemble_delayed_features(&states, &spec),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn lag_distribution_is_centred_and_bounded() {
        let dist = LagDistribution::default();
        let p = dist.probabilities().unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mean: f64 = p.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q).sum();
        assert!((mean - 5.0).abs() < 1e-12);
        let mut rng = crate::rng::stream(4);
        let spec = DelaySpec::random(400, 5, &dist, &mut rng).unwrap();
        assert!(spec.lags.iter().all(|&d| (1..=9).contains(&d)));
        let avg = spec.effective_dimension() as f64 / 400.0;
        assert!((avg - 5.0).abs() < 0.3, "{avg}");
    }

    proptest! {
        #[test]
        fn shifting_states_shifts_features(
            offset in 0usize..20,
            stride in 1usize..4,
            lags in proptest::collection::vec(1usize..5, 1..4),
        ) {
            let spec = DelaySpec::new(stride, lags).unwrap();
            let n = spec.depth() + 15;
            let base = assemble_delayed_features(&ramp(spec.neurons(), n, 0), &spec).unwrap();
            let shifted = assemble_delayed_features(&ramp(spec.neurons(), n, offset), &spec).unwrap();
            prop_assert_eq!(base.first, shifted.first);
            let diff = &shifted.matrix - &base.matrix;
            prop_assert!(diff.iter().all(|&v| v == offset as f64));
            // each entry equals 100·neuron + time − back exactly
            for (c, k) in (base.first..n).enumerate() {
                let mut row = 0;
                for (i, &d) in spec.lags.iter().enumerate() {
                    for j in 0..d {
                        prop_assert_eq!(base.matrix[(row, c)], (100 * i + k - j * stride) as f64);
                        row += 1;
                    }
                }
            }
        }
    }
}
