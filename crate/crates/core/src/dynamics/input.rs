use nalgebra::DMatrix;

use crate::error::{ensure, Result};
use crate::rng;
use crate::scalar::Real;
use crate::series::TimeSeries;

/// I.i.d. uniform values on `[−amplitude, amplitude]`, one variable, `dt = 1`.
pub fn random_input_sequence<T: Real>(seed: u64, n_steps: usize, amplitude: T) -> Result<TimeSeries<T>> {
    ensure(n_steps >= 1, || "random input needs at least one step".into())?;
    ensure(amplitude >= T::zero() && amplitude.finite(), || {
        format!("amplitude must be non-negative, got {amplitude}")
    })?;
    let mut stream = rng::child_stream(seed, "random-input", &[]);
    let values = DMatrix::from_fn(1, n_steps, |_, _| rng::symmetric(&mut stream, amplitude));
    TimeSeries::new(values, T::one(), vec!["u".into()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_is_silent() {
        let ts = random_input_sequence::<f64>(3, 100, 0.0).unwrap();
        assert!(ts.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_sequence() {
        let a = random_input_sequence::<f64>(11, 500, 0.5).unwrap();
        let b = random_input_sequence::<f64>(11, 500, 0.5).unwrap();
        let c = random_input_sequence::<f64>(12, 500, 0.5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_mean_is_within_clt_bound() {
        let n = 100_000;
        let ts = random_input_sequence::<f64>(1, n, 0.5).unwrap();
        let mean = ts.values().iter().sum::<f64>() / n as f64;
        let bound = 3.0 * (0.5 / 3f64.sqrt()) / (n as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean} bound {bound}");
        assert!(ts.values().iter().all(|v| v.abs() <= 0.5));
    }
}
