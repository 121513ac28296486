use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng;
use crate::scalar::Real;

use super::StepMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovOptions {
    /// Steps run before the two trajectories are split.
    pub transient_steps: usize,
    /// Steps between renormalizations of the separation.
    pub renorm_steps: usize,
    /// Separation after each renormalization.
    pub separation: f64,
    pub seed: u64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            transient_steps: 1000,
            renorm_steps: 10,
            separation: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LyapunovEstimate<T: Real> {
    /// Largest exponent per unit time.
    pub exponent: T,
    /// `1 / exponent` when the exponent is positive.
    pub lyapunov_time: Option<T>,
    pub chaotic: bool,
}

/// Benettin two-trajectory estimate of the largest Lyapunov exponent.
///
/// A reference and a perturbed copy are advanced together; every
/// `renorm_steps` steps the log growth of their separation is accumulated and
/// the separation is rescaled back to `separation`.
pub fn estimate_lyapunov<T: Real, S: StepMap<T>>(
    mut system: S,
    horizon: T,
    opts: &LyapunovOptions,
) -> Result<LyapunovEstimate<T>> {
    ensure(horizon > T::zero(), || "lyapunov horizon must be positive".into())?;
    ensure(opts.renorm_steps >= 1 && opts.separation > 0.0, || {
        "renorm_steps and separation must be positive".into()
    })?;
    let dt = system.time_step();
    for _ in 0..opts.transient_steps {
        system.advance();
    }

    let d0 = T::of(opts.separation);
    let mut perturbed = system.clone();
    let mut stream = rng::child_stream(opts.seed, "lyapunov-direction", &[]);
    let direction: Vec<f64> = (0..system.state().len()).map(|_| rng::normal(&mut stream)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    for (p, d) in perturbed.state_mut().iter_mut().zip(&direction) {
        *p += d0 * T::of(d / norm);
    }

    let blocks = ((horizon / (dt * T::of_usize(opts.renorm_steps))).as_f64().ceil() as usize).max(1);
    let mut log_sum = 0.0f64;
    for _ in 0..blocks {
        for _ in 0..opts.renorm_steps {
            system.advance();
            perturbed.advance();
        }
        let dist = distance(system.state(), perturbed.state());
        if dist == T::zero() {
            log_sum = f64::NEG_INFINITY;
            break;
        }
        log_sum += (dist / d0).as_f64().ln();
        let shrink = d0 / dist;
        let reference = system.state().to_vec();
        for (p, r) in perturbed.state_mut().iter_mut().zip(reference) {
            *p = r + (*p - r) * shrink;
        }
    }
    let elapsed = (dt * T::of_usize(blocks * opts.renorm_steps)).as_f64();
    let exponent = log_sum / elapsed;
    let exponent = if exponent.is_finite() {
        T::of(exponent)
    } else {
        T::min_value().unwrap_or(T::of(-1e300))
    };
    let chaotic = exponent > T::zero();
    Ok(LyapunovEstimate {
        exponent,
        lyapunov_time: chaotic.then(|| T::one() / exponent),
        chaotic,
    })
}

fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

/// `x ↦ a·x·(1−x)`.
#[derive(Clone, Debug)]
pub struct LogisticMap<T> {
    a: T,
    state: [T; 1],
}

impl<T: Real> LogisticMap<T> {
    pub fn new(a: T, x0: T) -> Self {
        Self { a, state: [x0] }
    }
}

impl<T: Real> StepMap<T> for LogisticMap<T> {
    fn state(&self) -> &[T] {
        &self.state
    }

    fn state_mut(&mut self) -> &mut [T] {
        &mut self.state
    }

    fn advance(&mut self) {
        let x = self.state[0];
        self.state[0] = self.a * x * (T::one() - x);
    }

    fn time_step(&self) -> T {
        T::one()
    }
}
