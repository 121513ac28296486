//! Ground-truth trajectory generators and the largest-Lyapunov-exponent estimator.
//!
//! Every generator is a pure function of its parameters (and seed, where one
//! exists). The shared [`StepMap`] abstraction lets the Lyapunov estimator run
//! on ODE flows, the delay system and discrete maps alike.

mod gene;
mod input;
mod lattice;
mod lorenz;
mod lyapunov;
mod ode;

use serde::{Deserialize, Serialize};

pub use gene::{generate_gene_model, GeneIntegrator, GeneModelParams, History};
pub use input::random_input_sequence;
pub use lattice::{generate_lattice, LatticeMap, LatticeParams, LocalMap};
pub use lorenz::{generate_lorenz, Lorenz, LorenzParams};
pub use lyapunov::{estimate_lyapunov, LogisticMap, LyapunovEstimate, LyapunovOptions};
pub use ode::{rk4_step, LinearDecay, Rk4Flow, VectorField};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::series::TimeSeries;

/// A deterministic discrete-time system with a flat state vector.
pub trait StepMap<T: Real>: Clone {
    fn state(&self) -> &[T];
    fn state_mut(&mut self) -> &mut [T];
    fn advance(&mut self);
    /// Time represented by one call to [`StepMap::advance`].
    fn time_step(&self) -> T;
}

/// Runs `system`, discarding `n_discard` states and recording `n_steps`
/// observations. `observe` writes the recorded variables of the current state.
pub(crate) fn record<T, S, F>(
    system: &mut S,
    n_vars: usize,
    n_discard: usize,
    n_steps: usize,
    mut observe: F,
) -> Result<nalgebra::DMatrix<T>>
where
    T: Real,
    S: StepMap<T>,
    F: FnMut(&S, &mut [T]),
{
    let mut out = nalgebra::DMatrix::zeros(n_vars, n_steps);
    let mut obs = vec![T::zero(); n_vars];
    for step in 0..n_discard + n_steps {
        if step > 0 {
            system.advance();
            if !system.state().iter().all(|v| v.finite()) {
                return Err(Error::Diverged { step });
            }
        }
        if step >= n_discard {
            observe(system, &mut obs);
            out.column_mut(step - n_discard).copy_from_slice(&obs);
        }
    }
    Ok(out)
}

/// Any of the benchmark systems, as named by configs and the Lyapunov estimator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case", bound = "")]
pub enum SystemSpec<T: Real> {
    Lorenz(LorenzParams<T>),
    Gene(GeneModelParams<T>),
    Lattice(LatticeParams<T>),
    Logistic { a: T, x0: T },
    LinearDecay { rate: T, x0: T, dt: T },
}

impl<T: Real> SystemSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::Lorenz(_) => "lorenz",
            SystemSpec::Gene(_) => "gene",
            SystemSpec::Lattice(_) => "lattice",
            SystemSpec::Logistic { .. } => "logistic",
            SystemSpec::LinearDecay { .. } => "linear_decay",
        }
    }

    pub fn dt(&self) -> T {
        match self {
            SystemSpec::Lorenz(p) => p.dt,
            SystemSpec::Gene(p) => p.dt,
            SystemSpec::Lattice(p) => p.dt,
            SystemSpec::Logistic { .. } => T::one(),
            SystemSpec::LinearDecay { dt, .. } => *dt,
        }
    }

    /// Generates the trajectory described by the spec. Only the three
    /// benchmark generators produce series; the test systems do not.
    pub fn generate(&self) -> Result<TimeSeries<T>> {
        match self {
            SystemSpec::Lorenz(p) => generate_lorenz(p),
            SystemSpec::Gene(p) => generate_gene_model(p),
            SystemSpec::Lattice(p) => generate_lattice(p),
            other => Err(Error::InvalidParameter(format!(
                "system `{}` has no trajectory generator",
                other.name()
            ))),
        }
    }

    /// Largest Lyapunov exponent over `horizon` time units.
    pub fn lyapunov(&self, horizon: T, opts: &LyapunovOptions) -> Result<LyapunovEstimate<T>> {
        match self {
            SystemSpec::Lorenz(p) => {
                p.validate()?;
                estimate_lyapunov(Lorenz::from_params(p).into_flow(p.x0.to_vec(), p.dt), horizon, opts)
            }
            SystemSpec::Gene(p) => estimate_lyapunov(GeneIntegrator::new(p)?, horizon, opts),
            SystemSpec::Lattice(p) => estimate_lyapunov(LatticeMap::new(p)?, horizon, opts),
            SystemSpec::Logistic { a, x0 } => estimate_lyapunov(LogisticMap::new(*a, *x0), horizon, opts),
            SystemSpec::LinearDecay { rate, x0, dt } => {
                estimate_lyapunov(Rk4Flow::new(LinearDecay { rate: *rate }, vec![*x0], *dt), horizon, opts)
            }
        }
    }
}
