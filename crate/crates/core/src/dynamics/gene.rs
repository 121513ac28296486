use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::scalar::Real;
use crate::series::TimeSeries;

use super::{record, StepMap};

/// Initial function of the delay system on `[−max(τ₁, τ₂), 0]`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "")]
pub enum History<T: Real> {
    Constant {
        value: T,
    },
    /// Samples at `−(len−1)·spacing, …, −spacing, 0`, linearly interpolated.
    Tabulated {
        spacing: T,
        values: Vec<T>,
    },
    #[serde(skip)]
    Function(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: Real> fmt::Debug for History<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            History::Constant { value } => write!(f, "Constant({value})"),
            History::Tabulated { spacing, values } => {
                write!(f, "Tabulated(spacing={spacing}, len={})", values.len())
            }
            History::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl<T: Real> History<T> {
    /// Time span covered before `t = 0`, `None` when unbounded.
    fn span(&self) -> Option<T> {
        match self {
            History::Tabulated { spacing, values } => Some(*spacing * T::of_usize(values.len().saturating_sub(1))),
            _ => None,
        }
    }

    fn eval(&self, t: T) -> T {
        match self {
            History::Constant { value } => *value,
            History::Function(f) => f(t),
            History::Tabulated { spacing, values } => {
                let last = values.len() - 1;
                let pos = (T::of_usize(last) + t / *spacing).max(T::zero());
                let i = pos.floor().as_f64() as usize;
                if i >= last {
                    return values[last];
                }
                let w = pos - T::of_usize(i);
                values[i] * (T::one() - w) + values[i + 1] * w
            }
        }
    }
}

/// `ẋ(t) = −k·x(t) + g·f₁(x(t−τ₁))·f₂(x(t−τ₂))` with Hill repression
/// `f₁(u) = 1/(1+(u/θ₁)^h₁)` and Hill activation `f₂(u) = (u/θ₂)^h₂/(1+(u/θ₂)^h₂)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct GeneModelParams<T: Real> {
    pub k_decay: T,
    pub g_gain: T,
    pub theta_inhibit: T,
    pub hill_inhibit: T,
    pub theta_activate: T,
    pub hill_activate: T,
    /// Delay of the self-inhibition term.
    pub tau_inhibit: T,
    /// Delay of the self-activation term.
    pub tau_activate: T,
    pub history: History<T>,
    pub dt: T,
    pub n_steps: usize,
    pub n_discard: usize,
}

impl<T: Real> GeneModelParams<T> {
    /// Chaotic preset used by the single-neuron experiments.
    ///
    /// Both feedback loops share one delay of 17 time units. A weak, nearly
    /// linear activation (`θ₂ = 100`, `h₂ = 1`) times a steep repression
    /// (`h₁ = 10`) gives a smooth Mackey–Glass-type attractor on roughly
    /// `[0.42, 1.31]` with largest exponent ≈ 0.0033 per time unit.
    pub fn chaotic(n_steps: usize) -> Self {
        Self {
            k_decay: T::of(0.1),
            g_gain: T::of(20.0),
            theta_inhibit: T::one(),
            hill_inhibit: T::of(10.0),
            theta_activate: T::of(100.0),
            hill_activate: T::one(),
            tau_inhibit: T::of(17.0),
            tau_activate: T::of(17.0),
            history: History::Constant { value: T::of(1.2) },
            dt: T::of(0.1),
            n_steps,
            n_discard: 5000,
        }
    }

    pub fn max_delay(&self) -> T {
        self.tau_inhibit.max(self.tau_activate)
    }

    fn delay_steps(&self, tau: T) -> Result<usize> {
        let ratio = tau / self.dt;
        let n = ratio.round();
        ensure((ratio - n).abs() <= T::of(1e-12) * ratio.max(T::one()), || {
            format!("delay {tau} is not a multiple of dt {}", self.dt)
        })?;
        Ok(n.as_f64() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_decay", self.k_decay),
            ("theta_inhibit", self.theta_inhibit),
            ("theta_activate", self.theta_activate),
            ("tau_inhibit", self.tau_inhibit),
            ("tau_activate", self.tau_activate),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            ensure(v > T::zero() && v.finite(), || {
                format!("{name} must be positive, got {v}")
            })?;
        }
        ensure(self.g_gain >= T::zero() && self.g_gain.finite(), || {
            format!("g_gain must be non-negative, got {}", self.g_gain)
        })?;
        ensure(self.n_steps >= 1, || "gene model n_steps must be at least 1".into())?;
        for tau in [self.tau_inhibit, self.tau_activate] {
            ensure(self.delay_steps(tau)? >= 1, || {
                format!("delay {tau} is shorter than dt")
            })?;
        }
        if let History::Tabulated { spacing, values } = &self.history {
            ensure(*spacing > T::zero() && !values.is_empty(), || {
                "tabulated history needs a positive spacing and samples".into()
            })?;
        }
        if let Some(span) = self.history.span() {
            let need = self.max_delay();
            if span < need * (T::one() - T::of(1e-12)) {
                return Err(Error::HistoryTooShort {
                    required: need.as_f64(),
                    available: span.as_f64(),
                });
            }
        }
        Ok(())
    }
}

/// Method-of-steps RK4 integrator for the gene model.
///
/// Grid values `x_j` and derivatives `ẋ_j` are kept in a ring buffer covering
/// the longest delay. Delayed values at half-steps come from cubic Hermite
/// interpolation on the stored grid; times before zero read the history.
#[derive(Clone, Debug)]
pub struct GeneIntegrator<T: Real> {
    k: T,
    g: T,
    theta1: T,
    h1: T,
    theta2: T,
    h2: T,
    lag1: usize,
    lag2: usize,
    dt: T,
    history: History<T>,
    cap: usize,
    /// `[values; cap] ++ [derivatives; cap]`.
    buf: Vec<T>,
    step: usize,
}

impl<T: Real> GeneIntegrator<T> {
    pub fn new(p: &GeneModelParams<T>) -> Result<Self> {
        p.validate()?;
        let lag1 = p.delay_steps(p.tau_inhibit)?;
        let lag2 = p.delay_steps(p.tau_activate)?;
        let cap = lag1.max(lag2) + 2;
        let mut s = Self {
            k: p.k_decay,
            g: p.g_gain,
            theta1: p.theta_inhibit,
            h1: p.hill_inhibit,
            theta2: p.theta_activate,
            h2: p.hill_activate,
            lag1,
            lag2,
            dt: p.dt,
            history: p.history.clone(),
            cap,
            buf: vec![T::zero(); 2 * cap],
            step: 0,
        };
        let x0 = s.history.eval(T::zero());
        s.buf[0] = x0;
        s.buf[cap] = s.rhs(x0, s.delayed(0, lag1), s.delayed(0, lag2));
        Ok(s)
    }

    /// Current grid index `j` (time `j·dt`).
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn value(&self) -> T {
        self.buf[self.step % self.cap]
    }

    fn rhs(&self, x: T, x_lag1: T, x_lag2: T) -> T {
        let u = (x_lag1.max(T::zero()) / self.theta1).powf(self.h1);
        let v = (x_lag2.max(T::zero()) / self.theta2).powf(self.h2);
        -self.k * x + self.g * (T::one() / (T::one() + u)) * (v / (T::one() + v))
    }

    /// `x` at half-grid position `half / 2 − lag` (in steps).
    fn delayed(&self, half: usize, lag: usize) -> T {
        let twice_lag = 2 * lag;
        if half < twice_lag {
            let t = -T::of_usize(twice_lag - half) * self.dt * T::of(0.5);
            return self.history.eval(t);
        }
        let q = half - twice_lag;
        let j = q / 2;
        let (x0, f0) = self.grid(j);
        if q.is_multiple_of(2) {
            return x0;
        }
        let (x1, f1) = self.grid(j + 1);
        (x0 + x1) * T::of(0.5) + self.dt * (f0 - f1) * T::of(0.125)
    }

    fn grid(&self, j: usize) -> (T, T) {
        let pos = j % self.cap;
        (self.buf[pos], self.buf[self.cap + pos])
    }
}

impl<T: Real> StepMap<T> for GeneIntegrator<T> {
    fn state(&self) -> &[T] {
        &self.buf
    }

    fn state_mut(&mut self) -> &mut [T] {
        &mut self.buf
    }

    fn advance(&mut self) {
        let j = self.step;
        let h = self.dt;
        let (x, k1) = self.grid(j);
        let half = T::of(0.5) * h;
        let mid1 = self.delayed(2 * j + 1, self.lag1);
        let mid2 = self.delayed(2 * j + 1, self.lag2);
        let k2 = self.rhs(x + half * k1, mid1, mid2);
        let k3 = self.rhs(x + half * k2, mid1, mid2);
        let end1 = self.delayed(2 * j + 2, self.lag1);
        let end2 = self.delayed(2 * j + 2, self.lag2);
        let k4 = self.rhs(x + h * k3, end1, end2);
        let next = x + h / T::of(6.0) * (k1 + T::of(2.0) * (k2 + k3) + k4);
        let pos = (j + 1) % self.cap;
        self.buf[pos] = next;
        self.buf[self.cap + pos] = self.rhs(next, end1, end2);
        self.step = j + 1;
    }

    fn time_step(&self) -> T {
        self.dt
    }
}

/// Integrates the gene model. Column `i` is `x((n_discard + i)·dt)`.
pub fn generate_gene_model<T: Real>(params: &GeneModelParams<T>) -> Result<TimeSeries<T>> {
    let mut sys = GeneIntegrator::new(params)?;
    let values = record(&mut sys, 1, params.n_discard, params.n_steps, |s, out| {
        out[0] = s.value()
    })?;
    TimeSeries::new(values, params.dt, vec!["x".into()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> GeneModelParams<f64> {
        GeneModelParams {
            k_decay: 1.0,
            g_gain: 4.0,
            theta_inhibit: 1.0,
            hill_inhibit: 10.0,
            theta_activate: 1.0,
            hill_activate: 10.0,
            tau_inhibit: 10.0,
            tau_activate: 2.0,
            history: History::Constant { value: 0.5 },
            dt: 0.1,
            n_steps: 100,
            n_discard: 0,
        }
    }

    #[test]
    fn zero_gain_is_exponential_decay() {
        let mut p = base();
        p.g_gain = 0.0;
        p.k_decay = 0.5;
        p.history = History::Constant { value: 2.0 };
        // t = 1/k = 2 → index 20
        p.n_steps = 21;
        let ts = generate_gene_model(&p).unwrap();
        let got = ts.values()[(0, 20)];
        let want = 2.0 / std::f64::consts::E;
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn equilibrium_history_stays_constant() {
        let mut p = base();
        let c = 1.0;
        // f1(1) = f2(1) = 1/2 with unit thresholds, so g = 4 k c balances
        p.k_decay = 1.0;
        p.g_gain = 4.0;
        p.history = History::Constant { value: c };
        p.n_steps = 500;
        let ts = generate_gene_model(&p).unwrap();
        assert!(ts.values().iter().all(|&v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn misaligned_delay_is_rejected() {
        let mut p = base();
        p.tau_inhibit = 1.05;
        assert!(generate_gene_model(&p).is_err());
    }

    #[test]
    fn short_tabulated_history_is_rejected() {
        let mut p = base();
        p.history = History::Tabulated {
            spacing: 0.1,
            values: vec![0.5; 11],
        };
        match generate_gene_model(&p) {
            Err(Error::HistoryTooShort { required, available }) => {
                assert_eq!(required, 10.0);
                assert!((available - 1.0).abs() < 1e-12);
            }
            other => panic!("expected history error, got {other:?}"),
        }
    }

    #[test]
    fn long_enough_tabulated_history_matches_constant() {
        let mut a = base();
        a.n_steps = 300;
        let mut b = a.clone();
        b.history = History::Tabulated {
            spacing: 0.1,
            values: vec![0.5; 101],
        };
        let ta = generate_gene_model(&a).unwrap();
        let tb = generate_gene_model(&b).unwrap();
        assert_eq!(ta.values(), tb.values());
    }

    #[test]
    fn history_before_the_longest_delay_is_never_read() {
        let a = {
            let mut p = base();
            p.n_steps = 400;
            p.history = History::Function(Arc::new(|t: f64| 0.5 + 0.1 * (t).sin()));
            p
        };
        let mut b = a.clone();
        b.history = History::Function(Arc::new(
            |t: f64| {
                if t < -10.0 - 1e-9 {
                    100.0
                } else {
                    0.5 + 0.1 * t.sin()
                }
            },
        ));
        let ta = generate_gene_model(&a).unwrap();
        let tb = generate_gene_model(&b).unwrap();
        assert_eq!(ta.values(), tb.values());
    }

    #[test]
    fn solution_ignores_history_perturbation_until_shortest_delay_reaches_it() {
        // Perturb history on (a, b) = (−1.5, −0.5). With τ_min = 2 the first read of
        // that window happens at t = a + τ_min = 0.5.
        let pert = |t: f64| if t > -1.5 && t < -0.5 { 0.9 } else { 0.5 };
        let mut a = base();
        a.n_steps = 100;
        let mut b = a.clone();
        a.history = History::Constant { value: 0.5 };
        b.history = History::Function(Arc::new(pert));
        let ta = generate_gene_model(&a).unwrap();
        let tb = generate_gene_model(&b).unwrap();
        for j in 0..=5 {
            assert_eq!(ta.values()[(0, j)], tb.values()[(0, j)], "step {j}");
        }
        assert_ne!(ta.values()[(0, 10)], tb.values()[(0, 10)]);
    }
}
