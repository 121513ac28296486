use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::scalar::Real;
use crate::series::TimeSeries;

use super::{record, Rk4Flow, VectorField};

/// Parameters of `ẋ=σ(y−x), ẏ=x(ρ−z)−y, ż=xy−βz` and its sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct LorenzParams<T: Real> {
    pub sigma: T,
    pub rho: T,
    pub beta: T,
    pub x0: [T; 3],
    pub dt: T,
    pub n_steps: usize,
    pub n_discard: usize,
}

impl<T: Real> LorenzParams<T> {
    /// The chaotic benchmark `(σ, ρ, β) = (10, 28, 8/3)` sampled at `dt = 0.01`.
    pub fn standard(n_steps: usize) -> Self {
        Self {
            sigma: T::of(10.0),
            rho: T::of(28.0),
            beta: T::of(8.0 / 3.0),
            x0: [T::one(), T::one(), T::one()],
            dt: T::of(0.01),
            n_steps,
            n_discard: 5000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.dt > T::zero() && self.dt.finite(), || {
            format!("lorenz dt must be positive, got {}", self.dt)
        })?;
        ensure(self.n_steps >= 1, || "lorenz n_steps must be at least 1".into())?;
        ensure(
            [self.sigma, self.rho, self.beta]
                .iter()
                .chain(&self.x0)
                .all(|v| v.finite()),
            || "lorenz parameters must be finite".into(),
        )
    }
}

/// The Lorenz vector field.
#[derive(Clone, Copy, Debug)]
pub struct Lorenz<T> {
    pub sigma: T,
    pub rho: T,
    pub beta: T,
}

impl<T: Real> Lorenz<T> {
    pub fn from_params(p: &LorenzParams<T>) -> Self {
        Self {
            sigma: p.sigma,
            rho: p.rho,
            beta: p.beta,
        }
    }

    pub fn into_flow(self, x0: Vec<T>, dt: T) -> Rk4Flow<T, Self> {
        Rk4Flow::new(self, x0, dt)
    }
}

impl<T: Real> VectorField<T> for Lorenz<T> {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, s: &[T], ds: &mut [T]) {
        let (x, y, z) = (s[0], s[1], s[2]);
        ds[0] = self.sigma * (y - x);
        ds[1] = x * (self.rho - z) - y;
        ds[2] = x * y - self.beta * z;
    }
}

/// Integrates the Lorenz system with fixed-step RK4. Column `j` of the result
/// is the state after `n_discard + j` steps from `x0`.
pub fn generate_lorenz<T: Real>(params: &LorenzParams<T>) -> Result<TimeSeries<T>> {
    params.validate()?;
    let mut flow = Lorenz::from_params(params).into_flow(params.x0.to_vec(), params.dt);
    let values = record(&mut flow, 3, params.n_discard, params.n_steps, |f, out| {
        out.copy_from_slice(super::StepMap::state(f))
    })?;
    TimeSeries::new(values, params.dt, vec!["x".into(), "y".into(), "z".into()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_a_fixed_point() {
        let mut p = LorenzParams::<f64>::standard(200);
        p.x0 = [0.0; 3];
        p.n_discard = 10;
        let ts = generate_lorenz(&p).unwrap();
        assert!(ts.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discard_zero_starts_at_initial_state() {
        let mut p = LorenzParams::<f64>::standard(3);
        p.n_discard = 0;
        p.x0 = [1.0, 2.0, 3.0];
        let ts = generate_lorenz(&p).unwrap();
        assert_eq!(ts.column(0).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn invalid_dt_is_rejected() {
        let mut p = LorenzParams::<f64>::standard(3);
        p.dt = -0.1;
        assert!(generate_lorenz(&p).is_err());
    }

    #[test]
    fn huge_step_diverges_with_step_index() {
        let mut p = LorenzParams::<f64>::standard(2000);
        p.dt = 0.5;
        p.n_discard = 0;
        match generate_lorenz(&p) {
            Err(crate::Error::Diverged { step }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn one_step_error_shrinks_at_fifth_order() {
        let field = Lorenz::from_params(&LorenzParams::<f64>::standard(1));
        let x0 = [-5.9, -5.5, 24.6];
        let step = |dt: f64, n: usize| {
            let mut x = x0;
            let mut scratch = [0.0; 15];
            for _ in 0..n {
                super::super::ode::rk4_step(&field, &mut x, dt, &mut scratch);
            }
            x
        };
        let err = |dt: f64| {
            let fine = step(dt / 64.0, 64);
            let coarse = step(dt, 1);
            (0..3).map(|i| (coarse[i] - fine[i]).abs()).fold(0.0, f64::max)
        };
        let ratio = err(0.02) / err(0.01);
        assert!((24.0..40.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn f32_lane_runs() {
        let ts = generate_lorenz(&LorenzParams::<f32>::standard(100)).unwrap();
        assert!(ts.is_finite());
    }
}
