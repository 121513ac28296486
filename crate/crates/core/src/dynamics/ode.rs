use crate::scalar::Real;

use super::StepMap;

/// Autonomous vector field `ẋ = f(x)`.
pub trait VectorField<T: Real>: Clone {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[T], dx: &mut [T]);
}

/// One classical fixed-step RK4 step, in place. `scratch` must hold `5·dim` values.
pub fn rk4_step<T: Real, V: VectorField<T>>(field: &V, x: &mut [T], dt: T, scratch: &mut [T]) {
    let n = x.len();
    let (k1, rest) = scratch.split_at_mut(n);
    let (k2, rest) = rest.split_at_mut(n);
    let (k3, rest) = rest.split_at_mut(n);
    let (k4, tmp) = rest.split_at_mut(n);
    let tmp = &mut tmp[..n];
    let half = dt * T::of(0.5);

    field.eval(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + half * k1[i];
    }
    field.eval(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + half * k2[i];
    }
    field.eval(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    field.eval(tmp, k4);
    let sixth = dt / T::of(6.0);
    for i in 0..n {
        x[i] += sixth * (k1[i] + T::of(2.0) * (k2[i] + k3[i]) + k4[i]);
    }
}

/// RK4 discretisation of a vector field as a [`StepMap`].
#[derive(Clone, Debug)]
pub struct Rk4Flow<T: Real, V> {
    field: V,
    state: Vec<T>,
    dt: T,
    scratch: Vec<T>,
}

impl<T: Real, V: VectorField<T>> Rk4Flow<T, V> {
    pub fn new(field: V, state: Vec<T>, dt: T) -> Self {
        let scratch = vec![T::zero(); 5 * state.len()];
        Self {
            field,
            state,
            dt,
            scratch,
        }
    }

    pub fn field(&self) -> &V {
        &self.field
    }
}

impl<T: Real, V: VectorField<T>> StepMap<T> for Rk4Flow<T, V> {
    fn state(&self) -> &[T] {
        &self.state
    }

    fn state_mut(&mut self) -> &mut [T] {
        &mut self.state
    }

    fn advance(&mut self) {
        rk4_step(&self.field, &mut self.state, self.dt, &mut self.scratch);
    }

    fn time_step(&self) -> T {
        self.dt
    }
}

/// `ẋ = −rate · x`, the reference contraction with exponent `−rate`.
#[derive(Clone, Copy, Debug)]
pub struct LinearDecay<T> {
    pub rate: T,
}

impl<T: Real> VectorField<T> for LinearDecay<T> {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[T], dx: &mut [T]) {
        dx[0] = -self.rate * x[0];
    }
}
