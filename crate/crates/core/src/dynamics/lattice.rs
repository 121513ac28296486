use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng;
use crate::scalar::Real;
use crate::series::TimeSeries;

use super::{record, StepMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "")]
pub enum LocalMap<T: Real> {
    Logistic { a: T },
    Identity,
}

impl<T: Real> LocalMap<T> {
    #[inline]
    fn apply(&self, x: T) -> T {
        match *self {
            LocalMap::Logistic { a } => a * x * (T::one() - x),
            LocalMap::Identity => x,
        }
    }
}

/// Diffusively coupled map lattice on a periodic `height × width` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct LatticeParams<T: Real> {
    pub height: usize,
    pub width: usize,
    pub coupling: T,
    pub local_map: LocalMap<T>,
    pub dt: T,
    pub n_steps: usize,
    pub n_discard: usize,
    pub seed: u64,
}

impl<T: Real> LatticeParams<T> {
    pub fn chaotic(height: usize, width: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            height,
            width,
            coupling: T::of(0.3),
            local_map: LocalMap::Logistic { a: T::of(3.9) },
            dt: T::one(),
            n_steps,
            n_discard: 500,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.height >= 2 && self.width >= 2, || {
            format!("lattice must be at least 2x2, got {}x{}", self.height, self.width)
        })?;
        ensure(self.coupling >= T::zero() && self.coupling <= T::one(), || {
            format!("coupling must lie in [0, 1], got {}", self.coupling)
        })?;
        if let LocalMap::Logistic { a } = self.local_map {
            ensure(a >= T::zero() && a <= T::of(4.0), || {
                format!("logistic parameter must lie in [0, 4], got {a}")
            })?;
        }
        ensure(self.dt > T::zero(), || "lattice dt must be positive".into())?;
        ensure(self.n_steps >= 1, || "lattice n_steps must be at least 1".into())
    }

    /// Index of cell `(row, col)` in the flattened state; row-major.
    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }
}

#[derive(Clone, Debug)]
pub struct LatticeMap<T: Real> {
    height: usize,
    width: usize,
    coupling: T,
    local: LocalMap<T>,
    dt: T,
    state: Vec<T>,
    mapped: Vec<T>,
}

impl<T: Real> LatticeMap<T> {
    pub fn new(p: &LatticeParams<T>) -> Result<Self> {
        p.validate()?;
        let mut rng = rng::child_stream(p.seed, "lattice-init", &[]);
        let n = p.height * p.width;
        let state = (0..n).map(|_| rng::unit(&mut rng)).collect();
        Ok(Self {
            height: p.height,
            width: p.width,
            coupling: p.coupling,
            local: p.local_map,
            dt: p.dt,
            state,
            mapped: vec![T::zero(); n],
        })
    }
}

impl<T: Real> StepMap<T> for LatticeMap<T> {
    fn state(&self) -> &[T] {
        &self.state
    }

    fn state_mut(&mut self) -> &mut [T] {
        &mut self.state
    }

    fn advance(&mut self) {
        for (m, &x) in self.mapped.iter_mut().zip(&self.state) {
            *m = self.local.apply(x);
        }
        let (h, w) = (self.height, self.width);
        let keep = T::one() - self.coupling;
        let share = self.coupling * T::of(0.25);
        for r in 0..h {
            let up = (r + h - 1) % h;
            let down = (r + 1) % h;
            for c in 0..w {
                let left = (c + w - 1) % w;
                let right = (c + 1) % w;
                let f = &self.mapped;
                let nbr = f[up * w + c] + f[down * w + c] + f[r * w + left] + f[r * w + right];
                self.state[r * w + c] = keep * f[r * w + c] + share * nbr;
            }
        }
    }

    fn time_step(&self) -> T {
        self.dt
    }
}

/// Runs the lattice from seeded uniform initial values. Row `r·width + c` of
/// the result is cell `(r, c)`; variables are named `c{r}_{c}`.
pub fn generate_lattice<T: Real>(params: &LatticeParams<T>) -> Result<TimeSeries<T>> {
    let mut map = LatticeMap::new(params)?;
    let n = params.height * params.width;
    let values = record(&mut map, n, params.n_discard, params.n_steps, |m, out| {
        out.copy_from_slice(m.state())
    })?;
    let names = (0..params.height)
        .flat_map(|r| (0..params.width).map(move |c| format!("c{r}_{c}")))
        .collect();
    TimeSeries::new(values, params.dt, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncoupled_identity_is_frozen() {
        let mut p = LatticeParams::<f64>::chaotic(3, 4, 50, 9);
        p.coupling = 0.0;
        p.local_map = LocalMap::Identity;
        let ts = generate_lattice(&p).unwrap();
        for row in ts.values().row_iter() {
            assert!(row.iter().all(|&v| v == row[0]));
        }
    }

    #[test]
    fn uncoupled_chaotic_cells_are_uncorrelated() {
        let mut p = LatticeParams::<f64>::chaotic(2, 2, 20_000, 1);
        p.coupling = 0.0;
        p.local_map = LocalMap::Logistic { a: 4.0 };
        let ts = generate_lattice(&p).unwrap();
        let a = ts.row(0);
        let b = ts.row(3);
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        // noise level ~ 1/sqrt(n) ≈ 0.007
        assert!(corr.abs() < 0.03, "corr = {corr}");
    }

    #[test]
    fn coupled_logistic_lattice_stays_in_unit_interval() {
        let p = LatticeParams::<f64>::chaotic(20, 20, 500, 4);
        let ts = generate_lattice(&p).unwrap();
        assert_eq!(ts.n_vars(), 400);
        assert!(ts.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(ts.var_names()[p.cell_index(1, 3)], "c1_3");
    }

    #[test]
    fn rejects_degenerate_grid_and_coupling() {
        let mut p = LatticeParams::<f64>::chaotic(1, 4, 5, 0);
        assert!(generate_lattice(&p).is_err());
        p.height = 2;
        p.coupling = 1.5;
        assert!(generate_lattice(&p).is_err());
    }
}
