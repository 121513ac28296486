//! Spectral radius of the recurrent matrix.
//!
//! Matrices up to [`DENSE_LIMIT`] rows go through a dense real Schur
//! decomposition. Larger ones use power iteration in which each pair of
//! iterates `(v, Av, A²v)` is fitted with `A²v ≈ p·Av + q·v`; the roots of
//! `z² − p z − q` track a dominant real eigenvalue, a dominant ± pair, or a
//! dominant complex-conjugate pair alike.

use nalgebra::{DMatrix, Schur};

use crate::rng;
use crate::scalar::Real;

use super::sparse::CsrMatrix;

pub const DENSE_LIMIT: usize = 512;

#[derive(Clone, Copy, Debug)]
pub struct PowerOptions {
    pub max_iter: usize,
    /// Relative change in the estimate accepted as converged.
    pub tol: f64,
    /// Consecutive iterations the change must stay below `tol`.
    pub patience: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            max_iter: 200_000,
            tol: 1e-13,
            patience: 50,
        }
    }
}

pub fn spectral_radius<T: Real>(m: &CsrMatrix<T>) -> T {
    if m.nrows() <= DENSE_LIMIT {
        spectral_radius_dense(&m.to_dense())
    } else {
        spectral_radius_power(m, &PowerOptions::default())
    }
}

pub fn spectral_radius_dense<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 || m.iter().all(|&v| v == T::zero()) {
        return T::zero();
    }
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    // Unshifted-looking structures such as scaled permutations can stall the
    // QR sweeps; a random orthogonal similarity leaves the spectrum intact.
    let n = m.nrows();
    let mut stream = rng::child_stream(0, "schur-similarity", &[n as u64]);
    let mut a = m.clone();
    for _ in 0..4 {
        if let Some(schur) = Schur::try_new(a.clone(), T::default_epsilon(), 200 * n) {
            return schur
                .complex_eigenvalues()
                .iter()
                .fold(T::zero(), |acc, z| acc.max((z.re * z.re + z.im * z.im).sqrt()));
        }
        let g = DMatrix::from_fn(n, n, |_, _| T::of(rng::normal(&mut stream)));
        let q = g.qr().q();
        a = q.transpose() * m * &q;
    }
    spectral_radius_power(&CsrMatrix::from_dense(m), &PowerOptions::default())
}

pub fn spectral_radius_power<T: Real>(m: &CsrMatrix<T>, opts: &PowerOptions) -> T {
    let n = m.nrows();
    if n == 0 || m.is_zero() {
        return T::zero();
    }
    let mut stream = rng::child_stream(0, "power-iteration-start", &[n as u64]);
    let mut v: Vec<f64> = (0..n).map(|_| rng::normal(&mut stream)).collect();
    normalize(&mut v);

    let a: CsrMatrix<f64> = convert(m);
    let mut x1 = vec![0.0; n];
    let mut x2 = vec![0.0; n];
    let mut prev = f64::NAN;
    let mut calm = 0usize;
    let mut estimate = 0.0;
    for _ in 0..opts.max_iter {
        a.mul_vec(&v, &mut x1);
        a.mul_vec(&x1, &mut x2);
        let n1 = dot(&x1, &x1).sqrt();
        let n2 = dot(&x2, &x2).sqrt();
        if n1 == 0.0 || n2 == 0.0 {
            return T::zero();
        }
        estimate = two_step_modulus(&v, &x1, &x2);
        for (vi, &xi) in v.iter_mut().zip(&x2) {
            *vi = xi / n2;
        }
        if (estimate - prev).abs() <= opts.tol * estimate {
            calm += 1;
            if calm >= opts.patience {
                break;
            }
        } else {
            calm = 0;
        }
        prev = estimate;
    }
    T::of(estimate)
}

/// Largest root modulus of the least-squares fit `x2 ≈ p·x1 + q·v`, `‖v‖ = 1`.
fn two_step_modulus(v: &[f64], x1: &[f64], x2: &[f64]) -> f64 {
    let a11 = dot(x1, x1);
    let a12 = dot(x1, v);
    let a22 = dot(v, v);
    let b1 = dot(x2, x1);
    let b2 = dot(x2, v);
    let det = a11 * a22 - a12 * a12;
    if det <= 1e-24 * a11 * a22 {
        // v and Av are parallel: a single real dominant eigenvalue
        return (b1 / a11).abs();
    }
    let p = (b1 * a22 - b2 * a12) / det;
    let q = (a11 * b2 - a12 * b1) / det;
    let disc = p * p + 4.0 * q;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((p + s) * 0.5).abs().max(((p - s) * 0.5).abs())
    } else {
        (-q).sqrt()
    }
}

fn convert<T: Real>(m: &CsrMatrix<T>) -> CsrMatrix<f64> {
    m.map(|v| v.as_f64())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    for x in v {
        *x /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_has_unit_radius() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0f64, -2.0, 2.0, 0.0]);
        assert!((spectral_radius_dense(&m) - 2.0).abs() < 1e-12);
        let csr = CsrMatrix::from_dense(&m);
        assert!((spectral_radius_power(&csr, &PowerOptions::default()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_cyclic_shift() {
        let m = DMatrix::from_fn(6, 6, |i, j| if (i + 1) % 6 == j { 0.5f64 } else { 0.0 });
        assert!((spectral_radius_dense(&m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nilpotent_matrix_has_zero_radius() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            spectral_radius_power(&CsrMatrix::from_dense(&m), &PowerOptions::default()),
            0.0
        );
        assert!(spectral_radius_dense(&m) < 1e-12);
    }

    #[test]
    fn opposite_sign_pair_is_resolved() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.5f64, -1.5, 0.3]));
        let r = spectral_radius_power(&CsrMatrix::from_dense(&m), &PowerOptions::default());
        assert!((r - 1.5).abs() < 1e-12, "{r}");
    }
}
