use nalgebra::{Cholesky, DMatrix, SVD};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Condition estimate above which the Cholesky solve is abandoned.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Relative singular value cutoff of the fallback solve.
pub const SVD_CUTOFF: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeSolution<T: Real> {
    /// `l × d` output weights.
    pub w_out: DMatrix<T>,
    /// `(max L_ii / min L_ii)²` of the Cholesky factor; infinite when the
    /// factorization failed.
    pub condition_estimate: T,
    pub used_fallback: bool,
}

/// Minimizes `Σ_k ‖y_k − W r_k‖² + β‖W‖²` over `W`, i.e.
/// `W = Y Rᵀ (R Rᵀ + βI)⁻¹`, for `d × T` features and `l × T` targets.
pub fn train_ridge<T: Real>(features: &DMatrix<T>, targets: &DMatrix<T>, beta: T) -> Result<RidgeSolution<T>> {
    let (d, t) = features.shape();
    if t == 0 {
        return Err(Error::InsufficientData(
            "ridge regression needs at least one sample".into(),
        ));
    }
    if targets.ncols() != t {
        return Err(Error::DimensionMismatch(format!(
            "{t} feature columns but {} target columns",
            targets.ncols()
        )));
    }
    if !(beta >= T::zero() && beta.finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be non-negative, got {beta}"
        )));
    }
    if !features.iter().all(|v| v.finite()) {
        return Err(Error::NonFinite("ridge features".into()));
    }
    if !targets.iter().all(|v| v.finite()) {
        return Err(Error::NonFinite("ridge targets".into()));
    }

    let mut gram = features * features.transpose();
    for i in 0..d {
        gram[(i, i)] += beta;
    }
    // (R Rᵀ + βI) Wᵀ = R Yᵀ
    let rhs = features * targets.transpose();

    if let Some(chol) = Cholesky::new(gram.clone()) {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((T::max_value().unwrap(), T::zero()), |(lo, hi), &v| {
            (lo.min(v.abs()), hi.max(v.abs()))
        });
        let cond = if lo > T::zero() {
            (hi / lo) * (hi / lo)
        } else {
            T::max_value().unwrap()
        };
        if cond <= T::of(CONDITION_LIMIT) {
            let w_t = chol.solve(&rhs);
            if w_t.iter().all(|v| v.finite()) {
                return Ok(RidgeSolution {
                    w_out: w_t.transpose(),
                    condition_estimate: cond,
                    used_fallback: false,
                });
            }
        }
        return svd_solve(gram, rhs, cond);
    }
    svd_solve(gram, rhs, T::max_value().unwrap())
}

fn svd_solve<T: Real>(gram: DMatrix<T>, rhs: DMatrix<T>, cond: T) -> Result<RidgeSolution<T>> {
    let svd = SVD::new(gram, true, true);
    let s_max = svd.singular_values.iter().fold(T::zero(), |a, &s| a.max(s));
    let eps = T::of(SVD_CUTOFF) * s_max;
    let w_t = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::Solve(format!("singular value solve failed: {e}")))?;
    if !w_t.iter().all(|v| v.finite()) {
        return Err(Error::Solve("singular value solve produced non-finite weights".into()));
    }
    Ok(RidgeSolution {
        w_out: w_t.transpose(),
        condition_estimate: cond,
        used_fallback: true,
    })
}

/// `Σ ‖y_k − W r_k‖² + β‖W‖²_F`.
pub fn ridge_loss<T: Real>(w: &DMatrix<T>, features: &DMatrix<T>, targets: &DMatrix<T>, beta: T) -> T {
    let resid = targets - w * features;
    resid.norm_squared() + beta * w.norm_squared()
}
