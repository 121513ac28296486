use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagBudget {
    /// Time spanned by the lag window, `τ·Δt·N_lag`.
    pub span: f64,
    pub lyapunov_time: f64,
    /// `span / lyapunov_time`; below 1 passes.
    pub margin: f64,
    pub passed: bool,
}

/// Checks that the delayed readout looks back less than one Lyapunov time.
pub fn lag_budget_check(tau: usize, dt: f64, n_lag: usize, lyapunov_time: f64) -> Result<LagBudget> {
    if tau == 0 || n_lag == 0 || !(dt > 0.0) || !(lyapunov_time > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lag budget needs positive tau, dt, n_lag and lyapunov time \
             (got tau={tau}, dt={dt}, n_lag={n_lag}, lyapunov_time={lyapunov_time})"
        )));
    }
    let span = tau as f64 * dt * n_lag as f64;
    let margin = span / lyapunov_time;
    Ok(LagBudget {
        span,
        lyapunov_time,
        margin,
        passed: span < lyapunov_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorenz_figure_setting_passes() {
        let b = lag_budget_check(5, 0.01, 5, 1.0 / 0.9).unwrap();
        assert!(b.passed);
        assert!((b.span - 0.25).abs() < 1e-15);
    }

    #[test]
    fn double_budget_fails_with_margin_two() {
        let b = lag_budget_check(4, 0.5, 3, 3.0).unwrap();
        assert!(!b.passed);
        assert!((b.margin - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_lag_is_rejected() {
        assert!(lag_budget_check(5, 0.01, 0, 1.0).is_err());
    }
}
