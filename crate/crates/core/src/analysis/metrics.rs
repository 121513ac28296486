use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::scalar::Real;
use crate::series::{Normalization, TimeSeries};

/// Mean squared error over all variables and steps after standardizing both
/// series with the truth's per-variable mean and standard deviation.
pub fn mse<T: Real>(pred: &TimeSeries<T>, truth: &TimeSeries<T>) -> Result<T> {
    mse_with(pred, truth, &Normalization::fit(truth))
}

/// [`mse`] under a caller-supplied normalization, e.g. the one stored in a
/// trained model.
pub fn mse_with<T: Real>(pred: &TimeSeries<T>, truth: &TimeSeries<T>, norm: &Normalization<T>) -> Result<T> {
    truth.same_shape(pred)?;
    ensure(norm.n_vars() == truth.n_vars(), || {
        format!(
            "normalization covers {} variables, series has {}",
            norm.n_vars(),
            truth.n_vars()
        )
    })?;
    let n = truth.n_vars();
    let mut acc = T::zero();
    // column-major storage: entry i belongs to variable i % n
    for (i, (p, t)) in pred.values().iter().zip(truth.values().iter()).enumerate() {
        let e = (*p - *t) / norm.scale[i % n];
        acc += e * e;
    }
    Ok(acc / T::of_usize(truth.values().len()))
}

/// Per-step error `‖ẑ_k − z_k‖ / ‖z‖_rms` where `z` is the truth standardized
/// per variable and `‖z‖_rms` is the root mean of `‖z_k‖²` over the horizon.
pub fn normalized_error_curve<T: Real>(pred: &TimeSeries<T>, truth: &TimeSeries<T>) -> Result<Vec<T>> {
    truth.same_shape(pred)?;
    let norm = Normalization::fit(truth);
    let zp = norm.apply_matrix(pred.values());
    let zt = norm.apply_matrix(truth.values());
    let rms = (zt.norm_squared() / T::of_usize(truth.n_steps())).sqrt();
    let denom = if rms > T::zero() { rms } else { T::one() };
    Ok((0..truth.n_steps())
        .map(|k| (zp.column(k) - zt.column(k)).norm() / denom)
        .collect())
}

pub const DEFAULT_VPT_THRESHOLD: f64 = 0.4;

/// Time, in Lyapunov times, before the normalized error first exceeds
/// `threshold`; the full horizon when it never does.
pub fn valid_prediction_time<T: Real>(
    pred: &TimeSeries<T>,
    truth: &TimeSeries<T>,
    threshold: T,
    lyapunov_time: T,
) -> Result<T> {
    if !(lyapunov_time > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "lyapunov time must be positive, got {lyapunov_time}"
        )));
    }
    let curve = normalized_error_curve(pred, truth)?;
    let step = curve.iter().position(|e| !(*e <= threshold)).unwrap_or(curve.len());
    Ok(T::of_usize(step) * truth.dt() / lyapunov_time)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateOptions {
    pub bins: usize,
    /// Allowed excursion as a multiple of the truth's range, centred on it.
    pub range_factor: f64,
    pub max_tv: f64,
}

impl Default for ClimateOptions {
    fn default() -> Self {
        Self {
            bins: 30,
            range_factor: 1.5,
            max_tv: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClimateReport {
    /// Every predicted value finite and inside the widened truth range.
    pub bounded: bool,
    /// Total-variation distance per variable; mass outside the truth range
    /// counts entirely as mismatch.
    pub tv_distance: Vec<f64>,
    pub passed: bool,
}

impl ClimateReport {
    pub fn max_tv(&self) -> f64 {
        self.tv_distance.iter().copied().fold(0.0, f64::max)
    }
}

/// Boundedness plus histogram match of an autonomous run against a reference
/// sample of the true attractor. The two series may differ in length.
pub fn climate_test<T: Real>(
    pred: &TimeSeries<T>,
    truth: &TimeSeries<T>,
    opts: &ClimateOptions,
) -> Result<ClimateReport> {
    if pred.n_vars() != truth.n_vars() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} variables, truth has {}",
            pred.n_vars(),
            truth.n_vars()
        )));
    }
    ensure(opts.bins >= 1 && opts.range_factor >= 1.0, || {
        "climate test needs bins >= 1 and range_factor >= 1".into()
    })?;
    let mut bounded = true;
    let mut tv = Vec::with_capacity(truth.n_vars());
    for v in 0..truth.n_vars() {
        let t = truth.row(v).into_iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let p = pred.row(v).into_iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * opts.range_factor * (hi - lo);
        if p.iter().any(|x| !x.is_finite() || (x - mid).abs() > half) {
            bounded = false;
        }
        let (hp, outside) = histogram(&p, lo, hi, opts.bins);
        let (ht, _) = histogram(&t, lo, hi, opts.bins);
        let np = p.len().max(1) as f64;
        let nt = t.len().max(1) as f64;
        let inside: f64 = hp
            .iter()
            .zip(&ht)
            .map(|(a, b)| (*a as f64 / np - *b as f64 / nt).abs())
            .sum();
        tv.push(0.5 * (inside + outside as f64 / np));
    }
    let passed = bounded && tv.iter().all(|&d| d < opts.max_tv);
    Ok(ClimateReport {
        bounded,
        tv_distance: tv,
        passed,
    })
}

/// Counts over `bins` equal cells of `[lo, hi]` plus the number of samples
/// outside (or non-finite). A zero-width range puts everything equal to `lo`
/// in the first cell.
pub(crate) fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> (Vec<usize>, usize) {
    let mut counts = vec![0usize; bins];
    let mut outside = 0;
    let width = hi - lo;
    for &x in xs {
        if !x.is_finite() || x < lo || x > hi {
            outside += 1;
            continue;
        }
        let b = if width > 0.0 {
            (((x - lo) / width) * bins as f64).floor() as usize
        } else {
            0
        };
        counts[b.min(bins - 1)] += 1;
    }
    (counts, outside)
}
