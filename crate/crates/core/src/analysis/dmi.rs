use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::reservoir::StateSequence;
use crate::scalar::Real;
use crate::series::TimeSeries;

use super::metrics::histogram;

/// Samples required per histogram bin for every lag.
pub const SAMPLES_PER_BIN: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmiCurve {
    /// `mi[τ-1]` is the mutual information in bits at lag `τ`, averaged over
    /// traces.
    pub mi: Vec<f64>,
    /// Histogram bias estimate `(bins−1)² / (2 N ln 2)` for each lag.
    pub bias: Vec<f64>,
    pub bins: usize,
    pub traces: usize,
    pub recommended_tau: Option<usize>,
}

impl DmiCurve {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau", "mi_bits", "bias_bits", "recommended"])?;
        for (i, (m, b)) in self.mi.iter().zip(&self.bias).enumerate() {
            w.write_record([
                (i + 1).to_string(),
                format!("{m:e}"),
                format!("{b:e}"),
                (self.recommended_tau == Some(i + 1)).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Histogram estimate of `I(x_t; x_{t−τ})` in bits over `bins × bins` equal
/// cells spanning the trace's range.
pub fn mutual_information(trace: &[f64], tau: usize, bins: usize) -> f64 {
    let lo = trace.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) || tau >= trace.len() {
        return 0.0;
    }
    let cell = |x: f64| ((((x - lo) / (hi - lo)) * bins as f64).floor() as usize).min(bins - 1);
    let n = trace.len() - tau;
    let mut joint = vec![0usize; bins * bins];
    let mut now = vec![0usize; bins];
    let mut past = vec![0usize; bins];
    for t in tau..trace.len() {
        let (a, b) = (cell(trace[t]), cell(trace[t - tau]));
        joint[a * bins + b] += 1;
        now[a] += 1;
        past[b] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let c = joint[a * bins + b];
            if c > 0 {
                let p = c as f64 / nf;
                mi += p * (p * nf * nf / (now[a] as f64 * past[b] as f64)).log2();
            }
        }
    }
    mi.max(0.0)
}

pub fn mi_bias(bins: usize, samples: usize) -> f64 {
    let b = bins as f64 - 1.0;
    b * b / (2.0 * samples as f64 * std::f64::consts::LN_2)
}

/// First strict interior local minimum; otherwise the first lag whose value
/// falls below `mi[0] / e`.
pub fn recommend_tau(mi: &[f64]) -> Option<usize> {
    for i in 1..mi.len().saturating_sub(1) {
        if mi[i] < mi[i - 1] && mi[i] < mi[i + 1] {
            return Some(i + 1);
        }
    }
    let cut = mi.first()? / std::f64::consts::E;
    mi.iter().position(|&v| v < cut).map(|i| i + 1)
}

/// Delayed mutual information averaged over `traces`, lags `1..=tau_max`.
pub fn dmi_of_traces(traces: &[Vec<f64>], tau_max: usize, bins: usize) -> Result<DmiCurve> {
    ensure(tau_max >= 1, || "tau_max must be at least 1".into())?;
    ensure(bins >= 2, || "at least two bins are needed".into())?;
    ensure(!traces.is_empty(), || "no traces given".into())?;
    let len = traces.iter().map(Vec::len).min().unwrap_or(0);
    let need = SAMPLES_PER_BIN * bins;
    if len < tau_max + need {
        return Err(Error::InsufficientData(format!(
            "{len} samples per trace; lag {tau_max} with {bins} bins needs at least {}",
            tau_max + need
        )));
    }
    let mut mi = vec![0.0; tau_max];
    for tr in traces {
        for (tau, acc) in (1..=tau_max).zip(mi.iter_mut()) {
            *acc += mutual_information(tr, tau, bins);
        }
    }
    for v in &mut mi {
        *v /= traces.len() as f64;
    }
    let bias = (1..=tau_max).map(|tau| mi_bias(bins, len - tau)).collect();
    Ok(DmiCurve {
        recommended_tau: recommend_tau(&mi),
        mi,
        bias,
        bins,
        traces: traces.len(),
    })
}

/// DMI of every variable of `series`, averaged.
pub fn delayed_mutual_information<T: Real>(series: &TimeSeries<T>, tau_max: usize, bins: usize) -> Result<DmiCurve> {
    let traces: Vec<Vec<f64>> = (0..series.n_vars())
        .map(|v| series.row(v).into_iter().map(|x| x.as_f64()).collect())
        .collect();
    dmi_of_traces(&traces, tau_max, bins)
}

/// DMI averaged over the reservoir neuron traces after the washout, which
/// ties the lag to the neurons' own time scales.
pub fn neuron_dmi<T: Real>(states: &StateSequence<T>, tau_max: usize, bins: usize) -> Result<DmiCurve> {
    let start = states.washout.min(states.n_steps());
    let traces: Vec<Vec<f64>> = states
        .states
        .row_iter()
        .map(|r| r.iter().skip(start).map(|x| x.as_f64()).collect())
        .collect();
    dmi_of_traces(&traces, tau_max, bins)
}

/// Entropy of the binned trace in bits, the ceiling of any lag's MI.
pub fn binned_entropy(trace: &[f64], bins: usize) -> f64 {
    let lo = trace.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return 0.0;
    }
    let (counts, _) = histogram(trace, lo, hi, bins);
    let n = trace.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn noise_stays_at_the_bias_floor() {
        // under independence 2N·ln2·MI is close to χ² with (bins−1)² degrees
        // of freedom, whose mean is the bias estimate; 2× the mean is far out
        // in the tail for 81 degrees of freedom
        let mut rng = crate::rng::stream(21);
        let x: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let c = dmi_of_traces(&[x], 10, 10).unwrap();
        for (m, b) in c.mi.iter().zip(&c.bias) {
            assert!(*m < 2.0 * b, "{m} >= 2 * {b}");
        }
        let mean = c.mi.iter().sum::<f64>() / 10.0;
        assert!(mean < 1.25 * c.bias[0], "{mean}");
    }

    #[test]
    fn periodic_sequence_peaks_at_its_period() {
        let p = 7;
        let x: Vec<f64> = (0..5000).map(|k| ((k % p) as f64 * 1.37).sin()).collect();
        let c = dmi_of_traces(std::slice::from_ref(&x), 10, 16).unwrap();
        let best =
            c.mi.iter()
                .enumerate()
                .fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        assert_eq!(best.0 + 1, p);
        assert!((c.mi[p - 1] - binned_entropy(&x[p..], 16)).abs() < 1e-9);
    }

    #[test]
    fn noisy_sine_first_minimum_near_quarter_period() {
        // a noiseless sampled sine has only 100 distinct values and its
        // histogram MI ripples with every bin crossing; mild noise smooths it
        let mut rng = crate::rng::stream(8);
        let x: Vec<f64> = (0..50_000)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / 100.0).sin() + 0.2 * crate::rng::normal(&mut rng))
            .collect();
        let c = dmi_of_traces(&[x], 60, 16).unwrap();
        let tau = c.recommended_tau.unwrap();
        assert!((20..=30).contains(&tau), "{tau}");
    }

    #[test]
    fn time_reversal_leaves_curve_unchanged() {
        let x: Vec<f64> = (0..3000)
            .map(|k| ((k % 11) as f64 * 0.9).cos() + 0.1 * (k as f64 * 0.05).sin())
            .collect();
        let mut r = x.clone();
        r.reverse();
        let a = dmi_of_traces(&[x], 15, 12).unwrap();
        let b = dmi_of_traces(&[r], 15, 12).unwrap();
        for (u, v) in a.mi.iter().zip(&b.mi) {
            assert!((u - v).abs() <= 0.05 * u.abs().max(1e-12));
        }
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(
            dmi_of_traces(&[vec![0.5; 400]], 5, 10),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn recommendation_falls_back_to_one_over_e() {
        assert_eq!(recommend_tau(&[1.0, 0.8, 0.5, 0.3, 0.2]), Some(4));
        assert_eq!(recommend_tau(&[1.0, 0.9, 0.95]), Some(2));
        assert_eq!(recommend_tau(&[1.0, 0.9]), None);
    }
}
