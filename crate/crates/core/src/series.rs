//! Sampled multivariate trajectories and their CSV representation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::scalar::Real;

/// A trajectory stored as an `n_vars × n_steps` matrix with sampling step `dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TimeSeries<T: Real> {
    values: DMatrix<T>,
    dt: T,
    var_names: Vec<String>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(values: DMatrix<T>, dt: T, var_names: Vec<String>) -> Result<Self> {
        ensure(values.ncols() >= 1, || "time series needs at least one step".into())?;
        ensure(values.nrows() >= 1, || "time series needs at least one variable".into())?;
        ensure(dt > T::zero() && dt.finite(), || {
            format!("dt must be positive, got {dt}")
        })?;
        ensure(var_names.len() == values.nrows(), || {
            format!("{} variable names for {} variables", var_names.len(), values.nrows())
        })?;
        Ok(Self { values, dt, var_names })
    }

    /// Builds a series with generated names `x0, x1, ...`.
    pub fn unnamed(values: DMatrix<T>, dt: T) -> Result<Self> {
        let names = (0..values.nrows()).map(|i| format!("x{i}")).collect();
        Self::new(values, dt, names)
    }

    pub fn from_rows(rows: &[Vec<T>], dt: T) -> Result<Self> {
        ensure(!rows.is_empty(), || "no rows".into())?;
        let n = rows[0].len();
        ensure(rows.iter().all(|r| r.len() == n), || "ragged rows".into())?;
        let values = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        Self::unnamed(values, dt)
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<T> {
        self.values
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn n_vars(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.values.ncols()
    }

    /// Total covered time, `n_steps · dt`.
    pub fn duration(&self) -> T {
        T::of_usize(self.n_steps()) * self.dt
    }

    pub fn row(&self, var: usize) -> Vec<T> {
        self.values.row(var).iter().copied().collect()
    }

    pub fn column(&self, step: usize) -> DVector<T> {
        self.values.column(step).into_owned()
    }

    /// Steps `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        ensure(start < end && end <= self.n_steps(), || {
            format!("slice {start}..{end} outside 0..{}", self.n_steps())
        })?;
        let values = self.values.columns(start, end - start).into_owned();
        Self::new(values, self.dt, self.var_names.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.finite())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.values.shape() == other.values.shape() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "series shapes {:?} vs {:?}",
                self.values.shape(),
                other.values.shape()
            )))
        }
    }

    /// Writes a header row of variable names followed by one row per step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.var_names)?;
        let mut record = Vec::with_capacity(self.n_vars());
        for col in self.values.column_iter() {
            record.clear();
            record.extend(col.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the CSV layout produced by [`TimeSeries::write_csv`]; `dt` is not
    /// part of the CSV and comes from the sidecar metadata.
    pub fn read_csv<R: Read>(input: R, dt: T) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let names: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let mut data: Vec<T> = Vec::new();
        let mut steps = 0usize;
        for rec in r.records() {
            let rec = rec?;
            ensure(rec.len() == names.len(), || {
                format!("row {steps} has {} fields", rec.len())
            })?;
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("row {steps}: `{field}` is not a number")))?;
                data.push(T::of(v));
            }
            steps += 1;
        }
        ensure(steps > 0, || "CSV contains no data rows".into())?;
        let values = DMatrix::from_vec(names.len(), steps, data);
        Self::new(values, dt, names)
    }

    pub fn load_csv(path: &Path, dt: T) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), dt)
    }
}

/// Per-variable affine map `x ↦ (x − offset) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Normalization<T: Real> {
    pub offset: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> Normalization<T> {
    pub fn identity(n_vars: usize) -> Self {
        Self {
            offset: vec![T::zero(); n_vars],
            scale: vec![T::one(); n_vars],
        }
    }

    /// Zero mean, unit variance on `series`. Constant variables keep scale 1.
    pub fn fit(series: &TimeSeries<T>) -> Self {
        Self::fit_matrix(series.values())
    }

    pub fn fit_matrix(values: &DMatrix<T>) -> Self {
        let n = T::of_usize(values.ncols());
        let mut offset = Vec::with_capacity(values.nrows());
        let mut scale = Vec::with_capacity(values.nrows());
        for row in values.row_iter() {
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
            let sd = var.sqrt();
            offset.push(mean);
            scale.push(if sd > T::zero() && sd.finite() { sd } else { T::one() });
        }
        Self { offset, scale }
    }

    pub fn n_vars(&self) -> usize {
        self.offset.len()
    }

    pub fn apply_matrix(&self, values: &DMatrix<T>) -> DMatrix<T> {
        DMatrix::from_fn(values.nrows(), values.ncols(), |i, j| {
            (values[(i, j)] - self.offset[i]) / self.scale[i]
        })
    }

    pub fn invert_matrix(&self, values: &DMatrix<T>) -> DMatrix<T> {
        DMatrix::from_fn(values.nrows(), values.ncols(), |i, j| {
            values[(i, j)] * self.scale[i] + self.offset[i]
        })
    }

    pub fn apply(&self, series: &TimeSeries<T>) -> Result<TimeSeries<T>> {
        self.check(series.n_vars())?;
        TimeSeries::new(
            self.apply_matrix(series.values()),
            series.dt(),
            series.var_names().to_vec(),
        )
    }

    pub fn invert(&self, series: &TimeSeries<T>) -> Result<TimeSeries<T>> {
        self.check(series.n_vars())?;
        TimeSeries::new(
            self.invert_matrix(series.values()),
            series.dt(),
            series.var_names().to_vec(),
        )
    }

    fn check(&self, n_vars: usize) -> Result<()> {
        if n_vars == self.n_vars() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "normalization for {} variables applied to {n_vars}",
                self.n_vars()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dt_and_empty() {
        assert!(TimeSeries::<f64>::unnamed(DMatrix::zeros(1, 3), 0.0).is_err());
        assert!(TimeSeries::<f64>::unnamed(DMatrix::zeros(1, 0), 0.1).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let values = DMatrix::from_fn(2, 5, |i, j| (i as f64 + 1.0) / 3.0 + (j as f64).sqrt());
        let ts = TimeSeries::new(values, 0.01, vec!["a".into(), "b,c".into()]).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("a,\"b,c\"\n"));
        let back = TimeSeries::<f64>::read_csv(buf.as_slice(), 0.01).unwrap();
        assert_eq!(back, ts);
    }

    #[test]
    fn normalization_round_trips() {
        let values = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, 5.0, 5.0, 5.0, 5.0]);
        let norm = Normalization::fit_matrix(&values);
        let z = norm.apply_matrix(&values);
        let mean0: f64 = z.row(0).iter().sum::<f64>() / 4.0;
        assert!(mean0.abs() < 1e-15);
        // constant row keeps unit scale
        assert_eq!(norm.scale[1], 1.0);
        let back = norm.invert_matrix(&z);
        assert!((back - values).abs().max() < 1e-14);
    }
}
