//! Reservoir computing with time delays in the output layer.
//!
//! The crate covers the whole pipeline: benchmark trajectory generators
//! ([`dynamics`]), fixed random reservoirs ([`reservoir`]), delayed readouts
//! trained by ridge regression with open- and closed-loop prediction
//! ([`readout`]), quantitative probes such as memory capacity and the
//! neuron/lag trade-off grid ([`analysis`]), and the configuration-driven
//! experiment runner behind the `delay-rc` CLI ([`runner`]).
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*F64` aliases
//! below name the double-precision instantiations used by the runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
mod error;
pub mod readout;
pub mod reservoir;
pub mod rng;
pub mod runner;
mod scalar;
pub mod series;

pub use error::{Error, Result};
pub use scalar::Real;
pub use series::{Normalization, TimeSeries};

pub type TimeSeriesF64 = TimeSeries<f64>;
pub type TimeSeriesF32 = TimeSeries<f32>;
pub type ReservoirF64 = reservoir::Reservoir<f64>;
pub type ReservoirF32 = reservoir::Reservoir<f32>;
pub type ReservoirConfigF64 = reservoir::ReservoirConfig<f64>;
pub type StateSequenceF64 = reservoir::StateSequence<f64>;
pub type ReadoutModelF64 = readout::ReadoutModel<f64>;
pub type ReadoutModelF32 = readout::ReadoutModel<f32>;
pub type MCResultF64 = analysis::MCResult<f64>;
pub type SweepResultF64 = analysis::SweepResult<f64>;
