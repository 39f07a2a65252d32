//! Seamless outdoor-indoor pedestrian positioning.
//!
//! A shared PDR front-end feeds three interchangeable fusion back-ends (an
//! error-state Kalman filter, a sliding-window factor graph and a step-driven
//! particle filter). GNSS fixes outdoors and UWB trilateration fixes indoors
//! bound the drift, and building footprints constrain every back-end. A
//! scenario simulator and an evaluation harness reproduce the error-CDF and
//! summary-statistics protocol without hardware.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eskf;
pub mod estimator;
pub mod eval;
pub mod fgo;
pub mod geo;
pub mod io;
pub mod map;
pub mod pdr;
pub mod pf;
pub mod pipeline;
pub mod sim;
pub mod uwb;

use thiserror::Error;

pub use estimator::{BackendKind, Estimator, EstimatorOutput};
pub use geo::{EnuOrigin, EnuPoint, GeoPoint, Heading};
pub use map::FeasibilityMap;
pub use pdr::StepIncrement;
pub use uwb::{AbsoluteFix, FixSource};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geo(#[from] geo::GeoError),
    #[error(transparent)]
    Pdr(#[from] pdr::PdrError),
    #[error(transparent)]
    Map(#[from] map::MapError),
    #[error(transparent)]
    Uwb(#[from] uwb::UwbError),
    #[error(transparent)]
    Eskf(#[from] eskf::EskfError),
    #[error(transparent)]
    Fgo(#[from] fgo::FgoError),
    #[error(transparent)]
    Pf(#[from] pf::PfError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
