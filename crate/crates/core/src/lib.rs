//! Digital-twin synchronization simulator.
//!
//! A nonlinear ball-and-beam plant runs under a local PID controller and
//! streams its measurements over a lossy, delayed link to a cloud-side twin.
//! Three twin architectures are provided: a replicated controller, a Kalman
//! observer, and a tracking PID. The crate identifies the twin model from
//! plant data, runs the scenarios deterministically from a master seed, and
//! scores the traces.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod netsim;
pub mod observer;
pub mod plant;
pub mod rng;
pub mod scalar;
pub mod sysid;
pub mod twin;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use twin::Architecture;

pub type Matrix = linalg::Matrix<f64>;
pub type DiscreteStateSpace = model::DiscreteStateSpace<f64>;
pub type KalmanFilter = observer::KalmanFilter<f64>;
pub type PidGains = control::PidGains<f64>;
pub type Pid = control::Pid<f64>;
pub type BallBeamParams = plant::BallBeamParams<f64>;
pub type BallBeamPlant = plant::BallBeamPlant<f64>;
pub type Channel = netsim::Channel<f64>;
pub type IoDataset = sysid::IoDataset<f64>;
pub type ArxModel = sysid::ArxModel<f64>;
pub type Scenario = twin::Scenario<f64>;
pub type RunTrace = twin::RunTrace<f64>;
pub type RunSummary = metrics::RunSummary<f64>;
