//! Platform-to-target mimicry: a receding-horizon model-predictive controller that
//! makes a quad-rotor reproduce the trajectory of a fixed-wing aircraft.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below are what the experiment harness and CLI use.

// `!(x > 0)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod fixedwing;
pub mod config;
pub mod frame;
pub mod io;
pub mod mpc;
pub mod multirotor;
pub mod optimizer;
pub mod scalar;
pub mod target;
pub mod vehicle;

pub use error::{Error, Result};
pub use frame::Vec3;
pub use scalar::Real;
pub use vehicle::{ControlKind, ControlVector, CostWeights, Trajectory, VehicleState};

pub type VehicleState64 = VehicleState<f64>;
pub type ControlVector64 = ControlVector<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type MultiRotorParams64 = multirotor::MultiRotorParams<f64>;
pub type FixedWingParams64 = fixedwing::FixedWingParams<f64>;
pub type OptimizerConfig64 = optimizer::OptimizerConfig<f64>;
pub type MpcConfig64 = mpc::MpcConfig<f64>;

pub type VehicleState32 = VehicleState<f32>;
pub type Trajectory32 = Trajectory<f32>;
