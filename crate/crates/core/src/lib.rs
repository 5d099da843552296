//! Discrete-time ride-sharing fleet simulator.

pub mod demand;
pub mod dispatch;
pub mod engine;
pub mod error;
pub mod geo;
pub mod matching;
pub mod num;
pub mod pricing;
pub mod routing;

pub use error::{Error, Result};
pub use num::Real;

pub type ZoneGrid = geo::Grid<f64>;
pub type PathWeightTable = geo::WeightTable<f64>;
pub type RideRequest = demand::Request<f64>;
pub type QNetwork = dispatch::qfunction::QFunction<f64>;

pub use engine::{run, SimConfig, Simulation};
