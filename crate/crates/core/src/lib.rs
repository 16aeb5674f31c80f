//! Constructive lower-bound machinery for sampling-based learning with ReLU
//! networks and neural operators.

pub mod adversary;
pub mod baselines;
pub mod bump;
pub mod extended_real;
pub mod operator;
pub mod points;
pub mod protocol;
pub mod quadrature;
pub mod relu;
pub mod rng;
pub mod scalar;
pub mod spaces;

pub use relu::{Network, NetworkError, NetworkStats};
pub use scalar::Scalar;

/// Version of this crate, recorded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Double-precision network, the type used throughout the experiments.
pub type Network64 = relu::Network<f64>;
/// Single-precision network.
pub type Network32 = relu::Network<f32>;
