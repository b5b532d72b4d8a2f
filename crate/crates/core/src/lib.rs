//! Joint symbol detection and turbo decoding over ISI channels.
//!
//! The crate provides trellis builders, a log-domain BCJR engine generic over
//! the floating point type, the transmit chain, three receivers (separate
//! detector + turbo decoder, joint BCJR, and joint BCJR with a learned branch
//! metric), a small MLP with KL training, and a Monte Carlo BER harness.

pub mod bcjr;
pub mod error;
pub mod harness;
pub mod neural;
pub mod receivers;
pub mod rng;
pub mod scalar;
pub mod trellis;
pub mod txchain;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Lattice = bcjr::BranchMetricLattice<f64>;
pub type Lattice32 = bcjr::BranchMetricLattice<f32>;
pub type Bcjr = bcjr::BcjrResult<f64>;
pub type Bcjr32 = bcjr::BcjrResult<f32>;
pub type Mlp64 = neural::Mlp<f64>;
pub type Mlp32 = neural::Mlp<f32>;
pub type Adam64 = neural::Adam<f64>;
pub type Adam32 = neural::Adam<f32>;
