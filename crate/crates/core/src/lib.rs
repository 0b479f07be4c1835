//! Sensing estimation rate (SER), mutual information, MMSE and Bayesian
//! Cramér-Rao bounds for Gaussian sensing channels.
//!
//! The active sensing chain `η → h → y → η̂` is treated as a lossy
//! transmission of the parameter `η`. For a prior and a transmit waveform
//! this crate evaluates
//!
//! * the mutual information `I(y; h)` and MMSE of the Gaussian linear model
//!   ([`glm`]) and of the semi-controllable model `y = X F η + z`
//!   ([`semiglm`]),
//! * the rate `R(D)` needed to describe `η` at distortion `D` equal to the
//!   achievable MMSE, via reverse water-filling ([`waterfill`]),
//! * Bayesian Cramér-Rao based bounds for nonlinear channels ([`bcrb`]),
//!
//! and synthesizes the optimal waveforms by water-filling.
//!
//! All rates are in nats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bcrb;
pub mod channels;
pub mod error;
pub mod glm;
pub mod model;
pub mod montecarlo;
pub mod random;
pub mod semiglm;
pub mod spectrum;
pub mod waterfill;

pub use error::{Error, Result};
pub use model::{GaussianPrior, NoiseModel, WaveformGram};
pub use random::random_gaussian_matrix;
pub use spectrum::{spectrum_from_matrix, CMatrix, CVector, HermitianSpectrum, Tolerances, C64};
pub use waterfill::{
    rate_distortion, rate_from_allocation, waterfill_direct, waterfill_inverse, waterfill_weighted,
    WaterfillAllocation,
};
