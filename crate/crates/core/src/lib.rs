#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

//! Simulation and APP equalization for bandlimited channels with a memoryless
//! nonlinearity: SIC receivers with forward-backward, Gibbs-sampling and
//! recurrent-network equalizers, plus Monte-Carlo rate estimation.

pub mod channel;
pub mod error;
pub mod experiment;
pub mod fba;
pub mod gibbs;
pub mod modem;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod sic;

pub use error::{Error, Result};
