//! Machine-learnability experiments for modular multiplication.
//!
//! * [`modnum`]: prime moduli, discrete Gaussian noise and 1-D LWE datasets.
//! * [`circreg`]: the circular regression loss, its gradient, the
//!   reciprocal-gradient solver and von Mises probability helpers.
//! * [`seqrep`]: fixed-width base-B tokenization and sequence metrics.
//! * [`dhloss`]: a differentiable surrogate loss for Diffie–Hellman style
//!   exponent prediction.
//! * [`harness`]: parameter sweeps, landscape export and seeding.

pub mod circreg;
pub mod dhloss;
mod error;
pub mod harness;
pub mod modnum;
pub mod seqrep;

pub use error::{Error, ParseError, Result};
