//! Link-level simulation and inference for diffusive MIMO (D-MIMO) molecular
//! communication.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: transceiver placement, Stokes-Einstein diffusivity and
//!   Brownian mobility of the devices themselves.
//! - [`channel`]: free-space diffusion, mean channel impulse response taps,
//!   truncation noise and Poisson molecule counting.
//! - [`mimo`]: OOK symbol blocks, the convolutional arrangement `X` and
//!   time-interleaving offset schedules.
//! - [`estimation`]: Poisson log-likelihood, Cramér-Rao bound, ML and LS
//!   channel estimators and training sequence design.
//! - [`equalization`]: decision feedback in the mean followed by ZF/MMSE
//!   threshold detection or exhaustive LS detection.
//! - [`harness`]: Monte Carlo sweeps, the block-type protocol and CSV output.

pub mod channel;
pub mod config;
pub mod equalization;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod mimo;
pub mod stats;

pub use error::{Error, Result};
