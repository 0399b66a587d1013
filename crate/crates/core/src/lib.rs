//! Downlink simulator for cell-free massive MIMO networks controlled by several
//! CPUs.
//!
//! The crate covers the whole link-level chain for one large-scale throw:
//!
//! - [`deployment`]: wrap-around layout, k-means AP clustering, user association
//! - [`channel`]: three-slope path loss, correlated shadowing, Rayleigh fading
//! - [`training`]: DFT pilots, fingerprint pilot assignment, MMSE estimation
//! - [`precoding`]: zero-forcing precoders and Monte-Carlo interference statistics
//! - [`power_control`]: SINR evaluation and bisection max-min power allocation
//! - [`strategies`]: strong / weak / no CPU connectivity trials
//! - [`harness`]: configuration, experiment sweeps and result files
//!
//! Monte-Carlo loops run on rayon when the `parallel` feature is enabled (the
//! default). Every random quantity is derived from an explicit seed and results
//! are reduced in a fixed order, so output does not depend on the thread count
//! or on the [`Exec`] mode.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod deployment;
mod error;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod power_control;
pub mod precoding;
pub mod rng;
pub mod strategies;
pub mod training;

pub use error::{Error, Result};
pub use exec::Exec;

/// Complex sample type used for channels, pilots and precoders.
pub type C64 = nalgebra::Complex<f64>;
