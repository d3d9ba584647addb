//! Robust joint access-point clustering and beamforming for cell-free
//! downlink systems under bounded CSI error.
//!
//! The crate is `no_std` (with `alloc`) and carries the numerical core:
//! channel simulation ([`sysmodel`]), worst-case SINR certification by LMI
//! feasibility ([`certifier`]), a WMMSE baseline ([`baseline`]), the neural
//! clustering/beamforming pipeline ([`nn`]) and its unsupervised trainer
//! ([`train`]). File formats, sweeps and the command line live in the
//! `cellfree-lab` companion crate.

#![no_std]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baseline;
pub mod certifier;
mod error;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod sysmodel;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use linalg::C64;
pub use tensor::CTensor3;

use rand::SeedableRng;

/// Deterministic random stream used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's random stream from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
