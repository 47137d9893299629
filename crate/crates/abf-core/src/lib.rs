//! Numerics for the ABF restricted solid-on-solid model in regime II and the
//! Z_k-symmetric massive field theory it flows to.

pub mod error;
pub mod qspecial;
pub mod weights;
pub mod lhp;
pub mod lattice_ff;
pub mod cyclo;
pub mod continuum_ff;
pub mod verify;

pub use error::{AbfError, Result};
pub use num_complex::Complex64 as C64;
pub use qspecial::{ModelParams, TruncationPolicy};
