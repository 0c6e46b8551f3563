//! Minimum-transmit-power design for a multiuser MISO downlink assisted by a
//! decode-and-forward relay and a reconfigurable intelligent surface.
//!
//! The crate covers the half-duplex and full-duplex relaying protocols with
//! continuous or discrete surface phase shifts, plus a small simulation
//! harness that sweeps scenario parameters and writes per-trial results.

pub mod channel;
pub mod discrete;
pub mod error;
pub mod full_duplex;
pub mod half_duplex;
pub mod phases;
pub mod precoding;
pub mod sim;

pub use error::{Error, Result};
pub use half_duplex::{ConstraintReport, SolverOptions};
