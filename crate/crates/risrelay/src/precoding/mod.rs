//! Shared mathematical kernel used by both duplex modes: effective channels,
//! rate and SINR evaluators, the BS precoder (SVD + water-filling), the relay
//! precoder (uplink-downlink duality or zero-forcing), the log-det surrogate
//! of the relay rate, and the two continuous phase-update rules.

mod coupling;
mod duality;
mod rates;
mod surrogate;
mod waterfilling;
mod zero_forcing;

pub use coupling::{coupling_blocks, fixed_point_phase, CouplingBlocks, CouplingSide, FixedPointOutcome};
pub use duality::duality_beamforming;
pub use rates::{effective_channels, fd_user_sinr, hd_user_snrs, relay_rate, EffectiveChannels};
pub use surrogate::{linearized_phase_step, surrogate_relay_rate, SurrogateData};
pub use waterfilling::svd_waterfilling;
pub use zero_forcing::zero_forcing;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Relay-precoder stage selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RelaySolver {
    #[default]
    Duality,
    Zf,
}

/// BS precoder W (M x K) and relay precoder U (N x K).
#[derive(Debug, Clone, PartialEq)]
pub struct Precoders {
    pub w: DMatrix<Complex64>,
    pub u: DMatrix<Complex64>,
}

impl Precoders {
    /// tr(W W^H) + tr(U U^H).
    pub fn total_power(&self) -> f64 {
        self.w.norm_squared() + self.u.norm_squared()
    }

    pub fn bs_per_user_powers(&self) -> Vec<f64> {
        self.w.column_iter().map(|c| c.norm_squared()).collect()
    }

    pub fn relay_per_user_powers(&self) -> Vec<f64> {
        self.u.column_iter().map(|c| c.norm_squared()).collect()
    }
}
