//! Key-generation protocol: parameter estimation, polarization compensation,
//! key-rate evaluation, privacy amplification, the wire format and the
//! Alice/Bob session state machines.

pub mod estimate;
pub mod keyrate;
pub mod privacy;
pub mod session;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::error::{require, ParamError};

pub use estimate::{compensate_polarization, estimate_parameters, CovarianceEstimate, EstimateError};
pub use keyrate::{
    finite_size_delta, holevo_bound, mutual_information, secure_key_rate, GaussianLink, KeyRateError, KeyRateInputs,
    KeyRateReport,
};
pub use privacy::{discretize, reconcile_and_amplify, toeplitz_hash, FinalKeys, KEY_BITS_PER_SAMPLE};
pub use session::{AbortReason, AliceSession, BobSession};
pub use wire::{MessageKind, SessionMessage, WireError};

/// Gaussian confidence coefficient for `ε_PE = 1e-10`.
pub const Z_PE: f64 = 6.5;

/// Minimum block length accepted by [`SessionConfig::validate`].
pub const MIN_BLOCK_SIZE: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// N, pulses per block.
    pub block_size: u64,
    /// Fraction of the block disclosed for parameter estimation.
    pub reveal_fraction: f64,
    /// β, reconciliation efficiency.
    pub beta: f64,
    pub eps_pe: f64,
    pub eps_bar: f64,
    pub eps_pa: f64,
    /// V1, shot-noise units.
    pub v1: f64,
    /// f, pulses per second.
    pub pulse_rate_hz: f64,
    /// Counter-rotate measurements by the angle fitted on revealed pairs.
    pub compensation: bool,
    /// Pulses sharing one compensation angle.
    pub compensation_segment: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            block_size: 100_000_000,
            reveal_fraction: 0.5,
            beta: 0.95,
            eps_pe: 1e-10,
            eps_bar: 1e-10,
            eps_pa: 1e-10,
            v1: 2.0,
            pulse_rate_hz: 1e7,
            compensation: true,
            compensation_segment: 1_000_000,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        require(self.block_size >= MIN_BLOCK_SIZE, "block_size", self.block_size, "must be >= 10000")?;
        require(
            self.reveal_fraction > 0.0 && self.reveal_fraction < 1.0,
            "reveal_fraction",
            self.reveal_fraction,
            "must be in (0, 1)",
        )?;
        require(self.beta > 0.0 && self.beta <= 1.0, "beta", self.beta, "must be in (0, 1]")?;
        for (key, eps) in [("eps_pe", self.eps_pe), ("eps_bar", self.eps_bar), ("eps_pa", self.eps_pa)] {
            require(eps > 0.0 && eps < 1.0, key, eps, "must be in (0, 1)")?;
        }
        require(self.v1.is_finite() && self.v1 > 0.0, "v1", self.v1, "must be > 0")?;
        require(
            self.pulse_rate_hz.is_finite() && self.pulse_rate_hz > 0.0,
            "pulse_rate_hz",
            self.pulse_rate_hz,
            "must be > 0",
        )?;
        require(
            self.compensation_segment >= 100,
            "compensation_segment",
            self.compensation_segment,
            "must be >= 100",
        )?;
        Ok(())
    }

    /// m, pulses disclosed for estimation.
    pub fn reveal_pulses(&self) -> u64 {
        ((self.block_size as f64) * self.reveal_fraction).round() as u64
    }

    /// n = N − m, pulses retained for the key.
    pub fn key_pulses(&self) -> u64 {
        self.block_size - self.reveal_pulses()
    }

    /// Wall-clock length of one block, seconds.
    pub fn block_duration_s(&self) -> f64 {
        self.block_size as f64 / self.pulse_rate_hz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = SessionConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.reveal_pulses() + cfg.key_pulses(), cfg.block_size);
        assert_eq!(cfg.block_duration_s(), 10.0);
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = SessionConfig {
            reveal_fraction: 1.0,
            ..Default::default()
        };
        assert_eq!(bad.validate().unwrap_err().key, "reveal_fraction");
        let bad = SessionConfig {
            block_size: 9_999,
            ..Default::default()
        };
        assert_eq!(bad.validate().unwrap_err().key, "block_size");
        let bad = SessionConfig {
            beta: 0.0,
            ..Default::default()
        };
        assert_eq!(bad.validate().unwrap_err().key, "beta");
    }
}
