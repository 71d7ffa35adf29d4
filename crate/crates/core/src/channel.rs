//! Parametric free-space channel and the heterodyne Stokes receiver.
//!
//! The channel applies, per pulse: a rotation of the `(s2, s3)` plane by the
//! accumulated polarization drift plus residual Doppler phase, amplitude
//! scaling by `sqrt(T)`, and Gaussian excess noise of variance `T·ξ`
//! (ξ referred to the channel input). The receiver taps 10% of the light for
//! LO-power monitoring on `s1` and heterodynes the rest on `s2`/`s3`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{require, ParamError};
use crate::noise::GaussianSource;
use crate::stokes::{wrap_phase, QuadraturePair};

pub fn db_to_transmittance(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

pub fn transmittance_to_db(t: f64) -> f64 {
    -10.0 * t.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Static attenuation, dB.
    pub loss_db: f64,
    /// ξ, shot-noise units referred to the channel input.
    pub excess_noise: f64,
    /// Polarization random-walk rate, rad/√s.
    pub drift_rate: f64,
    /// Uncompensated frequency offset, Hz.
    pub doppler_residual_hz: f64,
    pub pulse_rate_hz: f64,
    pub timing_jitter_s: f64,
    /// Far-field divergence used by [`pointing_fade`], µrad.
    pub beam_divergence_urad: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            loss_db: 0.0,
            excess_noise: 0.02,
            drift_rate: 0.0,
            doppler_residual_hz: 0.0,
            pulse_rate_hz: 1e7,
            timing_jitter_s: 200e-12,
            beam_divergence_urad: 500.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        require(self.loss_db.is_finite() && self.loss_db >= 0.0, "loss_db", self.loss_db, "must be >= 0")?;
        require(
            self.excess_noise.is_finite() && self.excess_noise >= 0.0,
            "excess_noise",
            self.excess_noise,
            "must be >= 0",
        )?;
        require(self.drift_rate.is_finite() && self.drift_rate >= 0.0, "drift_rate", self.drift_rate, "must be >= 0")?;
        require(
            self.doppler_residual_hz.is_finite(),
            "doppler_residual_hz",
            self.doppler_residual_hz,
            "must be finite",
        )?;
        require(
            self.pulse_rate_hz.is_finite() && self.pulse_rate_hz > 0.0,
            "pulse_rate_hz",
            self.pulse_rate_hz,
            "must be > 0",
        )?;
        require(
            self.timing_jitter_s.is_finite() && self.timing_jitter_s >= 0.0,
            "timing_jitter_s",
            self.timing_jitter_s,
            "must be >= 0",
        )?;
        require(
            self.beam_divergence_urad.is_finite() && self.beam_divergence_urad > 0.0,
            "beam_divergence_urad",
            self.beam_divergence_urad,
            "must be > 0",
        )
    }

    pub fn transmittance(&self) -> f64 {
        db_to_transmittance(self.loss_db)
    }

    pub fn pulse_period_s(&self) -> f64 {
        1.0 / self.pulse_rate_hz
    }

    /// Synchronization slop in whole pulses (at least ±2).
    pub fn jitter_slop_pulses(&self) -> usize {
        ((self.timing_jitter_s * self.pulse_rate_hz).ceil() as usize).max(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelState {
    pub drift_phase: f64,
    pub doppler_phase: f64,
    pub pulse_index: u64,
}

impl ChannelState {
    pub fn rotation(&self) -> f64 {
        wrap_phase(self.drift_phase + self.doppler_phase)
    }
}

pub fn step_channel<N: GaussianSource + ?Sized>(
    state: ChannelState,
    params: &ChannelParams,
    rng: &mut N,
) -> ChannelState {
    step_channel_by(state, params, 1, rng)
}

/// Advances the channel by `pulses` periods in one draw; the random walk
/// increment over `k` periods is exactly `Normal(0, rate²·k·dt)`.
pub fn step_channel_by<N: GaussianSource + ?Sized>(
    state: ChannelState,
    params: &ChannelParams,
    pulses: u64,
    rng: &mut N,
) -> ChannelState {
    let elapsed = pulses as f64 * params.pulse_period_s();
    let drift_step = rng.normal(params.drift_rate * elapsed.sqrt());
    ChannelState {
        drift_phase: wrap_phase(state.drift_phase + drift_step),
        doppler_phase: wrap_phase(state.doppler_phase + TAU * params.doppler_residual_hz * elapsed),
        pulse_index: state.pulse_index + pulses,
    }
}

pub fn propagate<N: GaussianSource + ?Sized>(
    target: QuadraturePair,
    state: &ChannelState,
    params: &ChannelParams,
    rng: &mut N,
) -> QuadraturePair {
    propagate_with_transmittance(target, state, params.transmittance(), params.excess_noise, rng)
}

/// [`propagate`] with an explicit end-to-end transmittance, e.g. static loss
/// multiplied by a pointing fade.
pub fn propagate_with_transmittance<N: GaussianSource + ?Sized>(
    target: QuadraturePair,
    state: &ChannelState,
    transmittance: f64,
    excess_noise: f64,
    rng: &mut N,
) -> QuadraturePair {
    let rotated = target.rotated(state.rotation()).scaled(transmittance.sqrt());
    let sigma = (transmittance * excess_noise).sqrt();
    QuadraturePair::new(rotated.x + rng.normal(sigma), rotated.p + rng.normal(sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    /// Fraction of the received light sent to the `s1` monitor arm.
    pub split_ratio: f64,
    /// η
    pub detection_efficiency: f64,
    /// v_el, shot-noise units.
    pub electronic_noise: f64,
    pub extinction_db: f64,
    /// Mean `s1` monitor reading for the co-propagating LO.
    pub lo_monitor_level: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            split_ratio: 0.10,
            detection_efficiency: 0.55,
            electronic_noise: 0.10,
            extinction_db: 70.0,
            lo_monitor_level: 100.0,
        }
    }
}

impl ReceiverConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        require(
            self.split_ratio > 0.0 && self.split_ratio < 1.0,
            "split_ratio",
            self.split_ratio,
            "must be in (0, 1)",
        )?;
        require(
            self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0,
            "detection_efficiency",
            self.detection_efficiency,
            "must be in (0, 1]",
        )?;
        require(
            self.electronic_noise.is_finite() && self.electronic_noise >= 0.0,
            "electronic_noise",
            self.electronic_noise,
            "must be >= 0",
        )?;
        require(
            self.extinction_db.is_finite() && self.extinction_db >= 0.0,
            "extinction_db",
            self.extinction_db,
            "must be >= 0",
        )?;
        require(
            self.lo_monitor_level.is_finite() && self.lo_monitor_level >= 0.0,
            "lo_monitor_level",
            self.lo_monitor_level,
            "must be >= 0",
        )
    }

    /// Per-quadrature detection noise floor, `1 + v_el`.
    pub fn noise_floor(&self) -> f64 {
        1.0 + self.electronic_noise
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeterodyneSample {
    pub s1_meas: f64,
    pub s2_meas: f64,
    pub s3_meas: f64,
    pub pulse_index: u64,
}

impl HeterodyneSample {
    pub fn quadratures(&self) -> QuadraturePair {
        QuadraturePair::new(self.s2_meas, self.s3_meas)
    }
}

pub fn heterodyne_measure<N: GaussianSource + ?Sized>(
    q: QuadraturePair,
    pulse_index: u64,
    rcv: &ReceiverConfig,
    rng: &mut N,
) -> HeterodyneSample {
    let gain = rcv.detection_efficiency.sqrt();
    let sigma = rcv.noise_floor().sqrt();
    HeterodyneSample {
        s1_meas: rcv.split_ratio * rcv.lo_monitor_level + rng.standard_normal(),
        s2_meas: gain * q.x + rng.normal(sigma),
        s3_meas: gain * q.p + rng.normal(sigma),
        pulse_index,
    }
}

/// Gaussian far-field overlap loss for an angular pointing residual.
pub fn pointing_fade(residual_urad: f64, beam_divergence_urad: f64) -> f64 {
    debug_assert!(beam_divergence_urad > 0.0);
    let ratio = residual_urad.abs() / beam_divergence_urad;
    (-2.0 * ratio * ratio).exp()
}
