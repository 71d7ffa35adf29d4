//! Jones/Stokes algebra and the three-stage Sagnac encoder.
//!
//! Alice's transmitter prepares a 45° linear state, applies a relative phase
//! `phi1` to the H component inside the second Sagnac loop, realigns the basis
//! with a polarization-maintaining Faraday rotator, and applies `phi2` inside
//! the third loop before the final PBS recombination. The resulting Stokes
//! components `(s2, s3)` scale as `sin(phi1) * (sin(phi2), cos(phi2))`, so
//! `phi1` sets the radius of a point in the `(s2, s3)` plane and `phi2` sets
//! its angle.
//!
//! Stokes convention used throughout the crate:
//!
//! ```text
//! s0 = |h|² + |v|²      s1 = |h|² − |v|²
//! s2 = 2·Re(h·v̄)        s3 = 2·Im(h·v̄)
//! ```
//!
//! With this handedness the encoder output reproduces the closed-form readout
//! with a single positive constant on both components.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModulationError {
    #[error("uniform draw u1 = {0} is outside [0, 1]")]
    AngleDrawOutOfRange(f64),
    #[error("uniform draw u2 = {0} is outside (0, 1]; ln(u2) would not be finite")]
    RadiusDrawOutOfRange(f64),
    #[error("{name} must be finite and strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Complex field amplitudes of the H and V polarization components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub h: Complex64,
    pub v: Complex64,
}

impl JonesVector {
    pub fn new(h: Complex64, v: Complex64) -> Self {
        Self { h, v }
    }

    pub fn intensity(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub fn to_stokes(&self) -> StokesVector {
        jones_to_stokes(self)
    }

    pub fn max_abs_diff(&self, other: &JonesVector) -> f64 {
        (self.h - other.h).norm().max((self.v - other.v).norm())
    }
}

/// 2×2 Jones operator acting on `[h, v]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub [[Complex64; 2]; 2]);

impl JonesMatrix {
    /// Phase modulator on the H arm: `diag(e^{iφ}, 1)`.
    pub fn phase_on_h(phi: f64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self([[Complex64::from_polar(1.0, phi), zero], [zero, one]])
    }

    /// Sagnac loop followed by PBS: exchanges the arms with a π phase on
    /// the returning H path, `[[0, 1], [−1, 0]]`.
    pub fn sagnac_exchange() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self([[zero, one], [-one, zero]])
    }

    /// Real basis rotation by `theta`, `[[cos, sin], [−sin, cos]]`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self([
            [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
            [Complex64::new(-s, 0.0), Complex64::new(c, 0.0)],
        ])
    }

    pub fn apply(&self, j: &JonesVector) -> JonesVector {
        let m = &self.0;
        JonesVector {
            h: m[0][0] * j.h + m[0][1] * j.v,
            v: m[1][0] * j.h + m[1][1] * j.v,
        }
    }
}

/// Intensity-domain polarization state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    /// `sqrt(s1² + s2² + s3²) / s0`; 1 for pure states.
    pub fn degree_of_polarization(&self) -> f64 {
        if self.s0 == 0.0 {
            return 0.0;
        }
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt() / self.s0
    }

    /// Checks `s1² + s2² + s3² ≤ s0²` with a relative slack of 1e-9.
    pub fn is_physical(&self) -> bool {
        let pol = self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3;
        let s0sq = self.s0 * self.s0;
        self.s0 >= 0.0 && pol <= s0sq + 1e-9 * s0sq
    }
}

pub fn jones_to_stokes(j: &JonesVector) -> StokesVector {
    let hh = j.h.norm_sqr();
    let vv = j.v.norm_sqr();
    let cross = j.h * j.v.conj();
    StokesVector {
        s0: hh + vv,
        s1: hh - vv,
        s2: 2.0 * cross.re,
        s3: 2.0 * cross.im,
    }
}

/// Uniform variates driving one Gaussian draw: `u1` picks the angle, `u2`
/// the radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformDraw {
    pub u1: f64,
    pub u2: f64,
}

impl UniformDraw {
    pub fn new(u1: f64, u2: f64) -> Result<Self, ModulationError> {
        let d = Self { u1, u2 };
        d.validate()?;
        Ok(d)
    }

    /// Draws `u1 ∈ [0, 1)` and `u2 ∈ (0, 1]`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1: f64 = rng.random();
        let u2 = 1.0 - rng.random::<f64>();
        Self { u1, u2 }
    }

    fn validate(&self) -> Result<(), ModulationError> {
        if !(0.0..=1.0).contains(&self.u1) {
            return Err(ModulationError::AngleDrawOutOfRange(self.u1));
        }
        if !(self.u2 > 0.0 && self.u2 <= 1.0) {
            return Err(ModulationError::RadiusDrawOutOfRange(self.u2));
        }
        Ok(())
    }
}

/// Alice's target displacement in shot-noise units, `(x1, p1) = (s2, s3)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadraturePair {
    pub x: f64,
    pub p: f64,
}

impl QuadraturePair {
    pub fn new(x: f64, p: f64) -> Self {
        Self { x, p }
    }

    pub fn radius(&self) -> f64 {
        self.x.hypot(self.p)
    }

    /// Rotates the point counter-clockwise in the `(x, p)` plane.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            x: self.x * c - self.p * s,
            p: self.x * s + self.p * c,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            x: self.x * k,
            p: self.p * k,
        }
    }
}

/// Phases applied by the second-stage (`phi1`) and third-stage (`phi2`)
/// modulators, both wrapped to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DrivePhases {
    phi1: f64,
    phi2: f64,
}

impl DrivePhases {
    pub fn new(phi1: f64, phi2: f64) -> Self {
        Self {
            phi1: wrap_phase(phi1),
            phi2: wrap_phase(phi2),
        }
    }

    pub fn phi1(&self) -> f64 {
        self.phi1
    }

    pub fn phi2(&self) -> f64 {
        self.phi2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationConfig {
    v1: f64,
    a_lo: f64,
    readout_gain: f64,
}

impl ModulationConfig {
    pub fn new(v1: f64, a_lo: f64, readout_gain: f64) -> Result<Self, ModulationError> {
        for (name, value) in [("v1", v1), ("a_lo", a_lo), ("readout_gain", readout_gain)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModulationError::NonPositive { name, value });
            }
        }
        Ok(Self {
            v1,
            a_lo,
            readout_gain,
        })
    }

    /// Readout gain of `8·sqrt(V1)`, so a Gaussian draw saturates the arcsine
    /// domain with probability ~1e-14.
    pub fn with_default_gain(v1: f64, a_lo: f64) -> Result<Self, ModulationError> {
        Self::new(v1, a_lo, 8.0 * v1.max(0.0).sqrt())
    }

    pub fn v1(&self) -> f64 {
        self.v1
    }

    pub fn a_lo(&self) -> f64 {
        self.a_lo
    }

    pub fn readout_gain(&self) -> f64 {
        self.readout_gain
    }
}

/// Every intermediate state of the encoder, in propagation order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainStates {
    /// 45° linear input after the first rotator.
    pub input: JonesVector,
    /// After the second-stage phase modulator.
    pub after_pm1: JonesVector,
    /// After the second Sagnac loop and its PBS.
    pub after_loop2: JonesVector,
    /// After the second Faraday rotator (pre-modulated state).
    pub after_rotator: JonesVector,
    /// After the third-stage phase modulator.
    pub after_pm2: JonesVector,
    /// Output of the third PBS.
    pub output: JonesVector,
}

pub fn encode_chain_stages(phases: DrivePhases, cfg: &ModulationConfig) -> ChainStates {
    let amp = cfg.a_lo * FRAC_1_SQRT_2;
    let input = JonesVector::new(Complex64::new(amp, 0.0), Complex64::new(amp, 0.0));
    let after_pm1 = JonesMatrix::phase_on_h(phases.phi1).apply(&input);
    let after_loop2 = JonesMatrix::sagnac_exchange().apply(&after_pm1);
    let after_rotator = JonesMatrix::rotation(PI / 4.0).apply(&after_loop2);
    let after_pm2 = JonesMatrix::phase_on_h(phases.phi2).apply(&after_rotator);
    let output = JonesMatrix::sagnac_exchange().apply(&after_pm2);
    ChainStates {
        input,
        after_pm1,
        after_loop2,
        after_rotator,
        after_pm2,
        output,
    }
}

pub fn encode_chain(phases: DrivePhases, cfg: &ModulationConfig) -> JonesVector {
    encode_chain_stages(phases, cfg).output
}

/// Closed-form `(s2, s3) = g·sin(phi1)·(sin(phi2), cos(phi2))`.
///
/// `s0` and `s1` come from the encoded Jones state, rescaled by
/// `g / a_lo²` so all four components share the readout units.
pub fn ideal_stokes_readout(phases: DrivePhases, cfg: &ModulationConfig) -> StokesVector {
    let g = cfg.readout_gain;
    let jones = jones_to_stokes(&encode_chain(phases, cfg));
    let scale = g / (cfg.a_lo * cfg.a_lo);
    let r = g * phases.phi1.sin();
    let (s, c) = phases.phi2.sin_cos();
    StokesVector {
        s0: jones.s0 * scale,
        s1: jones.s1 * scale,
        s2: r * s,
        s3: r * c,
    }
}

/// Box–Muller map from `(u1, u2)` to a point of the bivariate normal with
/// covariance `V1·I`.
pub fn sample_gaussian_point(
    u: UniformDraw,
    cfg: &ModulationConfig,
) -> Result<QuadraturePair, ModulationError> {
    u.validate()?;
    let radius = (-2.0 * cfg.v1 * u.u2.ln()).max(0.0).sqrt();
    let (s, c) = (TAU * u.u1).sin_cos();
    Ok(QuadraturePair::new(radius * c, radius * s))
}

/// Result of inverting the readout map for one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveTarget {
    pub phases: DrivePhases,
    /// The target radius exceeded `readout_gain` and was clipped.
    pub saturated: bool,
}

/// Drive phases that make the ideal readout land on `q`.
///
/// Uses the principal branch `phi1 ∈ [0, π/2]`; radii beyond the readout gain
/// are clipped to full scale.
pub fn phases_for_target(q: QuadraturePair, cfg: &ModulationConfig) -> DriveTarget {
    let g = cfg.readout_gain;
    let r = q.radius();
    let saturated = r > g;
    let phi1 = (r.min(g) / g).asin();
    let phi2 = if r == 0.0 { 0.0 } else { q.x.atan2(q.p) };
    DriveTarget {
        phases: DrivePhases::new(phi1, phi2),
        saturated,
    }
}

/// Running count of clipped targets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SaturationCounter {
    pub total: u64,
    pub saturated: u64,
}

impl SaturationCounter {
    pub fn record(&mut self, target: &DriveTarget) {
        self.total += 1;
        self.saturated += u64::from(target.saturated);
    }

    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.saturated as f64 / self.total as f64
        }
    }
}

/// Alice's Gaussian modulator: uniform draws → target point → drive phases.
#[derive(Debug, Clone)]
pub struct GaussianModulator {
    cfg: ModulationConfig,
    saturation: SaturationCounter,
}

/// One prepared pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreparedPulse {
    pub target: QuadraturePair,
    pub phases: DrivePhases,
    /// What the transmitter actually emits after any clipping.
    pub emitted: QuadraturePair,
}

impl GaussianModulator {
    pub fn new(cfg: ModulationConfig) -> Self {
        Self {
            cfg,
            saturation: SaturationCounter::default(),
        }
    }

    pub fn config(&self) -> &ModulationConfig {
        &self.cfg
    }

    pub fn saturation(&self) -> SaturationCounter {
        self.saturation
    }

    pub fn prepare<R: Rng + ?Sized>(&mut self, rng: &mut R) -> PreparedPulse {
        let target = sample_gaussian_point(UniformDraw::sample(rng), &self.cfg)
            .expect("sampled uniform draws are always in range");
        let drive = phases_for_target(target, &self.cfg);
        self.saturation.record(&drive);
        let readout = ideal_stokes_readout(drive.phases, &self.cfg);
        PreparedPulse {
            target,
            phases: drive.phases,
            emitted: QuadraturePair::new(readout.s2, readout.s3),
        }
    }
}
