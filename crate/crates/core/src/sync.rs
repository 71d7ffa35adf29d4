//! Phase-modulator based synchronization.
//!
//! Before each transmission Alice sweeps the third-stage modulator over
//! `[0, 2π)` with `sin(phi1)` held at its maximum, and Bob reports the
//! `(s2, s3)` levels. The drive phase at which both components reach their
//! thresholds compensates the slow polarization drift of the link. Sync
//! frames are then sent at that phase: a fixed 10-bit pattern where a `1`
//! puts `+sync_amp` on both `s2` and `s3` and a `0` puts `−sync_amp` on both
//! (phase offset of π). Sync levels sit well above the data constellation so
//! key-distribution pulses never look like a frame.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::HeterodyneSample;
use crate::error::{require, ParamError};
use crate::stokes::{ideal_stokes_readout, DrivePhases, ModulationConfig, QuadraturePair};

pub const PATTERN_LEN: usize = 10;

/// Point of the `(s2, s3)` plane the sync frame is steered to: both
/// components equal and positive.
pub const SYNC_AXIS: f64 = FRAC_PI_4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("sync pattern must be exactly {PATTERN_LEN} characters of 0/1, got {0:?}")]
    BadPattern(String),
    #[error("voltage scan found no point with both s2 and s3 above {threshold}; link not ready")]
    ScanFailed { threshold: f64 },
}

/// Fixed sync pattern in transmission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SyncPattern([bool; PATTERN_LEN]);

impl SyncPattern {
    pub const fn new(bits: [bool; PATTERN_LEN]) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool; PATTERN_LEN] {
        &self.0
    }
}

impl Default for SyncPattern {
    fn default() -> Self {
        "0000010110".parse().expect("default pattern is well formed")
    }
}

impl FromStr for SyncPattern {
    type Err = SyncError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != PATTERN_LEN {
            return Err(SyncError::BadPattern(s.to_string()));
        }
        let mut bits = [false; PATTERN_LEN];
        for (bit, c) in bits.iter_mut().zip(chars) {
            *bit = match c {
                '0' => false,
                '1' => true,
                _ => return Err(SyncError::BadPattern(s.to_string())),
            };
        }
        Ok(Self(bits))
    }
}

impl fmt::Display for SyncPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl TryFrom<String> for SyncPattern {
    type Error = SyncError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SyncPattern> for String {
    fn from(p: SyncPattern) -> Self {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    pub pattern: SyncPattern,
    /// Detection threshold per component, shot-noise units.
    pub amp_threshold: f64,
    /// Per-component sync level at the detector, shot-noise units.
    pub sync_amp: f64,
    /// Pulses per sync window; one frame per window.
    pub window_len: usize,
    pub scan_points: usize,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            pattern: SyncPattern::default(),
            amp_threshold: 6.0,
            sync_amp: 20.0,
            window_len: 2000,
            scan_points: 256,
        }
    }
}

impl SyncConfig {
    /// Fraction of window slots occupied by the frame.
    pub fn duty_cycle(&self) -> f64 {
        PATTERN_LEN as f64 / self.window_len as f64
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        require(self.amp_threshold > 3.0, "amp_threshold", self.amp_threshold, "must exceed the noise floor (> 3)")?;
        require(
            self.sync_amp > self.amp_threshold,
            "sync_amp",
            self.sync_amp,
            "must exceed amp_threshold",
        )?;
        require(self.window_len >= PATTERN_LEN, "window_len", self.window_len, "must hold one frame")?;
        require(self.duty_cycle() < 0.01, "window_len", self.window_len, "duty cycle must stay below 1%")?;
        require(self.scan_points >= 8, "scan_points", self.scan_points, "must be >= 8")
    }

    /// Drive calibration for sync pulses: full `sin(phi1)` puts `sync_amp` on
    /// each component at the sync axis.
    pub fn drive_config(&self) -> ModulationConfig {
        ModulationConfig::new(1.0, 1.0, SQRT_2 * self.sync_amp).expect("sync_amp validated positive")
    }

    pub fn grid_step(&self) -> f64 {
        TAU / self.scan_points as f64
    }
}

/// Ideal `(s2, s3)` of a sync-drive pulse.
pub fn sync_readout(phases: DrivePhases, cfg: &SyncConfig) -> QuadraturePair {
    let s = ideal_stokes_readout(phases, &cfg.drive_config());
    QuadraturePair::new(s.s2, s.s3)
}

/// Ten pulses at full `sin(phi1)`; `sync_phase` is the `phi2` that lands on
/// the sync axis, bit 0 adds π.
pub fn build_sync_frame(cfg: &SyncConfig, sync_phase: f64) -> Vec<DrivePhases> {
    cfg.pattern
        .bits()
        .iter()
        .map(|&bit| DrivePhases::new(FRAC_PI_2, if bit { sync_phase } else { sync_phase + PI }))
        .collect()
}

/// One grid point of the voltage scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub phase: f64,
    /// Raw `(s2, s3)` reported by the probe.
    pub measured: QuadraturePair,
    /// Common level of both components from the sinusoid fit,
    /// `min(s2, s3)`.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub best_voltage_phase: f64,
    pub best_amplitude: f64,
    /// Plane rotation of the link estimated by the fit, radians.
    pub estimated_rotation: f64,
    pub grid: Vec<ScanPoint>,
}

/// Sweeps `phi2` over `scan_points` uniformly spaced values with
/// `phi1 = π/2`.
///
/// A swept drive traces `(s2, s3) = A·(sin(phi2 − δ), cos(phi2 − δ))`, so the
/// scan fits the complex amplitude of that single harmonic by least squares
/// and takes the argmax of the fitted common level over the grid. The fit
/// averages every grid point, which keeps the argmax within a grid step under
/// detector noise where the raw per-point maximum would wander.
pub fn scan_pm3<F>(cfg: &SyncConfig, mut probe: F) -> Result<ScanResult, SyncError>
where
    F: FnMut(DrivePhases) -> QuadraturePair,
{
    let step = cfg.grid_step();
    let measured: Vec<(f64, QuadraturePair)> = (0..cfg.scan_points)
        .map(|k| {
            let phase = k as f64 * step;
            (phase, probe(DrivePhases::new(FRAC_PI_2, phase)))
        })
        .collect();

    let thr = cfg.amp_threshold;
    if !measured.iter().any(|(_, q)| q.x > thr && q.p > thr) {
        return Err(SyncError::ScanFailed { threshold: thr });
    }

    // z(phi) = s2 + i·s3 = A·i·e^{−i·phi}; project onto the basis.
    let n = measured.len() as f64;
    let amp: Complex64 = measured
        .iter()
        .map(|(phase, q)| Complex64::new(q.x, q.p) * Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, *phase))
        .sum::<Complex64>()
        / n;

    let grid: Vec<ScanPoint> = measured
        .iter()
        .map(|&(phase, q)| {
            let fit = amp * Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, -phase);
            ScanPoint {
                phase,
                measured: q,
                level: fit.re.min(fit.im),
            }
        })
        .collect();

    let best = grid
        .iter()
        .copied()
        .reduce(|a, b| if b.level > a.level { b } else { a })
        .expect("scan grid is nonempty");

    Ok(ScanResult {
        best_voltage_phase: best.phase,
        best_amplitude: best.level,
        estimated_rotation: crate::stokes::wrap_phase(amp.arg()),
        grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncDecision {
    pub matched: bool,
    /// Pulse index of the first slot of the best-scoring alignment.
    pub offset: u64,
    /// Slots agreeing with the pattern at that alignment (0–10).
    pub score: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    One,
    Zero,
    Invalid,
}

fn classify(sample: &HeterodyneSample, thr: f64) -> Slot {
    let (a, b) = (sample.s2_meas, sample.s3_meas);
    if a > thr && b > thr {
        Slot::One
    } else if a < -thr && b < -thr {
        Slot::Zero
    } else {
        Slot::Invalid
    }
}

/// Slides the 10-slot correlator over `samples` and reports the first exact
/// match. An invalid slot (either component between the thresholds) never
/// matches.
pub fn detect_sync(samples: &[HeterodyneSample], cfg: &SyncConfig) -> SyncDecision {
    let slots: Vec<Slot> = samples.iter().map(|s| classify(s, cfg.amp_threshold)).collect();
    let expected: Vec<Slot> = cfg
        .pattern
        .bits()
        .iter()
        .map(|&b| if b { Slot::One } else { Slot::Zero })
        .collect();

    let mut best = SyncDecision {
        matched: false,
        offset: samples.first().map_or(0, |s| s.pulse_index),
        score: 0,
    };
    for (i, window) in slots.windows(PATTERN_LEN).enumerate() {
        let score = window.iter().zip(&expected).filter(|(a, b)| a == b).count() as u8;
        if score == PATTERN_LEN as u8 {
            return SyncDecision {
                matched: true,
                offset: samples[i].pulse_index,
                score,
            };
        }
        if score > best.score {
            best = SyncDecision {
                matched: false,
                offset: samples[i].pulse_index,
                score,
            };
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncPhase {
    Scanning,
    Syncing,
    Keying,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncEvent {
    ScanSucceeded,
    ScanFailed,
    FrameMatched,
    FrameUnmatched,
    /// A new transmission is about to start; rescan first.
    Resync,
}

impl From<&SyncDecision> for SyncEvent {
    fn from(d: &SyncDecision) -> Self {
        if d.matched {
            SyncEvent::FrameMatched
        } else {
            SyncEvent::FrameUnmatched
        }
    }
}

impl<E> From<&Result<ScanResult, E>> for SyncEvent {
    fn from(r: &Result<ScanResult, E>) -> Self {
        if r.is_ok() {
            SyncEvent::ScanSucceeded
        } else {
            SyncEvent::ScanFailed
        }
    }
}

pub fn sync_session_step(phase: SyncPhase, event: SyncEvent) -> SyncPhase {
    use SyncEvent::*;
    use SyncPhase::*;
    match (phase, event) {
        (Scanning, ScanSucceeded) => Syncing,
        (Syncing, FrameMatched) => Keying,
        (Keying, Resync) => Scanning,
        (p, _) => p,
    }
}
