//! Disturbance model, actuators and the two tracking control laws.
//!
//! The coarse loop runs at 50 Hz and drives a rate-commanded gimbal with a
//! first-order velocity lag. The fine loop runs at 500 Hz and drives a
//! fast-steering mirror through a velocity-form PI law; its command takes
//! effect on the next tick. All angles are µrad, `[az, el]`.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{require, ParamError};
use crate::noise::GaussianSource;

pub const FINE_RATE_HZ: f64 = 500.0;
pub const COARSE_RATE_HZ: f64 = 50.0;
/// Fine ticks per coarse frame.
pub const COARSE_DIVIDER: u64 = 10;

/// Angular disturbance seen at the tracking camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceProfile {
    pub tone_freqs_hz: Vec<f64>,
    /// Peak amplitude of each tone along its (seeded) direction, µrad.
    pub tone_amps_urad: Vec<f64>,
    /// White jitter per axis per fine tick, µrad.
    pub jitter_sigma_urad: f64,
    /// Peak azimuth slew rate from platform motion, µrad/s.
    pub slew_rate_urad_s: f64,
    /// Time spent moving, s.
    pub slew_duration_s: f64,
    /// Time to reach (and to leave) the peak rate, s.
    pub slew_ramp_s: f64,
}

impl Default for DisturbanceProfile {
    fn default() -> Self {
        Self {
            tone_freqs_hz: vec![12.0, 47.0],
            tone_amps_urad: vec![80.0, 30.0],
            jitter_sigma_urad: 15.0,
            slew_rate_urad_s: 0.0,
            slew_duration_s: 0.0,
            slew_ramp_s: 2.0,
        }
    }
}

impl DisturbanceProfile {
    /// No vibration, jitter or slew.
    pub fn quiet() -> Self {
        Self {
            tone_freqs_hz: Vec::new(),
            tone_amps_urad: Vec::new(),
            jitter_sigma_urad: 0.0,
            slew_rate_urad_s: 0.0,
            slew_duration_s: 0.0,
            slew_ramp_s: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        require(
            self.tone_freqs_hz.len() == self.tone_amps_urad.len(),
            "tone_amps_urad",
            self.tone_amps_urad.len(),
            "needs one amplitude per tone frequency",
        )?;
        for &f in &self.tone_freqs_hz {
            require(
                f.is_finite() && f > 0.0 && f < FINE_RATE_HZ / 2.0,
                "tone_freqs_hz",
                f,
                "must be in (0, 250) Hz",
            )?;
        }
        for &a in &self.tone_amps_urad {
            require(a.is_finite() && a >= 0.0, "tone_amps_urad", a, "must be >= 0")?;
        }
        require(
            self.jitter_sigma_urad.is_finite() && self.jitter_sigma_urad >= 0.0,
            "jitter_sigma_urad",
            self.jitter_sigma_urad,
            "must be >= 0",
        )?;
        require(self.slew_rate_urad_s.is_finite(), "slew_rate_urad_s", self.slew_rate_urad_s, "must be finite")?;
        require(
            self.slew_duration_s.is_finite() && self.slew_duration_s >= 0.0,
            "slew_duration_s",
            self.slew_duration_s,
            "must be >= 0",
        )?;
        require(
            self.slew_ramp_s.is_finite() && self.slew_ramp_s > 0.0,
            "slew_ramp_s",
            self.slew_ramp_s,
            "must be > 0",
        )?;
        Ok(())
    }

    /// Trapezoidal slew rate at time `t`.
    pub fn slew_rate_at(&self, t: f64) -> f64 {
        let dur = self.slew_duration_s;
        if self.slew_rate_urad_s == 0.0 || t <= 0.0 || t >= dur {
            return 0.0;
        }
        let ramp = self.slew_ramp_s.min(dur / 2.0);
        let shape = (t / ramp).min(1.0).min((dur - t) / ramp);
        self.slew_rate_urad_s * shape
    }

    /// Azimuth slew angle accumulated by time `t` (integral of the rate).
    pub fn slew_angle_at(&self, t: f64) -> f64 {
        let dur = self.slew_duration_s;
        if self.slew_rate_urad_s == 0.0 || t <= 0.0 {
            return 0.0;
        }
        let r = self.slew_rate_urad_s;
        let ramp = self.slew_ramp_s.min(dur / 2.0);
        let up = |s: f64| r * s * s / (2.0 * ramp);
        let total = r * (dur - ramp);
        let t = t.min(dur);
        if t <= ramp {
            up(t)
        } else if t <= dur - ramp {
            up(ramp) + r * (t - ramp)
        } else {
            total - up(dur - t)
        }
    }
}

/// A profile with its seeded tone phases and directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Disturbance {
    pub profile: DisturbanceProfile,
    phases: Vec<f64>,
    directions: Vec<f64>,
    offset: [f64; 2],
}

impl Disturbance {
    /// `offset` is the static pointing error left by the navigation fix.
    pub fn new<R: Rng + ?Sized>(profile: DisturbanceProfile, offset: [f64; 2], rng: &mut R) -> Self {
        let n = profile.tone_freqs_hz.len();
        let phases = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        let directions = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        Self {
            profile,
            phases,
            directions,
            offset,
        }
    }

    /// Deterministic part of the line-of-sight angle at `t`.
    pub fn deterministic(&self, t: f64) -> [f64; 2] {
        let mut d = self.offset;
        d[0] += self.profile.slew_angle_at(t);
        for i in 0..self.phases.len() {
            let a = self.profile.tone_amps_urad[i] * (TAU * self.profile.tone_freqs_hz[i] * t + self.phases[i]).sin();
            d[0] += a * self.directions[i].cos();
            d[1] += a * self.directions[i].sin();
        }
        d
    }

    pub fn sample<N: GaussianSource + ?Sized>(&self, t: f64, rng: &mut N) -> [f64; 2] {
        let mut d = self.deterministic(t);
        let s = self.profile.jitter_sigma_urad;
        d[0] += rng.normal(s);
        d[1] += rng.normal(s);
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseGains {
    /// Proportional rate gain, 1/s.
    pub kp: f64,
    /// Integral rate gain, 1/s².
    pub ki: f64,
    /// Gimbal velocity lag, s.
    pub lag_s: f64,
    pub rate_limit_urad_s: f64,
}

impl Default for CoarseGains {
    fn default() -> Self {
        Self {
            kp: 8.0,
            ki: 16.0,
            lag_s: 0.01,
            rate_limit_urad_s: 200_000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineGains {
    /// Weight of the current error in the velocity-form update.
    pub a: f64,
    /// Weight of the previous error.
    pub b: f64,
    /// Mirror deflection limit, µrad.
    pub range_urad: f64,
}

impl Default for FineGains {
    fn default() -> Self {
        Self {
            a: 0.78,
            b: 0.16,
            range_urad: 2000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gimbal {
    pub angle: [f64; 2],
    pub rate: [f64; 2],
    pub command: [f64; 2],
    integral: [f64; 2],
    pub saturated: bool,
}

impl Gimbal {
    /// Advances the gimbal by `dt` under the held rate command.
    pub fn advance(&mut self, dt: f64, gains: &CoarseGains) {
        let k = (dt / gains.lag_s).min(1.0);
        for ax in 0..2 {
            self.rate[ax] += (self.command[ax] - self.rate[ax]) * k;
            self.angle[ax] += self.rate[ax] * dt;
        }
    }

    /// Jumps to a scan position and holds still.
    pub fn point_at(&mut self, angle: [f64; 2]) {
        self.angle = angle;
        self.rate = [0.0; 2];
        self.command = [0.0; 2];
    }

    pub fn reset_integrator(&mut self) {
        self.integral = [0.0; 2];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mirror {
    pub angle: [f64; 2],
    prev_error: [f64; 2],
    pub saturated: bool,
}

impl Mirror {
    pub fn reset(&mut self) {
        *self = Mirror::default();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loop {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Actuators {
    pub gimbal: Gimbal,
    pub mirror: Mirror,
}

/// One control update of `which` loop from a measured error.
///
/// Coarse: PI on the error sets the gimbal rate command, clamped to the rate
/// limit. Fine: `u[k] = u[k−1] + a·e[k] + b·e[k−1]`, clamped to the mirror
/// range. Clamping sets the actuator's `saturated` flag.
pub fn control_step(act: &mut Actuators, measured: [f64; 2], which: Loop, coarse: &CoarseGains, fine: &FineGains) {
    match which {
        Loop::Coarse => {
            let g = &mut act.gimbal;
            let dt = 1.0 / COARSE_RATE_HZ;
            g.saturated = false;
            for ax in 0..2 {
                g.integral[ax] += measured[ax] * dt;
                let cmd = coarse.kp * measured[ax] + coarse.ki * g.integral[ax];
                if cmd.abs() > coarse.rate_limit_urad_s {
                    g.saturated = true;
                    // hold the integrator so the clamp does not wind up
                    g.integral[ax] -= measured[ax] * dt;
                }
                g.command[ax] = cmd.clamp(-coarse.rate_limit_urad_s, coarse.rate_limit_urad_s);
            }
        }
        Loop::Fine => {
            let m = &mut act.mirror;
            m.saturated = false;
            for ax in 0..2 {
                let u = m.angle[ax] + fine.a * measured[ax] + fine.b * m.prev_error[ax];
                if u.abs() > fine.range_urad {
                    m.saturated = true;
                }
                m.angle[ax] = u.clamp(-fine.range_urad, fine.range_urad);
                m.prev_error[ax] = measured[ax];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingStats {
    pub rms: f64,
    pub p95: f64,
    /// Fraction of samples with magnitude below the handover threshold.
    pub lock_fraction: f64,
}

/// RMS, 95th percentile of `|r|` and lock fraction of a residual series.
pub fn tracking_stats(series: &[f64], handover_urad: f64) -> Option<TrackingStats> {
    if series.is_empty() {
        return None;
    }
    let n = series.len() as f64;
    let rms = (series.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let mut mags: Vec<f64> = series.iter().map(|r| r.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let rank = ((0.95 * n).ceil() as usize).clamp(1, mags.len());
    let lock = mags.iter().filter(|&&r| r < handover_urad).count() as f64 / n;
    Some(TrackingStats {
        rms,
        p95: mags[rank - 1],
        lock_fraction: lock,
    })
}
