//! Closed-loop pointing simulation at the fine-loop tick rate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::{AcquisitionEvent, AcquisitionState, TrackingPhase, DEFAULT_HANDOVER_URAD};
use super::camera::{centroid, render_spot_patch, CameraModel, Imaging, Window, WindowController, COARSE_WINDOW};
use super::control::{
    control_step, Actuators, CoarseGains, Disturbance, DisturbanceProfile, FineGains, Loop, COARSE_DIVIDER,
    FINE_RATE_HZ,
};
use crate::error::{require, ParamError};
use crate::noise::GaussianSource;

/// Consecutive coarse frames inside the steering range before fine entry.
pub const FINE_ENTRY_FRAMES: u32 = 5;
/// Scan grid spacing as a fraction of the coarse half-field.
const SCAN_STEP_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatConfig {
    pub enabled: bool,
    /// Engage the fast-steering mirror once the spot is in range.
    pub fine_enabled: bool,
    pub focal_length_m: f64,
    pub handover_urad: f64,
    /// σ per axis of the pointing error left by the navigation fix, µrad.
    pub initial_error_urad: f64,
    pub disturbance: DisturbanceProfile,
    pub imaging: Imaging,
}

impl Default for PatConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            fine_enabled: true,
            focal_length_m: super::camera::DRONE_FOCAL_M,
            handover_urad: DEFAULT_HANDOVER_URAD,
            initial_error_urad: 5000.0,
            disturbance: DisturbanceProfile::default(),
            imaging: Imaging::default(),
        }
    }
}

impl PatConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        require(
            self.focal_length_m.is_finite() && self.focal_length_m > 0.0,
            "focal_length_m",
            self.focal_length_m,
            "must be > 0",
        )?;
        require(
            self.handover_urad.is_finite() && self.handover_urad > 0.0,
            "handover_urad",
            self.handover_urad,
            "must be > 0",
        )?;
        require(
            self.initial_error_urad.is_finite() && self.initial_error_urad >= 0.0,
            "initial_error_urad",
            self.initial_error_urad,
            "must be >= 0",
        )?;
        self.disturbance.validate().map_err(|e| e.in_section("disturbance"))?;
        self.imaging.validate().map_err(|e| e.in_section("imaging"))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatSample {
    pub time_s: f64,
    /// Line-of-sight error after both actuators, µrad.
    pub residual: [f64; 2],
    pub phase: TrackingPhase,
}

impl PatSample {
    pub fn radial(&self) -> f64 {
        self.residual[0].hypot(self.residual[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PatCounters {
    pub gimbal_saturations: u64,
    pub mirror_saturations: u64,
    pub regressions: u64,
    pub scan_frames: u64,
}

/// Square spiral of scan offsets in grid units: ring 0 is the origin, ring
/// `r` the perimeter of the `(2r+1)²` square.
fn spiral(k: usize) -> (i64, i64) {
    if k == 0 {
        return (0, 0);
    }
    let mut r = 1i64;
    let mut start = 1usize;
    while start + 8 * r as usize <= k {
        start += 8 * r as usize;
        r += 1;
    }
    let i = (k - start) as i64;
    let side = 2 * r;
    match i / side {
        0 => (r, -r + 1 + i),
        1 => (r - 1 - (i - side), r),
        2 => (-r, r - 1 - (i - 2 * side)),
        _ => (-r + 1 + (i - 3 * side), -r),
    }
}

#[derive(Debug, Clone)]
pub struct PatSimulator {
    cfg: PatConfig,
    cam: CameraModel,
    coarse_gains: CoarseGains,
    fine_gains: FineGains,
    dist: Disturbance,
    rng: ChaCha8Rng,
    acq: AcquisitionState,
    act: Actuators,
    tick: u64,
    window: WindowController,
    scan_center: [f64; 2],
    scan_index: usize,
    entry_frames: u32,
    counters: PatCounters,
    transitions: Vec<(f64, TrackingPhase)>,
}

impl PatSimulator {
    pub fn new(cfg: PatConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offset = [rng.normal(cfg.initial_error_urad), rng.normal(cfg.initial_error_urad)];
        let dist = Disturbance::new(cfg.disturbance.clone(), offset, &mut rng);
        let cam = CameraModel::new(cfg.focal_length_m);
        let min_snr = cfg.imaging.threshold_sigmas * 2.0;
        Self {
            acq: AcquisitionState::new(cfg.handover_urad),
            cam,
            coarse_gains: CoarseGains::default(),
            fine_gains: FineGains::default(),
            dist,
            rng,
            act: Actuators::default(),
            tick: 0,
            window: WindowController::new((0.0, 0.0), min_snr),
            scan_center: [0.0; 2],
            scan_index: 0,
            entry_frames: 0,
            counters: PatCounters::default(),
            transitions: Vec::new(),
            cfg,
        }
    }

    pub fn with_gains(mut self, coarse: CoarseGains, fine: FineGains) -> Self {
        self.coarse_gains = coarse;
        self.fine_gains = fine;
        self
    }

    pub fn phase(&self) -> TrackingPhase {
        self.acq.phase()
    }

    pub fn acquisition(&self) -> &AcquisitionState {
        &self.acq
    }

    pub fn counters(&self) -> PatCounters {
        self.counters
    }

    /// Every phase change so far as `(time_s, new phase)`, including
    /// changes that happen within a single tick.
    pub fn transitions(&self) -> &[(f64, TrackingPhase)] {
        &self.transitions
    }

    pub fn window_size(&self) -> usize {
        self.window.window().size
    }

    pub fn time_s(&self) -> f64 {
        self.tick as f64 / FINE_RATE_HZ
    }

    fn scan_step_urad(&self) -> f64 {
        self.cam.px_to_urad(SCAN_STEP_FRACTION * COARSE_WINDOW as f64 / 2.0)
    }

    fn scan_point(&self, k: usize) -> [f64; 2] {
        let (i, j) = spiral(k);
        let s = self.scan_step_urad();
        [self.scan_center[0] + i as f64 * s, self.scan_center[1] + j as f64 * s]
    }

    fn measure(&mut self, error: [f64; 2], window: &Window) -> Option<([f64; 2], f64)> {
        let img = render_spot_patch((error[0], error[1]), window, &self.cam, &self.cfg.imaging, &mut self.rng);
        let c = centroid(&img, self.cfg.imaging.threshold())?;
        Some(([self.cam.px_to_urad(c.0), self.cam.px_to_urad(c.1)], img.measured_snr()))
    }

    fn event(&mut self, e: AcquisitionEvent) {
        let before = self.acq.phase();
        let after = self.acq.step(e);
        if after != before {
            self.transitions.push((self.time_s(), after));
        }
        if after < before {
            self.counters.regressions += 1;
            if before.fine_engaged() && !after.fine_engaged() {
                self.act.mirror.reset();
            }
            if after == TrackingPhase::CoarseScan {
                self.scan_center = self.act.gimbal.angle;
                self.scan_index = 0;
                self.act.gimbal.point_at(self.scan_point(0));
            }
        }
    }

    fn coarse_frame(&mut self, ec: [f64; 2]) {
        let coarse_window = Window::centered(COARSE_WINDOW);
        let measured = self.measure(ec, &coarse_window);
        match self.acq.phase() {
            TrackingPhase::CoarseScan => {
                self.counters.scan_frames += 1;
                if measured.is_some() {
                    self.act.gimbal.reset_integrator();
                    self.event(AcquisitionEvent::BeaconDetected);
                } else {
                    self.scan_index += 1;
                    let p = self.scan_point(self.scan_index);
                    self.act.gimbal.point_at(p);
                }
            }
            phase => {
                let Some((m, _)) = measured else {
                    self.act.gimbal.command = [0.0; 2];
                    if phase == TrackingPhase::CoarseTrack {
                        self.event(AcquisitionEvent::NoDetection);
                    } else {
                        self.event(AcquisitionEvent::LossOfLock);
                    }
                    return;
                };
                control_step(&mut self.act, m, Loop::Coarse, &self.coarse_gains, &self.fine_gains);
                if self.act.gimbal.saturated {
                    self.counters.gimbal_saturations += 1;
                }
                if phase == TrackingPhase::CoarseTrack {
                    self.event(AcquisitionEvent::Detection);
                    let in_range = m[0].hypot(m[1]) < 0.5 * self.fine_gains.range_urad;
                    self.entry_frames = if in_range { self.entry_frames + 1 } else { 0 };
                    if self.cfg.fine_enabled && self.entry_frames >= FINE_ENTRY_FRAMES {
                        self.entry_frames = 0;
                        self.act.mirror.reset();
                        let px = (self.cam.urad_to_px(m[0]).round(), self.cam.urad_to_px(m[1]).round());
                        self.window = WindowController::new(px, self.cfg.imaging.threshold_sigmas * 2.0);
                        self.event(AcquisitionEvent::FineFovEntry);
                    }
                }
            }
        }
    }

    fn fine_frame(&mut self, ef: [f64; 2]) {
        let window = self.window.window();
        match self.measure(ef, &window) {
            Some((m, snr)) => {
                self.event(AcquisitionEvent::Detection);
                self.event(AcquisitionEvent::FineResidual(m[0].hypot(m[1])));
                let px = (self.cam.urad_to_px(m[0]), self.cam.urad_to_px(m[1]));
                self.window.select_window(Some(px), snr);
                if self.acq.phase().fine_engaged() {
                    control_step(&mut self.act, m, Loop::Fine, &self.coarse_gains, &self.fine_gains);
                    if self.act.mirror.saturated {
                        self.counters.mirror_saturations += 1;
                    }
                }
            }
            None => {
                self.window.select_window(None, 0.0);
                self.event(AcquisitionEvent::NoDetection);
            }
        }
    }

    /// Advances one fine-loop period.
    pub fn tick(&mut self) -> PatSample {
        let dt = 1.0 / FINE_RATE_HZ;
        let t = self.tick as f64 * dt;
        if self.acq.phase() == TrackingPhase::Idle {
            self.event(AcquisitionEvent::ScanStart);
            self.scan_center = [0.0; 2];
            self.act.gimbal.point_at(self.scan_point(0));
        }
        let d = self.dist.sample(t, &mut self.rng);
        self.act.gimbal.advance(dt, &self.coarse_gains);
        let ec = [d[0] - self.act.gimbal.angle[0], d[1] - self.act.gimbal.angle[1]];
        let mirror = if self.acq.phase().fine_engaged() {
            self.act.mirror.angle
        } else {
            [0.0; 2]
        };
        let residual = [ec[0] - mirror[0], ec[1] - mirror[1]];
        if self.tick % COARSE_DIVIDER == 0 {
            self.coarse_frame(ec);
        }
        if self.acq.phase().fine_engaged() {
            self.fine_frame(residual);
        }
        self.tick += 1;
        PatSample {
            time_s: t,
            residual,
            phase: self.acq.phase(),
        }
    }

    pub fn run(&mut self, seconds: f64) -> Vec<PatSample> {
        let n = (seconds * FINE_RATE_HZ).round() as u64;
        (0..n).map(|_| self.tick()).collect()
    }

    /// Ticks until `phase` is reached; returns the samples, or `None` if it
    /// was not reached within `max_seconds`.
    pub fn run_until(&mut self, phase: TrackingPhase, max_seconds: f64) -> Option<Vec<PatSample>> {
        let n = (max_seconds * FINE_RATE_HZ).round() as u64;
        let mut out = Vec::new();
        for _ in 0..n {
            let s = self.tick();
            out.push(s);
            if s.phase == phase {
                return Some(out);
            }
        }
        None
    }
}
