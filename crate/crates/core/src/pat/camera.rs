//! Tracking camera: spot rendering, thresholded centroid and the windowed
//! readout ladder.
//!
//! Positions are in sensor pixels relative to the optical axis; `+x` is
//! azimuth and `+y` elevation.

use serde::{Deserialize, Serialize};

use crate::error::{require, ParamError};
use crate::noise::GaussianSource;

pub const SENSOR_PIXELS: usize = 2048;
pub const PIXEL_PITCH_M: f64 = 5.5e-6;
pub const COARSE_WINDOW: usize = 1024;
/// Fine readout sizes, largest first.
pub const FINE_LADDER: [usize; 4] = [512, 256, 128, 64];
pub const DRONE_FOCAL_M: f64 = 0.172;
pub const GROUND_FOCAL_M: f64 = 0.260;

/// Frames a centroid must stay inside the inner quarter before shrinking.
pub const STABLE_FRAMES: usize = 10;
/// Centroid offset, as a fraction of the half-width, that triggers growth.
pub const GROW_FRACTION: f64 = 0.75;
pub const SHRINK_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub focal_length_m: f64,
    pub pixel_pitch_m: f64,
    pub sensor_pixels: usize,
}

impl CameraModel {
    pub fn new(focal_length_m: f64) -> Self {
        Self {
            focal_length_m,
            pixel_pitch_m: PIXEL_PITCH_M,
            sensor_pixels: SENSOR_PIXELS,
        }
    }

    pub fn drone() -> Self {
        Self::new(DRONE_FOCAL_M)
    }

    pub fn ground() -> Self {
        Self::new(GROUND_FOCAL_M)
    }

    /// Small-angle projection of an angle (µrad) onto the sensor (px).
    pub fn urad_to_px(&self, urad: f64) -> f64 {
        urad * 1e-6 * self.focal_length_m / self.pixel_pitch_m
    }

    pub fn px_to_urad(&self, px: f64) -> f64 {
        px * self.pixel_pitch_m / self.focal_length_m * 1e6
    }
}

/// Photometric model of the beacon spot, reduced to an SNR scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Imaging {
    /// Gaussian spot radius σ, pixels.
    pub spot_sigma_px: f64,
    pub background: f64,
    pub read_noise: f64,
    /// Spot peak above background divided by read noise.
    pub snr: f64,
    /// Centroid threshold above background, in read-noise units.
    pub threshold_sigmas: f64,
}

impl Default for Imaging {
    fn default() -> Self {
        Self {
            spot_sigma_px: 2.0,
            background: 10.0,
            read_noise: 2.0,
            snr: 20.0,
            threshold_sigmas: 6.0,
        }
    }
}

impl Imaging {
    pub fn validate(&self) -> Result<(), ParamError> {
        require(self.spot_sigma_px > 0.0, "spot_sigma_px", self.spot_sigma_px, "must be > 0")?;
        require(self.background >= 0.0, "background", self.background, "must be >= 0")?;
        require(self.read_noise >= 0.0, "read_noise", self.read_noise, "must be >= 0")?;
        require(self.snr > 0.0, "snr", self.snr, "must be > 0")?;
        require(
            self.threshold_sigmas > 0.0 && self.threshold_sigmas < self.snr,
            "threshold_sigmas",
            self.threshold_sigmas,
            "must be in (0, snr)",
        )?;
        Ok(())
    }

    pub fn peak(&self) -> f64 {
        self.snr * self.read_noise.max(1e-12)
    }

    pub fn threshold(&self) -> f64 {
        self.background + self.threshold_sigmas * self.read_noise.max(1e-12)
    }
}

/// A square readout region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub size: usize,
    pub center: (f64, f64),
}

impl Window {
    pub fn centered(size: usize) -> Self {
        Self { size, center: (0.0, 0.0) }
    }

    pub fn half_width(&self) -> f64 {
        self.size as f64 / 2.0
    }

    /// Lower-left corner of pixel `(0, 0)`.
    pub fn origin(&self) -> (f64, f64) {
        (self.center.0 - self.half_width(), self.center.1 - self.half_width())
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        let h = self.half_width();
        (p.0 - self.center.0).abs() < h && (p.1 - self.center.1).abs() < h
    }

    /// Largest of the two axis offsets from the window centre, as a
    /// fraction of the half-width.
    pub fn offset_fraction(&self, p: (f64, f64)) -> f64 {
        (p.0 - self.center.0).abs().max((p.1 - self.center.1).abs()) / self.half_width()
    }
}

/// A rectangular crop of the sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotImage {
    /// Lower-left corner of pixel `(0, 0)`.
    pub origin: (f64, f64),
    pub width: usize,
    pub height: usize,
    /// Row-major, `y` outer.
    pub pixels: Vec<f64>,
    pub true_center: (f64, f64),
    pub background: f64,
    pub noise_sigma: f64,
}

impl SpotImage {
    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.origin.0 + i as f64 + 0.5, self.origin.1 + j as f64 + 0.5)
    }

    /// Peak above background over read noise, measured from the pixels.
    pub fn measured_snr(&self) -> f64 {
        let peak = self.pixels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (peak - self.background) / self.noise_sigma.max(1e-12)
    }
}

fn render_region<N: GaussianSource + ?Sized>(
    origin: (f64, f64),
    width: usize,
    height: usize,
    spot: (f64, f64),
    imaging: &Imaging,
    rng: &mut N,
) -> SpotImage {
    let peak = imaging.peak();
    let two_s2 = 2.0 * imaging.spot_sigma_px * imaging.spot_sigma_px;
    let mut pixels = Vec::with_capacity(width * height);
    for j in 0..height {
        let dy = origin.1 + j as f64 + 0.5 - spot.1;
        for i in 0..width {
            let dx = origin.0 + i as f64 + 0.5 - spot.0;
            let signal = peak * (-(dx * dx + dy * dy) / two_s2).exp();
            let v = imaging.background + signal + rng.normal(imaging.read_noise);
            pixels.push(v.max(0.0));
        }
    }
    SpotImage {
        origin,
        width,
        height,
        pixels,
        true_center: spot,
        background: imaging.background,
        noise_sigma: imaging.read_noise,
    }
}

/// Renders the whole readout window for a boresight error `(az, el)` in
/// µrad. A spot outside the window leaves only background and read noise.
pub fn render_spot<N: GaussianSource + ?Sized>(
    error_urad: (f64, f64),
    window: &Window,
    cam: &CameraModel,
    imaging: &Imaging,
    rng: &mut N,
) -> SpotImage {
    let spot = (cam.urad_to_px(error_urad.0), cam.urad_to_px(error_urad.1));
    render_region(window.origin(), window.size, window.size, spot, imaging, rng)
}

/// Renders only the part of the window within five spot radii of the spot.
///
/// Pixels farther out carry no signal and sit more than
/// `threshold_sigmas` read-noise units below threshold with overwhelming
/// probability, so the thresholded centroid is unchanged while the cost per
/// frame drops from `size²` to a few hundred pixels.
pub fn render_spot_patch<N: GaussianSource + ?Sized>(
    error_urad: (f64, f64),
    window: &Window,
    cam: &CameraModel,
    imaging: &Imaging,
    rng: &mut N,
) -> SpotImage {
    let spot = (cam.urad_to_px(error_urad.0), cam.urad_to_px(error_urad.1));
    let (wx, wy) = window.origin();
    let reach = (5.0 * imaging.spot_sigma_px).ceil();
    let clip = |lo: f64, c: f64| -> (usize, usize) {
        let a = ((c - reach - lo).floor()).clamp(0.0, window.size as f64) as usize;
        let b = ((c + reach - lo).ceil()).clamp(0.0, window.size as f64) as usize;
        (a, b)
    };
    let (x0, x1) = clip(wx, spot.0);
    let (y0, y1) = clip(wy, spot.1);
    render_region(
        (wx + x0 as f64, wy + y0 as f64),
        x1 - x0,
        y1 - y0,
        spot,
        imaging,
        rng,
    )
}

/// Weighted mean of `(I − threshold)` over pixels above `threshold`;
/// `None` when no pixel qualifies.
pub fn centroid(img: &SpotImage, threshold: f64) -> Option<(f64, f64)> {
    let (mut w, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for j in 0..img.height {
        for i in 0..img.width {
            let v = img.pixels[j * img.width + i] - threshold;
            if v > 0.0 {
                let (x, y) = img.pixel_center(i, j);
                w += v;
                sx += v * x;
                sy += v * y;
            }
        }
    }
    (w > 0.0).then(|| (sx / w, sy / w))
}

/// Fine-track readout window policy.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowController {
    step: usize,
    center: (f64, f64),
    stable: usize,
    min_snr: f64,
}

impl WindowController {
    pub fn new(center: (f64, f64), min_snr: f64) -> Self {
        Self {
            step: 0,
            center,
            stable: 0,
            min_snr,
        }
    }

    pub fn window(&self) -> Window {
        Window {
            size: FINE_LADDER[self.step],
            center: self.center,
        }
    }

    fn grow(&mut self) {
        self.step = self.step.saturating_sub(1);
        self.stable = 0;
    }

    /// Feeds one frame's centroid and SNR; returns the next window size.
    ///
    /// Grows one step on a missed detection or a centroid at or beyond 75%
    /// of the half-width. Shrinks one step after ten consecutive frames
    /// inside the inner quarter at sufficient SNR. Re-centres on every
    /// detection.
    pub fn select_window(&mut self, centroid: Option<(f64, f64)>, snr: f64) -> usize {
        let Some(c) = centroid else {
            self.grow();
            return self.window().size;
        };
        let frac = self.window().offset_fraction(c);
        if frac >= GROW_FRACTION {
            self.grow();
        } else if frac <= SHRINK_FRACTION && snr >= self.min_snr {
            self.stable += 1;
            if self.stable >= STABLE_FRAMES && self.step + 1 < FINE_LADDER.len() {
                self.step += 1;
                self.stable = 0;
            }
        } else {
            self.stable = 0;
        }
        let limit = (SENSOR_PIXELS / 2) as f64 - self.window().half_width();
        self.center = (c.0.round().clamp(-limit, limit), c.1.round().clamp(-limit, limit));
        self.window().size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Noiseless;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection() {
        let cam = CameraModel::ground();
        assert!((cam.urad_to_px(100.0) - 100e-6 * 0.260 / 5.5e-6).abs() < 1e-12);
        assert!((cam.urad_to_px(100.0) - 4.727).abs() < 1e-3);
        assert!((cam.px_to_urad(cam.urad_to_px(37.0)) - 37.0).abs() < 1e-12);
    }

    #[test]
    fn zero_error_lands_on_window_center() {
        let cam = CameraModel::drone();
        let img = render_spot((0.0, 0.0), &Window::centered(64), &cam, &Imaging::default(), &mut Noiseless);
        let c = centroid(&img, Imaging::default().threshold()).unwrap();
        assert!(c.0.abs() < 1e-6 && c.1.abs() < 1e-6, "{c:?}");
    }

    #[test]
    fn symmetric_spot_on_pixel_center() {
        let cam = CameraModel::drone();
        let imaging = Imaging::default();
        // pixel centres sit at half-integers
        let err = (cam.px_to_urad(3.5), cam.px_to_urad(-7.5));
        let img = render_spot(err, &Window::centered(128), &cam, &imaging, &mut Noiseless);
        let c = centroid(&img, imaging.threshold()).unwrap();
        assert!((c.0 - 3.5).abs() < 1e-6 && (c.1 + 7.5).abs() < 1e-6, "{c:?}");
    }

    #[test]
    fn out_of_window_is_background_only() {
        let cam = CameraModel::drone();
        let imaging = Imaging::default();
        let w = Window::centered(64);
        let err = (cam.px_to_urad(3.0 * w.half_width()), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = render_spot(err, &w, &cam, &imaging, &mut rng);
        assert!(centroid(&img, imaging.threshold()).is_none());
        let patch = render_spot_patch(err, &w, &cam, &imaging, &mut rng);
        assert!(patch.pixels.is_empty());
        assert!(centroid(&patch, imaging.threshold()).is_none());
    }

    #[test]
    fn noisy_centroid_accuracy() {
        let cam = CameraModel::drone();
        let imaging = Imaging::default();
        let w = Window::centered(64);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut sq = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let truth = (rand::Rng::random_range(&mut rng, -5.0..5.0), rand::Rng::random_range(&mut rng, -5.0..5.0));
            let err = (cam.px_to_urad(truth.0), cam.px_to_urad(truth.1));
            let img = render_spot(err, &w, &cam, &imaging, &mut rng);
            let c = centroid(&img, imaging.threshold()).unwrap();
            sq += (c.0 - truth.0).powi(2) + (c.1 - truth.1).powi(2);
        }
        let rms = (sq / trials as f64).sqrt();
        assert!(rms < 0.1, "rms {rms}");
    }

    #[test]
    fn patch_matches_full_frame_without_noise() {
        let cam = CameraModel::drone();
        let imaging = Imaging::default();
        let w = Window {
            size: 256,
            center: (10.0, -4.0),
        };
        let err = (cam.px_to_urad(31.3), cam.px_to_urad(-20.8));
        let full = centroid(&render_spot(err, &w, &cam, &imaging, &mut Noiseless), imaging.threshold()).unwrap();
        let patch = centroid(&render_spot_patch(err, &w, &cam, &imaging, &mut Noiseless), imaging.threshold()).unwrap();
        assert!((full.0 - patch.0).abs() < 1e-12 && (full.1 - patch.1).abs() < 1e-12);
    }

    #[test]
    fn projection_recovers_angle() {
        let cam = CameraModel::ground();
        let imaging = Imaging::default();
        let w = Window::centered(256);
        for urad in [50.0, 300.0, 1000.0, -1300.0] {
            assert!(cam.urad_to_px(urad).abs() <= w.half_width() / 2.0);
            let img = render_spot((urad, 0.0), &w, &cam, &imaging, &mut Noiseless);
            let c = centroid(&img, imaging.threshold()).unwrap();
            let back = cam.px_to_urad(c.0);
            assert!((back - urad).abs() <= 0.02 * urad.abs(), "{urad} -> {back}");
        }
    }

    #[test]
    fn window_shrinks_after_stable_frames() {
        let mut wc = WindowController::new((0.0, 0.0), 10.0);
        for _ in 0..9 {
            assert_eq!(wc.select_window(Some((1.0, 0.0)), 20.0), 512);
        }
        assert_eq!(wc.select_window(Some((0.0, 0.0)), 20.0), 256);
    }

    #[test]
    fn low_snr_blocks_shrinking() {
        let mut wc = WindowController::new((0.0, 0.0), 10.0);
        for _ in 0..30 {
            assert_eq!(wc.select_window(Some((0.0, 0.0)), 5.0), 512);
        }
    }

    #[test]
    fn window_grows_near_edge_and_on_miss() {
        let mut wc = WindowController::new((0.0, 0.0), 10.0);
        for _ in 0..20 {
            wc.select_window(Some((0.0, 0.0)), 20.0);
        }
        assert_eq!(wc.window().size, 128);
        // 90% of the 64 px half-width
        assert_eq!(wc.select_window(Some((0.9 * 64.0, 0.0)), 20.0), 256);
        assert_eq!(wc.select_window(None, 0.0), 512);
        assert_eq!(wc.select_window(None, 0.0), 512);
    }

    #[test]
    fn ladder_moves_one_step_at_a_time() {
        let mut wc = WindowController::new((0.0, 0.0), 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut last = wc.window().size;
        for _ in 0..5000 {
            let c = if rand::Rng::random_bool(&mut rng, 0.1) {
                None
            } else {
                Some((rand::Rng::random_range(&mut rng, -200.0..200.0), 0.0))
            };
            let size = wc.select_window(c, 20.0);
            let (a, b) = (FINE_LADDER.iter().position(|&s| s == last), FINE_LADDER.iter().position(|&s| s == size));
            assert!(a.unwrap().abs_diff(b.unwrap()) <= 1);
            last = size;
        }
    }
}
