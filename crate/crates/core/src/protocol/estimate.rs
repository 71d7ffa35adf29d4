//! Channel estimation from revealed `(sent, measured)` quadrature pairs.

use thiserror::Error;

use super::Z_PE;
use crate::channel::ReceiverConfig;
use crate::stokes::QuadraturePair;

/// Pairs below this count give no usable rotation fit.
pub const MIN_COMPENSATION_PAIRS: usize = 100;
pub const MIN_ESTIMATION_PAIRS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("need at least {MIN_ESTIMATION_PAIRS} revealed pairs, got {0}")]
    TooFewPairs(usize),
    #[error("estimated transmission {0} is not positive")]
    NonPositiveTransmission(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceEstimate {
    /// Estimate of `sqrt(η·T)`.
    pub t_hat: f64,
    /// ξ referred to the channel input, shot-noise units.
    pub xi_hat: f64,
    pub n_used: u64,
    pub t_lo: f64,
    pub xi_hi: f64,
    pub sigma_t: f64,
    pub sigma_xi: f64,
}

impl CovarianceEstimate {
    /// An estimate with zero statistical uncertainty.
    pub fn exact(t: f64, xi: f64, n_used: u64) -> Self {
        Self {
            t_hat: t,
            xi_hat: xi,
            n_used,
            t_lo: t,
            xi_hi: xi,
            sigma_t: 0.0,
            sigma_xi: 0.0,
        }
    }

    fn with_widths(t_hat: f64, xi_hat: f64, n_used: u64, sigma_t: f64, sigma_xi: f64) -> Self {
        Self {
            t_hat,
            xi_hat,
            n_used,
            t_lo: t_hat - Z_PE * sigma_t,
            xi_hi: xi_hat + Z_PE * sigma_xi,
            sigma_t,
            sigma_xi,
        }
    }

    /// Confidence bounds as if the same point estimate came from `m` pairs.
    /// Used when a subsample stands in for the full disclosed set.
    pub fn rescaled_to(&self, m: u64) -> Self {
        let k = (self.n_used as f64 / m as f64).sqrt();
        Self::with_widths(self.t_hat, self.xi_hat, m, self.sigma_t * k, self.sigma_xi * k)
    }
}

/// Per-quadrature regression of measured on sent, averaged over `x` and `p`.
///
/// The residual variance minus the receiver's noise floor `1 + v_el`,
/// divided by `t_hat²`, gives ξ referred to the channel input.
pub fn estimate_parameters(
    pairs: &[(QuadraturePair, QuadraturePair)],
    rcv: &ReceiverConfig,
) -> Result<CovarianceEstimate, EstimateError> {
    let m = pairs.len();
    if m < MIN_ESTIMATION_PAIRS {
        return Err(EstimateError::TooFewPairs(m));
    }
    let mf = m as f64;
    let (mut sa, mut sb) = ([0.0; 2], [0.0; 2]);
    for (a, b) in pairs {
        sa[0] += a.x;
        sa[1] += a.p;
        sb[0] += b.x;
        sb[1] += b.p;
    }
    let ma = [sa[0] / mf, sa[1] / mf];
    let mb = [sb[0] / mf, sb[1] / mf];
    let (mut cov, mut var) = ([0.0; 2], [0.0; 2]);
    for (a, b) in pairs {
        let da = [a.x - ma[0], a.p - ma[1]];
        let db = [b.x - mb[0], b.p - mb[1]];
        for q in 0..2 {
            cov[q] += da[q] * db[q];
            var[q] += da[q] * da[q];
        }
    }
    if var[0] <= 0.0 || var[1] <= 0.0 {
        return Err(EstimateError::NonPositiveTransmission(0.0));
    }
    let t_hat = 0.5 * (cov[0] / var[0] + cov[1] / var[1]);
    if !(t_hat > 0.0) {
        return Err(EstimateError::NonPositiveTransmission(t_hat));
    }
    let mut resid = 0.0;
    for (a, b) in pairs {
        let rx = (b.x - mb[0]) - t_hat * (a.x - ma[0]);
        let rp = (b.p - mb[1]) - t_hat * (a.p - ma[1]);
        resid += rx * rx + rp * rp;
    }
    let resid = resid / (2.0 * mf);
    let var_sent = (var[0] + var[1]) / (2.0 * mf);
    let excess = resid - rcv.noise_floor();
    let xi_hat = excess / (t_hat * t_hat);

    let sigma_t = (resid / (2.0 * mf * var_sent)).sqrt();
    // Sample variance of 2m Gaussian residuals has relative width sqrt(1/m).
    let sigma_resid = resid / mf.sqrt();
    let d_resid = sigma_resid / (t_hat * t_hat);
    let d_t = 2.0 * excess.abs() / t_hat.powi(3) * sigma_t;
    let sigma_xi = (d_resid * d_resid + d_t * d_t).sqrt();
    Ok(CovarianceEstimate::with_widths(t_hat, xi_hat, m as u64, sigma_t, sigma_xi))
}

/// Least-squares rotation θ̂ with `measured ≈ R(θ̂)·sent`.
///
/// Apply as a counter-rotation by `−θ̂`. Fewer than
/// [`MIN_COMPENSATION_PAIRS`] pairs or all-zero data yield 0.
pub fn compensate_polarization(pairs: &[(QuadraturePair, QuadraturePair)]) -> f64 {
    if pairs.len() < MIN_COMPENSATION_PAIRS {
        return 0.0;
    }
    let (mut sin_sum, mut cos_sum) = (0.0, 0.0);
    for (a, b) in pairs {
        sin_sum += a.x * b.p - a.p * b.x;
        cos_sum += a.x * b.x + a.p * b.p;
    }
    if sin_sum == 0.0 && cos_sum == 0.0 {
        return 0.0;
    }
    sin_sum.atan2(cos_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::GaussianSource;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn synthetic(
        m: usize,
        t: f64,
        extra_var: f64,
        rcv: &ReceiverConfig,
        rotation: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec<(QuadraturePair, QuadraturePair)> {
        let sd = (extra_var + rcv.noise_floor()).sqrt();
        (0..m)
            .map(|_| {
                let a = QuadraturePair::new(rng.normal(2f64.sqrt()), rng.normal(2f64.sqrt()));
                let r = a.rotated(rotation).scaled(t);
                let b = QuadraturePair::new(r.x + rng.normal(sd), r.p + rng.normal(sd));
                (a, b)
            })
            .collect()
    }

    #[test]
    fn recovers_planted_transmission() {
        let rcv = ReceiverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut outside = 0;
        for _ in 0..50 {
            let pairs = synthetic(20_000, 0.5, 0.0, &rcv, 0.0, &mut rng);
            let est = estimate_parameters(&pairs, &rcv).unwrap();
            if (est.t_hat - 0.5).abs() > 3.0 * est.sigma_t {
                outside += 1;
            }
            assert!(est.t_lo <= est.t_hat && est.xi_hi >= est.xi_hat);
        }
        assert!(outside <= 2, "{outside} of 50 outside 3σ");
    }

    #[test]
    fn recovers_planted_noise() {
        let rcv = ReceiverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = 0.6;
        let xi = 0.05;
        let pairs = synthetic(400_000, t, t * t * xi, &rcv, 0.0, &mut rng);
        let est = estimate_parameters(&pairs, &rcv).unwrap();
        assert!((est.xi_hat - xi).abs() < 4.0 * est.sigma_xi, "{est:?}");
    }

    #[test]
    fn identity_channel_recovers_efficiency() {
        let rcv = ReceiverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs = synthetic(200_000, rcv.detection_efficiency.sqrt(), 0.0, &rcv, 0.0, &mut rng);
        let est = estimate_parameters(&pairs, &rcv).unwrap();
        assert!((est.t_hat - rcv.detection_efficiency.sqrt()).abs() < 4.0 * est.sigma_t);
        assert!(est.xi_hat.abs() < 4.0 * est.sigma_xi);
    }

    #[test]
    fn width_scales_with_sample_count() {
        let rcv = ReceiverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let small = estimate_parameters(&synthetic(10_000, 0.5, 0.0, &rcv, 0.0, &mut rng), &rcv).unwrap();
        let large = estimate_parameters(&synthetic(40_000, 0.5, 0.0, &rcv, 0.0, &mut rng), &rcv).unwrap();
        let ratio = large.sigma_t / small.sigma_t;
        assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
        let rescaled = small.rescaled_to(40_000);
        assert!((rescaled.sigma_t / small.sigma_t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_or_dead_channels() {
        let rcv = ReceiverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            estimate_parameters(&synthetic(999, 0.5, 0.0, &rcv, 0.0, &mut rng), &rcv),
            Err(EstimateError::TooFewPairs(999))
        ));
        let flipped = synthetic(5000, -0.5, 0.0, &rcv, 0.0, &mut rng);
        assert!(matches!(
            estimate_parameters(&flipped, &rcv),
            Err(EstimateError::NonPositiveTransmission(_))
        ));
    }

    #[test]
    fn exact_rotation_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rcv = ReceiverConfig {
            electronic_noise: 0.0,
            ..Default::default()
        };
        let pairs: Vec<_> = synthetic(1000, 0.7, 0.0, &rcv, 0.3, &mut rng)
            .into_iter()
            .map(|(a, _)| (a, a.rotated(0.3).scaled(0.7)))
            .collect();
        assert!((compensate_polarization(&pairs) - 0.3).abs() < 1e-9);
        let still: Vec<_> = pairs.iter().map(|&(a, _)| (a, a)).collect();
        assert_eq!(compensate_polarization(&still), 0.0);
    }

    #[test]
    fn noisy_rotation_fit() {
        // V1 = 4 per quadrature with unit noise: σ_θ ≈ 1/sqrt(2·m·V1) ≈ 0.0035
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 500;
        let good = (0..trials)
            .filter(|_| {
                let pairs: Vec<_> = (0..10_000)
                    .map(|_| {
                        let a = QuadraturePair::new(rng.normal(2.0), rng.normal(2.0));
                        let r = a.rotated(0.3);
                        (a, QuadraturePair::new(r.x + rng.normal(1.0), r.p + rng.normal(1.0)))
                    })
                    .collect();
                (compensate_polarization(&pairs) - 0.3).abs() < 0.01
            })
            .count();
        assert!(good as f64 >= 0.99 * trials as f64, "{good}/{trials}");
    }

    #[test]
    fn degenerate_rotation_is_noop() {
        let zeros = vec![(QuadraturePair::new(0.0, 0.0), QuadraturePair::new(0.0, 0.0)); 200];
        assert_eq!(compensate_polarization(&zeros), 0.0);
        let few = vec![(QuadraturePair::new(1.0, 0.0), QuadraturePair::new(0.0, 1.0)); 99];
        assert_eq!(compensate_polarization(&few), 0.0);
    }
}
