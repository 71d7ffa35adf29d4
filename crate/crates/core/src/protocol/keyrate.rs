//! Secure key rate of a Gaussian-modulated coherent-state link with
//! heterodyne detection and reverse reconciliation:
//!
//! ```text
//! K = f · (n / N) · [ β·I(A:B) − χ(B:E) − Δn ]
//! ```
//!
//! `I(A:B)` includes Bob's detector inefficiency and electronic noise.
//! `χ(B:E)` is the Holevo bound from the entanglement-based covariance
//! matrix of the channel (`T`, `ξ`), conditioned on an ideal heterodyne of
//! Bob's mode. `Δn` is the finite-size privacy amplification penalty.

use thiserror::Error;

use super::estimate::CovarianceEstimate;
use super::SessionConfig;
use crate::channel::ReceiverConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeyRateError {
    #[error("nonphysical covariance matrix: symplectic eigenvalue {0} < 1")]
    Nonphysical(f64),
}

const PHYSICAL_SLACK: f64 = 1e-9;

/// Von Neumann entropy (bits) of a thermal mode with symplectic eigenvalue
/// `x ≥ 1`.
pub fn g_entropy(x: f64) -> f64 {
    if x <= 1.0 {
        return 0.0;
    }
    let a = (x + 1.0) / 2.0;
    let b = (x - 1.0) / 2.0;
    a * a.log2() - b * b.log2()
}

/// Everything the asymptotic key-rate terms depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLink {
    /// Alice's modulation variance V1, shot-noise units.
    pub v1: f64,
    /// Channel transmittance T, detector excluded.
    pub transmittance: f64,
    /// ξ referred to the channel input.
    pub excess_noise: f64,
    /// η
    pub efficiency: f64,
    /// v_el
    pub electronic_noise: f64,
}

/// The three symplectic eigenvalues entering `χ(B:E)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticSpectrum {
    /// Two-mode state `γ_AB`.
    pub joint: [f64; 2],
    /// Alice's mode after Bob's heterodyne, `γ_A|b`.
    pub conditional: f64,
}

impl GaussianLink {
    /// Worst-case link compatible with an estimate: `T = t_lo² / η`
    /// (capped at 1) and `ξ = max(ξ_hi, 0)`.
    pub fn worst_case(est: &CovarianceEstimate, v1: f64, rcv: &ReceiverConfig) -> Self {
        Self::from_channel(est.t_lo, est.xi_hi, v1, rcv)
    }

    /// Link at the point estimate `(t_hat, ξ_hat)`.
    pub fn nominal(est: &CovarianceEstimate, v1: f64, rcv: &ReceiverConfig) -> Self {
        Self::from_channel(est.t_hat, est.xi_hat, v1, rcv)
    }

    fn from_channel(t: f64, xi: f64, v1: f64, rcv: &ReceiverConfig) -> Self {
        let eta = rcv.detection_efficiency;
        let transmittance = if t > 0.0 { (t * t / eta).min(1.0) } else { 0.0 };
        Self {
            v1,
            transmittance,
            excess_noise: xi.max(0.0),
            efficiency: eta,
            electronic_noise: rcv.electronic_noise,
        }
    }

    fn variance(&self) -> f64 {
        self.v1 + 1.0
    }

    /// `I(A:B) = log2((V + χ_tot) / (1 + χ_tot))`, bits per pulse.
    pub fn mutual_information(&self) -> f64 {
        let t = self.transmittance;
        if t <= 0.0 {
            return 0.0;
        }
        let eta = self.efficiency;
        let chi_line = 1.0 / t - 1.0 + self.excess_noise;
        let chi_het = (1.0 + (1.0 - eta) + 2.0 * self.electronic_noise) / eta;
        let chi_tot = chi_line + chi_het / t;
        ((self.variance() + chi_tot) / (1.0 + chi_tot)).log2().max(0.0)
    }

    /// Entries `(a, b, c)` of `γ_AB = [[a·I, c·σz], [c·σz, b·I]]`.
    pub fn covariance_blocks(&self) -> (f64, f64, f64) {
        let v = self.variance();
        let t = self.transmittance;
        let a = v;
        let b = t * (v - 1.0) + 1.0 + t * self.excess_noise;
        let c = (t * (v * v - 1.0)).sqrt();
        (a, b, c)
    }

    pub fn symplectic_spectrum(&self) -> SymplecticSpectrum {
        let (a, b, c) = self.covariance_blocks();
        let c2 = c * c;
        let delta = a * a + b * b - 2.0 * c2;
        let det = a * b - c2;
        let root = (delta * delta - 4.0 * det * det).max(0.0).sqrt();
        let l1 = ((delta + root) / 2.0).max(0.0).sqrt();
        let l2 = ((delta - root) / 2.0).max(0.0).sqrt();
        let l3 = a - c2 / (b + 1.0);
        SymplecticSpectrum {
            joint: [l1, l2],
            conditional: l3,
        }
    }

    /// `χ(B:E) = S(γ_AB) − S(γ_A|b)`, bits per pulse.
    pub fn holevo_bound(&self) -> Result<f64, KeyRateError> {
        let spec = self.symplectic_spectrum();
        for l in [spec.joint[0], spec.joint[1], spec.conditional] {
            if l < 1.0 - PHYSICAL_SLACK || !l.is_finite() {
                return Err(KeyRateError::Nonphysical(l));
            }
        }
        let chi = g_entropy(spec.joint[0]) + g_entropy(spec.joint[1]) - g_entropy(spec.conditional);
        Ok(chi.max(0.0))
    }
}

pub fn mutual_information(est: &CovarianceEstimate, cfg: &SessionConfig, rcv: &ReceiverConfig) -> f64 {
    GaussianLink::worst_case(est, cfg.v1, rcv).mutual_information()
}

pub fn holevo_bound(est: &CovarianceEstimate, cfg: &SessionConfig, rcv: &ReceiverConfig) -> Result<f64, KeyRateError> {
    GaussianLink::worst_case(est, cfg.v1, rcv).holevo_bound()
}

/// `Δn = 7·sqrt(log2(2/ε̄)/n) + (2/n)·log2(1/ε_PA)`, bits per pulse.
pub fn finite_size_delta(n: f64, eps_bar: f64, eps_pa: f64) -> f64 {
    debug_assert!(n >= 1.0);
    7.0 * ((2.0 / eps_bar).log2() / n).sqrt() + (2.0 / n) * (1.0 / eps_pa).log2()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateInputs {
    pub est: CovarianceEstimate,
    pub cfg: SessionConfig,
    pub i_ab: f64,
    pub chi_be: f64,
    pub delta_n: f64,
}

impl KeyRateInputs {
    /// Evaluates every term from the worst-case estimate.
    pub fn from_estimate(
        est: CovarianceEstimate,
        cfg: &SessionConfig,
        rcv: &ReceiverConfig,
    ) -> Result<Self, KeyRateError> {
        let link = GaussianLink::worst_case(&est, cfg.v1, rcv);
        Ok(Self {
            i_ab: link.mutual_information(),
            chi_be: link.holevo_bound()?,
            delta_n: finite_size_delta(cfg.key_pulses() as f64, cfg.eps_bar, cfg.eps_pa),
            est,
            cfg: cfg.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateReport {
    pub key_rate_bps: f64,
    pub i_ab: f64,
    pub chi_be: f64,
    pub delta_n: f64,
    pub beta: f64,
    /// `β·I − χ − Δn`, before clamping.
    pub bracket: f64,
    /// n / N
    pub key_fraction: f64,
    pub pulse_rate_hz: f64,
    pub clamped: bool,
}

impl KeyRateReport {
    /// Secret bits per key-contributing pulse after clamping.
    pub fn secret_fraction(&self) -> f64 {
        self.bracket.max(0.0)
    }
}

pub fn secure_key_rate(inputs: &KeyRateInputs) -> KeyRateReport {
    let cfg = &inputs.cfg;
    let bracket = cfg.beta * inputs.i_ab - inputs.chi_be - inputs.delta_n;
    let key_fraction = cfg.key_pulses() as f64 / cfg.block_size as f64;
    let clamped = bracket < 0.0;
    KeyRateReport {
        key_rate_bps: cfg.pulse_rate_hz * key_fraction * bracket.max(0.0),
        i_ab: inputs.i_ab,
        chi_be: inputs.chi_be,
        delta_n: inputs.delta_n,
        beta: cfg.beta,
        bracket,
        key_fraction,
        pulse_rate_hz: cfg.pulse_rate_hz,
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn link(t: f64, xi: f64, eta: f64, vel: f64, v1: f64) -> GaussianLink {
        GaussianLink {
            v1,
            transmittance: t,
            excess_noise: xi,
            efficiency: eta,
            electronic_noise: vel,
        }
    }

    #[test]
    fn entropy_function() {
        assert_eq!(g_entropy(1.0), 0.0);
        // G(3) = 2·log2(2) − 1·log2(1) = 2
        assert_abs_diff_eq!(g_entropy(3.0), 2.0, epsilon = 1e-15);
        assert!(g_entropy(1.0 + 1e-6) > 0.0);
    }

    #[test]
    fn lossless_noiseless_link() {
        let l = link(1.0, 0.0, 1.0, 0.0, 4.0);
        assert_abs_diff_eq!(l.mutual_information(), 3f64.log2(), epsilon = 1e-12);
        assert!(l.holevo_bound().unwrap() < 1e-9);
    }

    #[test]
    fn information_vanishes_with_transmittance() {
        let mut last = f64::INFINITY;
        for k in 1..12 {
            let t = 10f64.powi(-k);
            let i = link(t, 0.01, 0.6, 0.1, 4.0).mutual_information();
            assert!(i < last);
            last = i;
        }
        assert!(last < 1e-10);
        assert_eq!(link(0.0, 0.01, 0.6, 0.1, 4.0).mutual_information(), 0.0);
    }

    #[test]
    fn spectrum_is_physical_for_physical_links() {
        for t in [0.01, 0.2, 0.5, 0.9, 1.0] {
            for xi in [0.0, 0.01, 0.1, 0.5] {
                let s = link(t, xi, 0.6, 0.1, 4.0).symplectic_spectrum();
                assert!(s.joint.iter().all(|&l| l >= 1.0 - 1e-9));
                assert!(s.conditional >= 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn negative_noise_is_nonphysical() {
        let l = link(0.5, -0.8, 0.6, 0.1, 4.0);
        assert!(matches!(l.holevo_bound(), Err(KeyRateError::Nonphysical(_))));
    }

    #[test]
    fn delta_at_hundred_million() {
        let d = finite_size_delta(1e8, 1e-10, 1e-10);
        let expected = 7.0 * ((2e10f64).log2() / 1e8).sqrt() + 2e-8 * (1e10f64).log2();
        assert_abs_diff_eq!(d, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 4.10e-3, epsilon = 5e-6);
    }

    #[test]
    fn delta_root_term_halves() {
        let root = |n: f64| 7.0 * ((2e10f64).log2() / n).sqrt();
        for n in [1e4, 1e6, 1e9] {
            assert_abs_diff_eq!(root(4.0 * n) / root(n), 0.5, epsilon = 1e-12);
            let ratio = finite_size_delta(4.0 * n, 1e-10, 1e-10) / finite_size_delta(n, 1e-10, 1e-10);
            assert!(ratio < 0.5 + 0.01);
        }
        assert!(finite_size_delta(1e16, 1e-10, 1e-10) < 1e-6);
    }

    fn inputs(i_ab: f64, chi_be: f64, delta_n: f64) -> KeyRateInputs {
        let cfg = SessionConfig {
            pulse_rate_hz: 1e7,
            reveal_fraction: 0.5,
            beta: 0.95,
            ..Default::default()
        };
        KeyRateInputs {
            est: CovarianceEstimate::exact(0.5, 0.0, 1000),
            cfg,
            i_ab,
            chi_be,
            delta_n,
        }
    }

    #[test]
    fn rate_arithmetic() {
        let r = secure_key_rate(&inputs(1.0, 0.6, 0.05));
        assert_abs_diff_eq!(r.key_rate_bps, 1.5e6, epsilon = 1e-6);
        assert!(!r.clamped);
    }

    #[test]
    fn negative_bracket_clamps() {
        let r = secure_key_rate(&inputs(0.5, 0.6, 0.05));
        assert_eq!(r.key_rate_bps, 0.0);
        assert!(r.clamped);
        assert!(r.bracket < 0.0);
    }
}
