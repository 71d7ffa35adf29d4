use proptest::prelude::*;

use cvqkd_sim::channel::{db_to_transmittance, propagate_with_transmittance, ChannelState, ReceiverConfig};
use cvqkd_sim::noise::Noiseless;
use cvqkd_sim::protocol::keyrate::{secure_key_rate, KeyRateInputs};
use cvqkd_sim::protocol::{discretize, toeplitz_hash, CovarianceEstimate, SessionConfig, KEY_BITS_PER_SAMPLE};
use cvqkd_sim::stokes::{ideal_stokes_readout, phases_for_target, ModulationConfig, QuadraturePair};

fn rate(loss_db: f64, xi: f64) -> f64 {
    let cfg = SessionConfig::default();
    let rcv = ReceiverConfig::default();
    let t = db_to_transmittance(loss_db);
    let est = CovarianceEstimate::exact((rcv.detection_efficiency * t).sqrt(), xi, cfg.reveal_pulses());
    secure_key_rate(&KeyRateInputs::from_estimate(est, &cfg, &rcv).unwrap()).key_rate_bps
}

proptest! {
    #[test]
    fn toeplitz_hash_is_linear(
        a in prop::collection::vec(any::<bool>(), 64..400),
        flips in prop::collection::vec(any::<bool>(), 400),
        seed in any::<[u8; 32]>(),
        frac in 0.1f64..0.9,
    ) {
        let b: Vec<bool> = a.iter().zip(&flips).map(|(_, &f)| f).collect();
        let xor: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let out = ((a.len() as f64) * frac) as usize;
        let (ha, hb, hx) = (toeplitz_hash(&a, &seed, out), toeplitz_hash(&b, &seed, out), toeplitz_hash(&xor, &seed, out));
        prop_assert_eq!(hx.len(), out);
        for i in 0..out {
            prop_assert_eq!(hx[i], ha[i] ^ hb[i]);
        }
    }

    #[test]
    fn discretize_emits_fixed_width(values in prop::collection::vec(-50.0f64..50.0, 0..200), sigma in 0.1f64..10.0) {
        prop_assert_eq!(discretize(&values, sigma).len(), values.len() * KEY_BITS_PER_SAMPLE);
    }

    #[test]
    fn key_rate_nonnegative_and_falls_with_noise(loss in 0.0f64..8.0, xi in 0.0f64..0.2, dxi in 0.0f64..0.05) {
        let k = rate(loss, xi);
        prop_assert!(k >= 0.0);
        prop_assert!(rate(loss, xi + dxi) <= k);
        prop_assert!(rate(loss + 0.1, xi) <= k);
    }

    #[test]
    fn readout_inverts_inside_full_scale(r in 0.0f64..0.999, angle in -3.2f64..3.2, v1 in 0.5f64..8.0) {
        let cfg = ModulationConfig::with_default_gain(v1, 1.0).unwrap();
        let g = cfg.readout_gain();
        let q = QuadraturePair::new(r * g * angle.cos(), r * g * angle.sin());
        let drive = phases_for_target(q, &cfg);
        prop_assert!(!drive.saturated);
        let s = ideal_stokes_readout(drive.phases, &cfg);
        prop_assert!((s.s2 - q.x).abs() < 1e-9 * g && (s.s3 - q.p).abs() < 1e-9 * g);
    }

    #[test]
    fn noiseless_channel_scales_radius(x in -20.0f64..20.0, p in -20.0f64..20.0, rot in -7.0f64..7.0, t in 0.0f64..1.0) {
        let state = ChannelState { drift_phase: rot, ..Default::default() };
        let q = QuadraturePair::new(x, p);
        let out = propagate_with_transmittance(q, &state, t, 0.05, &mut Noiseless);
        prop_assert!((out.radius() - t.sqrt() * q.radius()).abs() < 1e-9);
    }

    #[test]
    fn rescaling_to_own_size_is_identity(t in 0.1f64..1.0, xi in 0.0f64..0.1, st in 0.0f64..0.01, sx in 0.0f64..0.01, m in 1000u64..1_000_000) {
        let est = CovarianceEstimate { t_hat: t, xi_hat: xi, n_used: m, t_lo: t - 6.5 * st, xi_hi: xi + 6.5 * sx, sigma_t: st, sigma_xi: sx };
        let r = est.rescaled_to(m);
        prop_assert!((r.t_lo - est.t_lo).abs() < 1e-12 && (r.xi_hi - est.xi_hi).abs() < 1e-12);
        let wider = est.rescaled_to(m / 4);
        prop_assert!(wider.t_lo <= est.t_lo && wider.xi_hi >= est.xi_hi);
    }
}
