//! Seeded end-to-end run of one scenario.
//!
//! Pipeline per block: PM3 voltage scan through the live channel, a sync
//! frame inside a noise-filled window, the subsampled data pulses, then the
//! Alice/Bob sessions over the in-process transport. The PAT simulator runs
//! on its own thread and hands its tick stream over a bounded channel.

use std::collections::BTreeMap;
use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ScenarioConfig;
use crate::channel::{
    heterodyne_measure, pointing_fade, propagate_with_transmittance, step_channel_by, ChannelState, HeterodyneSample,
};
use crate::pat::control::FINE_RATE_HZ;
use crate::pat::sim::PatCounters;
use crate::pat::{tracking_stats, PatSample, PatSimulator, TrackingPhase, TrackingStats};
use crate::protocol::session::run_in_process;
use crate::protocol::wire::SyncAnnounce;
use crate::protocol::{AliceSession, BobSession};
use crate::stokes::{GaussianModulator, ModulationConfig, QuadraturePair};
use crate::sync::{build_sync_frame, detect_sync, scan_pm3, sync_readout, SyncConfig, PATTERN_LEN};

/// Ticks buffered between the PAT thread and the block pipeline.
const PAT_QUEUE: usize = 1024;

// Independent random streams per component.
const STREAM_MODULATOR: u64 = 1;
const STREAM_CHANNEL: u64 = 2;
const STREAM_RECEIVER: u64 = 3;
const STREAM_SYNC: u64 = 4;
const STREAM_SESSION: u64 = 5;
const STREAM_PAT: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Replaces the scenario's seed.
    pub seed: Option<u64>,
    /// Simulate every pulse of each block instead of a subsample.
    pub exact_counts: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRecord {
    pub block_index: u64,
    pub time_s: f64,
    /// Channel transmittance from the estimate, `t_hat² / η`.
    pub t_est: f64,
    pub xi_est: f64,
    pub i_ab: f64,
    pub chi_be: f64,
    pub delta_n: f64,
    pub key_rate_bps: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunCounters {
    pub blocks_attempted: u64,
    pub keys_confirmed: u64,
    pub scan_failures: u64,
    pub sync_failures: u64,
    /// Session aborts by reason code.
    pub aborts: BTreeMap<String, u64>,
    pub acquisition_failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub sim_pulses_per_block: u64,
    /// Full-scale pulses represented by one simulated pulse.
    pub stride: u64,
    pub blocks: Vec<BlockRecord>,
    /// Mean of the block key rates, 0 without blocks.
    pub mean_key_rate_bps: f64,
    pub counters: RunCounters,
    /// Time of the handover to the quantum link, s.
    pub link_time_s: Option<f64>,
    pub pat_samples: Vec<PatSample>,
    /// Radial residual statistics while the quantum link is up.
    pub pat_stats: Option<TrackingStats>,
    pub pat_counters: PatCounters,
    pub saturation_fraction: f64,
}

impl ScenarioReport {
    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn mean_key_rate_kbps(&self) -> f64 {
        self.mean_key_rate_bps / 1e3
    }

    pub fn mean_t_est(&self) -> Option<f64> {
        (!self.blocks.is_empty()).then(|| self.blocks.iter().map(|b| b.t_est).sum::<f64>() / self.blocks.len() as f64)
    }
}

enum PatFeed {
    Linked { preroll: Vec<PatSample> },
    Failed,
    Tick(PatSample),
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Source of per-tick pointing residuals for the block pipeline.
struct PatLink {
    rx: Option<mpsc::Receiver<PatFeed>>,
    samples: Vec<PatSample>,
}

impl PatLink {
    /// The next `n` ticks; a disabled PAT yields perfect pointing.
    fn take(&mut self, n: usize, t0: f64) -> Vec<PatSample> {
        let Some(rx) = &self.rx else {
            return (0..n)
                .map(|k| PatSample {
                    time_s: t0 + k as f64 / FINE_RATE_HZ,
                    residual: [0.0; 2],
                    phase: TrackingPhase::QuantumLink,
                })
                .collect();
        };
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            match rx.recv() {
                Ok(PatFeed::Tick(s)) => out.push(s),
                _ => break,
            }
        }
        self.samples.extend_from_slice(&out);
        out
    }
}

/// Runs a validated scenario. Session aborts and sync failures are counted,
/// never fatal.
pub fn run_scenario(cfg: &ScenarioConfig, opts: RunOptions) -> ScenarioReport {
    let seed = opts.seed.unwrap_or(cfg.seed);
    let block_size = cfg.session.block_size;
    let sim_pulses = if opts.exact_counts {
        block_size
    } else {
        cfg.sim_pulses_per_block.min(block_size)
    };
    let stride = (block_size / sim_pulses).max(1);
    let block_duration = cfg.session.block_duration_s();
    let n_blocks = (cfg.duration_s / block_duration + 1e-9).floor() as u64;
    let ticks_per_block = (block_duration * FINE_RATE_HZ).round() as usize;
    let pat_cfg = cfg.effective_pat();
    let pat_seed: u64 = stream(seed, STREAM_PAT).random();

    std::thread::scope(|scope| {
        let (mut link, handle) = if pat_cfg.enabled {
            let (tx, rx) = mpsc::sync_channel(PAT_QUEUE);
            let total_ticks = n_blocks as usize * ticks_per_block;
            let timeout = cfg.acquisition_timeout_s;
            let pat_cfg = pat_cfg.clone();
            let handle = scope.spawn(move || {
                let mut sim = PatSimulator::new(pat_cfg, pat_seed);
                let Some(preroll) = sim.run_until(TrackingPhase::QuantumLink, timeout) else {
                    let _ = tx.send(PatFeed::Failed);
                    return sim.counters();
                };
                if tx.send(PatFeed::Linked { preroll }).is_err() {
                    return sim.counters();
                }
                for _ in 0..total_ticks {
                    if tx.send(PatFeed::Tick(sim.tick())).is_err() {
                        break;
                    }
                }
                sim.counters()
            });
            (
                PatLink {
                    rx: Some(rx),
                    samples: Vec::new(),
                },
                Some(handle),
            )
        } else {
            (
                PatLink {
                    rx: None,
                    samples: Vec::new(),
                },
                None,
            )
        };

        let mut counters = RunCounters::default();
        let link_time_s = match &link.rx {
            None => Some(0.0),
            Some(rx) => match rx.recv() {
                Ok(PatFeed::Linked { preroll }) => {
                    let t = preroll.last().map_or(0.0, |s| s.time_s + 1.0 / FINE_RATE_HZ);
                    link.samples = preroll;
                    Some(t)
                }
                _ => None,
            },
        };

        let mut pipeline = BlockPipeline::new(cfg, seed, sim_pulses, stride);
        let mut blocks = Vec::new();
        match link_time_s {
            None => counters.acquisition_failed = true,
            Some(t_link) => {
                for b in 0..n_blocks {
                    let t0 = t_link + b as f64 * block_duration;
                    let ticks = link.take(ticks_per_block, t0);
                    if ticks.len() < ticks_per_block {
                        break;
                    }
                    counters.blocks_attempted += 1;
                    if let Some(row) = pipeline.run_block(b, &ticks, &mut counters) {
                        blocks.push(row);
                    }
                }
            }
        }
        drop(link.rx.take());
        let pat_counters = handle.map(|h| h.join().expect("PAT thread panicked")).unwrap_or_default();

        let linked: Vec<f64> = link
            .samples
            .iter()
            .filter(|s| s.phase == TrackingPhase::QuantumLink)
            .map(PatSample::radial)
            .collect();
        let pat_stats = if pat_cfg.enabled {
            tracking_stats(&linked, pat_cfg.handover_urad)
        } else {
            None
        };
        let mean = if blocks.is_empty() {
            0.0
        } else {
            blocks.iter().map(|b: &BlockRecord| b.key_rate_bps).sum::<f64>() / blocks.len() as f64
        };
        ScenarioReport {
            config: cfg.clone(),
            seed,
            sim_pulses_per_block: sim_pulses,
            stride,
            blocks,
            mean_key_rate_bps: mean,
            counters,
            link_time_s,
            pat_samples: link.samples,
            pat_stats,
            pat_counters,
            saturation_fraction: pipeline.modulator.saturation().fraction(),
        }
    })
}

struct BlockPipeline<'a> {
    cfg: &'a ScenarioConfig,
    sim_pulses: u64,
    stride: u64,
    modulator: GaussianModulator,
    /// Sync drive scaled so the nominal link delivers `sync_amp` per
    /// component at the detector.
    sync_drive: SyncConfig,
    state: ChannelState,
    rng_mod: ChaCha8Rng,
    rng_ch: ChaCha8Rng,
    rng_rx: ChaCha8Rng,
    rng_sync: ChaCha8Rng,
    rng_session: ChaCha8Rng,
}

impl<'a> BlockPipeline<'a> {
    fn new(cfg: &'a ScenarioConfig, seed: u64, sim_pulses: u64, stride: u64) -> Self {
        let mod_cfg = ModulationConfig::with_default_gain(cfg.session.v1, 1.0).expect("session.v1 validated positive");
        let nominal = cfg.receiver.detection_efficiency * cfg.channel.transmittance();
        let mut sync_drive = cfg.sync.clone();
        sync_drive.sync_amp = cfg.sync.sync_amp / nominal.sqrt();
        Self {
            cfg,
            sim_pulses,
            stride,
            modulator: GaussianModulator::new(mod_cfg),
            sync_drive,
            state: ChannelState::default(),
            rng_mod: stream(seed, STREAM_MODULATOR),
            rng_ch: stream(seed, STREAM_CHANNEL),
            rng_rx: stream(seed, STREAM_RECEIVER),
            rng_sync: stream(seed, STREAM_SYNC),
            rng_session: stream(seed, STREAM_SESSION),
        }
    }

    fn fade(&self, tick: &PatSample) -> f64 {
        pointing_fade(tick.radial(), self.cfg.channel.beam_divergence_urad)
    }

    /// One pulse through channel and receiver at the current state.
    fn transmit(&mut self, q: QuadraturePair, transmittance: f64) -> HeterodyneSample {
        let out = propagate_with_transmittance(q, &self.state, transmittance, self.cfg.channel.excess_noise, &mut self.rng_ch);
        heterodyne_measure(out, self.state.pulse_index, &self.cfg.receiver, &mut self.rng_rx)
    }

    fn run_block(&mut self, index: u64, ticks: &[PatSample], counters: &mut RunCounters) -> Option<BlockRecord> {
        let cfg = self.cfg;
        let t_static = cfg.channel.transmittance();
        let t_now = t_static * self.fade(&ticks[0]);

        let drive = self.sync_drive.clone();
        let scan = scan_pm3(&cfg.sync, |phases| self.transmit(sync_readout(phases, &drive), t_now).quadratures());
        let scan = match scan {
            Ok(s) => s,
            Err(_) => {
                counters.scan_failures += 1;
                return None;
            }
        };
        let precomp = scan.estimated_rotation;

        // One frame at a random slot of a window otherwise empty of pulses.
        let window = cfg.sync.window_len;
        let planted = self.rng_sync.random_range(0..=window - PATTERN_LEN);
        let frame = build_sync_frame(&drive, scan.best_voltage_phase);
        let base = self.state.pulse_index;
        let samples: Vec<HeterodyneSample> = (0..window)
            .map(|k| {
                let q = if (planted..planted + PATTERN_LEN).contains(&k) {
                    sync_readout(frame[k - planted], &drive)
                } else {
                    QuadraturePair::new(0.0, 0.0)
                };
                let mut s = self.transmit(q, t_now);
                s.pulse_index = base + k as u64;
                s
            })
            .collect();
        let decision = detect_sync(&samples, &cfg.sync);
        if !decision.matched || decision.offset != base + planted as u64 {
            counters.sync_failures += 1;
            return None;
        }

        let ticks_per_pulse = ticks.len() as f64 / self.sim_pulses as f64;
        let mut sent = Vec::with_capacity(self.sim_pulses as usize);
        let mut measured = Vec::with_capacity(self.sim_pulses as usize);
        for j in 0..self.sim_pulses {
            self.state = step_channel_by(self.state, &cfg.channel, self.stride, &mut self.rng_ch);
            let tick = &ticks[((j as f64 * ticks_per_pulse) as usize).min(ticks.len() - 1)];
            let t = t_static * self.fade(tick);
            let pulse = self.modulator.prepare(&mut self.rng_mod);
            let s = self.transmit(pulse.emitted.rotated(-precomp), t);
            sent.push(pulse.emitted);
            measured.push(s.quadratures());
        }

        let announce = SyncAnnounce {
            block_index: index,
            frame_offset: decision.offset,
        };
        let mut alice = AliceSession::new(announce, sent);
        let session_rng = ChaCha8Rng::from_rng(&mut self.rng_session);
        let mut bob = BobSession::new(
            cfg.session.clone(),
            cfg.receiver.clone(),
            measured,
            self.stride as f64,
            session_rng,
        );
        let outcome = run_in_process(&mut alice, &mut bob);
        if outcome.succeeded() {
            counters.keys_confirmed += 1;
        }
        if let Some(r) = outcome.abort_reason() {
            *counters.aborts.entry(r.code().to_string()).or_default() += 1;
        }
        let (est, report) = (bob.estimate()?, bob.report()?);
        Some(BlockRecord {
            block_index: index,
            time_s: ticks[0].time_s,
            t_est: est.t_hat * est.t_hat / cfg.receiver.detection_efficiency,
            xi_est: est.xi_hat,
            i_ab: report.i_ab,
            chi_be: report.chi_be,
            delta_n: report.delta_n,
            key_rate_bps: report.key_rate_bps,
            clamped: report.clamped,
        })
    }
}
