//! Alice and Bob session state machines.
//!
//! ```text
//! Alice  Sync ─Start─▶ Transmit ─RevealIndices─▶ Reveal ─EstimateAck─▶ Reconcile
//!        ─ReconcileBlock+oracle─▶ Amplify ─PaSeed,KeyConfirm─▶ Done
//! Bob    Sync ─SyncAnnounce─▶ Measure ─measured─▶ Estimate ─RevealValues─▶ Reconcile
//!        ─ReconcileBlock─▶ Amplify ─KeyConfirm─▶ Done
//! ```
//!
//! Reconciliation is by oracle: after Bob announces the digest of his
//! discretized key string, the driver hands Alice that string. Every phase
//! can fall into `Aborted` with an [`AbortReason`].

use std::collections::VecDeque;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use super::estimate::{compensate_polarization, estimate_parameters, CovarianceEstimate, MIN_COMPENSATION_PAIRS};
use super::keyrate::{secure_key_rate, KeyRateInputs, KeyRateReport};
use super::privacy::{discretize, oracle_reconcile, toeplitz_hash};
use super::wire::{
    decode_indices, decode_seed, decode_values, encode_indices, encode_values, Digest, EstimateAck, MessageKind,
    SessionMessage, SyncAnnounce,
};
use super::SessionConfig;
use crate::channel::ReceiverConfig;
use crate::stokes::QuadraturePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbortReason {
    /// Sequence gap or undecodable frame.
    Transport,
    /// Estimation failed or the key-rate bracket is not positive.
    NoKey,
    /// Digests of the two sides disagree.
    ConfirmMismatch,
    /// A message or event not legal in the current phase.
    Protocol,
}

impl AbortReason {
    pub fn code(&self) -> &'static str {
        match self {
            AbortReason::Transport => "transport",
            AbortReason::NoKey => "no_key",
            AbortReason::ConfirmMismatch => "confirm_mismatch",
            AbortReason::Protocol => "protocol",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlicePhase {
    Sync,
    Transmit,
    Reveal,
    Reconcile,
    Amplify,
    Done,
    Aborted(AbortReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BobPhase {
    Sync,
    Measure,
    Estimate,
    Reconcile,
    Amplify,
    Done,
    Aborted(AbortReason),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AliceEvent {
    Start,
    Message(SessionMessage),
    /// Bob's discretized string, supplied by the simulation.
    Oracle(Vec<bool>),
    TransportError,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BobEvent {
    Message(SessionMessage),
    MeasurementComplete,
    TransportError,
}

#[derive(Debug, Clone, Default)]
struct Sequencer {
    next_out: u32,
    next_in: u32,
}

impl Sequencer {
    fn stamp(&mut self, kind: MessageKind, payload: Vec<u8>) -> SessionMessage {
        let m = SessionMessage::new(kind, self.next_out, payload);
        self.next_out += 1;
        m
    }

    fn accept(&mut self, msg: &SessionMessage) -> bool {
        if msg.seq != self.next_in {
            return false;
        }
        self.next_in += 1;
        true
    }
}

fn retained(len: usize, revealed: &[u64]) -> Vec<usize> {
    let mut mask = vec![true; len];
    for &i in revealed {
        mask[i as usize] = false;
    }
    (0..len).filter(|&i| mask[i]).collect()
}

#[derive(Debug, Clone)]
pub struct AliceSession {
    phase: AlicePhase,
    seq: Sequencer,
    announce: SyncAnnounce,
    sent: Vec<QuadraturePair>,
    revealed: Vec<u64>,
    ack: Option<EstimateAck>,
    raw: Vec<bool>,
    bob_digest: Option<Digest>,
    corrected: Vec<bool>,
    key: Option<Vec<bool>>,
}

impl AliceSession {
    /// `sent` holds the prepared quadratures of the block, aligned with
    /// Bob's measurements after frame synchronization.
    pub fn new(announce: SyncAnnounce, sent: Vec<QuadraturePair>) -> Self {
        Self {
            phase: AlicePhase::Sync,
            seq: Sequencer::default(),
            announce,
            sent,
            revealed: Vec::new(),
            ack: None,
            raw: Vec::new(),
            bob_digest: None,
            corrected: Vec::new(),
            key: None,
        }
    }

    pub fn phase(&self) -> AlicePhase {
        self.phase
    }

    pub fn key(&self) -> Option<&[bool]> {
        self.key.as_deref()
    }

    /// Alice's own discretized string, before correction.
    pub fn raw_key(&self) -> &[bool] {
        &self.raw
    }

    /// True while reconciliation waits for [`AliceEvent::Oracle`].
    pub fn needs_oracle(&self) -> bool {
        self.phase == AlicePhase::Reconcile && self.bob_digest.is_some()
    }

    fn abort(&mut self, reason: AbortReason) -> Vec<SessionMessage> {
        self.phase = AlicePhase::Aborted(reason);
        Vec::new()
    }

    pub fn step(&mut self, event: AliceEvent) -> Vec<SessionMessage> {
        if matches!(self.phase, AlicePhase::Done | AlicePhase::Aborted(_)) {
            return Vec::new();
        }
        let msg = match event {
            AliceEvent::TransportError => return self.abort(AbortReason::Transport),
            AliceEvent::Start if self.phase == AlicePhase::Sync => {
                self.phase = AlicePhase::Transmit;
                return vec![self.seq.stamp(MessageKind::SyncAnnounce, self.announce.encode())];
            }
            AliceEvent::Oracle(bits) if self.needs_oracle() => return self.on_oracle(bits),
            AliceEvent::Start | AliceEvent::Oracle(_) => return self.abort(AbortReason::Protocol),
            AliceEvent::Message(m) => m,
        };
        if !self.seq.accept(&msg) {
            return self.abort(AbortReason::Transport);
        }
        match (self.phase, msg.kind) {
            (AlicePhase::Transmit, MessageKind::RevealIndices) => self.on_reveal(&msg.payload),
            (AlicePhase::Reveal, MessageKind::EstimateAck) => self.on_ack(&msg.payload),
            (AlicePhase::Reconcile, MessageKind::ReconcileBlock) if self.bob_digest.is_none() => {
                match Digest::decode(msg.kind, &msg.payload) {
                    Ok(d) => {
                        self.bob_digest = Some(d);
                        Vec::new()
                    }
                    Err(_) => self.abort(AbortReason::Protocol),
                }
            }
            (AlicePhase::Amplify, MessageKind::PaSeed) if self.key.is_none() => self.on_seed(&msg.payload),
            (AlicePhase::Amplify, MessageKind::KeyConfirm) if self.key.is_some() => self.on_confirm(&msg.payload),
            _ => self.abort(AbortReason::Protocol),
        }
    }

    fn on_reveal(&mut self, payload: &[u8]) -> Vec<SessionMessage> {
        let Ok(indices) = decode_indices(payload) else {
            return self.abort(AbortReason::Protocol);
        };
        let in_range = indices.iter().all(|&i| (i as usize) < self.sent.len());
        let increasing = indices.windows(2).all(|w| w[0] < w[1]);
        if !in_range || !increasing {
            return self.abort(AbortReason::Protocol);
        }
        let values: Vec<(f64, f64)> = indices
            .iter()
            .map(|&i| {
                let q = self.sent[i as usize];
                (q.x, q.p)
            })
            .collect();
        self.revealed = indices;
        self.phase = AlicePhase::Reveal;
        vec![self.seq.stamp(MessageKind::RevealValues, encode_values(&values))]
    }

    fn on_ack(&mut self, payload: &[u8]) -> Vec<SessionMessage> {
        let Ok(ack) = EstimateAck::decode(payload) else {
            return self.abort(AbortReason::Protocol);
        };
        self.ack = Some(ack);
        if !ack.proceed {
            return self.abort(AbortReason::NoKey);
        }
        let keep = retained(self.sent.len(), &self.revealed);
        let scaled: Vec<f64> = keep.iter().map(|&i| ack.t_hat * self.sent[i].x).collect();
        self.raw = discretize(&scaled, ack.bin_sigma);
        self.phase = AlicePhase::Reconcile;
        Vec::new()
    }

    fn on_oracle(&mut self, bits: Vec<bool>) -> Vec<SessionMessage> {
        if Some(Digest::of_bits(&bits)) != self.bob_digest {
            return self.abort(AbortReason::ConfirmMismatch);
        }
        self.corrected = oracle_reconcile(&self.raw, &bits);
        self.phase = AlicePhase::Amplify;
        let d = Digest::of_bits(&self.corrected);
        vec![self.seq.stamp(MessageKind::ReconcileBlock, d.encode())]
    }

    fn on_seed(&mut self, payload: &[u8]) -> Vec<SessionMessage> {
        let Ok(seed) = decode_seed(payload) else {
            return self.abort(AbortReason::Protocol);
        };
        let len = self.ack.map_or(0, |a| a.key_len) as usize;
        self.key = Some(toeplitz_hash(&self.corrected, &seed, len.min(self.corrected.len())));
        Vec::new()
    }

    fn on_confirm(&mut self, payload: &[u8]) -> Vec<SessionMessage> {
        let Ok(theirs) = Digest::decode(MessageKind::KeyConfirm, payload) else {
            return self.abort(AbortReason::Protocol);
        };
        let ours = Digest::of_bits(self.key.as_deref().unwrap_or_default());
        if ours != theirs {
            return self.abort(AbortReason::ConfirmMismatch);
        }
        self.phase = AlicePhase::Done;
        vec![self.seq.stamp(MessageKind::KeyConfirm, ours.encode())]
    }
}

#[derive(Debug, Clone)]
pub struct BobSession {
    phase: BobPhase,
    seq: Sequencer,
    cfg: SessionConfig,
    rcv: ReceiverConfig,
    measured: Vec<QuadraturePair>,
    /// Full-scale pulses represented by one simulated pulse.
    stride: f64,
    rng: ChaCha8Rng,
    revealed: Vec<u64>,
    rotations: Vec<f64>,
    estimate: Option<CovarianceEstimate>,
    report: Option<KeyRateReport>,
    raw: Vec<bool>,
    key_len: usize,
    key: Option<Vec<bool>>,
}

impl BobSession {
    pub fn new(
        cfg: SessionConfig,
        rcv: ReceiverConfig,
        measured: Vec<QuadraturePair>,
        stride: f64,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            phase: BobPhase::Sync,
            seq: Sequencer::default(),
            cfg,
            rcv,
            measured,
            stride: stride.max(1.0),
            rng,
            revealed: Vec::new(),
            rotations: Vec::new(),
            estimate: None,
            report: None,
            raw: Vec::new(),
            key_len: 0,
            key: None,
        }
    }

    pub fn phase(&self) -> BobPhase {
        self.phase
    }

    pub fn estimate(&self) -> Option<&CovarianceEstimate> {
        self.estimate.as_ref()
    }

    pub fn report(&self) -> Option<&KeyRateReport> {
        self.report.as_ref()
    }

    /// Compensation angle applied to each segment, radians.
    pub fn rotations(&self) -> &[f64] {
        &self.rotations
    }

    pub fn raw_key(&self) -> &[bool] {
        &self.raw
    }

    pub fn key(&self) -> Option<&[bool]> {
        self.key.as_deref()
    }

    fn abort(&mut self, reason: AbortReason) -> Vec<SessionMessage> {
        self.phase = BobPhase::Aborted(reason);
        Vec::new()
    }

    pub fn step(&mut self, event: BobEvent) -> Vec<SessionMessage> {
        if matches!(self.phase, BobPhase::Done | BobPhase::Aborted(_)) {
            return Vec::new();
        }
        let msg = match event {
            BobEvent::TransportError => return self.abort(AbortReason::Transport),
            BobEvent::MeasurementComplete if self.phase == BobPhase::Measure => return self.on_measured(),
            BobEvent::MeasurementComplete => return self.abort(AbortReason::Protocol),
            BobEvent::Message(m) => m,
        };
        if !self.seq.accept(&msg) {
            return self.abort(AbortReason::Transport);
        }
        match (self.phase, msg.kind) {
            (BobPhase::Sync, MessageKind::SyncAnnounce) => match SyncAnnounce::decode(&msg.payload) {
                Ok(_) => {
                    self.phase = BobPhase::Measure;
                    Vec::new()
                }
                Err(_) => self.abort(AbortReason::Protocol),
            },
            (BobPhase::Estimate, MessageKind::RevealValues) => self.on_values(&msg.payload),
            (BobPhase::Reconcile, MessageKind::ReconcileBlock) => self.on_reconciled(&msg.payload),
            (BobPhase::Amplify, MessageKind::KeyConfirm) => self.on_confirm(&msg.payload),
            _ => self.abort(AbortReason::Protocol),
        }
    }

    fn on_measured(&mut self) -> Vec<SessionMessage> {
        let len = self.measured.len();
        let m = ((len as f64) * self.cfg.reveal_fraction).round() as usize;
        let mut idx: Vec<u64> = rand::seq::index::sample(&mut self.rng, len, m.min(len))
            .into_iter()
            .map(|i| i as u64)
            .collect();
        idx.sort_unstable();
        self.revealed = idx;
        self.phase = BobPhase::Estimate;
        vec![self.seq.stamp(MessageKind::RevealIndices, encode_indices(&self.revealed))]
    }

    fn segment_len(&self) -> usize {
        ((self.cfg.compensation_segment as f64 / self.stride).round() as usize).max(1)
    }

    /// Fits one rotation per segment on the revealed pairs and
    /// counter-rotates every measurement in it. Segments with too few
    /// revealed pairs reuse the previous angle.
    fn compensate(&mut self, sent: &[(f64, f64)]) {
        let seg = self.segment_len();
        let segments = self.measured.len().div_ceil(seg);
        self.rotations = vec![0.0; segments];
        if !self.cfg.compensation {
            return;
        }
        let mut pairs_by_segment: Vec<Vec<(QuadraturePair, QuadraturePair)>> = vec![Vec::new(); segments];
        for (&i, &(x, p)) in self.revealed.iter().zip(sent) {
            let i = i as usize;
            pairs_by_segment[i / seg].push((QuadraturePair::new(x, p), self.measured[i]));
        }
        let mut last = 0.0;
        for (k, pairs) in pairs_by_segment.iter().enumerate() {
            if pairs.len() >= MIN_COMPENSATION_PAIRS {
                last = compensate_polarization(pairs);
            }
            self.rotations[k] = last;
        }
        for (i, q) in self.measured.iter_mut().enumerate() {
            *q = q.rotated(-self.rotations[i / seg]);
        }
    }

    fn reject(&mut self) -> Vec<SessionMessage> {
        let est = self.estimate.unwrap_or(CovarianceEstimate::exact(0.0, 0.0, 0));
        let ack = EstimateAck {
            proceed: false,
            t_hat: est.t_hat,
            xi_hat: est.xi_hat,
            t_lo: est.t_lo,
            xi_hi: est.xi_hi,
            n_used: est.n_used,
            key_len: 0,
            bin_sigma: 0.0,
        };
        let out = vec![self.seq.stamp(MessageKind::EstimateAck, ack.encode())];
        self.phase = BobPhase::Aborted(AbortReason::NoKey);
        out
    }

    fn on_values(&mut self, payload: &[u8]) -> Vec<SessionMessage> {
        let sent = match decode_values(payload) {
            Ok(v) if v.len() == self.revealed.len() => v,
            _ => return self.abort(AbortReason::Protocol),
        };
        self.compensate(&sent);
        let pairs: Vec<_> = self
            .revealed
            .iter()
            .zip(&sent)
            .map(|(&i, &(x, p))| (QuadraturePair::new(x, p), self.measured[i as usize]))
            .collect();
        let est = match estimate_parameters(&pairs, &self.rcv) {
            Ok(e) => e,
            Err(_) => return self.reject(),
        };
        let full_reveal = self.cfg.reveal_pulses();
        let est = if (pairs.len() as u64) < full_reveal {
            est.rescaled_to(full_reveal)
        } else {
            est
        };
        self.estimate = Some(est);
        let Ok(inputs) = KeyRateInputs::from_estimate(est, &self.cfg, &self.rcv) else {
            return self.reject();
        };
        let report = secure_key_rate(&inputs);
        self.report = Some(report);
        let keep = retained(self.measured.len(), &self.revealed);
        let key_len = ((keep.len() as f64) * report.secret_fraction()).floor() as u64;
        if report.clamped || key_len == 0 {
            return self.reject();
        }
        let xs: Vec<f64> = keep.iter().map(|&i| self.measured[i].x).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let bin_sigma = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        self.raw = discretize(&xs, bin_sigma);
        let ack = EstimateAck {
            proceed: true,
            t_hat: est.t_hat,
            xi_hat: est.xi_hat,
            t_lo: est.t_lo,
            xi_hi: est.xi_hi,
            n_used: est.n_used,
            key_len: key_len.min(self.raw.len() as u64),
            bin_sigma,
        };
        self.key_len = ack.key_len as usize;
        self.phase = BobPhase::Reconcile;
        vec![
            self.seq.stamp(MessageKind::EstimateAck, ack.encode()),
            self.seq
                .stamp(MessageKind::ReconcileBlock, Digest::of_bits(&self.raw).encode()),
        ]
    }

    fn on_reconciled(&mut self, payload: &[u8]) -> Vec<SessionMessage> {
        match Digest::decode(MessageKind::ReconcileBlock, payload) {
            Ok(d) if d == Digest::of_bits(&self.raw) => {}
            Ok(_) => return self.abort(AbortReason::ConfirmMismatch),
            Err(_) => return self.abort(AbortReason::Protocol),
        }
        let mut seed = [0u8; 32];
        self.rng.fill_bytes(&mut seed);
        let key = toeplitz_hash(&self.raw, &seed, self.key_len);
        let digest = Digest::of_bits(&key);
        self.key = Some(key);
        self.phase = BobPhase::Amplify;
        vec![
            self.seq.stamp(MessageKind::PaSeed, seed.to_vec()),
            self.seq.stamp(MessageKind::KeyConfirm, digest.encode()),
        ]
    }

    fn on_confirm(&mut self, payload: &[u8]) -> Vec<SessionMessage> {
        match Digest::decode(MessageKind::KeyConfirm, payload) {
            Ok(d) if Some(d) == self.key.as_deref().map(Digest::of_bits) => {
                self.phase = BobPhase::Done;
            }
            Ok(_) => self.phase = BobPhase::Aborted(AbortReason::ConfirmMismatch),
            Err(_) => self.phase = BobPhase::Aborted(AbortReason::Protocol),
        }
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AliceToBob,
    BobToAlice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionOutcome {
    pub alice: AlicePhase,
    pub bob: BobPhase,
    pub messages: usize,
    pub bytes: usize,
}

impl SessionOutcome {
    pub fn succeeded(&self) -> bool {
        self.alice == AlicePhase::Done && self.bob == BobPhase::Done
    }

    /// The first abort reason seen on either side.
    pub fn abort_reason(&self) -> Option<AbortReason> {
        match (self.alice, self.bob) {
            (_, BobPhase::Aborted(r)) | (AlicePhase::Aborted(r), _) => Some(r),
            _ => None,
        }
    }
}

/// Drives both sessions to completion over an in-process, in-order duplex
/// byte transport.
pub fn run_in_process(alice: &mut AliceSession, bob: &mut BobSession) -> SessionOutcome {
    run_in_process_with(alice, bob, |_, _| {})
}

/// As [`run_in_process`], passing every encoded frame through `tamper`
/// before delivery.
pub fn run_in_process_with<F>(alice: &mut AliceSession, bob: &mut BobSession, mut tamper: F) -> SessionOutcome
where
    F: FnMut(Direction, &mut Vec<u8>),
{
    let mut to_bob: VecDeque<Vec<u8>> = VecDeque::new();
    let mut to_alice: VecDeque<Vec<u8>> = VecDeque::new();
    let (mut messages, mut bytes) = (0, 0);
    let mut send = |q: &mut VecDeque<Vec<u8>>, dir, msgs: Vec<SessionMessage>| {
        for m in msgs {
            let mut frame = m.encode();
            tamper(dir, &mut frame);
            messages += 1;
            bytes += frame.len();
            q.push_back(frame);
        }
    };
    send(&mut to_bob, Direction::AliceToBob, alice.step(AliceEvent::Start));
    loop {
        let mut progressed = false;
        if let Some(frame) = to_bob.pop_front() {
            let event = SessionMessage::parse(&frame).map_or(BobEvent::TransportError, BobEvent::Message);
            send(&mut to_alice, Direction::BobToAlice, bob.step(event));
            progressed = true;
        }
        if bob.phase() == BobPhase::Measure {
            send(&mut to_alice, Direction::BobToAlice, bob.step(BobEvent::MeasurementComplete));
            progressed = true;
        }
        if let Some(frame) = to_alice.pop_front() {
            let event = SessionMessage::parse(&frame).map_or(AliceEvent::TransportError, AliceEvent::Message);
            send(&mut to_bob, Direction::AliceToBob, alice.step(event));
            progressed = true;
        }
        if alice.needs_oracle() {
            let bits = bob.raw_key().to_vec();
            send(&mut to_bob, Direction::AliceToBob, alice.step(AliceEvent::Oracle(bits)));
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    // A side still waiting on a peer that aborted inherits the abort.
    if let AlicePhase::Aborted(r) = alice.phase() {
        if !matches!(bob.phase(), BobPhase::Aborted(_) | BobPhase::Done) {
            bob.phase = BobPhase::Aborted(r);
        }
    }
    if let BobPhase::Aborted(r) = bob.phase() {
        if !matches!(alice.phase(), AlicePhase::Aborted(_) | AlicePhase::Done) {
            alice.phase = AlicePhase::Aborted(r);
        }
    }
    SessionOutcome {
        alice: alice.phase(),
        bob: bob.phase(),
        messages,
        bytes,
    }
}
