//! Acquisition sequence: beacon scan, coarse track, fine track, then
//! quantum-link handover.

use std::collections::VecDeque;
use std::fmt;

/// Consecutive missed frames that count as loss of lock.
pub const MISSES_FOR_LOSS: u32 = 5;
/// Frames in the handover RMS window.
pub const HANDOVER_FRAMES: usize = 10;
pub const DEFAULT_HANDOVER_URAD: f64 = 38.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrackingPhase {
    Idle,
    CoarseScan,
    CoarseTrack,
    FineTrack,
    QuantumLink,
}

impl TrackingPhase {
    pub fn name(&self) -> &'static str {
        match self {
            TrackingPhase::Idle => "idle",
            TrackingPhase::CoarseScan => "coarse_scan",
            TrackingPhase::CoarseTrack => "coarse_track",
            TrackingPhase::FineTrack => "fine_track",
            TrackingPhase::QuantumLink => "quantum_link",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            TrackingPhase::Idle,
            TrackingPhase::CoarseScan,
            TrackingPhase::CoarseTrack,
            TrackingPhase::FineTrack,
            TrackingPhase::QuantumLink,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }

    fn regressed(self) -> Self {
        match self {
            TrackingPhase::QuantumLink => TrackingPhase::FineTrack,
            TrackingPhase::FineTrack => TrackingPhase::CoarseTrack,
            TrackingPhase::CoarseTrack => TrackingPhase::CoarseScan,
            other => other,
        }
    }

    /// True once the fine-steering loop is engaged.
    pub fn fine_engaged(&self) -> bool {
        matches!(self, TrackingPhase::FineTrack | TrackingPhase::QuantumLink)
    }
}

impl fmt::Display for TrackingPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AcquisitionEvent {
    /// Navigation fix available; the 785 nm beacon starts scanning.
    ScanStart,
    /// The 808 nm return beacon appears on the coarse camera.
    BeaconDetected,
    /// The spot is inside the fine camera's field and the steering range.
    FineFovEntry,
    /// Radial fine-camera error of one frame, µrad.
    FineResidual(f64),
    Detection,
    NoDetection,
    LossOfLock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionState {
    phase: TrackingPhase,
    residuals: VecDeque<f64>,
    misses: u32,
    handover_urad: f64,
}

impl AcquisitionState {
    pub fn new(handover_urad: f64) -> Self {
        Self {
            phase: TrackingPhase::Idle,
            residuals: VecDeque::with_capacity(HANDOVER_FRAMES),
            misses: 0,
            handover_urad,
        }
    }

    pub fn phase(&self) -> TrackingPhase {
        self.phase
    }

    pub fn handover_urad(&self) -> f64 {
        self.handover_urad
    }

    /// RMS of the last [`HANDOVER_FRAMES`] fine residuals, once that many
    /// have been seen.
    pub fn recent_rms(&self) -> Option<f64> {
        (self.residuals.len() == HANDOVER_FRAMES)
            .then(|| (self.residuals.iter().map(|r| r * r).sum::<f64>() / HANDOVER_FRAMES as f64).sqrt())
    }

    fn enter(&mut self, phase: TrackingPhase) {
        self.phase = phase;
        self.residuals.clear();
        self.misses = 0;
    }

    /// Applies one event. Events that do not apply to the current phase
    /// leave it unchanged.
    pub fn step(&mut self, event: AcquisitionEvent) -> TrackingPhase {
        use AcquisitionEvent as E;
        use TrackingPhase as P;
        match (self.phase, event) {
            (P::Idle, E::ScanStart) => self.enter(P::CoarseScan),
            (P::CoarseScan, E::BeaconDetected) => self.enter(P::CoarseTrack),
            (P::CoarseTrack, E::FineFovEntry) => self.enter(P::FineTrack),
            (P::FineTrack | P::QuantumLink, E::FineResidual(r)) => {
                if self.residuals.len() == HANDOVER_FRAMES {
                    self.residuals.pop_front();
                }
                self.residuals.push_back(r);
                if self.phase == P::FineTrack && self.recent_rms().is_some_and(|rms| rms < self.handover_urad) {
                    self.phase = P::QuantumLink;
                }
            }
            (_, E::Detection) => self.misses = 0,
            (_, E::NoDetection) => {
                self.misses += 1;
                if self.misses >= MISSES_FOR_LOSS {
                    let p = self.phase.regressed();
                    self.enter(p);
                }
            }
            (_, E::LossOfLock) => {
                let p = self.phase.regressed();
                self.enter(p);
            }
            _ => {}
        }
        self.phase
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use AcquisitionEvent as E;
    use TrackingPhase as P;

    fn at_fine() -> AcquisitionState {
        let mut s = AcquisitionState::new(DEFAULT_HANDOVER_URAD);
        s.step(E::ScanStart);
        s.step(E::BeaconDetected);
        s.step(E::FineFovEntry);
        s
    }

    #[test]
    fn full_sequence() {
        let mut s = AcquisitionState::new(DEFAULT_HANDOVER_URAD);
        assert_eq!(s.step(E::ScanStart), P::CoarseScan);
        assert_eq!(s.step(E::BeaconDetected), P::CoarseTrack);
        assert_eq!(s.step(E::FineFovEntry), P::FineTrack);
        for _ in 0..9 {
            assert_eq!(s.step(E::FineResidual(10.0)), P::FineTrack);
        }
        assert_eq!(s.step(E::FineResidual(10.0)), P::QuantumLink);
    }

    #[test]
    fn handover_needs_low_recent_rms() {
        let mut s = at_fine();
        for _ in 0..50 {
            assert_eq!(s.step(E::FineResidual(40.0)), P::FineTrack);
        }
        // one large frame keeps the ten-frame RMS above threshold
        s.step(E::FineResidual(120.0));
        for _ in 0..8 {
            assert_eq!(s.step(E::FineResidual(5.0)), P::FineTrack);
        }
        assert_eq!(s.step(E::FineResidual(5.0)), P::FineTrack);
        assert_eq!(s.step(E::FineResidual(5.0)), P::QuantumLink);
    }

    #[test]
    fn misses_regress_one_phase() {
        let mut s = at_fine();
        for _ in 0..4 {
            assert_eq!(s.step(E::NoDetection), P::FineTrack);
        }
        assert_eq!(s.step(E::NoDetection), P::CoarseTrack);
    }

    #[test]
    fn detection_resets_miss_count() {
        let mut s = at_fine();
        for _ in 0..4 {
            s.step(E::NoDetection);
        }
        s.step(E::Detection);
        for _ in 0..4 {
            assert_eq!(s.step(E::NoDetection), P::FineTrack);
        }
    }

    #[test]
    fn skipping_phases_is_ignored() {
        let mut s = AcquisitionState::new(DEFAULT_HANDOVER_URAD);
        assert_eq!(s.step(E::FineFovEntry), P::Idle);
        assert_eq!(s.step(E::FineResidual(0.0)), P::Idle);
        s.step(E::ScanStart);
        assert_eq!(s.step(E::FineFovEntry), P::CoarseScan);
        assert_eq!(s.step(E::LossOfLock), P::CoarseScan);
    }

    #[test]
    fn names_round_trip() {
        for p in [P::Idle, P::CoarseScan, P::CoarseTrack, P::FineTrack, P::QuantumLink] {
            assert_eq!(TrackingPhase::from_name(p.name()), Some(p));
        }
    }
}
