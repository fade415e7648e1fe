//! APD detection, bin gating and coincidence discard.
//!
//! Bob's receiver recovers the 1.25 Gbps clock, so every detection can be
//! placed in an 800 ps bin. Pulses occupy one group of `pulse_spacing_bits`
//! bins; only detections in the first two bins of a group are kept, a 1.6 ns
//! gate at the default spacing.

mod histogram;
mod jitter;

pub use histogram::{histogram, Histogram};
pub use jitter::{
    sample_jitter, JitterModel, MaskStatistics, CALIBRATED_CORE_SIGMA_PS, CALIBRATED_TAIL_DECAY_PS,
    CALIBRATED_TAIL_FRACTION,
};
pub use crate::photonics::DetectorId;

use rand::{Rng, RngExt};
use thiserror::Error;

use crate::photonics::{ClockBase, LinkBudget};
use crate::protocol::FRAME_BITS;

/// Why a detection happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cause {
    /// A photon of the pulse whose gate it landed in.
    Signal,
    /// A photon of another pulse, pushed into this gate by jitter.
    Intersymbol,
    /// Ambient light or dark counts.
    Background,
    /// A photon that crossed a nominally blocked polarizer.
    Leak,
}

impl Cause {
    pub const ALL: [Cause; 4] = [Cause::Signal, Cause::Intersymbol, Cause::Background, Cause::Leak];

    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Signal => "signal",
            Cause::Intersymbol => "intersymbol",
            Cause::Background => "background",
            Cause::Leak => "leak",
        }
    }
}

/// A photon at a detector face, before the detector has responded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub time_ps: i64,
    pub detector: DetectorId,
    pub slot_index: u64,
    pub leaked: bool,
}

/// One APD click.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionEvent {
    pub time_ps: i64,
    pub detector: DetectorId,
    /// Originating pulse slot; `None` for background.
    pub slot_index: Option<u64>,
    pub cause: Cause,
}

impl DetectionEvent {
    pub fn background(time_ps: i64, detector: DetectorId) -> Self {
        DetectionEvent {
            time_ps,
            detector,
            slot_index: None,
            cause: Cause::Background,
        }
    }
}

/// Fires with probability `quantum_efficiency`, delayed by a jitter draw.
pub fn detect<R: Rng + ?Sized>(
    arrival: Arrival,
    budget: &LinkBudget,
    model: &JitterModel,
    rng: &mut R,
) -> Option<DetectionEvent> {
    let qe = budget.quantum_efficiency;
    if qe <= 0.0 || (qe < 1.0 && rng.random::<f64>() >= qe) {
        return None;
    }
    let delay = model.sample(rng);
    Some(DetectionEvent {
        time_ps: arrival.time_ps + delay.round() as i64,
        detector: arrival.detector,
        slot_index: Some(arrival.slot_index),
        cause: if arrival.leaked { Cause::Leak } else { Cause::Signal },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GateError {
    #[error("detection at negative time {0} ps")]
    NegativeTime(i64),
    #[error("coincidence filter given decisions from groups {0} and {1}")]
    MixedGroups(u64, u64),
}

/// Where the bin grid puts one detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateDecision {
    pub accepted: bool,
    /// Global pulse-group index (one group per pulse slot).
    pub group: u64,
    pub frame_index: u64,
    pub frame_bit_position: u16,
    pub bin_in_group: u32,
    pub detector: DetectorId,
}

/// Places a detection on the bin grid and applies the two-bin mask.
pub fn gate(event: &DetectionEvent, clock: &ClockBase) -> Result<GateDecision, GateError> {
    if event.time_ps < 0 {
        return Err(GateError::NegativeTime(event.time_ps));
    }
    let bin = event.time_ps as u64 / clock.bit_period_ps;
    let spacing = clock.pulse_spacing_bits as u64;
    let group = bin / spacing;
    let bin_in_group = (bin % spacing) as u32;
    Ok(GateDecision {
        accepted: bin_in_group < 2,
        group,
        frame_index: group / FRAME_BITS as u64,
        frame_bit_position: (group % FRAME_BITS as u64) as u16,
        bin_in_group,
        detector: event.detector,
    })
}

/// A detection together with its gate decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gated {
    pub event: DetectionEvent,
    pub decision: GateDecision,
}

/// Applies the one-click-per-gate rule to the decisions of one group.
///
/// Rejected decisions are ignored. If accepted clicks come from more than one
/// detector the whole gate is dropped; repeated clicks on one detector
/// collapse to the earliest.
pub fn coincidence_filter(decisions: &[Gated]) -> Result<Vec<Gated>, GateError> {
    if let Some(first) = decisions.first() {
        if let Some(other) = decisions.iter().find(|g| g.decision.group != first.decision.group) {
            return Err(GateError::MixedGroups(first.decision.group, other.decision.group));
        }
    }
    let mut kept: Option<Gated> = None;
    for g in decisions.iter().filter(|g| g.decision.accepted) {
        match kept {
            None => kept = Some(*g),
            Some(k) if k.decision.detector != g.decision.detector => return Ok(Vec::new()),
            Some(k) if g.event.time_ps < k.event.time_ps => kept = Some(*g),
            Some(_) => {}
        }
    }
    Ok(kept.into_iter().collect())
}

/// Non-paralyzable dead time. `events` must be time ordered; `last_fire`
/// carries the last registered click per detector across calls.
pub fn apply_dead_time(
    events: &mut Vec<DetectionEvent>,
    dead_time_ps: u64,
    last_fire: &mut [Option<i64>],
) {
    if dead_time_ps == 0 {
        return;
    }
    events.retain(|e| {
        let slot = &mut last_fire[e.detector.0 as usize];
        match *slot {
            Some(t) if e.time_ps - t < dead_time_ps as i64 => false,
            _ => {
                *slot = Some(e.time_ps);
                true
            }
        }
    });
}
