use std::ops::Range;

use crate::detector::{
    apply_dead_time, coincidence_filter, detect, gate, Arrival, Cause, DetectionEvent, DetectorId, Gated,
    JitterModel,
};
use crate::parallel::Execution;
use crate::photonics::{
    route_polarization, sample_background, survive_channel, AnalyzerOutcome, ClockBase, LinkBudget, PhotonBatch,
    PhotonSource, ProtocolKind, PulseTrain,
};
use crate::protocol::{BobDetection, FrameSource, ProtocolError, QuantumLink, FRAME_BITS};
use crate::rng::{stream, Domain};

use super::SimConfig;

/// Counters gathered while turning photons into reported detections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelStats {
    /// Clicks of every kind, before dead time and gating.
    pub detection_events: u64,
    /// Clicks caused by a pulse photon (signal or leak).
    pub pulse_events: u64,
    /// Pulse clicks that landed in the pulse's own gate.
    pub own_gate_events: u64,
    /// Pulse clicks that landed in the next pulse's gate.
    pub next_gate_events: u64,
    /// Gates discarded because two detectors fired.
    pub coincidence_discards: u64,
    /// Clicks that arrived before the window being finalized (or before
    /// time zero) and were dropped.
    pub late_events: u64,
}

/// Bob-side simulation of the optical link and receiver.
///
/// Detections are generated frame by frame with per-frame random streams, so
/// the result does not depend on how frames are batched or on the
/// execution strategy. Gating runs one block behind generation so that clicks
/// jittered across a block boundary land in the right gate.
pub struct QuantumChannel {
    budget: LinkBudget,
    clock: ClockBase,
    jitter: JitterModel,
    dead_time_ps: u64,
    protocol: ProtocolKind,
    single_photon: bool,
    seed: u64,
    total_frames: u64,
    batch_frames: u64,
    source: FrameSource,
    execution: Execution,
    generated_to: u64,
    pending: Vec<DetectionEvent>,
    last_fire: Vec<Option<i64>>,
    stats: ChannelStats,
}

impl QuantumChannel {
    pub fn new(config: &SimConfig, source: FrameSource) -> Self {
        let cadence = config.frame_done_cadence as u64;
        QuantumChannel {
            budget: config.budget.clone(),
            clock: config.clock.clone(),
            jitter: config.jitter,
            dead_time_ps: config.dead_time_ps,
            protocol: config.protocol,
            single_photon: config.single_photon,
            seed: config.seed,
            total_frames: config.frames(),
            batch_frames: cadence * 4 * config.execution.workers() as u64,
            source,
            execution: config.execution,
            generated_to: 0,
            pending: Vec::new(),
            last_fire: vec![None; config.protocol.detector_count()],
            stats: ChannelStats::default(),
        }
    }

    pub fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    fn frame_start_ps(&self, frame: u64) -> i64 {
        (frame * FRAME_BITS as u64 * self.clock.slot_period_ps()) as i64
    }

    /// Every click caused by frame `index`: its pulses, plus background over
    /// its time window.
    fn frame_events(&self, index: u64) -> Result<Vec<DetectionEvent>, ProtocolError> {
        let frame = self.source.frame(self.protocol, index, index as u32)?;
        let first_slot = index * FRAME_BITS as u64;
        let mut rng = stream(self.seed, Domain::Pulses, index);
        let mut events = Vec::new();

        // Poisson photon numbers thin exactly, so channel loss can be folded
        // into the mean; the single-photon source needs explicit thinning.
        let (photons, thin) = if self.single_photon {
            (PhotonSource::SinglePhoton, true)
        } else {
            let mu = self.budget.mu * self.budget.channel_transmission();
            (PhotonSource::Poisson { mu }, false)
        };
        let mut train = PulseTrain::new(photons, first_slot..first_slot + FRAME_BITS as u64);
        while let Some((slot, count)) = train.next(&mut rng) {
            let state = frame.state((slot - first_slot) as usize);
            let mut batch = PhotonBatch::new(slot, count, state, &self.clock);
            if thin {
                batch = survive_channel(batch, &self.budget, &mut rng);
            }
            for _ in 0..batch.count {
                if let AnalyzerOutcome::Detected { detector, leaked } =
                    route_polarization(state, self.protocol, &self.budget, &mut rng)
                {
                    let arrival = Arrival {
                        time_ps: batch.emit_time_ps,
                        detector,
                        slot_index: slot,
                        leaked,
                    };
                    events.extend(detect(arrival, &self.budget, &self.jitter, &mut rng));
                }
            }
        }

        let mut rng = stream(self.seed, Domain::Background, index);
        let start = self.frame_start_ps(index);
        let window = (self.frame_start_ps(index + 1) - start) as u64;
        for d in 0..self.protocol.detector_count() {
            for t in sample_background(self.budget.background_rate_hz, start, window, &mut rng) {
                events.push(DetectionEvent::background(t, DetectorId(d as u8)));
            }
        }
        Ok(events)
    }

    fn generate_to(&mut self, target: u64) -> Result<(), ProtocolError> {
        let target = target.min(self.total_frames);
        if self.generated_to >= target {
            return Ok(());
        }
        let end = (self.generated_to + self.batch_frames).max(target).min(self.total_frames);
        let this = &*self;
        let batches = this
            .execution
            .map_range(self.generated_to..end, |i| this.frame_events(i));
        for events in batches {
            let events = events?;
            self.stats.detection_events += events.len() as u64;
            self.pending.extend(events);
        }
        self.generated_to = end;
        Ok(())
    }

    /// Gates all pending clicks in the time window of `frames`.
    fn finalize(&mut self, frames: Range<u64>) -> Vec<BobDetection> {
        let start = self.frame_start_ps(frames.start);
        let end = self.frame_start_ps(frames.end);
        let last = frames.end == self.total_frames;

        let mut window = Vec::new();
        let mut keep = Vec::with_capacity(self.pending.len());
        for e in self.pending.drain(..) {
            if e.time_ps < start {
                self.stats.late_events += 1;
            } else if e.time_ps < end {
                window.push(e);
            } else if !last {
                keep.push(e);
            }
        }
        self.pending = keep;
        window.sort_by_key(|e| (e.time_ps, e.detector));
        apply_dead_time(&mut window, self.dead_time_ps, &mut self.last_fire);

        let mut accepted: Vec<Gated> = Vec::new();
        for event in window {
            let decision = gate(&event, &self.clock).expect("window starts at or after zero");
            if let Some(slot) = event.slot_index {
                self.stats.pulse_events += 1;
                if decision.accepted && decision.group == slot {
                    self.stats.own_gate_events += 1;
                } else if decision.accepted && decision.group == slot + 1 {
                    self.stats.next_gate_events += 1;
                }
            }
            if decision.accepted {
                accepted.push(Gated { event, decision });
            }
        }

        let mut out = Vec::new();
        for group in accepted.chunk_by(|a, b| a.decision.group == b.decision.group) {
            let kept = coincidence_filter(group).expect("chunk holds one group");
            if kept.is_empty() {
                self.stats.coincidence_discards += 1;
                continue;
            }
            let g = kept[0];
            let cause = match g.event.slot_index {
                Some(slot) if slot != g.decision.group => Cause::Intersymbol,
                _ => g.event.cause,
            };
            out.push(BobDetection {
                frame_index: g.decision.frame_index,
                bit_position: g.decision.frame_bit_position,
                detector: g.decision.detector,
                cause,
            });
        }
        out
    }
}

impl QuantumLink for QuantumChannel {
    fn block(&mut self, frames: Range<u64>) -> Result<Vec<BobDetection>, ProtocolError> {
        if frames.end > self.total_frames {
            return Err(ProtocolError::Link(format!(
                "frames {frames:?} beyond the {}-frame run",
                self.total_frames
            )));
        }
        // one block of look-ahead for clicks jittered backwards in time
        let lookahead = frames.end + (frames.end - frames.start);
        self.generate_to(lookahead)?;
        Ok(self.finalize(frames))
    }
}
