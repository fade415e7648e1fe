use std::collections::{BTreeSet, HashSet};
use std::ops::Range;

use thiserror::Error;

use super::{
    reconcile_frames, sift_b92, sift_bb84, CapacityModel, CapacityQueue, DetectionReport, Frame,
    FrameSource, Message, ProtocolError, SiftedBuffer, WireError, MAX_FRAME_DONE,
};
use crate::detector::{Cause, DetectorId};
use crate::photonics::ProtocolKind;
use crate::transport::{Transport, TransportError};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("peer closed the session mid-block")]
    Closed,
    #[error("unexpected message: {0}")]
    Unexpected(String),
}

/// Parameters both parties must agree on.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionParams {
    pub protocol: ProtocolKind,
    /// Frames in the run.
    pub frames: u64,
    /// Frames between FRAME_DONE exchanges.
    pub cadence: usize,
    /// Number carried by the first frame; later frames wrap modulo 2³².
    pub first_frame_number: u32,
    /// Transmission time of one frame, seconds.
    pub frame_period_s: f64,
    pub capacity: CapacityModel,
}

impl SessionParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.cadence == 0 || self.cadence > MAX_FRAME_DONE {
            return Err(ProtocolError::Config(format!(
                "frame_done_cadence must be in 1..={MAX_FRAME_DONE}, got {}",
                self.cadence
            )));
        }
        self.capacity
            .validate()
            .map_err(|e| ProtocolError::Config(e.to_string()))
    }

    pub fn frame_number(&self, index: u64) -> u32 {
        self.first_frame_number.wrapping_add(index as u32)
    }

    fn completion_time_s(&self, index: u64) -> f64 {
        (index + 1) as f64 * self.frame_period_s
    }

    fn blocks(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        let c = self.cadence as u64;
        (0..self.frames.div_ceil(c)).map(move |b| b * c..((b + 1) * c).min(self.frames))
    }
}

/// Counters shared by both roles.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub frames_offered: u64,
    /// Frames this party passed to memory.
    pub frames_processed: u64,
    /// Frames this party dropped for lack of capacity.
    pub frames_dropped: u64,
    /// Frames both parties kept.
    pub frames_retained: u64,
    pub reports: u64,
    /// Duplicate or unknown reports seen by Alice.
    pub anomalies: u64,
}

/// What one party ends up with.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionOutcome {
    pub key: SiftedBuffer,
    /// Provenance of each key bit (Bob only; empty for Alice).
    pub causes: Vec<Cause>,
    pub stats: SessionStats,
}

/// One click as Bob's receiver saw it, with the simulator's provenance tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BobDetection {
    pub frame_index: u64,
    pub bit_position: u16,
    pub detector: DetectorId,
    pub cause: Cause,
}

/// Source of Bob's detections, one block of frames at a time.
pub trait QuantumLink {
    /// Detections for frames in `frames`, ordered by frame then position.
    fn block(&mut self, frames: Range<u64>) -> Result<Vec<BobDetection>, ProtocolError>;
}

fn send<T: Transport>(t: &mut T, m: &Message) -> Result<(), SessionError> {
    Ok(t.send(&m.encode()?)?)
}

fn receive<T: Transport>(t: &mut T) -> Result<Message, SessionError> {
    let payload = t.receive()?.ok_or(SessionError::Closed)?;
    Ok(Message::decode(&payload)?)
}

/// Alice: owns the frame table, answers reports, keeps her half of the key.
pub struct Alice {
    params: SessionParams,
    source: FrameSource,
}

impl Alice {
    pub fn new(params: SessionParams, source: FrameSource) -> Result<Self, ProtocolError> {
        params.validate()?;
        Ok(Alice { params, source })
    }

    pub fn run<T: Transport>(&self, t: &mut T) -> Result<SessionOutcome, SessionError> {
        let p = &self.params;
        let mut out = SessionOutcome::default();
        let mut queue = CapacityQueue::new(p.capacity.clone());

        for block in p.blocks() {
            let frames: Vec<Frame> = block
                .clone()
                .map(|i| self.source.frame(p.protocol, i, p.frame_number(i)))
                .collect::<Result<_, _>>()?;
            for f in &frames {
                send(t, &Message::Sync { frame_number: f.frame_number })?;
            }

            // Bob's reports, then his FRAME_DONE
            let mut per_frame: Vec<Vec<DetectionReport>> = vec![Vec::new(); frames.len()];
            let mut seen = HashSet::new();
            let bob_done: BTreeSet<u32> = loop {
                match receive(t)? {
                    Message::Report(r) => {
                        out.stats.reports += 1;
                        let slot = r.frame_number.wrapping_sub(frames[0].frame_number) as usize;
                        if slot >= frames.len() || !seen.insert((r.frame_number, r.bit_position)) {
                            out.stats.anomalies += 1;
                            continue;
                        }
                        per_frame[slot].push(r);
                    }
                    Message::FrameDone { frames } => break frames.into_iter().collect(),
                    m => return Err(SessionError::Unexpected(format!("{m:?} while awaiting reports"))),
                }
            };

            let mut alice_done = Vec::new();
            let mut sifted = Vec::with_capacity(frames.len());
            for (k, (f, reports)) in frames.iter().zip(&per_frame).enumerate() {
                out.stats.frames_offered += 1;
                let bits = match p.protocol {
                    ProtocolKind::B92 => sift_b92(f, reports)?,
                    ProtocolKind::Bb84 => sift_bb84(f, reports)?,
                };
                if queue.offer(p.completion_time_s(block.start + k as u64), reports.len() as u64) {
                    alice_done.push(f.frame_number);
                    out.stats.frames_processed += 1;
                    if p.protocol == ProtocolKind::Bb84 {
                        for r in reports.iter().filter(|r| f.basis_bits.get(r.bit_position as usize) == r.basis_bit) {
                            send(t, &Message::Report(*r))?;
                        }
                    }
                } else {
                    out.stats.frames_dropped += 1;
                }
                sifted.push(bits);
            }
            send(t, &Message::FrameDone { frames: alice_done.clone() })?;

            let retained = reconcile_frames(&alice_done.into_iter().collect(), &bob_done);
            out.stats.frames_retained += retained.len() as u64;
            for (f, bits) in frames.iter().zip(sifted) {
                if retained.contains(&f.frame_number) {
                    for b in bits {
                        out.key.push(b.alice_bit, f.frame_number, b.bit_position);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Bob: turns detections into reports and keeps his half of the key.
pub struct Bob<L: QuantumLink> {
    params: SessionParams,
    link: L,
}

impl<L: QuantumLink> Bob<L> {
    pub fn new(params: SessionParams, link: L) -> Result<Self, ProtocolError> {
        params.validate()?;
        Ok(Bob { params, link })
    }

    pub fn into_link(self) -> L {
        self.link
    }

    pub fn run<T: Transport>(&mut self, t: &mut T) -> Result<SessionOutcome, SessionError> {
        let p = self.params.clone();
        let mut out = SessionOutcome::default();
        let mut queue = CapacityQueue::new(p.capacity.clone());

        for block in p.blocks() {
            for i in block.clone() {
                match receive(t)? {
                    Message::Sync { frame_number } if frame_number == p.frame_number(i) => {}
                    m => {
                        return Err(SessionError::Unexpected(format!(
                            "{m:?} where SYNC {} was due",
                            p.frame_number(i)
                        )))
                    }
                }
            }

            let detections = self.link.block(block.clone())?;
            let n = (block.end - block.start) as usize;
            let mut per_frame: Vec<Vec<BobDetection>> = vec![Vec::new(); n];
            for d in detections {
                per_frame[(d.frame_index - block.start) as usize].push(d);
            }

            let mut bob_done = Vec::new();
            for (k, dets) in per_frame.iter().enumerate() {
                let i = block.start + k as u64;
                out.stats.frames_offered += 1;
                for d in dets {
                    send(t, &Message::Report(report_for(&p, d)))?;
                }
                out.stats.reports += dets.len() as u64;
                if queue.offer(p.completion_time_s(i), dets.len() as u64) {
                    bob_done.push(p.frame_number(i));
                    out.stats.frames_processed += 1;
                } else {
                    out.stats.frames_dropped += 1;
                }
            }
            send(t, &Message::FrameDone { frames: bob_done.clone() })?;

            // BB84 echoes of the basis-matched reports, then Alice's FRAME_DONE
            let mut echoed = HashSet::new();
            let alice_done: BTreeSet<u32> = loop {
                match receive(t)? {
                    Message::Report(r) if p.protocol == ProtocolKind::Bb84 => {
                        echoed.insert((r.frame_number, r.bit_position));
                    }
                    Message::FrameDone { frames } => break frames.into_iter().collect(),
                    m => return Err(SessionError::Unexpected(format!("{m:?} while awaiting FRAME_DONE"))),
                }
            };

            let retained = reconcile_frames(&alice_done, &bob_done.into_iter().collect());
            out.stats.frames_retained += retained.len() as u64;
            for (k, dets) in per_frame.iter().enumerate() {
                let number = p.frame_number(block.start + k as u64);
                if !retained.contains(&number) {
                    continue;
                }
                for d in dets {
                    let kept = match p.protocol {
                        ProtocolKind::B92 => true,
                        ProtocolKind::Bb84 => echoed.contains(&(number, d.bit_position)),
                    };
                    if kept {
                        out.key.push(d.detector.value_bit(), number, d.bit_position);
                        out.causes.push(d.cause);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn report_for(p: &SessionParams, d: &BobDetection) -> DetectionReport {
    DetectionReport {
        frame_number: p.frame_number(d.frame_index),
        bit_position: d.bit_position,
        basis_bit: match p.protocol {
            ProtocolKind::B92 => false,
            ProtocolKind::Bb84 => d.detector.basis_bit(),
        },
        detector_id: d.detector.value_bit(),
    }
}
