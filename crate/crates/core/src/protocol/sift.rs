use std::collections::{BTreeMap, BTreeSet};

use super::{Frame, ProtocolError, FRAME_BITS};
use crate::detector::Cause;

/// What Bob tells Alice about one click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectionReport {
    pub frame_number: u32,
    pub bit_position: u16,
    /// Bob's analyzer basis; always false for B92.
    pub basis_bit: bool,
    /// Which detector of that basis fired, i.e. Bob's bit value.
    pub detector_id: bool,
}

/// One sifted position with both parties' bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiftedBit {
    pub alice_bit: bool,
    pub bob_bit: bool,
    pub bit_position: u16,
}

fn check_report(frame: &Frame, r: &DetectionReport) -> Result<usize, ProtocolError> {
    if r.frame_number != frame.frame_number {
        return Err(ProtocolError::UnknownFrame(r.frame_number));
    }
    let pos = r.bit_position as usize;
    if pos >= FRAME_BITS {
        return Err(ProtocolError::BitPosition(r.bit_position));
    }
    Ok(pos)
}

/// B92: every report is conclusive, detector 0 reading 0 and detector 1
/// reading 1.
pub fn sift_b92(frame: &Frame, reports: &[DetectionReport]) -> Result<Vec<SiftedBit>, ProtocolError> {
    reports
        .iter()
        .map(|r| {
            let pos = check_report(frame, r)?;
            Ok(SiftedBit {
                alice_bit: frame.value_bits.get(pos),
                bob_bit: r.detector_id,
                bit_position: r.bit_position,
            })
        })
        .collect()
}

/// BB84: keeps the reports whose basis matches Alice's.
pub fn sift_bb84(frame: &Frame, reports: &[DetectionReport]) -> Result<Vec<SiftedBit>, ProtocolError> {
    let mut out = Vec::new();
    for r in reports {
        let pos = check_report(frame, r)?;
        if frame.basis_bits.get(pos) == r.basis_bit {
            out.push(SiftedBit {
                alice_bit: frame.value_bits.get(pos),
                bob_bit: r.detector_id,
                bit_position: r.bit_position,
            });
        }
    }
    Ok(out)
}

/// Frames both parties passed to memory.
pub fn reconcile_frames(alice_done: &BTreeSet<u32>, bob_done: &BTreeSet<u32>) -> BTreeSet<u32> {
    alice_done.intersection(bob_done).copied().collect()
}

/// One party's accumulated key with per-bit provenance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiftedBuffer {
    pub bits: Vec<bool>,
    /// (frame_number, bit_position) of each bit.
    pub source_tags: Vec<(u32, u16)>,
}

impl SiftedBuffer {
    pub fn push(&mut self, bit: bool, frame_number: u32, bit_position: u16) {
        self.bits.push(bit);
        self.source_tags.push((frame_number, bit_position));
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Drops bits at index `from` onwards whose frame is not in `retained`.
    /// Returns the kept-flags of the examined tail so callers can filter
    /// parallel side tables the same way.
    pub fn purge_from(&mut self, from: usize, retained: &BTreeSet<u32>) -> Vec<bool> {
        let keep: Vec<bool> = self.source_tags[from..]
            .iter()
            .map(|(f, _)| retained.contains(f))
            .collect();
        let mut it = keep.iter();
        let mut i = 0;
        self.bits.retain(|_| {
            let k = i < from || *it.next().expect("tail flag");
            i += 1;
            k
        });
        let mut it = keep.iter();
        let mut i = 0;
        self.source_tags.retain(|_| {
            let k = i < from || *it.next().expect("tail flag");
            i += 1;
            k
        });
        keep
    }

    /// Packs the bits eight per byte, first bit in the low-order position.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b as u8) << i))
            .collect()
    }
}

fn check_lengths(a: usize, b: usize) -> Result<(), ProtocolError> {
    if a != b {
        return Err(ProtocolError::LengthMismatch(a, b));
    }
    Ok(())
}

/// Fraction of positions where the buffers disagree. Empty buffers give 0.
pub fn compute_qber(alice: &[bool], bob: &[bool]) -> Result<f64, ProtocolError> {
    check_lengths(alice.len(), bob.len())?;
    if alice.is_empty() {
        return Ok(0.0);
    }
    let errors = alice.iter().zip(bob).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / alice.len() as f64)
}

/// Errors attributed to each cause, as fractions of the whole key, so the
/// entries sum to the QBER.
pub fn qber_by_cause(alice: &[bool], bob: &[bool], causes: &[Cause]) -> Result<BTreeMap<Cause, f64>, ProtocolError> {
    check_lengths(alice.len(), bob.len())?;
    check_lengths(alice.len(), causes.len())?;
    let mut counts: BTreeMap<Cause, usize> = Cause::ALL.iter().map(|&c| (c, 0)).collect();
    for ((a, b), c) in alice.iter().zip(bob).zip(causes) {
        if a != b {
            *counts.get_mut(c).expect("every cause present") += 1;
        }
    }
    let n = alice.len().max(1) as f64;
    Ok(counts.into_iter().map(|(c, k)| (c, k as f64 / n)).collect())
}
