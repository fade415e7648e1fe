use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use super::{ProtocolError, FRAME_BITS};
use crate::photonics::{PolarizationState, ProtocolKind};
use crate::rng::{stream, Domain};

const WORDS: usize = FRAME_BITS / 64;
const FRAME_BYTES: usize = FRAME_BITS / 8;

/// 2048 bits, packed.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FrameBits([u64; WORDS]);

impl FrameBits {
    pub fn zeros() -> Self {
        FrameBits([0; WORDS])
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut words = [0u64; WORDS];
        for w in &mut words {
            *w = rng.next_u64();
        }
        FrameBits(words)
    }

    /// Bit `i` of the frame is bit `i % 8` of byte `i / 8`.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        assert_eq!(bytes.len(), FRAME_BYTES);
        let mut words = [0u64; WORDS];
        for (w, chunk) in words.iter_mut().zip(bytes.chunks_exact(8)) {
            *w = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        FrameBits(words)
    }

    pub fn get(&self, i: usize) -> bool {
        (self.0[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        let mask = 1u64 << (i % 64);
        if value {
            self.0[i / 64] |= mask;
        } else {
            self.0[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
}

impl std::fmt::Debug for FrameBits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FrameBits({} ones)", self.count_ones())
    }
}

/// One frame of Alice's random data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub frame_number: u32,
    pub protocol: ProtocolKind,
    /// All zero for B92.
    pub basis_bits: FrameBits,
    pub value_bits: FrameBits,
}

impl Frame {
    /// Polarization Alice sends at `bit_position`.
    pub fn state(&self, bit_position: usize) -> PolarizationState {
        let value = self.value_bits.get(bit_position);
        match self.protocol {
            ProtocolKind::B92 => PolarizationState::b92(value),
            ProtocolKind::Bb84 => PolarizationState::bb84(self.basis_bits.get(bit_position), value),
        }
    }
}

/// Draws value bits, then basis bits for BB84.
pub fn generate_frame<R: Rng + ?Sized>(rng: &mut R, protocol: ProtocolKind, frame_number: u32) -> Frame {
    let value_bits = FrameBits::random(rng);
    let basis_bits = match protocol {
        ProtocolKind::B92 => FrameBits::zeros(),
        ProtocolKind::Bb84 => FrameBits::random(rng),
    };
    Frame {
        frame_number,
        protocol,
        basis_bits,
        value_bits,
    }
}

/// Where frame randomness comes from.
///
/// Frames are addressed by their index in the run rather than by the
/// (wrapping) frame number, so any frame can be regenerated independently.
#[derive(Debug, Clone)]
pub enum FrameSource {
    Seeded { seed: u64 },
    /// Pre-recorded random bytes. Frame `n` uses 256 bytes at offset
    /// `256 n` for B92, or 512 bytes at `512 n` (values, then bases) for BB84.
    Entropy { bytes: Arc<Vec<u8>> },
}

impl FrameSource {
    pub fn seeded(seed: u64) -> Self {
        FrameSource::Seeded { seed }
    }

    pub fn from_file(path: &Path) -> Result<Self, ProtocolError> {
        let bytes = std::fs::read(path).map_err(|e| ProtocolError::Entropy(format!("{}: {e}", path.display())))?;
        Ok(FrameSource::Entropy { bytes: Arc::new(bytes) })
    }

    pub fn frame(&self, protocol: ProtocolKind, index: u64, frame_number: u32) -> Result<Frame, ProtocolError> {
        match self {
            FrameSource::Seeded { seed } => {
                Ok(generate_frame(&mut stream(*seed, Domain::Frame, index), protocol, frame_number))
            }
            FrameSource::Entropy { bytes } => {
                let per_frame = match protocol {
                    ProtocolKind::B92 => FRAME_BYTES,
                    ProtocolKind::Bb84 => 2 * FRAME_BYTES,
                };
                let start = usize::try_from(index)
                    .ok()
                    .and_then(|i| i.checked_mul(per_frame))
                    .filter(|s| s + per_frame <= bytes.len())
                    .ok_or_else(|| {
                        ProtocolError::Entropy(format!(
                            "entropy file exhausted at frame {index} ({} bytes)",
                            bytes.len()
                        ))
                    })?;
                let value_bits = FrameBits::from_bytes(&bytes[start..start + FRAME_BYTES]);
                let basis_bits = match protocol {
                    ProtocolKind::B92 => FrameBits::zeros(),
                    ProtocolKind::Bb84 => FrameBits::from_bytes(&bytes[start + FRAME_BYTES..start + per_frame]),
                };
                Ok(Frame {
                    frame_number,
                    protocol,
                    basis_bits,
                    value_bits,
                })
            }
        }
    }
}

/// Signed distance from `a` to `b` on the wrapping 32-bit frame counter.
/// Positive when `b` is later, valid while the two are within 2³¹ frames.
pub fn frame_distance(a: u32, b: u32) -> i32 {
    b.wrapping_sub(a) as i32
}

/// True if frame `a` was sent before frame `b`.
pub fn frame_precedes(a: u32, b: u32) -> bool {
    frame_distance(a, b) > 0
}
