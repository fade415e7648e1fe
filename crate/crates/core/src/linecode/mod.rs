//! 8B/10B line coding and the XOR lane that carries quantum-channel data.
//!
//! The primary classical channel is a balanced 8B/10B stream that Bob's
//! receiver can lock to. The quantum lane is too sparse to lock to on its
//! own, so it is XORed onto the classical stream at the transmitter and
//! recovered with a second XOR once the classical bits are known.
//!
//! Bits are transmitted in the order `abcdeifghj`; source bit A (the least
//! significant bit of the byte) maps to code bit `a`.

mod code;

pub use code::{
    all_units, decode, encode, CodeUnit, ControlCode, LineEncoder, RunningDisparity, TenBitSymbol,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinecodeError {
    #[error("0x{0:02x} is not a valid control code")]
    InvalidControl(u8),
    #[error("{0:010b} is not a valid 8B/10B symbol")]
    InvalidSymbol(u16),
    #[error("{unit} received at the wrong running disparity")]
    Disparity {
        unit: CodeUnit,
        rd_after: RunningDisparity,
    },
    #[error("stream lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// The seven-bit comma, either polarity.
const COMMA_POSITIVE: [bool; 7] = [false, false, true, true, true, true, true];
const COMMA_NEGATIVE: [bool; 7] = [true, true, false, false, false, false, false];

/// True if a comma pattern starts at `bits[i]`.
pub fn comma_at(bits: &[bool], i: usize) -> bool {
    bits.get(i..i + 7)
        .is_some_and(|w| w == COMMA_POSITIVE || w == COMMA_NEGATIVE)
}

/// Word-boundary offset (0..10) of the first comma in `bits`, or `None` if
/// the stream holds no comma. Streams shorter than two symbols are never
/// aligned.
pub fn align(bits: &[bool]) -> Option<usize> {
    if bits.len() < 20 {
        return None;
    }
    (0..=bits.len() - 7).find(|&i| comma_at(bits, i)).map(|i| i % 10)
}

/// Decodes consecutive symbols starting at `offset`, threading the running
/// disparity. Trailing bits that do not fill a symbol are ignored.
pub fn decode_stream(
    bits: &[bool],
    offset: usize,
    mut rd: RunningDisparity,
) -> Vec<Result<CodeUnit, LinecodeError>> {
    bits.get(offset..)
        .unwrap_or(&[])
        .chunks_exact(10)
        .map(|chunk| match decode(TenBitSymbol::from_transmission_order(chunk), rd) {
            Ok((unit, next)) => {
                rd = next;
                Ok(unit)
            }
            Err(e) => {
                if let LinecodeError::Disparity { rd_after, .. } = e {
                    rd = rd_after;
                }
                Err(e)
            }
        })
        .collect()
}

/// XORs the quantum lane onto the classical stream.
pub fn mix_quantum(classical: &[bool], quantum: &[bool]) -> Result<Vec<bool>, LinecodeError> {
    xor(classical, quantum)
}

/// Recovers the quantum lane from the mixed stream and the classical bits.
pub fn recover_quantum(mixed: &[bool], classical: &[bool]) -> Result<Vec<bool>, LinecodeError> {
    xor(mixed, classical)
}

fn xor(a: &[bool], b: &[bool]) -> Result<Vec<bool>, LinecodeError> {
    if a.len() != b.len() {
        return Err(LinecodeError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x ^ y).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::RngExt;

    fn idle_stream(symbols: usize) -> Vec<bool> {
        let mut bits = Vec::new();
        LineEncoder::default().idle(symbols, &mut bits);
        bits
    }

    #[test]
    fn align_recovers_every_slip() {
        let aligned = idle_stream(8);
        for slip in 0..10 {
            let mut bits = vec![true; slip];
            bits.extend_from_slice(&aligned);
            assert_eq!(align(&bits), Some(slip));
        }
    }

    #[test]
    fn align_rejects_short_and_comma_free_streams() {
        assert_eq!(align(&idle_stream(1)), None);
        let mut rng = stream(11, Domain::Test, 0);
        let mut enc = LineEncoder::default();
        let mut bits = Vec::new();
        for _ in 0..5000 {
            enc.push(CodeUnit::Data(rng.random()), &mut bits);
        }
        assert_eq!(align(&bits), None);
    }

    #[test]
    fn offset_is_stable_once_payload_starts() {
        let mut rng = stream(12, Domain::Test, 0);
        for slip in [0, 3, 9] {
            let mut enc = LineEncoder::default();
            let mut bits = vec![false; slip];
            enc.idle(4, &mut bits);
            let before = align(&bits);
            for _ in 0..200 {
                enc.push(CodeUnit::Data(rng.random()), &mut bits);
            }
            enc.idle(2, &mut bits);
            assert_eq!(before, Some(slip));
            assert_eq!(align(&bits), before);
            // every comma in the stream sits on a word boundary
            let commas: Vec<usize> = (0..bits.len()).filter(|&i| comma_at(&bits, i)).collect();
            assert!(commas.iter().all(|i| i % 10 == slip));
        }
    }

    #[test]
    fn xor_lane_examples() {
        let classical = idle_stream(4);
        let zeros = vec![false; classical.len()];
        assert_eq!(mix_quantum(&classical, &zeros).unwrap(), classical);
        assert_eq!(recover_quantum(&classical, &classical).unwrap(), zeros);
        assert_eq!(
            mix_quantum(&classical, &zeros[1..]),
            Err(LinecodeError::LengthMismatch(40, 39))
        );

        let mut rng = stream(13, Domain::Test, 0);
        for _ in 0..100 {
            let k = rng.random_range(0..classical.len());
            let mut q = zeros.clone();
            q[k] = true;
            let mixed = mix_quantum(&classical, &q).unwrap();
            let flipped = mixed.iter().zip(&classical).filter(|(a, b)| a != b).count();
            assert_eq!(flipped, 1);
            let back = recover_quantum(&mixed, &classical).unwrap();
            assert_eq!(back.iter().position(|&b| b), Some(k));
        }
    }

    #[test]
    fn sync_message_survives_the_mixed_lane() {
        // classical lane: idles, one coded SYNC payload, idles; quantum lane:
        // one pulse every fourth bin
        let mut enc = LineEncoder::default();
        let mut classical = vec![true, false, true];
        enc.idle(3, &mut classical);
        let payload = [0x01u8, 0x78, 0x56, 0x34, 0x12];
        enc.push_bytes(&payload, &mut classical);
        enc.idle(3, &mut classical);

        let mut rng = stream(14, Domain::Test, 0);
        let quantum: Vec<bool> = (0..classical.len()).map(|i| i % 4 == 0 && rng.random()).collect();
        let mixed = mix_quantum(&classical, &quantum).unwrap();

        let recovered_classical = recover_quantum(&mixed, &quantum).unwrap();
        assert_eq!(recover_quantum(&mixed, &recovered_classical).unwrap(), quantum);
        let offset = align(&recovered_classical).unwrap();
        assert_eq!(offset, 3);
        let units: Vec<CodeUnit> = decode_stream(&recovered_classical, offset, RunningDisparity::Negative)
            .into_iter()
            .collect::<Result<_, _>>()
            .unwrap();
        let data: Vec<u8> = units
            .iter()
            .filter_map(|u| match u {
                CodeUnit::Data(b) => Some(*b),
                CodeUnit::Control(_) => None,
            })
            .collect();
        assert_eq!(data, payload);
    }
}
