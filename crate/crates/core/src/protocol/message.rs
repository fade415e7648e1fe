use thiserror::Error;

use super::{DetectionReport, FRAME_BITS};

pub const MSG_SYNC: u8 = 0x01;
pub const MSG_REPORT: u8 = 0x02;
pub const MSG_FRAME_DONE: u8 = 0x03;

/// Largest message payload the length prefix can describe.
pub const MAX_PAYLOAD: usize = u16::MAX as usize;

/// Most frame numbers one FRAME_DONE can list.
pub const MAX_FRAME_DONE: usize = (MAX_PAYLOAD - 3) / 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("empty message")]
    Empty,
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("message type 0x{kind:02x} needs {expected} bytes, got {actual}")]
    Length { kind: u8, expected: usize, actual: usize },
    #[error("bit position {0} outside the frame")]
    BitPosition(u16),
    #[error("reserved flag bits set: 0x{0:02x}")]
    Flags(u8),
    #[error("FRAME_DONE lists {0} frames, at most {MAX_FRAME_DONE} fit")]
    TooManyFrames(usize),
}

/// A protocol message. The encoding is the payload only; the transport
/// adds the u16 length prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Sync { frame_number: u32 },
    Report(DetectionReport),
    FrameDone { frames: Vec<u32> },
}

impl Message {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::new();
        match self {
            Message::Sync { frame_number } => {
                out.push(MSG_SYNC);
                out.extend_from_slice(&frame_number.to_le_bytes());
            }
            Message::Report(r) => {
                if r.bit_position as usize >= FRAME_BITS {
                    return Err(WireError::BitPosition(r.bit_position));
                }
                out.push(MSG_REPORT);
                out.extend_from_slice(&r.frame_number.to_le_bytes());
                out.extend_from_slice(&r.bit_position.to_le_bytes());
                out.push(r.basis_bit as u8 | (r.detector_id as u8) << 1);
            }
            Message::FrameDone { frames } => {
                if frames.len() > MAX_FRAME_DONE {
                    return Err(WireError::TooManyFrames(frames.len()));
                }
                out.reserve(3 + 4 * frames.len());
                out.push(MSG_FRAME_DONE);
                out.extend_from_slice(&(frames.len() as u16).to_le_bytes());
                for f in frames {
                    out.extend_from_slice(&f.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(payload: &[u8]) -> Result<Message, WireError> {
        let (&kind, body) = payload.split_first().ok_or(WireError::Empty)?;
        let expect = |n: usize| {
            if body.len() == n {
                Ok(())
            } else {
                Err(WireError::Length {
                    kind,
                    expected: n + 1,
                    actual: payload.len(),
                })
            }
        };
        let u32_at = |i: usize| u32::from_le_bytes(body[i..i + 4].try_into().expect("4 bytes"));
        match kind {
            MSG_SYNC => {
                expect(4)?;
                Ok(Message::Sync { frame_number: u32_at(0) })
            }
            MSG_REPORT => {
                expect(7)?;
                let bit_position = u16::from_le_bytes([body[4], body[5]]);
                if bit_position as usize >= FRAME_BITS {
                    return Err(WireError::BitPosition(bit_position));
                }
                let flags = body[6];
                if flags & !0b11 != 0 {
                    return Err(WireError::Flags(flags));
                }
                Ok(Message::Report(DetectionReport {
                    frame_number: u32_at(0),
                    bit_position,
                    basis_bit: flags & 1 == 1,
                    detector_id: flags & 2 == 2,
                }))
            }
            MSG_FRAME_DONE => {
                if body.len() < 2 {
                    return Err(WireError::Length {
                        kind,
                        expected: 3,
                        actual: payload.len(),
                    });
                }
                let count = u16::from_le_bytes([body[0], body[1]]) as usize;
                if body.len() != 2 + 4 * count {
                    return Err(WireError::Length {
                        kind,
                        expected: 3 + 4 * count,
                        actual: payload.len(),
                    });
                }
                let frames = (0..count).map(|i| u32_at(2 + 4 * i)).collect();
                Ok(Message::FrameDone { frames })
            }
            other => Err(WireError::UnknownType(other)),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout() {
        let sync = Message::Sync { frame_number: 0x1234_5678 }.encode().unwrap();
        assert_eq!(sync, [0x01, 0x78, 0x56, 0x34, 0x12]);
        let report = Message::Report(DetectionReport {
            frame_number: 1,
            bit_position: 0x0102,
            basis_bit: true,
            detector_id: true,
        })
        .encode()
        .unwrap();
        assert_eq!(report, [0x02, 1, 0, 0, 0, 0x02, 0x01, 0b11]);
        let done = Message::FrameDone { frames: vec![5, 6] }.encode().unwrap();
        assert_eq!(done, [0x03, 2, 0, 5, 0, 0, 0, 6, 0, 0, 0]);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(Message::decode(&[]), Err(WireError::Empty));
        assert_eq!(Message::decode(&[0x09]), Err(WireError::UnknownType(0x09)));
        assert!(matches!(Message::decode(&[0x01, 0, 0]), Err(WireError::Length { .. })));
        assert_eq!(
            Message::decode(&[0x02, 0, 0, 0, 0, 0x00, 0x08, 0]),
            Err(WireError::BitPosition(2048))
        );
        assert_eq!(Message::decode(&[0x02, 0, 0, 0, 0, 0, 0, 4]), Err(WireError::Flags(4)));
        assert!(matches!(Message::decode(&[0x03, 2, 0, 1, 0, 0, 0]), Err(WireError::Length { .. })));
        assert_eq!(
            Message::FrameDone { frames: vec![0; MAX_FRAME_DONE + 1] }.encode(),
            Err(WireError::TooManyFrames(MAX_FRAME_DONE + 1))
        );
        assert!(Message::FrameDone { frames: vec![0; MAX_FRAME_DONE] }.encode().unwrap().len() <= MAX_PAYLOAD);
    }

    pub(crate) fn arb_message() -> impl Strategy<Value = Message> {
        prop_oneof![
            any::<u32>().prop_map(|frame_number| Message::Sync { frame_number }),
            (any::<u32>(), 0..FRAME_BITS as u16, any::<bool>(), any::<bool>()).prop_map(|(f, p, b, d)| {
                Message::Report(DetectionReport {
                    frame_number: f,
                    bit_position: p,
                    basis_bit: b,
                    detector_id: d,
                })
            }),
            prop::collection::vec(any::<u32>(), 0..100).prop_map(|frames| Message::FrameDone { frames }),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(msg in arb_message()) {
            let bytes = msg.encode().unwrap();
            prop_assert!(bytes.len() <= MAX_PAYLOAD);
            prop_assert_eq!(Message::decode(&bytes).unwrap(), msg);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            if let Ok(msg) = Message::decode(&bytes) {
                prop_assert_eq!(msg.encode().unwrap(), bytes);
            }
        }
    }
}
