//! Frame-based key transfer.
//!
//! Alice streams 2048-bit frames of random data, one pulse per bit, and
//! announces each with a SYNC message. Bob answers with a REPORT for every
//! detection that survived gating. Every few frames both sides exchange
//! FRAME_DONE lists naming the frames they managed to process; a frame
//! enters the key only if both processed it.
//!
//! BB84 is a protocol-level extension here: the transmitter hardware being
//! modelled sends only V and +45. In BB84 mode Alice echoes back each report
//! whose basis matched, which is how Bob learns which of his bits to keep.

mod capacity;
mod frame;
mod message;
mod session;
mod sift;

pub use capacity::{apply_capacity, CapacityModel, CapacityQueue, FrameCompletion};
pub use frame::{frame_distance, frame_precedes, generate_frame, Frame, FrameBits, FrameSource};
pub use message::{Message, WireError, MAX_FRAME_DONE, MAX_PAYLOAD, MSG_FRAME_DONE, MSG_REPORT, MSG_SYNC};
pub use session::{
    Alice, Bob, BobDetection, QuantumLink, SessionError, SessionOutcome, SessionParams, SessionStats,
};
pub use sift::{
    compute_qber, qber_by_cause, reconcile_frames, sift_b92, sift_bb84, DetectionReport, SiftedBit, SiftedBuffer,
};

#[cfg(test)]
pub(crate) use message::tests as message_tests;

use thiserror::Error;

/// Bit positions per frame.
pub const FRAME_BITS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("report names unknown frame {0}")]
    UnknownFrame(u32),
    #[error("bit position {0} outside the frame")]
    BitPosition(u16),
    #[error("key buffers differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{0}")]
    Entropy(String),
    #[error("{0}")]
    Config(String),
    #[error("quantum link: {0}")]
    Link(String),
}
