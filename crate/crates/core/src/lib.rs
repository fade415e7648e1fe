//! Discrete-event simulator and protocol stack for a synchronous,
//! high-speed quantum key distribution link.
//!
//! The crate is organised along the physical and logical layers of the link:
//!
//! - [`photonics`]: attenuated pulse source, free-space loss, polarization
//!   analysis and background light.
//! - [`detector`]: APD efficiency and timing jitter, 800 ps bin gating,
//!   coincidence discard and arrival-time histograms.
//! - [`linecode`]: 8B/10B codec, comma alignment and XOR mixing of the sparse
//!   quantum lane into the classical bit stream.
//! - [`protocol`]: 2048-bit frames, wire messages, B92/BB84 sifting, frame
//!   retention and the host processing-capacity model.
//! - [`transport`]: length-prefixed message channel, in memory or over TCP.
//! - [`harness`]: end-to-end runs, μ sweeps, jitter experiments and jitter
//!   calibration.
//!
//! Every stochastic step draws from an explicit, seeded stream (see [`rng`]),
//! so a run is a pure function of its configuration.

pub mod detector;
pub mod error;
pub mod harness;
pub mod linecode;
pub mod parallel;
pub mod photonics;
pub mod protocol;
pub mod rng;
pub mod transport;

pub use error::ParamError;
pub use detector::{Cause, DetectionEvent, DetectorId, GateDecision, JitterModel};
pub use harness::{run, sweep_mu, SimConfig, SimMetrics};
pub use parallel::Execution;
pub use photonics::{ClockBase, LinkBudget, PolarizationState, ProtocolKind};
