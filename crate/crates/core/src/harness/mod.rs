//! End-to-end runs, parameter sweeps, jitter experiments and calibration.
//!
//! A run wires Alice and Bob together over a transport. Bob's side hosts the
//! [`QuantumChannel`], which regenerates Alice's frames from the shared seed
//! (or entropy file) to decide what light reaches his detectors; nothing
//! about the frames crosses the wire except through protocol messages.
//!
//! Metrics are computed on Bob's side. The error count uses Alice's bits as
//! the simulator knows them, which in-process runs cross-check against the
//! key Alice actually kept.

mod calibrate;
mod channel;
mod config;
mod jitter_experiment;
mod sweep;

pub use calibrate::{calibrate_jitter, monte_carlo_mask, CalibrationError, CalibrationTargets};
pub use channel::{ChannelStats, QuantumChannel};
pub use config::SimConfig;
pub use jitter_experiment::{jitter_experiment, JitterExperiment, RATE_312_MHZ, RATE_78_MHZ};
pub use sweep::{sweep_mu, write_sweep_csv, SweepRow};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::detector::Cause;
use crate::error::ParamError;
use crate::photonics::predict_sift_rate;
use crate::protocol::{
    compute_qber, qber_by_cause, Alice, Bob, ProtocolError, SessionError, SessionOutcome, SiftedBuffer,
};
use crate::transport::{memory_pair, Transport};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("alice and bob keys diverged: {0}")]
    Diverged(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Results of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub duration_s: f64,
    pub sifted_bits: u64,
    pub sifted_rate_bps: f64,
    pub qber: f64,
    /// Each cause's errors as a fraction of all sifted bits.
    pub qber_by_cause: BTreeMap<Cause, f64>,
    pub frames_offered: u64,
    /// Frames that entered the key (processed by both parties).
    pub frames_processed: u64,
    pub frames_dropped: u64,
    /// Fraction of pulse-photon clicks landing in their own gate.
    pub mask_acceptance: f64,
    /// Fraction of pulse-photon clicks landing in the next pulse's gate.
    pub next_group_leakage: f64,
    pub coincidence_discards: u64,
    pub detection_events: u64,
    pub reports: u64,
    pub late_events: u64,
    pub protocol_anomalies: u64,
    /// Analytic sift rate, without mask or capacity losses.
    pub predicted_rate_bps: f64,
}

/// A run's metrics together with both parties' keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: SimMetrics,
    pub alice: SessionOutcome,
    pub bob: SessionOutcome,
}

/// Runs Alice on her end of `transport`.
pub fn run_alice<T: Transport>(config: &SimConfig, transport: &mut T) -> Result<SessionOutcome, SimError> {
    config.validate()?;
    let alice = Alice::new(config.session_params(), config.frame_source()?)?;
    Ok(alice.run(transport)?)
}

/// Runs Bob and the quantum channel on his end of `transport`.
pub fn run_bob<T: Transport>(config: &SimConfig, transport: &mut T) -> Result<(SimMetrics, SessionOutcome), SimError> {
    config.validate()?;
    let source = config.frame_source()?;
    let channel = QuantumChannel::new(config, source);
    let mut bob = Bob::new(config.session_params(), channel)?;
    let outcome = bob.run(transport)?;
    let channel = bob.into_link();
    let metrics = metrics(config, &outcome, channel.stats())?;
    Ok((metrics, outcome))
}

/// In-process run with Alice and Bob on separate threads.
pub fn run_with_keys(config: &SimConfig) -> Result<RunOutput, SimError> {
    config.validate()?;
    let (mut ta, mut tb) = memory_pair();
    let alice_cfg = config.clone();
    let alice = std::thread::spawn(move || {
        let out = run_alice(&alice_cfg, &mut ta);
        drop(ta);
        out
    });
    let bob = run_bob(config, &mut tb);
    drop(tb);
    let alice = alice.join().expect("alice thread panicked");
    let (alice, (metrics, bob)) = match (alice, bob) {
        (Ok(a), Ok(b)) => (a, b),
        // a failure on one side shows up as a closed session on the other
        (Err(e), Err(SimError::Session(_))) | (Err(e), Ok(_)) => return Err(e),
        (_, Err(e)) => return Err(e),
    };
    // only Alice sees malformed or duplicate reports
    let metrics = SimMetrics {
        protocol_anomalies: alice.stats.anomalies,
        ..metrics
    };
    if alice.key.source_tags != bob.key.source_tags {
        return Err(SimError::Diverged(format!(
            "{} vs {} tagged bits",
            alice.key.len(),
            bob.key.len()
        )));
    }
    let q = compute_qber(&alice.key.bits, &bob.key.bits)?;
    if (q - metrics.qber).abs() > 1e-12 {
        return Err(SimError::Diverged(format!("key QBER {q} vs simulated {}", metrics.qber)));
    }
    Ok(RunOutput { metrics, alice, bob })
}

/// In-process run.
pub fn run(config: &SimConfig) -> Result<SimMetrics, SimError> {
    Ok(run_with_keys(config)?.metrics)
}

/// Alice's bits for Bob's key positions, regenerated from the frame source.
fn alice_bits(config: &SimConfig, key: &SiftedBuffer) -> Result<Vec<bool>, SimError> {
    let source = config.frame_source()?;
    let mut bits = Vec::with_capacity(key.len());
    let mut cached: Option<(u32, crate::protocol::Frame)> = None;
    for &(number, pos) in &key.source_tags {
        if cached.as_ref().map(|c| c.0) != Some(number) {
            let index = number.wrapping_sub(config.first_frame_number) as u64;
            cached = Some((number, source.frame(config.protocol, index, number)?));
        }
        let frame = &cached.as_ref().expect("just filled").1;
        bits.push(frame.value_bits.get(pos as usize));
    }
    Ok(bits)
}

fn metrics(config: &SimConfig, bob: &SessionOutcome, ch: &ChannelStats) -> Result<SimMetrics, SimError> {
    let alice = alice_bits(config, &bob.key)?;
    let duration_s = config.simulated_s();
    let pulses = ch.pulse_events.max(1) as f64;
    Ok(SimMetrics {
        duration_s,
        sifted_bits: bob.key.len() as u64,
        sifted_rate_bps: bob.key.len() as f64 / duration_s,
        qber: compute_qber(&alice, &bob.key.bits)?,
        qber_by_cause: qber_by_cause(&alice, &bob.key.bits, &bob.causes)?,
        frames_offered: bob.stats.frames_offered,
        frames_processed: bob.stats.frames_retained,
        frames_dropped: bob.stats.frames_offered - bob.stats.frames_retained,
        mask_acceptance: ch.own_gate_events as f64 / pulses,
        next_group_leakage: ch.next_gate_events as f64 / pulses,
        coincidence_discards: ch.coincidence_discards,
        detection_events: ch.detection_events,
        reports: bob.stats.reports,
        late_events: ch.late_events,
        protocol_anomalies: bob.stats.anomalies,
        predicted_rate_bps: predict_sift_rate(&config.budget, &config.clock, config.protocol)?.rate_bps,
    })
}
