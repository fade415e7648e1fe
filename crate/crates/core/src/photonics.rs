//! Alice's attenuated pulse source, the free-space loss budget, Bob's passive
//! polarization analysis and background light.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Poisson};

use crate::error::{check, fraction, ParamError};

/// Per-detector background rate in full daylight.
pub const DAY_BACKGROUND_HZ: f64 = 2.0e6;
/// Per-detector background rate at night.
pub const NIGHT_BACKGROUND_HZ: f64 = 1.0e3;

/// The four linear polarizations used by the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolarizationState {
    /// Vertical, 90°.
    V,
    /// +45°.
    P45,
    /// Horizontal, 0°.
    H,
    /// −45° (135°).
    M45,
}

impl PolarizationState {
    pub const ALL: [PolarizationState; 4] = [Self::V, Self::P45, Self::H, Self::M45];

    pub fn angle_deg(self) -> u32 {
        match self {
            Self::H => 0,
            Self::P45 => 45,
            Self::V => 90,
            Self::M45 => 135,
        }
    }

    /// |⟨self|other⟩|² = cos²(θa − θb), exact for the four states.
    pub fn overlap(self, other: Self) -> f64 {
        let diff = (self.angle_deg() + 180 - other.angle_deg()) % 180;
        match diff {
            0 => 1.0,
            90 => 0.0,
            _ => 0.5,
        }
    }

    /// B92 alphabet: bit 0 is V, bit 1 is +45.
    pub fn b92(bit: bool) -> Self {
        if bit {
            Self::P45
        } else {
            Self::V
        }
    }

    /// BB84 alphabet. Basis 0 is rectilinear (0 → H, 1 → V), basis 1 is
    /// diagonal (0 → +45, 1 → −45).
    pub fn bb84(basis: bool, value: bool) -> Self {
        match (basis, value) {
            (false, false) => Self::H,
            (false, true) => Self::V,
            (true, false) => Self::P45,
            (true, true) => Self::M45,
        }
    }
}

/// Sifting protocol run over the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ProtocolKind {
    /// Two nonorthogonal states, two analyzers with one detector each.
    #[default]
    B92,
    /// Four states, two analyzer bases with two detectors each. The hardware
    /// the link is modelled on only launches V and +45, so this mode is a
    /// protocol-level extension.
    Bb84,
}

impl ProtocolKind {
    /// Probability that a photon reaching Bob yields a sifted bit, before
    /// detector efficiency.
    pub fn conclusive_fraction(self) -> f64 {
        match self {
            ProtocolKind::B92 => 0.25,
            ProtocolKind::Bb84 => 0.5,
        }
    }

    pub fn detector_count(self) -> usize {
        match self {
            ProtocolKind::B92 => 2,
            ProtocolKind::Bb84 => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::B92 => "b92",
            ProtocolKind::Bb84 => "bb84",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "b92" => Ok(ProtocolKind::B92),
            "bb84" => Ok(ProtocolKind::Bb84),
            other => Err(format!("unknown protocol {other:?} (expected b92 or bb84)")),
        }
    }
}

/// Loss and noise parameters of the quantum channel and receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    /// Mean photon number per pulse at the transmit aperture.
    pub mu: f64,
    /// Telescope-to-fiber loss, dB.
    pub path_loss_db: f64,
    /// Interference filter and focusing lens transmissivity.
    pub filter_transmissivity: f64,
    /// APD quantum efficiency.
    pub quantum_efficiency: f64,
    /// Polarizer contrast. A blocked polarization leaks with probability
    /// 1/(extinction_ratio + 1); `f64::INFINITY` gives an ideal analyzer.
    pub extinction_ratio: f64,
    /// Probability that the non-polarizing splitter sends a photon to arm 0.
    pub splitter_ratio: f64,
    /// Poisson background rate on each detector, Hz.
    pub background_rate_hz: f64,
    pub quantum_wavelength_nm: f64,
    pub classical_wavelength_nm: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            mu: 0.15,
            path_loss_db: 5.0,
            filter_transmissivity: 0.48,
            quantum_efficiency: 0.5,
            extinction_ratio: 500.0,
            splitter_ratio: 0.5,
            background_rate_hz: NIGHT_BACKGROUND_HZ,
            quantum_wavelength_nm: 845.0,
            classical_wavelength_nm: 1550.0,
        }
    }
}

impl LinkBudget {
    /// Checks every field. `mu = 0` is accepted (an empty source).
    pub fn validate(&self) -> Result<(), ParamError> {
        check(self.mu >= 0.0 && self.mu.is_finite(), "mu", self.mu, "must be finite and >= 0")?;
        check(
            self.path_loss_db >= 0.0 && self.path_loss_db.is_finite(),
            "path_loss_db",
            self.path_loss_db,
            "must be finite and >= 0",
        )?;
        fraction("filter_transmissivity", self.filter_transmissivity)?;
        fraction("quantum_efficiency", self.quantum_efficiency)?;
        fraction("splitter_ratio", self.splitter_ratio)?;
        check(
            self.extinction_ratio > 1.0,
            "extinction_ratio",
            self.extinction_ratio,
            "must exceed 1",
        )?;
        check(
            self.background_rate_hz >= 0.0 && self.background_rate_hz.is_finite(),
            "background_rate_hz",
            self.background_rate_hz,
            "must be finite and >= 0",
        )
    }

    /// Per-photon survival from transmit aperture to the APD face.
    pub fn channel_transmission(&self) -> f64 {
        10f64.powf(-self.path_loss_db / 10.0) * self.filter_transmissivity
    }

    /// Transmission of a nominally blocked polarization.
    pub fn leak_probability(&self) -> f64 {
        1.0 / (self.extinction_ratio + 1.0)
    }
}

/// Timing of the synchronous link.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockBase {
    /// One serial bit at 1.25 Gbps.
    pub bit_period_ps: u64,
    /// Pulses are launched every `pulse_spacing_bits` bins.
    pub pulse_spacing_bits: u32,
    pub pulse_width_ps: f64,
    pub board_word_bits: u32,
    pub board_clock_hz: f64,
    /// Offset of Alice's pulse comb relative to Bob's bin grid. Zero models
    /// ideal clock recovery.
    pub phase_offset_ps: i64,
}

impl Default for ClockBase {
    fn default() -> Self {
        ClockBase {
            bit_period_ps: 800,
            pulse_spacing_bits: 4,
            pulse_width_ps: 250.0,
            board_word_bits: 10,
            board_clock_hz: 1.25e8,
            phase_offset_ps: 0,
        }
    }
}

impl ClockBase {
    pub fn validate(&self) -> Result<(), ParamError> {
        check(self.bit_period_ps > 0, "bit_period_ps", self.bit_period_ps as f64, "must be > 0")?;
        check(
            self.pulse_spacing_bits >= 2,
            "pulse_spacing_bits",
            self.pulse_spacing_bits as f64,
            "must be >= 2 (the mask keeps two bins)",
        )?;
        let serial = self.board_clock_hz * self.board_word_bits as f64;
        check(
            ((serial - self.line_rate_hz()) / self.line_rate_hz()).abs() < 1e-9,
            "board_clock_hz",
            self.board_clock_hz,
            "board clock x word bits must equal the serial line rate",
        )
    }

    /// Serial bit rate, 1.25e9 at the default bit period.
    pub fn line_rate_hz(&self) -> f64 {
        1e12 / self.bit_period_ps as f64
    }

    /// Pulse repetition rate, 312.5 MHz at the default spacing.
    pub fn transmission_rate_hz(&self) -> f64 {
        self.line_rate_hz() / self.pulse_spacing_bits as f64
    }

    pub fn slot_period_ps(&self) -> u64 {
        self.bit_period_ps * self.pulse_spacing_bits as u64
    }

    /// Width of the two-bin acceptance gate.
    pub fn gate_width_ps(&self) -> u64 {
        2 * self.bit_period_ps
    }

    /// Center time of the pulse launched in `slot`.
    pub fn emit_time_ps(&self, slot: u64) -> i64 {
        (slot * self.slot_period_ps()) as i64 + self.phase_offset_ps
    }
}

/// The photons of one pulse slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhotonBatch {
    pub slot_index: u64,
    pub count: u32,
    pub state: PolarizationState,
    pub emit_time_ps: i64,
}

impl PhotonBatch {
    pub fn new(slot_index: u64, count: u32, state: PolarizationState, clock: &ClockBase) -> Self {
        PhotonBatch {
            slot_index,
            count,
            state,
            emit_time_ps: clock.emit_time_ps(slot_index),
        }
    }
}

/// Draws the photon number of one attenuated pulse, Poisson with mean `mu`.
pub fn sample_photon_number<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u32 {
    if mu <= 0.0 {
        return 0;
    }
    let poisson = Poisson::new(mu).expect("finite positive mean");
    poisson.sample(rng) as u32
}

/// Photon-number statistics of the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhotonSource {
    /// Attenuated laser pulses.
    Poisson { mu: f64 },
    /// Exactly one photon in every slot (an idealised source for oracles).
    SinglePhoton,
}

/// Walks a range of pulse slots yielding only the non-empty ones.
///
/// Empty slots are skipped geometrically (gap = ⌊E/μ⌋ with E ~ Exp(1)) and
/// the photon number of a non-empty slot is drawn from the zero-truncated
/// Poisson law. The per-slot counts have exactly the distribution of
/// [`sample_photon_number`] applied to every slot.
#[derive(Debug, Clone)]
pub struct PulseTrain {
    source: PhotonSource,
    next_slot: u64,
    end_slot: u64,
    p_empty: f64,
}

impl PulseTrain {
    pub fn new(source: PhotonSource, slots: std::ops::Range<u64>) -> Self {
        let p_empty = match source {
            PhotonSource::Poisson { mu } => (-mu.max(0.0)).exp(),
            PhotonSource::SinglePhoton => 0.0,
        };
        PulseTrain {
            source,
            next_slot: slots.start,
            end_slot: slots.end,
            p_empty,
        }
    }

    /// Next non-empty slot and its photon count.
    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<(u64, u32)> {
        if self.next_slot >= self.end_slot {
            return None;
        }
        match self.source {
            PhotonSource::SinglePhoton => {
                let slot = self.next_slot;
                self.next_slot += 1;
                Some((slot, 1))
            }
            PhotonSource::Poisson { mu } => {
                if mu <= 0.0 {
                    self.next_slot = self.end_slot;
                    return None;
                }
                let u: f64 = rng.random();
                // 1 - u lies in (0, 1]
                let gap = (-(1.0 - u).ln() / mu).floor();
                if gap >= (self.end_slot - self.next_slot) as f64 {
                    self.next_slot = self.end_slot;
                    return None;
                }
                let slot = self.next_slot + gap as u64;
                self.next_slot = slot + 1;
                Some((slot, self.nonzero_count(mu, rng)))
            }
        }
    }

    fn nonzero_count<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> u32 {
        let target = rng.random::<f64>() * (1.0 - self.p_empty);
        let mut n = 1u32;
        let mut p = mu * self.p_empty;
        let mut cum = p;
        while target >= cum && n < 1000 {
            n += 1;
            p *= mu / n as f64;
            if p == 0.0 {
                break;
            }
            cum += p;
        }
        n
    }
}

/// Binomially thins a pulse by the channel transmission.
pub fn survive_channel<R: Rng + ?Sized>(
    batch: PhotonBatch,
    budget: &LinkBudget,
    rng: &mut R,
) -> PhotonBatch {
    let p = budget.channel_transmission();
    let count = if p >= 1.0 {
        batch.count
    } else if p <= 0.0 {
        0
    } else {
        (0..batch.count).filter(|_| rng.random::<f64>() < p).count() as u32
    };
    PhotonBatch { count, ..batch }
}

/// A detector behind Bob's analyzers.
///
/// B92 uses detector 0 (behind the −45 analyzer, conclusive bit 0) and
/// detector 1 (behind the H analyzer, conclusive bit 1). BB84 uses four:
/// `2 * basis + value`, basis 0 rectilinear and basis 1 diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectorId(pub u8);

impl DetectorId {
    /// Basis bit carried in a BB84 report.
    pub fn basis_bit(self) -> bool {
        self.0 & 2 != 0
    }

    /// Bit value Bob records for a click on this detector.
    pub fn value_bit(self) -> bool {
        self.0 & 1 != 0
    }
}

/// Where one photon ends up after the splitter and polarizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyzerOutcome {
    /// Reached a detector. `leaked` marks passage through a nominally blocked
    /// polarizer port.
    Detected { detector: DetectorId, leaked: bool },
    /// Lost at a polarizer (no detector on the rejected port).
    Absorbed,
}

/// Transmission of `state` through a polarizer along `axis`, with the
/// finite-contrast floor: leak + (1 − 2·leak)·cos²Δθ.
fn polarizer_transmission(state: PolarizationState, axis: PolarizationState, leak: f64) -> f64 {
    leak + (1.0 - 2.0 * leak) * state.overlap(axis)
}

/// Every outcome of [`route_polarization`] with its probability.
pub fn analyzer_distribution(
    state: PolarizationState,
    protocol: ProtocolKind,
    budget: &LinkBudget,
) -> Vec<(AnalyzerOutcome, f64)> {
    let leak = budget.leak_probability();
    let arm0 = budget.splitter_ratio;
    let arms = [arm0, 1.0 - arm0];
    let mut out = Vec::with_capacity(5);
    match protocol {
        ProtocolKind::B92 => {
            let axes = [PolarizationState::M45, PolarizationState::H];
            let mut absorbed = 0.0;
            for (arm, (&p_arm, &axis)) in arms.iter().zip(axes.iter()).enumerate() {
                let t = polarizer_transmission(state, axis, leak);
                out.push((
                    AnalyzerOutcome::Detected {
                        detector: DetectorId(arm as u8),
                        leaked: state.overlap(axis) == 0.0,
                    },
                    p_arm * t,
                ));
                absorbed += p_arm * (1.0 - t);
            }
            out.push((AnalyzerOutcome::Absorbed, absorbed));
        }
        ProtocolKind::Bb84 => {
            let axes = [PolarizationState::H, PolarizationState::P45];
            for (arm, (&p_arm, &axis)) in arms.iter().zip(axes.iter()).enumerate() {
                let t = polarizer_transmission(state, axis, leak);
                let base = 2 * arm as u8;
                out.push((
                    AnalyzerOutcome::Detected {
                        detector: DetectorId(base),
                        leaked: state.overlap(axis) == 0.0,
                    },
                    p_arm * t,
                ));
                out.push((
                    AnalyzerOutcome::Detected {
                        detector: DetectorId(base + 1),
                        leaked: state.overlap(axis) == 1.0,
                    },
                    p_arm * (1.0 - t),
                ));
            }
        }
    }
    out
}

/// Sends one photon through the splitter and the analyzer of the chosen arm.
pub fn route_polarization<R: Rng + ?Sized>(
    state: PolarizationState,
    protocol: ProtocolKind,
    budget: &LinkBudget,
    rng: &mut R,
) -> AnalyzerOutcome {
    let leak = budget.leak_probability();
    let arm = if rng.random::<f64>() < budget.splitter_ratio { 0u8 } else { 1u8 };
    let u: f64 = rng.random();
    match protocol {
        ProtocolKind::B92 => {
            let axis = if arm == 0 {
                PolarizationState::M45
            } else {
                PolarizationState::H
            };
            if u < polarizer_transmission(state, axis, leak) {
                AnalyzerOutcome::Detected {
                    detector: DetectorId(arm),
                    leaked: state.overlap(axis) == 0.0,
                }
            } else {
                AnalyzerOutcome::Absorbed
            }
        }
        ProtocolKind::Bb84 => {
            let axis = if arm == 0 {
                PolarizationState::H
            } else {
                PolarizationState::P45
            };
            let overlap = state.overlap(axis);
            if u < polarizer_transmission(state, axis, leak) {
                AnalyzerOutcome::Detected {
                    detector: DetectorId(2 * arm),
                    leaked: overlap == 0.0,
                }
            } else {
                AnalyzerOutcome::Detected {
                    detector: DetectorId(2 * arm + 1),
                    leaked: overlap == 1.0,
                }
            }
        }
    }
}

/// Background arrivals on one detector over `[start_ps, start_ps + window_ps)`,
/// sorted by time.
pub fn sample_background<R: Rng + ?Sized>(
    rate_hz: f64,
    start_ps: i64,
    window_ps: u64,
    rng: &mut R,
) -> Vec<i64> {
    let mean = rate_hz * window_ps as f64 * 1e-12;
    if mean <= 0.0 || window_ps == 0 {
        return Vec::new();
    }
    let n = Poisson::new(mean).expect("finite positive mean").sample(rng) as usize;
    let mut times: Vec<i64> = (0..n)
        .map(|_| start_ps + (rng.random::<f64>() * window_ps as f64) as i64)
        .collect();
    times.sort_unstable();
    times
}

/// Analytic sifted-key rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePrediction {
    pub rate_bps: f64,
    /// Always false: the two-bin mask is applied downstream.
    pub includes_mask_acceptance: bool,
    /// Always false: host frame drops are applied downstream.
    pub includes_capacity_limit: bool,
}

/// f_tx · μ · 10^(−dB/10) · filter · QE · f_conclusive.
pub fn predict_sift_rate(
    budget: &LinkBudget,
    clock: &ClockBase,
    protocol: ProtocolKind,
) -> Result<RatePrediction, ParamError> {
    check(budget.mu >= 0.0 && budget.mu.is_finite(), "mu", budget.mu, "must be finite and >= 0")?;
    let rate_bps = clock.transmission_rate_hz()
        * budget.mu
        * budget.channel_transmission()
        * budget.quantum_efficiency
        * protocol.conclusive_fraction();
    Ok(RatePrediction {
        rate_bps,
        includes_mask_acceptance: false,
        includes_capacity_limit: false,
    })
}
