use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::SimError;
use crate::detector::JitterModel;
use crate::parallel::Execution;
use crate::photonics::{ClockBase, LinkBudget, ProtocolKind, DAY_BACKGROUND_HZ, NIGHT_BACKGROUND_HZ};
use crate::protocol::{CapacityModel, FrameSource, SessionParams, FRAME_BITS, MAX_FRAME_DONE};
use crate::transport::Mode;

/// Everything one run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// `budget.background_rate_hz` is what the simulation uses; see
    /// [`SimConfig::set_daylight`].
    pub budget: LinkBudget,
    pub clock: ClockBase,
    pub jitter: JitterModel,
    /// Non-paralyzable detector dead time, ps. Zero disables it.
    pub dead_time_ps: u64,
    pub capacity: CapacityModel,
    pub protocol: ProtocolKind,
    pub duration_s: f64,
    pub seed: u64,
    pub daylight: bool,
    /// Force exactly one photon per pulse (an oracle mode).
    pub single_photon: bool,
    pub frame_done_cadence: usize,
    pub first_frame_number: u32,
    /// Frame randomness from a file instead of the seeded generator.
    pub entropy_file: Option<PathBuf>,
    pub transport: Mode,
    pub execution: Execution,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            budget: LinkBudget::default(),
            clock: ClockBase::default(),
            jitter: JitterModel::default(),
            dead_time_ps: 0,
            capacity: CapacityModel::default(),
            protocol: ProtocolKind::B92,
            duration_s: 1.0,
            seed: 1,
            daylight: false,
            single_photon: false,
            frame_done_cadence: 64,
            first_frame_number: 0,
            entropy_file: None,
            transport: Mode::InProcess,
            execution: Execution::default(),
        }
    }
}

impl SimConfig {
    /// Switches day/night and the matching default background rate.
    pub fn set_daylight(&mut self, daylight: bool) {
        self.daylight = daylight;
        self.budget.background_rate_hz = if daylight { DAY_BACKGROUND_HZ } else { NIGHT_BACKGROUND_HZ };
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.budget.validate()?;
        self.clock.validate()?;
        self.jitter.validate()?;
        self.capacity.validate()?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(SimError::Config(format!("duration_s must be > 0, got {}", self.duration_s)));
        }
        if self.frame_done_cadence == 0 || self.frame_done_cadence > MAX_FRAME_DONE {
            return Err(SimError::Config(format!(
                "frame_done_cadence must be in 1..={MAX_FRAME_DONE}, got {}",
                self.frame_done_cadence
            )));
        }
        if self.frames() > u32::MAX as u64 {
            return Err(SimError::Config("run longer than 2^32 frames".into()));
        }
        Ok(())
    }

    /// Frames in the run, at least one.
    pub fn frames(&self) -> u64 {
        let per_s = self.clock.transmission_rate_hz() / FRAME_BITS as f64;
        ((self.duration_s * per_s).round() as u64).max(1)
    }

    /// Simulated time actually covered by [`SimConfig::frames`].
    pub fn simulated_s(&self) -> f64 {
        self.frames() as f64 * self.frame_period_s()
    }

    pub fn frame_period_s(&self) -> f64 {
        FRAME_BITS as f64 * self.clock.slot_period_ps() as f64 * 1e-12
    }

    pub fn session_params(&self) -> SessionParams {
        SessionParams {
            protocol: self.protocol,
            frames: self.frames(),
            cadence: self.frame_done_cadence,
            first_frame_number: self.first_frame_number,
            frame_period_s: self.frame_period_s(),
            capacity: self.capacity.clone(),
        }
    }

    pub fn frame_source(&self) -> Result<FrameSource, SimError> {
        match &self.entropy_file {
            Some(path) => Ok(FrameSource::from_file(path)?),
            None => Ok(FrameSource::seeded(self.seed)),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        text.parse()
    }

    /// Renders every key; parsing the result gives back an equal config.
    pub fn to_config_string(&self) -> String {
        let b = &self.budget;
        let c = &self.clock;
        let j = &self.jitter;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("protocol", self.protocol.to_string());
        kv("duration_s", fmt_f64(self.duration_s));
        kv("seed", self.seed.to_string());
        kv("daylight", self.daylight.to_string());
        kv("single_photon", self.single_photon.to_string());
        kv("mu", fmt_f64(b.mu));
        kv("path_loss_db", fmt_f64(b.path_loss_db));
        kv("filter_transmissivity", fmt_f64(b.filter_transmissivity));
        kv("quantum_efficiency", fmt_f64(b.quantum_efficiency));
        kv("extinction_ratio", fmt_f64(b.extinction_ratio));
        kv("splitter_ratio", fmt_f64(b.splitter_ratio));
        kv("background_rate_hz", fmt_f64(b.background_rate_hz));
        kv("quantum_wavelength_nm", fmt_f64(b.quantum_wavelength_nm));
        kv("classical_wavelength_nm", fmt_f64(b.classical_wavelength_nm));
        kv("bit_period_ps", c.bit_period_ps.to_string());
        kv("pulse_spacing_bits", c.pulse_spacing_bits.to_string());
        kv("pulse_width_ps", fmt_f64(c.pulse_width_ps));
        kv("board_word_bits", c.board_word_bits.to_string());
        kv("board_clock_hz", fmt_f64(c.board_clock_hz));
        kv("phase_offset_ps", c.phase_offset_ps.to_string());
        kv("jitter_core_sigma_ps", fmt_f64(j.core_sigma_ps));
        kv("jitter_tail_fraction", fmt_f64(j.tail_fraction));
        kv("jitter_tail_decay_ps", fmt_f64(j.tail_decay_ps));
        kv("jitter_offset_ps", fmt_f64(j.offset_ps));
        kv("dead_time_ps", self.dead_time_ps.to_string());
        kv("capacity_enabled", self.capacity.enabled.to_string());
        kv("service_rate_bps", fmt_f64(self.capacity.service_rate_bps));
        kv("queue_depth", self.capacity.queue_depth.to_string());
        kv("frame_done_cadence", self.frame_done_cadence.to_string());
        kv("first_frame_number", self.first_frame_number.to_string());
        kv(
            "execution",
            match self.execution {
                Execution::Parallel => "parallel".into(),
                Execution::Sequential => "sequential".into(),
            },
        );
        kv(
            "transport",
            match &self.transport {
                Mode::InProcess => "in_process".into(),
                Mode::Listen(a) => format!("listen:{a}"),
                Mode::Connect(a) => format!("connect:{a}"),
            },
        );
        if let Some(p) = &self.entropy_file {
            kv("entropy_file", p.display().to_string());
        }
        s
    }
}

/// Plain decimal, never exponent notation.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x}")
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, SimError> {
    v.parse()
        .map_err(|_| SimError::Config(format!("bad value for {key}: {v:?}")))
}

impl FromStr for SimConfig {
    type Err = SimError;

    /// Flat `key = value` lines; `#` starts a comment. Keys not given keep
    /// their defaults. `daylight` picks the background rate unless
    /// `background_rate_hz` is also given.
    fn from_str(text: &str) -> Result<Self, SimError> {
        let mut cfg = SimConfig::default();
        let mut background = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SimError::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "protocol" => cfg.protocol = value(k, v)?,
                "duration_s" => cfg.duration_s = value(k, v)?,
                "seed" => cfg.seed = value(k, v)?,
                "daylight" => cfg.daylight = value(k, v)?,
                "single_photon" => cfg.single_photon = value(k, v)?,
                "mu" => cfg.budget.mu = value(k, v)?,
                "path_loss_db" => cfg.budget.path_loss_db = value(k, v)?,
                "filter_transmissivity" => cfg.budget.filter_transmissivity = value(k, v)?,
                "quantum_efficiency" => cfg.budget.quantum_efficiency = value(k, v)?,
                "extinction_ratio" => cfg.budget.extinction_ratio = value(k, v)?,
                "splitter_ratio" => cfg.budget.splitter_ratio = value(k, v)?,
                "background_rate_hz" => background = Some(value(k, v)?),
                "quantum_wavelength_nm" => cfg.budget.quantum_wavelength_nm = value(k, v)?,
                "classical_wavelength_nm" => cfg.budget.classical_wavelength_nm = value(k, v)?,
                "bit_period_ps" => cfg.clock.bit_period_ps = value(k, v)?,
                "pulse_spacing_bits" => cfg.clock.pulse_spacing_bits = value(k, v)?,
                "pulse_width_ps" => cfg.clock.pulse_width_ps = value(k, v)?,
                "board_word_bits" => cfg.clock.board_word_bits = value(k, v)?,
                "board_clock_hz" => cfg.clock.board_clock_hz = value(k, v)?,
                "phase_offset_ps" => cfg.clock.phase_offset_ps = value(k, v)?,
                "jitter_core_sigma_ps" => cfg.jitter.core_sigma_ps = value(k, v)?,
                "jitter_tail_fraction" => cfg.jitter.tail_fraction = value(k, v)?,
                "jitter_tail_decay_ps" => cfg.jitter.tail_decay_ps = value(k, v)?,
                "jitter_offset_ps" => cfg.jitter.offset_ps = value(k, v)?,
                "dead_time_ps" => cfg.dead_time_ps = value(k, v)?,
                "capacity_enabled" => cfg.capacity.enabled = value(k, v)?,
                "service_rate_bps" => cfg.capacity.service_rate_bps = value(k, v)?,
                "queue_depth" => cfg.capacity.queue_depth = value(k, v)?,
                "frame_done_cadence" => cfg.frame_done_cadence = value(k, v)?,
                "first_frame_number" => cfg.first_frame_number = value(k, v)?,
                "entropy_file" => cfg.entropy_file = Some(PathBuf::from(v)),
                "execution" => {
                    cfg.execution = match v {
                        "parallel" => Execution::Parallel,
                        "sequential" => Execution::Sequential,
                        _ => return Err(SimError::Config(format!("bad value for execution: {v:?}"))),
                    }
                }
                "transport" => {
                    cfg.transport = if v == "in_process" {
                        Mode::InProcess
                    } else if let Some(a) = v.strip_prefix("listen:") {
                        Mode::Listen(a.to_string())
                    } else if let Some(a) = v.strip_prefix("connect:") {
                        Mode::Connect(a.to_string())
                    } else {
                        return Err(SimError::Config(format!("bad value for transport: {v:?}")));
                    }
                }
                other => return Err(SimError::Config(format!("line {}: unknown key {other:?}", n + 1))),
            }
        }
        let daylight = cfg.daylight;
        cfg.set_daylight(daylight);
        if let Some(rate) = background {
            cfg.budget.background_rate_hz = rate;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut cfg = SimConfig {
            protocol: ProtocolKind::Bb84,
            duration_s: 0.25,
            seed: u64::MAX,
            first_frame_number: u32::MAX - 3,
            entropy_file: Some("/tmp/bits.bin".into()),
            transport: Mode::Connect("127.0.0.1:9000".into()),
            execution: Execution::Sequential,
            ..Default::default()
        };
        cfg.set_daylight(true);
        cfg.budget.extinction_ratio = f64::INFINITY;
        cfg.budget.mu = 1e-7;
        let text = cfg.to_config_string();
        assert!(!text.contains("e-"), "{text}");
        assert_eq!(text.parse::<SimConfig>().unwrap(), cfg);
    }

    #[test]
    fn daylight_selects_background_unless_overridden() {
        let day: SimConfig = "daylight = true".parse().unwrap();
        assert_eq!(day.budget.background_rate_hz, DAY_BACKGROUND_HZ);
        let custom: SimConfig = "daylight = true\nbackground_rate_hz = 5".parse().unwrap();
        assert_eq!(custom.budget.background_rate_hz, 5.0);
        let night: SimConfig = "# nothing\n\n".parse().unwrap();
        assert_eq!(night, SimConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(matches!("colour = blue".parse::<SimConfig>(), Err(SimError::Config(_))));
        assert!(matches!("mu = lots".parse::<SimConfig>(), Err(SimError::Config(_))));
        assert!(matches!("mu".parse::<SimConfig>(), Err(SimError::Config(_))));
        assert!(matches!("transport = carrier pigeon".parse::<SimConfig>(), Err(SimError::Config(_))));
    }

    #[test]
    fn validation() {
        assert!(SimConfig::default().validate().is_ok());
        let zero = SimConfig {
            duration_s: 0.0,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
        let cadence = SimConfig {
            frame_done_cadence: 0,
            ..Default::default()
        };
        assert!(cadence.validate().is_err());
        let mut mu = SimConfig::default();
        mu.budget.mu = -1.0;
        assert!(matches!(mu.validate(), Err(SimError::Param(_))));
    }

    #[test]
    fn frame_count() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.frames(), 152_588);
        let tiny = SimConfig {
            duration_s: 1e-9,
            ..Default::default()
        };
        assert_eq!(tiny.frames(), 1);
    }
}
