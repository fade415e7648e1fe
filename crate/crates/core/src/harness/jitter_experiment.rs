use std::io::{self, Write};

use super::{SimConfig, SimError};
use crate::detector::{histogram, Histogram};
use crate::rng::{stream, Domain};

pub const RATE_312_MHZ: f64 = 312.5e6;
pub const RATE_78_MHZ: f64 = 78.125e6;

/// Histogram bin width of the timing measurement, ps.
pub const BIN_WIDTH_PS: f64 = 12.2;

const CHUNK: u64 = 1 << 16;

/// Folded arrival-time histograms, one per pulse rate.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterExperiment {
    pub rates_hz: Vec<f64>,
    pub histograms: Vec<Histogram>,
}

/// Times single photons through the detector at each pulse rate and folds
/// the arrivals modulo the pulse period.
pub fn jitter_experiment(config: &SimConfig, rates_hz: &[f64], events: u64) -> Result<JitterExperiment, SimError> {
    config.jitter.validate()?;
    let jitter = config.jitter;
    let mut histograms = Vec::new();
    for (r, &rate) in rates_hz.iter().enumerate() {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(SimError::Config(format!("pulse rate must be > 0, got {rate}")));
        }
        let period = 1e12 / rate;
        let chunks = events.div_ceil(CHUNK);
        let times: Vec<Vec<f64>> = config.execution.map_range(0..chunks, |c| {
            let mut rng = stream(config.seed, Domain::Jitter, (r as u64) << 32 | c);
            let n = CHUNK.min(events - c * CHUNK);
            (0..n)
                .map(|k| (c * CHUNK + k) as f64 * period + jitter.sample(&mut rng))
                .collect()
        });
        histograms.push(histogram(times.into_iter().flatten(), BIN_WIDTH_PS, period)?);
    }
    Ok(JitterExperiment {
        rates_hz: rates_hz.to_vec(),
        histograms,
    })
}

impl JitterExperiment {
    /// Writes `bin_start_ps,count_<rate>MHz,...`; a histogram with fewer
    /// bins reads 0 past its end.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let labels: Vec<String> = self
            .rates_hz
            .iter()
            .map(|r| format!("count_{}MHz", (r / 1e6).floor() as u64))
            .collect();
        writeln!(w, "bin_start_ps,{}", labels.join(","))?;
        let rows = self.histograms.iter().map(|h| h.counts.len()).max().unwrap_or(0);
        for i in 0..rows {
            write!(w, "{:.1}", i as f64 * BIN_WIDTH_PS)?;
            for h in &self.histograms {
                write!(w, ",{}", h.counts.get(i).copied().unwrap_or(0))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::JitterModel;

    #[test]
    fn zero_jitter_fills_one_bin() {
        let cfg = SimConfig {
            jitter: JitterModel::delta(800.0),
            ..Default::default()
        };
        let exp = jitter_experiment(&cfg, &[RATE_312_MHZ, RATE_78_MHZ], 10_000).unwrap();
        for h in &exp.histograms {
            assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
            assert_eq!(h.total(), 10_000);
        }
    }

    #[test]
    fn csv_pads_the_shorter_histogram() {
        let cfg = SimConfig::default();
        let exp = jitter_experiment(&cfg, &[RATE_312_MHZ, RATE_78_MHZ], 5000).unwrap();
        let mut out = Vec::new();
        exp.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "bin_start_ps,count_312MHz,count_78MHz");
        assert_eq!(lines.len(), 1 + 1050);
        assert!(lines[500].split(',').nth(1) == Some("0"));
        assert_eq!(exp.histograms[0].counts.len(), 263);
    }

    #[test]
    fn deterministic() {
        let cfg = SimConfig::default();
        let a = jitter_experiment(&cfg, &[RATE_312_MHZ], 100_000).unwrap();
        let b = jitter_experiment(&cfg, &[RATE_312_MHZ], 100_000).unwrap();
        assert_eq!(a, b);
        let seq = SimConfig {
            execution: crate::parallel::Execution::Sequential,
            ..cfg
        };
        assert_eq!(jitter_experiment(&seq, &[RATE_312_MHZ], 100_000).unwrap(), a);
    }

    #[test]
    fn default_model_widths() {
        let exp = jitter_experiment(&SimConfig::default(), &[RATE_312_MHZ, RATE_78_MHZ], 1_000_000).unwrap();
        let fwhm = exp.histograms[0].fwhm_ps().unwrap();
        assert!((fwhm - 550.0).abs() <= 25.0, "{fwhm}");
        let span = exp.histograms[1].span_ps(0.999).unwrap();
        assert!((3000.0..=4500.0).contains(&span), "{span}");
    }
}
