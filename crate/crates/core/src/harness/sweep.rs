use std::io::{self, Write};

use super::config::fmt_f64;
use super::{run, SimConfig, SimError, SimMetrics};
use crate::rng::{derive_seed, Domain};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mu: f64,
    pub metrics: SimMetrics,
}

/// One run per μ. Run `i` uses a seed derived from the config seed and `i`,
/// so rows are independent yet reproducible.
pub fn sweep_mu(config: &SimConfig, mu_values: &[f64]) -> Result<Vec<SweepRow>, SimError> {
    if let Some(bad) = mu_values.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(SimError::Config(format!("sweep mu values must be > 0, got {bad}")));
    }
    if mu_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::Config("sweep mu values must be strictly increasing".into()));
    }
    mu_values
        .iter()
        .enumerate()
        .map(|(i, &mu)| {
            let mut cfg = config.clone();
            cfg.budget.mu = mu;
            cfg.seed = derive_seed(config.seed, Domain::Sweep, i as u64);
            Ok(SweepRow { mu, metrics: run(&cfg)? })
        })
        .collect()
}

/// `mu,sifted_rate_bps,qber,frames_dropped`, fixed decimal notation.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> io::Result<()> {
    writeln!(w, "mu,sifted_rate_bps,qber,frames_dropped")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.3},{:.8},{}",
            fmt_f64(r.mu),
            r.metrics.sifted_rate_bps,
            r.metrics.qber,
            r.metrics.frames_dropped
        )?;
    }
    Ok(())
}
