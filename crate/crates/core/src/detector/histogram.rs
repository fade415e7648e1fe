use std::io::{self, Write};

use crate::error::{check, ParamError};

/// Arrival times folded modulo a pulse period and binned.
///
/// The last bin is narrower when the period is not a multiple of the bin
/// width.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width_ps: f64,
    pub modulo_ps: f64,
    pub counts: Vec<u64>,
}

/// Folds `times` modulo `modulo_ps` into bins of `bin_width_ps`.
pub fn histogram<I>(times: I, bin_width_ps: f64, modulo_ps: f64) -> Result<Histogram, ParamError>
where
    I: IntoIterator<Item = f64>,
{
    check(bin_width_ps > 0.0 && bin_width_ps.is_finite(), "bin_width_ps", bin_width_ps, "must be > 0")?;
    check(modulo_ps > 0.0 && modulo_ps.is_finite(), "modulo_ps", modulo_ps, "must be > 0")?;
    let n_bins = (modulo_ps / bin_width_ps).ceil() as usize;
    let mut counts = vec![0u64; n_bins];
    for t in times {
        let folded = t.rem_euclid(modulo_ps);
        let i = ((folded / bin_width_ps) as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram {
        bin_width_ps,
        modulo_ps,
        counts,
    })
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn bin_start_ps(&self, i: usize) -> f64 {
        i as f64 * self.bin_width_ps
    }

    fn center(&self, i: isize) -> f64 {
        (i as f64 + 0.5) * self.bin_width_ps
    }

    /// Full width at half maximum, interpolating linearly between bin
    /// centers at the half-maximum crossings. The folded axis is treated as
    /// circular. `None` for an empty histogram or a profile that never drops
    /// below half maximum.
    pub fn fwhm_ps(&self) -> Option<f64> {
        let n = self.counts.len() as isize;
        let (peak_idx, &peak) = self.counts.iter().enumerate().max_by_key(|(i, c)| (**c, -(*i as i64)))?;
        if peak == 0 {
            return None;
        }
        let half = peak as f64 / 2.0;
        let at = |i: isize| self.counts[i.rem_euclid(n) as usize] as f64;
        let p = peak_idx as isize;

        let mut l = p;
        while at(l - 1) >= half {
            l -= 1;
            if p - l >= n {
                return None;
            }
        }
        let mut r = p;
        while at(r + 1) >= half {
            r += 1;
            if r - p >= n {
                return None;
            }
        }
        let left = self.center(l - 1) + (half - at(l - 1)) / (at(l) - at(l - 1)) * self.bin_width_ps;
        let right = self.center(r) + (at(r) - half) / (at(r) - at(r + 1)) * self.bin_width_ps;
        Some(right - left)
    }

    /// Width of the shortest circular run of bins holding at least
    /// `fraction` of all counts.
    pub fn span_ps(&self, fraction: f64) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let need = (fraction * total as f64).ceil() as u64;
        let n = self.counts.len();
        let mut best = n;
        let mut sum = 0u64;
        let mut r = 0usize;
        for l in 0..n {
            while sum < need && r < l + n {
                sum += self.counts[r % n];
                r += 1;
            }
            if sum >= need {
                best = best.min(r - l);
            }
            sum -= self.counts[l];
        }
        Some(best as f64 * self.bin_width_ps)
    }

    /// Writes `bin_start_ps,count` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_start_ps,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{:.1},{}", self.bin_start_ps(i), c)?;
        }
        Ok(())
    }
}
