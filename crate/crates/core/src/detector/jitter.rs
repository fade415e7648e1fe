//! APD timing response: a Gaussian core with a one-sided exponential tail.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp, Normal};
use statrs::function::erf::erfc;

use crate::error::{check, ParamError};
use crate::photonics::ClockBase;

/// Timing jitter of the detector chain.
///
/// A detection is delayed by `offset_ps + N(0, core_sigma_ps²)`, plus, with
/// probability `tail_fraction`, an extra `Exp(mean = tail_decay_ps)` delay
/// (slow carrier diffusion). The tail component is therefore an
/// exponentially modified Gaussian.
///
/// The default constants come from [`crate::harness::calibrate_jitter`] with
/// 93 % mask acceptance, 0.5 % next-pulse leakage and a 550 ps FWHM at
/// 312.5 MHz; the `offset_ps` of one bit period centers the core in the
/// 1.6 ns gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterModel {
    pub core_sigma_ps: f64,
    pub tail_fraction: f64,
    pub tail_decay_ps: f64,
    pub offset_ps: f64,
}

impl Default for JitterModel {
    fn default() -> Self {
        JitterModel {
            core_sigma_ps: CALIBRATED_CORE_SIGMA_PS,
            tail_fraction: CALIBRATED_TAIL_FRACTION,
            tail_decay_ps: CALIBRATED_TAIL_DECAY_PS,
            offset_ps: 800.0,
        }
    }
}

pub const CALIBRATED_CORE_SIGMA_PS: f64 = 221.2645;
pub const CALIBRATED_TAIL_FRACTION: f64 = 0.2351576;
pub const CALIBRATED_TAIL_DECAY_PS: f64 = 626.2476;

/// Fractions of one pulse's detections by where the gate puts them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskStatistics {
    /// In bins {0, 1} of the pulse's own group.
    pub acceptance: f64,
    /// In bins {0, 1} of the following group.
    pub next_group_leakage: f64,
    /// Everywhere else.
    pub rejection: f64,
}

impl JitterModel {
    /// A noiseless detector: every event is delayed by exactly `offset_ps`.
    pub fn delta(offset_ps: f64) -> Self {
        JitterModel {
            core_sigma_ps: 0.0,
            tail_fraction: 0.0,
            tail_decay_ps: 0.0,
            offset_ps,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        check(
            self.core_sigma_ps >= 0.0 && self.core_sigma_ps.is_finite(),
            "core_sigma_ps",
            self.core_sigma_ps,
            "must be finite and >= 0",
        )?;
        check(
            (0.0..1.0).contains(&self.tail_fraction),
            "tail_fraction",
            self.tail_fraction,
            "must lie in [0, 1)",
        )?;
        check(
            self.tail_fraction == 0.0 || (self.tail_decay_ps > 0.0 && self.tail_decay_ps.is_finite()),
            "tail_decay_ps",
            self.tail_decay_ps,
            "must be finite and > 0 when a tail is present",
        )?;
        check(self.offset_ps.is_finite(), "offset_ps", self.offset_ps, "must be finite")
    }

    /// Draws one delay in picoseconds.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut delay = self.offset_ps;
        if self.core_sigma_ps > 0.0 {
            delay += Normal::new(0.0, self.core_sigma_ps).expect("valid sigma").sample(rng);
        }
        if self.tail_fraction > 0.0 && rng.random::<f64>() < self.tail_fraction {
            delay += Exp::new(1.0 / self.tail_decay_ps).expect("valid decay").sample(rng);
        }
        delay
    }

    /// Continuous part of the delay density. A zero-width core contributes a
    /// point mass at `offset_ps` that is not represented here.
    pub fn pdf(&self, t: f64) -> f64 {
        let d = t - self.offset_ps;
        let s = self.core_sigma_ps;
        let f = self.tail_fraction;
        let mut p = 0.0;
        if s > 0.0 && f < 1.0 {
            p += (1.0 - f) * (-0.5 * (d / s).powi(2)).exp() / (s * (2.0 * PI).sqrt());
        }
        if f > 0.0 {
            p += f * exgauss_pdf(d, s, self.tail_decay_ps);
        }
        p
    }

    /// Closed-form cumulative distribution of the delay.
    pub fn cdf(&self, t: f64) -> f64 {
        let d = t - self.offset_ps;
        let s = self.core_sigma_ps;
        let f = self.tail_fraction;
        let core = normal_cdf(d, s);
        let tail = if f > 0.0 {
            let tau = self.tail_decay_ps;
            if s > 0.0 {
                (core - tau * exgauss_pdf(d, s, tau)).max(0.0)
            } else if d >= 0.0 {
                1.0 - (-d / tau).exp()
            } else {
                0.0
            }
        } else {
            0.0
        };
        (1.0 - f) * core + f * tail
    }

    /// Probability of a delay in `[a, b)`, by composite Simpson quadrature
    /// of [`Self::pdf`]. Falls back to the closed form when the core has zero
    /// width (the density has a point mass).
    pub fn mass_quadrature(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let s = self.core_sigma_ps;
        if s == 0.0 {
            return self.cdf(b) - self.cdf(a);
        }
        let (lo, hi) = self.support();
        let (a, b) = (a.max(lo), b.min(hi));
        if b <= a {
            return 0.0;
        }
        let mut h_max = (s / 8.0).min(2.0);
        if self.tail_fraction > 0.0 {
            h_max = h_max.min(self.tail_decay_ps / 8.0);
        }
        let mut n = ((b - a) / h_max).ceil() as usize;
        n = n.clamp(2, 400_000);
        if n % 2 == 1 {
            n += 1;
        }
        let h = (b - a) / n as f64;
        let mut acc = self.pdf(a) + self.pdf(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.pdf(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    /// Interval outside of which the density is negligible (< 1e-30).
    pub fn support(&self) -> (f64, f64) {
        let s = self.core_sigma_ps;
        let lo = self.offset_ps - 12.0 * s - 1.0;
        let mut hi = self.offset_ps + 12.0 * s + 1.0;
        if self.tail_fraction > 0.0 {
            hi += 70.0 * self.tail_decay_ps;
        }
        (lo, hi)
    }

    /// Mask statistics for a pulse train on `clock`, by quadrature.
    ///
    /// A pulse emitted at the start of bin 0 (shifted by the clock phase
    /// offset) is accepted if its delay lands in `[−φ, 2·T_bit − φ)` and leaks
    /// into the next pulse's gate if it lands one slot period later.
    pub fn mask_statistics(&self, clock: &ClockBase) -> MaskStatistics {
        let phase = clock.phase_offset_ps as f64;
        let gate = clock.gate_width_ps() as f64;
        let period = clock.slot_period_ps() as f64;
        let (lo, hi) = self.support();
        let own = (-phase, gate - phase);
        let next = (period - phase, period + gate - phase);
        let acceptance = self.mass_quadrature(own.0, own.1);
        let next_group_leakage = self.mass_quadrature(next.0, next.1);
        let rejection = self.mass_quadrature(lo.min(own.0), own.0)
            + self.mass_quadrature(own.1, next.0)
            + self.mass_quadrature(next.1, hi.max(next.1));
        MaskStatistics {
            acceptance,
            next_group_leakage,
            rejection,
        }
    }

    /// Full width at half maximum of the delay density, located on a 0.25 ps
    /// grid with linear interpolation at the crossings.
    pub fn fwhm_ps(&self) -> f64 {
        if self.core_sigma_ps == 0.0 {
            return 0.0;
        }
        let (lo, _) = self.support();
        let hi = self.offset_ps
            + 8.0 * self.core_sigma_ps
            + if self.tail_fraction > 0.0 { 8.0 * self.tail_decay_ps } else { 0.0 };
        let step = 0.25;
        let n = ((hi - lo) / step).ceil() as usize + 1;
        let ys: Vec<f64> = (0..n).map(|i| self.pdf(lo + i as f64 * step)).collect();
        let (peak_idx, peak) = ys
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, y)| if y > best.1 { (i, y) } else { best });
        let half = peak / 2.0;
        let mut l = peak_idx;
        while l > 0 && ys[l - 1] >= half {
            l -= 1;
        }
        let mut r = peak_idx;
        while r + 1 < n && ys[r + 1] >= half {
            r += 1;
        }
        let x_at = |i: usize| lo + i as f64 * step;
        let left = if l == 0 {
            x_at(0)
        } else {
            x_at(l - 1) + (half - ys[l - 1]) / (ys[l] - ys[l - 1]) * step
        };
        let right = if r + 1 >= n {
            x_at(n - 1)
        } else {
            x_at(r) + (ys[r] - half) / (ys[r] - ys[r + 1]) * step
        };
        right - left
    }
}

/// Draws one detector delay; see [`JitterModel::sample`].
pub fn sample_jitter<R: Rng + ?Sized>(model: &JitterModel, rng: &mut R) -> f64 {
    model.sample(rng)
}

fn normal_cdf(d: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        0.5 * erfc(-d / (sigma * SQRT_2))
    } else if d >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// exp(w²)·erfc(w) for w ≥ 0.
fn erfcx(w: f64) -> f64 {
    if w < 26.0 {
        (w * w).exp() * erfc(w)
    } else {
        let w2 = w * w;
        (1.0 - 0.5 / w2 + 0.75 / (w2 * w2) - 1.875 / (w2 * w2 * w2)) / (w * PI.sqrt())
    }
}

/// Density of N(0, σ²) + Exp(mean τ) at `d`.
fn exgauss_pdf(d: f64, sigma: f64, tau: f64) -> f64 {
    if sigma == 0.0 {
        return if d >= 0.0 { (-d / tau).exp() / tau } else { 0.0 };
    }
    let w = (sigma / tau - d / sigma) / SQRT_2;
    if w >= 0.0 {
        (-0.5 * (d / sigma).powi(2)).exp() * erfcx(w) / (2.0 * tau)
    } else {
        (0.5 * (sigma / tau).powi(2) - d / tau).exp() * erfc(w) / (2.0 * tau)
    }
}
