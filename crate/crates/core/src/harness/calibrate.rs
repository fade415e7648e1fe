use thiserror::Error;

use crate::detector::{gate, Cause, DetectionEvent, DetectorId, JitterModel};
use crate::parallel::Execution;
use crate::photonics::ClockBase;
use crate::rng::{stream, Domain};

/// What the fitted detector response must reproduce at the given clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTargets {
    /// Fraction of a pulse's clicks inside its own gate.
    pub acceptance: f64,
    /// Fraction inside the following pulse's gate.
    pub leakage: f64,
    /// Full width at half maximum; `None` keeps `core_sigma_ps` as given.
    pub fwhm_ps: Option<f64>,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        CalibrationTargets {
            acceptance: 0.93,
            leakage: 0.005,
            fwhm_ps: Some(550.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("calibration targets out of range: {0}")]
    BadTargets(String),
    /// No model in the family meets the targets. `leakage_range` is the
    /// leakage achievable at the requested acceptance (for the core width
    /// where the search stopped), when one exists.
    #[error("targets infeasible: {reason} (achievable leakage {leakage_range:?} at sigma {sigma_ps:.2} ps)")]
    Infeasible {
        reason: String,
        sigma_ps: f64,
        leakage_range: Option<(f64, f64)>,
    },
}

const TAU_MIN: f64 = 10.0;
const TAU_MAX: f64 = 20_000.0;
const TAU_GRID: usize = 80;

struct Windows {
    own: (f64, f64),
    next: (f64, f64),
}

impl Windows {
    fn new(clock: &ClockBase) -> Self {
        let phase = clock.phase_offset_ps as f64;
        let gate = clock.gate_width_ps() as f64;
        let period = clock.slot_period_ps() as f64;
        Windows {
            own: (-phase, gate - phase),
            next: (period - phase, period + gate - phase),
        }
    }

    fn masses(&self, m: &JitterModel) -> (f64, f64) {
        (
            m.mass_quadrature(self.own.0, self.own.1),
            m.mass_quadrature(self.next.0, self.next.1),
        )
    }
}

fn component(sigma: f64, tail: bool, tau: f64, offset: f64) -> JitterModel {
    JitterModel {
        core_sigma_ps: sigma,
        tail_fraction: if tail { 1.0 } else { 0.0 },
        tail_decay_ps: tau,
        offset_ps: offset,
    }
}

/// Best (f, τ) for a fixed core width. Acceptance is linear in the tail
/// fraction, so f follows from τ in closed form; τ is bisected on leakage.
fn fit_tail(
    sigma: f64,
    offset: f64,
    t: &CalibrationTargets,
    w: &Windows,
) -> Result<JitterModel, CalibrationError> {
    let (core_acc, core_leak) = w.masses(&component(sigma, false, 0.0, offset));
    // (f, leakage) for a given τ, if some f in [0, 1) hits the acceptance
    let at = |tau: f64| -> Option<(f64, f64)> {
        let (tail_acc, tail_leak) = w.masses(&component(sigma, true, tau, offset));
        let f = if (core_acc - t.acceptance).abs() < 1e-12 {
            0.0
        } else {
            (core_acc - t.acceptance) / (core_acc - tail_acc)
        };
        (0.0..1.0)
            .contains(&f)
            .then_some((f, (1.0 - f) * core_leak + f * tail_leak))
    };

    let grid: Vec<(f64, Option<(f64, f64)>)> = (0..TAU_GRID)
        .map(|i| {
            let tau = TAU_MIN * (TAU_MAX / TAU_MIN).powf(i as f64 / (TAU_GRID - 1) as f64);
            (tau, at(tau))
        })
        .collect();
    let range = grid
        .iter()
        .filter_map(|(_, v)| v.map(|(_, l)| l))
        .fold(None, |acc: Option<(f64, f64)>, l| Some(acc.map_or((l, l), |(a, b)| (a.min(l), b.max(l)))));

    // first sign change of leakage − target between feasible neighbours
    let bracket = grid.windows(2).find_map(|pair| match (pair[0].1, pair[1].1) {
        (Some((_, l0)), Some((_, l1))) if (l0 - t.leakage) * (l1 - t.leakage) <= 0.0 => Some((pair[0].0, pair[1].0)),
        _ => None,
    });
    let Some((mut lo, mut hi)) = bracket else {
        return Err(CalibrationError::Infeasible {
            reason: format!(
                "no tail reaches acceptance {} with leakage {}",
                t.acceptance, t.leakage
            ),
            sigma_ps: sigma,
            leakage_range: range,
        });
    };
    let below_at_lo = at(lo).expect("bracket end feasible").1 < t.leakage;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        match at(mid) {
            Some((_, l)) if (l < t.leakage) == below_at_lo => lo = mid,
            Some(_) => hi = mid,
            // f left [0, 1) inside the bracket; shrink toward the feasible end
            None => hi = mid,
        }
    }
    let tau = 0.5 * (lo + hi);
    let (f, _) = at(tau).or_else(|| at(lo)).expect("bracket stays feasible");
    Ok(JitterModel {
        core_sigma_ps: sigma,
        tail_fraction: f,
        tail_decay_ps: tau,
        offset_ps: offset,
    })
}

/// Fits the tail fraction and decay (and, when a FWHM target is given, the
/// core width) so the composite response meets `targets` on `clock`.
///
/// `start.offset_ps` is kept; `start.core_sigma_ps` is used when no FWHM
/// target is given.
pub fn calibrate_jitter(
    targets: CalibrationTargets,
    clock: &ClockBase,
    start: JitterModel,
) -> Result<JitterModel, CalibrationError> {
    let in_unit = |x: f64| (0.0..=1.0).contains(&x);
    if !in_unit(targets.acceptance) || !in_unit(targets.leakage) || targets.acceptance + targets.leakage > 1.0 {
        return Err(CalibrationError::BadTargets(format!(
            "acceptance {} and leakage {} must be fractions summing to at most 1",
            targets.acceptance, targets.leakage
        )));
    }
    let w = Windows::new(clock);
    let offset = start.offset_ps;

    // a perfect gate needs no tail at all
    if targets.acceptance == 1.0 || targets.leakage == 0.0 || targets.fwhm_ps == Some(0.0) {
        let delta = JitterModel::delta(offset);
        let (acc, leak) = w.masses(&delta);
        let width_ok = targets.fwhm_ps.is_none_or(|f| f == 0.0);
        if (acc - targets.acceptance).abs() < 1e-12 && (leak - targets.leakage).abs() < 1e-12 && width_ok {
            return Ok(delta);
        }
        return Err(CalibrationError::Infeasible {
            reason: "degenerate targets are only met by a delta response inside the gate".into(),
            sigma_ps: 0.0,
            leakage_range: Some((leak, leak)),
        });
    }

    let Some(fwhm) = targets.fwhm_ps else {
        return fit_tail(start.core_sigma_ps, offset, &targets, &w);
    };
    if !(fwhm > 0.0 && fwhm.is_finite()) {
        return Err(CalibrationError::BadTargets(format!("fwhm {fwhm} must be > 0")));
    }

    // FWHM grows with the core width; bisect on it
    let width = |sigma: f64| fit_tail(sigma, offset, &targets, &w).map(|m| (m.fwhm_ps(), m));
    let sigma_hi = fwhm / (8.0 * 2f64.ln()).sqrt();
    let mut hi = sigma_hi;
    let mut hi_model = width(hi)?;
    if hi_model.0 < fwhm {
        return Err(CalibrationError::Infeasible {
            reason: format!("fwhm {fwhm} ps wider than the pure-core width allows"),
            sigma_ps: hi,
            leakage_range: None,
        });
    }
    let mut lo = 0.3 * sigma_hi;
    let lo_model = width(lo)?;
    if lo_model.0 > fwhm {
        return Err(CalibrationError::Infeasible {
            reason: format!("fwhm {fwhm} ps narrower than the fitted tail allows"),
            sigma_ps: lo,
            leakage_range: None,
        });
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let m = width(mid)?;
        if m.0 < fwhm {
            lo = mid;
        } else {
            hi = mid;
            hi_model = m;
        }
        if hi - lo < 1e-4 {
            break;
        }
    }
    Ok(hi_model.1)
}

/// Mask fractions estimated by sampling the model and gating each click.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskEstimate {
    pub acceptance: f64,
    pub next_group_leakage: f64,
    /// Binomial standard errors of the two fractions.
    pub acceptance_sigma: f64,
    pub leakage_sigma: f64,
}

/// Draws `draws` delays for a pulse in slot 1 and runs each through the gate.
pub fn monte_carlo_mask(
    model: &JitterModel,
    clock: &ClockBase,
    draws: u64,
    seed: u64,
    execution: Execution,
) -> MaskEstimate {
    const CHUNK: u64 = 1 << 16;
    let emit = clock.emit_time_ps(1);
    let counts = execution.map_range(0..draws.div_ceil(CHUNK), |c| {
        let mut rng = stream(seed, Domain::Jitter, c);
        let mut own = 0u64;
        let mut next = 0u64;
        for _ in 0..CHUNK.min(draws - c * CHUNK) {
            let t = emit + model.sample(&mut rng).round() as i64;
            let event = DetectionEvent {
                time_ps: t,
                detector: DetectorId(0),
                slot_index: Some(1),
                cause: Cause::Signal,
            };
            if let Ok(d) = gate(&event, clock) {
                own += (d.accepted && d.group == 1) as u64;
                next += (d.accepted && d.group == 2) as u64;
            }
        }
        (own, next)
    });
    let (own, next) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = draws.max(1) as f64;
    let p = own as f64 / n;
    let q = next as f64 / n;
    MaskEstimate {
        acceptance: p,
        next_group_leakage: q,
        acceptance_sigma: (p * (1.0 - p) / n).sqrt(),
        leakage_sigma: (q * (1.0 - q) / n).sqrt(),
    }
}
