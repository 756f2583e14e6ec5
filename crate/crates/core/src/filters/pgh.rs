use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Heuristic, Posterior};
use crate::error::{invalid, Result};
use crate::likelihood::ExperimentDesign;

/// Spreads below this are treated as a collapsed posterior.
const COLLAPSED_SPREAD: f64 = 1e-15;

/// Scale factor of the sigma-scaled heuristic.
const SIGMA_TIME_SCALE: f64 = 1.26;

/// Clamp range for chosen evolution times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBounds {
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for TimeBounds {
    fn default() -> Self {
        Self { t_min: 1e-3, t_max: 1e12 }
    }
}

impl TimeBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_min <= self.t_max && self.t_max.is_finite()) {
            return Err(invalid(format!(
                "time bounds must satisfy 0 < t_min <= t_max < inf, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    fn clamp(&self, t: f64) -> f64 {
        if t.is_nan() {
            self.t_max
        } else {
            t.clamp(self.t_min, self.t_max)
        }
    }
}

/// Particle guess heuristic: picks the next experiment from the posterior.
///
/// `PghPair` draws two distinct support points by weight (without
/// replacement) and falls back to `SigmaScaled` when no second point with
/// non-zero weight exists or both coincide.
pub fn pgh<P: Posterior + ?Sized, R: Rng + ?Sized>(
    posterior: &P,
    heuristic: Heuristic,
    bounds: TimeBounds,
    rng: &mut R,
) -> ExperimentDesign {
    if heuristic == Heuristic::PghPair {
        if let Some((a, b)) = draw_pair(posterior, rng) {
            let gap = (a - b).abs();
            if gap > 0.0 {
                return design(bounds.clamp(1.0 / gap), a);
            }
        }
    }
    sigma_scaled(posterior, bounds)
}

fn sigma_scaled<P: Posterior + ?Sized>(posterior: &P, bounds: TimeBounds) -> ExperimentDesign {
    let mu = posterior.posterior_mean();
    let sigma = posterior.posterior_std();
    if !(sigma >= COLLAPSED_SPREAD) {
        return design(bounds.t_max, mu);
    }
    design(bounds.clamp(SIGMA_TIME_SCALE / sigma), mu)
}

fn design(t: f64, x: f64) -> ExperimentDesign {
    ExperimentDesign {
        evolution_time: t,
        inversion_phase: x,
    }
}

/// Draws index `i` by weight, then `j != i` by weight among the rest.
fn draw_pair<P: Posterior + ?Sized, R: Rng + ?Sized>(posterior: &P, rng: &mut R) -> Option<(f64, f64)> {
    let n = posterior.support_len();
    let total: f64 = (0..n).map(|k| posterior.weight(k)).sum();
    if !(total > 0.0) {
        return None;
    }
    let first = pick(posterior, n, total, None, rng)?;
    let rest = total - posterior.weight(first);
    if !(rest > 0.0) {
        return None;
    }
    let second = pick(posterior, n, rest, Some(first), rng)?;
    Some((posterior.location(first), posterior.location(second)))
}

fn pick<P: Posterior + ?Sized, R: Rng + ?Sized>(
    posterior: &P,
    n: usize,
    total: f64,
    skip: Option<usize>,
    rng: &mut R,
) -> Option<usize> {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for k in (0..n).filter(|&k| Some(k) != skip) {
        let w = posterior.weight(k);
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(k);
        if u < acc {
            return Some(k);
        }
    }
    last
}
