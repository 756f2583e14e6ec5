//! Complete inference loops built from the grid and particle primitives.
//!
//! Every trial owns two independent ChaCha streams derived from the ground
//! truth seed: stream 0 produces measurement outcomes, stream 1 drives the
//! filter's own randomness (heuristic draws, resampling). A trial is therefore
//! a pure function of `(truth, model, config)`.

mod grid_filter;
mod hybrid;
mod lw;
mod pgh;

pub use grid_filter::{grid_filter_step, run_grid_trial};
pub use hybrid::{hybrid_filter_step, run_hybrid_trial, HybridState};
pub use lw::run_lw_trial;
pub use pgh::{pgh, TimeBounds};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::AdaptiveGrid;
use crate::likelihood::ExperimentDesign;
use crate::smc::{ParticleEnsemble, ResampleConfig};

/// Point estimator applied to a posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[default]
    PosteriorMean,
    /// Highest-density cell centroid (grids) or heaviest particle (ensembles).
    MaxDensity,
}

/// Adaptive experiment-design rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    /// Two support points drawn by weight: `t = 1/|w1 - w2|`, `x = w1`.
    #[default]
    PghPair,
    /// `t = 1.26 / sigma`, `x = mu`.
    SigmaScaled,
}

/// Where the inversion phase of each experiment comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InversionPhase {
    /// Whatever the heuristic proposes.
    #[default]
    Heuristic,
    /// Always `x = 0`. The likelihood is then even in `omega`, so a prior
    /// symmetric about zero yields a bimodal posterior.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub prior_lo: f64,
    pub prior_hi: f64,
    /// Merge threshold on cell mass.
    pub w_th: f64,
    /// Refinement threshold on error density.
    pub e_th: f64,
    pub n_initial: usize,
    pub n_experiments: usize,
    pub resample: ResampleConfig,
    pub estimator: Estimator,
    pub heuristic: Heuristic,
    pub inversion_phase: InversionPhase,
    pub multi_pass_refine: bool,
    /// Upper bound on refinement passes per update when `multi_pass_refine` is set.
    pub max_refine_passes: usize,
    pub time_bounds: TimeBounds,
    /// Measure error as distance modulo `2 pi` instead of plain `|est - true|`.
    pub circular_error: bool,
    /// Uniform prior on the dephasing rate `theta = 1/T2` (hybrid filter).
    pub theta_lo: f64,
    pub theta_hi: f64,
    /// Experiment indices at which grid trials keep a copy of the mesh.
    pub snapshot_schedule: Vec<usize>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            prior_lo: 0.0,
            prior_hi: 1.0,
            w_th: 2e-3,
            e_th: 1e-10,
            n_initial: 100,
            n_experiments: 1000,
            resample: ResampleConfig::default(),
            estimator: Estimator::PosteriorMean,
            heuristic: Heuristic::PghPair,
            inversion_phase: InversionPhase::Heuristic,
            multi_pass_refine: false,
            max_refine_passes: 16,
            time_bounds: TimeBounds::default(),
            circular_error: false,
            theta_lo: 0.0,
            theta_hi: 1.0,
            snapshot_schedule: Vec::new(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_lo < self.prior_hi) {
            return Err(invalid(format!(
                "prior must satisfy lo < hi, got [{}, {}]",
                self.prior_lo, self.prior_hi
            )));
        }
        if !(self.e_th > 0.0) {
            return Err(invalid(format!("e_th must be positive, got {}", self.e_th)));
        }
        if !(self.w_th >= 0.0) {
            return Err(invalid(format!("w_th must be non-negative, got {}", self.w_th)));
        }
        if self.n_initial < 3 {
            return Err(invalid(format!("n_initial must be at least 3, got {}", self.n_initial)));
        }
        if !(self.theta_lo >= 0.0 && self.theta_lo < self.theta_hi) {
            return Err(invalid(format!(
                "theta prior must satisfy 0 <= lo < hi, got [{}, {}]",
                self.theta_lo, self.theta_hi
            )));
        }
        if let Some(&k) = self.snapshot_schedule.iter().find(|&&k| k > self.n_experiments) {
            return Err(invalid(format!(
                "snapshot index {k} exceeds the {} experiments of a trial",
                self.n_experiments
            )));
        }
        self.time_bounds.validate()?;
        self.resample.validate()
    }
}

impl FilterConfig {
    /// Next experiment for `posterior` under this configuration.
    pub fn next_design<P: Posterior + ?Sized, R: rand::Rng + ?Sized>(&self, posterior: &P, rng: &mut R) -> ExperimentDesign {
        let mut design = pgh(posterior, self.heuristic, self.time_bounds, rng);
        if self.inversion_phase == InversionPhase::Zero {
            design.inversion_phase = 0.0;
        }
        design
    }
}

/// Anything the design heuristic and the point estimators can read.
pub trait Posterior {
    fn support_len(&self) -> usize;
    fn location(&self, i: usize) -> f64;
    fn weight(&self, i: usize) -> f64;
    fn posterior_mean(&self) -> f64;
    fn posterior_std(&self) -> f64;
    /// Location with the largest probability density.
    fn max_density_location(&self) -> f64;
}

fn first_argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

impl Posterior for AdaptiveGrid {
    fn support_len(&self) -> usize {
        self.len()
    }

    fn location(&self, i: usize) -> f64 {
        self.cells()[i].centroid
    }

    fn weight(&self, i: usize) -> f64 {
        self.cells()[i].weight
    }

    fn posterior_mean(&self) -> f64 {
        self.mean()
    }

    fn posterior_std(&self) -> f64 {
        self.variance().max(0.0).sqrt()
    }

    fn max_density_location(&self) -> f64 {
        let i = first_argmax(self.cells().iter().map(|c| c.weight / c.width()));
        self.cells()[i].centroid
    }
}

impl Posterior for ParticleEnsemble {
    fn support_len(&self) -> usize {
        self.len()
    }

    fn location(&self, i: usize) -> f64 {
        self.position(i)[0]
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights()[i]
    }

    fn posterior_mean(&self) -> f64 {
        self.mean_1d()
    }

    fn posterior_std(&self) -> f64 {
        self.variance_1d().max(0.0).sqrt()
    }

    fn max_density_location(&self) -> f64 {
        let i = first_argmax(self.weights().iter().copied());
        self.position(i)[0]
    }
}

/// Point estimate of `omega`.
pub fn estimate<P: Posterior + ?Sized>(posterior: &P, estimator: Estimator) -> f64 {
    match estimator {
        Estimator::PosteriorMean => posterior.posterior_mean(),
        Estimator::MaxDensity => posterior.max_density_location(),
    }
}

/// `|estimate - truth|`, optionally wrapped onto the circle of circumference `2 pi`.
pub fn estimation_error(estimate: f64, truth: f64, circular: bool) -> f64 {
    let d = (estimate - truth).abs();
    if circular {
        let tau = std::f64::consts::TAU;
        let m = d.rem_euclid(tau);
        m.min(tau - m)
    } else {
        d
    }
}

/// One row of a trial trace. Index 0 is the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub experiment: usize,
    pub evolution_time: Option<f64>,
    pub inversion_phase: Option<f64>,
    pub outcome: Option<u8>,
    pub estimate: f64,
    pub abs_error: f64,
    pub posterior_std: f64,
    pub theta_estimate: Option<f64>,
    pub theta_rel_error: Option<f64>,
    /// Grid cells (grid and hybrid filters) or particles (Liu-West).
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSnapshot {
    pub experiment: usize,
    pub grid: AdaptiveGrid,
}

/// Per-experiment history of one trial.
///
/// A trial whose posterior degenerates stops updating; its remaining records
/// repeat the last estimate so every trace of a batch has the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub omega_true: f64,
    pub t2_true: Option<f64>,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub failed_at: Option<usize>,
    pub snapshots: Vec<GridSnapshot>,
}

impl TrialTrace {
    pub fn failed(&self) -> bool {
        self.failed_at.is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.abs_error)
    }

    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("trace always holds the prior record")
    }

    /// Pads the trace to `n_experiments + 1` records after a failure at `k`.
    fn abort(&mut self, k: usize, n_experiments: usize) {
        self.failed_at = Some(k);
        let last = self.final_record().clone();
        for j in k..=n_experiments {
            self.records.push(TraceRecord {
                experiment: j,
                evolution_time: None,
                inversion_phase: None,
                outcome: None,
                ..last.clone()
            });
        }
    }
}

/// Outcome and filter random streams for one trial.
pub(crate) struct TrialRngs {
    pub outcomes: ChaCha8Rng,
    pub filter: ChaCha8Rng,
}

impl TrialRngs {
    pub fn new(seed: u64) -> Self {
        let outcomes = ChaCha8Rng::seed_from_u64(seed);
        let mut filter = ChaCha8Rng::seed_from_u64(seed);
        filter.set_stream(1);
        Self { outcomes, filter }
    }
}
