use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::filters::{Estimator, FilterConfig, Heuristic, InversionPhase, TimeBounds};
use crate::likelihood::LikelihoodModel;
use crate::smc::ResampleConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    /// Adaptive grid, ideal likelihood.
    #[default]
    GridIdeal,
    /// Liu-West particle filter, ideal likelihood.
    LwIdeal,
    /// Adaptive grid, dephased likelihood with known `T2`.
    GridDephased,
    /// Joint frequency and dephasing-rate filter.
    Hybrid,
}

/// Everything needed to reproduce a batch. Missing fields take their defaults,
/// so a TOML file only needs to list what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub study: Study,
    pub prior_lo: f64,
    pub prior_hi: f64,
    /// `None` (or `inf` in a config file) means no dephasing.
    #[serde(deserialize_with = "finite_or_none")]
    pub t2_true: Option<f64>,
    pub w_th: f64,
    pub e_th: f64,
    pub n_initial: usize,
    pub n_particles: usize,
    pub n1: usize,
    pub n2: usize,
    pub n_experiments: usize,
    pub n_trials: usize,
    pub master_seed: u64,
    /// Trial 0 keeps its grid at these experiment indices.
    pub snapshot_schedule: Vec<usize>,
    pub estimator: Estimator,
    pub heuristic: Heuristic,
    pub inversion_phase: InversionPhase,
    pub multi_pass_refine: bool,
    pub circular_error: bool,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub lw_a: f64,
    pub ess_threshold: f64,
    pub t_min: f64,
    pub t_max: f64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

fn finite_or_none<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.filter(|t| t.is_finite()))
}

impl Default for RunConfig {
    fn default() -> Self {
        let filter = FilterConfig::default();
        Self {
            study: Study::GridIdeal,
            prior_lo: filter.prior_lo,
            prior_hi: filter.prior_hi,
            t2_true: None,
            w_th: filter.w_th,
            e_th: filter.e_th,
            n_initial: filter.n_initial,
            n_particles: 100,
            n1: 50,
            n2: 50,
            n_experiments: filter.n_experiments,
            n_trials: 100,
            master_seed: 0,
            snapshot_schedule: Vec::new(),
            estimator: filter.estimator,
            heuristic: filter.heuristic,
            inversion_phase: filter.inversion_phase,
            multi_pass_refine: filter.multi_pass_refine,
            circular_error: filter.circular_error,
            theta_lo: filter.theta_lo,
            theta_hi: filter.theta_hi,
            lw_a: filter.resample.a,
            ess_threshold: filter.resample.ess_threshold,
            t_min: filter.time_bounds.t_min,
            t_max: filter.time_bounds.t_max,
            output_dir: None,
        }
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    /// Filter settings for one trial. Only trial 0 records snapshots.
    pub fn filter_config(&self, trial: usize) -> FilterConfig {
        FilterConfig {
            prior_lo: self.prior_lo,
            prior_hi: self.prior_hi,
            w_th: self.w_th,
            e_th: self.e_th,
            n_initial: if self.study == Study::Hybrid { self.n1 } else { self.n_initial },
            n_experiments: self.n_experiments,
            resample: ResampleConfig { a: self.lw_a, ess_threshold: self.ess_threshold },
            estimator: self.estimator,
            heuristic: self.heuristic,
            inversion_phase: self.inversion_phase,
            multi_pass_refine: self.multi_pass_refine,
            time_bounds: TimeBounds { t_min: self.t_min, t_max: self.t_max },
            circular_error: self.circular_error,
            theta_lo: self.theta_lo,
            theta_hi: self.theta_hi,
            snapshot_schedule: if trial == 0 { self.snapshot_schedule.clone() } else { Vec::new() },
            ..FilterConfig::default()
        }
    }

    pub fn model(&self) -> Result<LikelihoodModel> {
        Ok(match (self.study, self.t2_true) {
            (Study::GridIdeal | Study::LwIdeal, _) | (Study::GridDephased, None) => LikelihoodModel::Ideal,
            (Study::GridDephased, Some(t2)) => LikelihoodModel::dephasing_known(t2)?,
            (Study::Hybrid, _) => LikelihoodModel::DephasingUnknown,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(config_error("n_trials must be at least 1"));
        }
        if let Some(t2) = self.t2_true {
            if !(t2 > 0.0) {
                return Err(config_error(format!("t2_true must be positive, got {t2}")));
            }
        }
        match self.study {
            Study::LwIdeal if self.n_particles < 2 => {
                return Err(config_error("n_particles must be at least 2"));
            }
            Study::Hybrid if self.t2_true.is_none() => {
                return Err(config_error("the hybrid study needs a finite t2_true"));
            }
            Study::Hybrid if self.n2 == 0 => {
                return Err(config_error("n2 must be at least 1"));
            }
            _ => {}
        }
        if self.study == Study::LwIdeal && !self.snapshot_schedule.is_empty() {
            return Err(config_error("snapshots need a grid study"));
        }
        self.filter_config(0)
            .validate()
            .map_err(|e| config_error(e.to_string().trim_start_matches("invalid argument: ").to_owned()))?;
        self.model().map(|_| ())
    }
}
