use rand::Rng;

use super::{
    estimate, estimation_error, FilterConfig, GridSnapshot, Posterior, TraceRecord, TrialRngs, TrialTrace,
};
use crate::error::{invalid, Error, Result};
use crate::grid::{merge_with_groups, normalize, refine_with_parents, uniform_grid, AdaptiveGrid};
use crate::likelihood::{likelihood_dephased_rate, simulate_outcome, ExperimentDesign, GroundTruth, Outcome};
use crate::smc::{liu_west_resample, liu_west_resample_to, ParticleEnsemble};

/// Joint posterior over frequency and dephasing rate `theta = 1/T2`.
///
/// The frequency marginal lives on `grid`; cell `i` carries a conditional
/// ensemble `thetas[i]` whose weights sum to one, so the joint weight of
/// particle `j` in cell `i` is `grid.cells()[i].weight * thetas[i].weights()[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub grid: AdaptiveGrid,
    pub thetas: Vec<ParticleEnsemble>,
}

impl HybridState {
    pub fn new(grid: AdaptiveGrid, thetas: Vec<ParticleEnsemble>) -> Result<Self> {
        if grid.len() != thetas.len() {
            return Err(invalid(format!(
                "{} cells but {} theta ensembles",
                grid.len(),
                thetas.len()
            )));
        }
        if thetas.iter().any(|e| e.dim() != 1) {
            return Err(invalid("theta ensembles must be one-dimensional"));
        }
        let thetas = thetas.iter().map(normalized).collect::<Result<_>>()?;
        Ok(Self { grid, thetas })
    }

    /// Uniform frequency grid with `n1` cells, each holding `n2` rates drawn
    /// uniformly from `[theta_lo, theta_hi]`.
    pub fn uniform<R: Rng + ?Sized>(cfg: &FilterConfig, n1: usize, n2: usize, rng: &mut R) -> Result<Self> {
        if n2 == 0 {
            return Err(invalid("need at least one theta particle per cell"));
        }
        let grid = uniform_grid(cfg.prior_lo, cfg.prior_hi, n1)?;
        let thetas = (0..n1)
            .map(|_| ParticleEnsemble::sample_uniform_1d(cfg.theta_lo, cfg.theta_hi, n2, rng))
            .collect::<Result<_>>()?;
        Ok(Self { grid, thetas })
    }

    /// Row-major `w_ij`.
    pub fn joint_weights(&self) -> Vec<Vec<f64>> {
        self.grid
            .cells()
            .iter()
            .zip(&self.thetas)
            .map(|(c, e)| e.weights().iter().map(|v| c.weight * v).collect())
            .collect()
    }

    /// Posterior mean of `theta`.
    pub fn theta_mean(&self) -> f64 {
        self.grid
            .cells()
            .iter()
            .zip(&self.thetas)
            .map(|(c, e)| c.weight * e.positions().iter().zip(e.weights()).map(|(t, v)| t * v).sum::<f64>())
            .sum()
    }

    pub fn particle_count(&self) -> usize {
        self.thetas.iter().map(ParticleEnsemble::len).sum()
    }
}

fn normalized(e: &ParticleEnsemble) -> Result<ParticleEnsemble> {
    let total = e.total_weight();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    ParticleEnsemble::new(e.positions().to_vec(), e.weights().iter().map(|w| w / total).collect(), 1)
}

fn clamp_thetas(e: ParticleEnsemble, lo: f64, hi: f64) -> Result<ParticleEnsemble> {
    let positions = e.positions().iter().map(|t| t.clamp(lo, hi)).collect();
    ParticleEnsemble::new(positions, e.weights().to_vec(), 1)
}

/// One joint update followed by grid adaptation and conditional resampling.
///
/// Split children inherit a copy of the parent's theta ensemble. Merged
/// cells pool their ensembles, weighted by cell mass, and are Liu-West
/// resampled down to `n2` particles, where `n2` is the largest ensemble in
/// the group. Resampled rates are clamped to the prior range.
pub fn hybrid_filter_step<R: Rng + ?Sized>(
    state: &HybridState,
    outcome: Outcome,
    design: &ExperimentDesign,
    cfg: &FilterConfig,
    rng: &mut R,
) -> Result<HybridState> {
    let mut thetas = Vec::with_capacity(state.thetas.len());
    let mut masses = Vec::with_capacity(state.thetas.len());
    for (cell, ens) in state.grid.cells().iter().zip(&state.thetas) {
        let joint: Vec<f64> = ens
            .positions()
            .iter()
            .zip(ens.weights())
            .map(|(&theta, v)| v * likelihood_dephased_rate(outcome, cell.centroid, theta, design))
            .collect();
        let marginal: f64 = joint.iter().sum();
        masses.push(cell.weight * marginal);
        thetas.push(if marginal > 0.0 {
            ParticleEnsemble::new(ens.positions().to_vec(), joint.iter().map(|w| w / marginal).collect(), 1)?
        } else {
            ens.clone()
        });
    }
    let posterior = normalize(&state.grid.with_weights(&masses)?)?;

    let (refined, parents) = refine_with_parents(&posterior, cfg.e_th);
    let thetas: Vec<ParticleEnsemble> = parents.iter().map(|&p| thetas[p].clone()).collect();

    let (merged, groups) = merge_with_groups(&refined, cfg.w_th);
    let mut out = Vec::with_capacity(groups.len());
    for group in groups {
        let mut ens = if group.len() == 1 {
            thetas[group.start].clone()
        } else {
            let cells = &refined.cells()[group.clone()];
            let mass: f64 = cells.iter().map(|c| c.weight).sum();
            let scale = |k: usize| {
                if mass > 0.0 {
                    cells[k].weight / mass
                } else {
                    1.0 / cells.len() as f64
                }
            };
            let mut positions = Vec::new();
            let mut weights = Vec::new();
            let mut n2 = 0;
            for (k, e) in thetas[group].iter().enumerate() {
                positions.extend_from_slice(e.positions());
                weights.extend(e.weights().iter().map(|w| w * scale(k)));
                n2 = n2.max(e.len());
            }
            let pooled = ParticleEnsemble::new(positions, weights, 1)?;
            clamp_thetas(liu_west_resample_to(&pooled, n2, &cfg.resample, rng)?, cfg.theta_lo, cfg.theta_hi)?
        };
        if cfg.resample.should_resample(&ens) {
            ens = clamp_thetas(liu_west_resample(&ens, &cfg.resample, rng)?, cfg.theta_lo, cfg.theta_hi)?;
        }
        out.push(ens);
    }
    Ok(HybridState {
        grid: normalize(&merged)?,
        thetas: out,
    })
}

fn record(
    k: usize,
    state: &HybridState,
    step: Option<(&ExperimentDesign, Outcome)>,
    truth: &GroundTruth,
    cfg: &FilterConfig,
) -> TraceRecord {
    let est = estimate(&state.grid, cfg.estimator);
    let theta = state.theta_mean();
    let theta_true = truth.t2_true.map(|t2| 1.0 / t2);
    TraceRecord {
        experiment: k,
        evolution_time: step.map(|(d, _)| d.evolution_time),
        inversion_phase: step.map(|(d, _)| d.inversion_phase),
        outcome: step.map(|(_, o)| o.bit()),
        estimate: est,
        abs_error: estimation_error(est, truth.omega_true, cfg.circular_error),
        posterior_std: state.grid.posterior_std(),
        theta_estimate: Some(theta),
        theta_rel_error: theta_true.map(|tt| (theta - tt).abs() / tt),
        count: state.grid.len(),
    }
}

/// Joint frequency and dephasing-rate inference with `n1` initial cells and
/// `n2` rate particles per cell. Experiments are designed from the frequency
/// marginal.
pub fn run_hybrid_trial(truth: &GroundTruth, cfg: &FilterConfig, n1: usize, n2: usize) -> Result<TrialTrace> {
    cfg.validate()?;
    let Some(t2) = truth.t2_true else {
        return Err(invalid("the hybrid filter needs a finite true T2"));
    };
    if !(t2 > 0.0) || !t2.is_finite() {
        return Err(invalid(format!("true T2 must be positive and finite, got {t2}")));
    }
    let mut rngs = TrialRngs::new(truth.seed);
    let mut state = HybridState::uniform(cfg, n1, n2, &mut rngs.filter)?;
    let mut trace = TrialTrace {
        omega_true: truth.omega_true,
        t2_true: truth.t2_true,
        seed: truth.seed,
        records: vec![record(0, &state, None, truth, cfg)],
        failed_at: None,
        snapshots: Vec::new(),
    };
    let snapshot = |k: usize, state: &HybridState, trace: &mut TrialTrace| {
        if cfg.snapshot_schedule.contains(&k) {
            trace.snapshots.push(GridSnapshot { experiment: k, grid: state.grid.clone() });
        }
    };
    snapshot(0, &state, &mut trace);
    for k in 1..=cfg.n_experiments {
        let design = cfg.next_design(&state.grid, &mut rngs.filter);
        let outcome = simulate_outcome(truth, &design, &mut rngs.outcomes);
        match hybrid_filter_step(&state, outcome, &design, cfg, &mut rngs.filter) {
            Ok(next) => state = next,
            Err(Error::DegeneratePosterior) => {
                trace.abort(k, cfg.n_experiments);
                break;
            }
            Err(e) => return Err(e),
        }
        trace.records.push(record(k, &state, Some((&design, outcome)), truth, cfg));
        snapshot(k, &state, &mut trace);
    }
    Ok(trace)
}
