use super::{
    estimate, estimation_error, FilterConfig, GridSnapshot, Posterior, TraceRecord, TrialRngs,
    TrialTrace,
};
use crate::error::{invalid, Error, Result};
use crate::grid::{merge, normalize, refine, refine_multi_pass, uniform_grid, AdaptiveGrid};
use crate::likelihood::{simulate_outcome, ExperimentDesign, GroundTruth, LikelihoodModel, Outcome};

/// One adaptive-grid update: Bayes reweighting at the centroids, normalise,
/// refine, merge, normalise.
pub fn grid_filter_step(
    grid: &AdaptiveGrid,
    model: &LikelihoodModel,
    outcome: Outcome,
    design: &ExperimentDesign,
    cfg: &FilterConfig,
) -> Result<AdaptiveGrid> {
    let likelihood = model.fixed(outcome, *design)?;
    let posterior = normalize(&grid.reweight(likelihood))?;
    let refined = if cfg.multi_pass_refine {
        refine_multi_pass(&posterior, cfg.e_th, cfg.max_refine_passes)
    } else {
        refine(&posterior, cfg.e_th)
    };
    normalize(&merge(&refined, cfg.w_th))
}

fn record(
    k: usize,
    grid: &AdaptiveGrid,
    step: Option<(&ExperimentDesign, Outcome)>,
    truth: &GroundTruth,
    cfg: &FilterConfig,
) -> TraceRecord {
    let est = estimate(grid, cfg.estimator);
    TraceRecord {
        experiment: k,
        evolution_time: step.map(|(d, _)| d.evolution_time),
        inversion_phase: step.map(|(d, _)| d.inversion_phase),
        outcome: step.map(|(_, o)| o.bit()),
        estimate: est,
        abs_error: estimation_error(est, truth.omega_true, cfg.circular_error),
        posterior_std: grid.posterior_std(),
        theta_estimate: None,
        theta_rel_error: None,
        count: grid.len(),
    }
}

/// Runs the adaptive-grid particle filter for `cfg.n_experiments` simulated
/// measurements. A degenerate posterior ends the trial early (see
/// [`TrialTrace`]); other errors are configuration problems and are returned.
pub fn run_grid_trial(truth: &GroundTruth, model: &LikelihoodModel, cfg: &FilterConfig) -> Result<TrialTrace> {
    cfg.validate()?;
    if matches!(model, LikelihoodModel::DephasingUnknown) {
        return Err(invalid("the grid filter needs a model without nuisance parameters"));
    }
    let mut rngs = TrialRngs::new(truth.seed);
    let mut grid = uniform_grid(cfg.prior_lo, cfg.prior_hi, cfg.n_initial)?;
    let mut trace = TrialTrace {
        omega_true: truth.omega_true,
        t2_true: truth.t2_true,
        seed: truth.seed,
        records: vec![record(0, &grid, None, truth, cfg)],
        failed_at: None,
        snapshots: Vec::new(),
    };
    let snapshot = |k: usize, grid: &AdaptiveGrid, trace: &mut TrialTrace| {
        if cfg.snapshot_schedule.contains(&k) {
            trace.snapshots.push(GridSnapshot { experiment: k, grid: grid.clone() });
        }
    };
    snapshot(0, &grid, &mut trace);

    for k in 1..=cfg.n_experiments {
        let design = cfg.next_design(&grid, &mut rngs.filter);
        let outcome = simulate_outcome(truth, &design, &mut rngs.outcomes);
        match grid_filter_step(&grid, model, outcome, &design, cfg) {
            Ok(next) => grid = next,
            Err(Error::DegeneratePosterior) => {
                trace.abort(k, cfg.n_experiments);
                break;
            }
            Err(e) => return Err(e),
        }
        trace.records.push(record(k, &grid, Some((&design, outcome)), truth, cfg));
        snapshot(k, &grid, &mut trace);
    }
    Ok(trace)
}
