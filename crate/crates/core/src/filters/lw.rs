use super::{estimate, estimation_error, FilterConfig, Posterior, TraceRecord, TrialRngs, TrialTrace};
use crate::error::{invalid, Error, Result};
use crate::likelihood::{simulate_outcome, ExperimentDesign, GroundTruth, LikelihoodModel, Outcome};
use crate::smc::{liu_west_resample, update_weights, ParticleEnsemble};

fn record(
    k: usize,
    ens: &ParticleEnsemble,
    step: Option<(&ExperimentDesign, Outcome)>,
    truth: &GroundTruth,
    cfg: &FilterConfig,
) -> TraceRecord {
    let est = estimate(ens, cfg.estimator);
    TraceRecord {
        experiment: k,
        evolution_time: step.map(|(d, _)| d.evolution_time),
        inversion_phase: step.map(|(d, _)| d.inversion_phase),
        outcome: step.map(|(_, o)| o.bit()),
        estimate: est,
        abs_error: estimation_error(est, truth.omega_true, cfg.circular_error),
        posterior_std: ens.posterior_std(),
        theta_estimate: None,
        theta_rel_error: None,
        count: ens.len(),
    }
}

/// Sequential Monte Carlo with Liu-West resampling.
///
/// Particles start i.i.d. uniform on the prior. After each Bayes update the
/// estimate is recorded, then the ensemble is resampled if its effective
/// sample size fell below `cfg.resample.ess_threshold * n_particles`.
pub fn run_lw_trial(
    truth: &GroundTruth,
    model: &LikelihoodModel,
    n_particles: usize,
    cfg: &FilterConfig,
) -> Result<TrialTrace> {
    cfg.validate()?;
    if n_particles < 2 {
        return Err(invalid(format!("need at least 2 particles, got {n_particles}")));
    }
    let mut rngs = TrialRngs::new(truth.seed);
    let mut ens = ParticleEnsemble::sample_uniform_1d(cfg.prior_lo, cfg.prior_hi, n_particles, &mut rngs.filter)?;
    let mut trace = TrialTrace {
        omega_true: truth.omega_true,
        t2_true: truth.t2_true,
        seed: truth.seed,
        records: vec![record(0, &ens, None, truth, cfg)],
        failed_at: None,
        snapshots: Vec::new(),
    };
    for k in 1..=cfg.n_experiments {
        let design = cfg.next_design(&ens, &mut rngs.filter);
        let outcome = simulate_outcome(truth, &design, &mut rngs.outcomes);
        let likelihood = model.fixed(outcome, design)?;
        let l: Vec<f64> = (0..ens.len()).map(|j| likelihood(ens.position(j)[0])).collect();
        ens = match update_weights(&ens, &l) {
            Ok(e) => e,
            Err(Error::DegeneratePosterior) => {
                trace.abort(k, cfg.n_experiments);
                break;
            }
            Err(e) => return Err(e),
        };
        trace.records.push(record(k, &ens, Some((&design, outcome)), truth, cfg));
        if cfg.resample.should_resample(&ens) {
            ens = liu_west_resample(&ens, &cfg.resample, &mut rngs.filter)?;
        }
    }
    Ok(trace)
}
