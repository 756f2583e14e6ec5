use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridpe::filters::{Estimator, Heuristic, InversionPhase};
use gridpe::harness::{RunConfig, Study};

#[derive(Debug, Parser)]
#[command(name = "gridpe", about = "Adaptive-grid Bayesian phase estimation batches")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a batch of trials and write summary.json, median_error.csv and snapshots.
    Run(RunArgs),
    /// Run a single trial at a chosen frequency and write its grid snapshots.
    Snapshot {
        #[command(flatten)]
        run: RunArgs,
        /// True frequency of the trial (default: sampled like trial 0 of a batch).
        #[arg(long)]
        omega: Option<f64>,
    },
    /// Print grid-count percentiles recomputed from stored summaries.
    Table {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
    /// Print the version.
    Version,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StudyArg {
    GridIdeal,
    LwIdeal,
    GridDephased,
    Hybrid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    PosteriorMean,
    MaxDensity,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HeuristicArg {
    PghPair,
    SigmaScaled,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InversionArg {
    Heuristic,
    Zero,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML file with RunConfig fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub study: Option<StudyArg>,
    #[arg(long, allow_hyphen_values = true)]
    pub prior_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub prior_hi: Option<f64>,
    #[arg(long)]
    pub w_th: Option<f64>,
    #[arg(long)]
    pub e_th: Option<f64>,
    /// True T2: a number, `inf`, or a multiple of pi such as `50pi`.
    #[arg(long, value_parser = parse_t2)]
    pub t2: Option<T2>,
    /// Shortest evolution time an experiment may use.
    #[arg(long)]
    pub t_min: Option<f64>,
    /// Longest evolution time an experiment may use.
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub experiments: Option<usize>,
    /// Liu-West particle count.
    #[arg(long)]
    pub particles: Option<usize>,
    /// Initial grid cells (grid studies).
    #[arg(long)]
    pub n_initial: Option<usize>,
    /// Initial frequency cells of the hybrid filter.
    #[arg(long)]
    pub n1: Option<usize>,
    /// Rate particles per cell of the hybrid filter.
    #[arg(long)]
    pub n2: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated experiment indices at which trial 0 keeps its grid.
    #[arg(long, value_delimiter = ',')]
    pub snapshot_at: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    #[arg(long, value_enum)]
    pub heuristic: Option<HeuristicArg>,
    /// Inversion phase of each experiment: the heuristic's proposal or always zero.
    #[arg(long, value_enum)]
    pub inversion: Option<InversionArg>,
    /// Split cells repeatedly until none exceeds the error-density threshold.
    #[arg(long)]
    pub multi_pass: bool,
    /// Measure errors modulo 2 pi.
    #[arg(long)]
    pub circular_error: bool,
}

/// `None` is an infinite T2.
#[derive(Debug, Clone, Copy)]
pub struct T2(pub Option<f64>);

pub fn parse_t2(s: &str) -> Result<T2, String> {
    let s = s.trim().to_ascii_lowercase();
    if s == "inf" || s == "infinity" {
        return Ok(T2(None));
    }
    let value = match s.strip_suffix("pi") {
        Some(head) => {
            let head = head.trim_end_matches('*').trim();
            let k = if head.is_empty() { 1.0 } else { head.parse::<f64>().map_err(|e| e.to_string())? };
            k * std::f64::consts::PI
        }
        None => s.parse::<f64>().map_err(|e| e.to_string())?,
    };
    if value.is_infinite() {
        Ok(T2(None))
    } else if value > 0.0 {
        Ok(T2(Some(value)))
    } else {
        Err(format!("T2 must be positive, got {value}"))
    }
}

impl RunArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.study {
            cfg.study = match s {
                StudyArg::GridIdeal => Study::GridIdeal,
                StudyArg::LwIdeal => Study::LwIdeal,
                StudyArg::GridDephased => Study::GridDephased,
                StudyArg::Hybrid => Study::Hybrid,
            };
        }
        if let Some(e) = self.estimator {
            cfg.estimator = match e {
                EstimatorArg::PosteriorMean => Estimator::PosteriorMean,
                EstimatorArg::MaxDensity => Estimator::MaxDensity,
            };
        }
        if let Some(h) = self.heuristic {
            cfg.heuristic = match h {
                HeuristicArg::PghPair => Heuristic::PghPair,
                HeuristicArg::SigmaScaled => Heuristic::SigmaScaled,
            };
        }
        if let Some(x) = self.inversion {
            cfg.inversion_phase = match x {
                InversionArg::Heuristic => InversionPhase::Heuristic,
                InversionArg::Zero => InversionPhase::Zero,
            };
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = &self.$flag { cfg.$field = v.clone(); })*
            };
        }
        set!(prior_lo => prior_lo, prior_hi => prior_hi, w_th => w_th, e_th => e_th,
             trials => n_trials, experiments => n_experiments, particles => n_particles,
             n_initial => n_initial, n1 => n1, t_min => t_min, t_max => t_max, n2 => n2, seed => master_seed,
             snapshot_at => snapshot_schedule);
        if let Some(T2(t2)) = self.t2 {
            cfg.t2_true = t2;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        cfg.multi_pass_refine |= self.multi_pass;
        cfg.circular_error |= self.circular_error;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t2_forms() {
        let pi = std::f64::consts::PI;
        assert_eq!(parse_t2("inf").unwrap().0, None);
        assert_eq!(parse_t2("50pi").unwrap().0, Some(50.0 * pi));
        assert_eq!(parse_t2("50*pi").unwrap().0, Some(50.0 * pi));
        assert_eq!(parse_t2("pi").unwrap().0, Some(pi));
        assert_eq!(parse_t2("12.5").unwrap().0, Some(12.5));
        assert!(parse_t2("-3").is_err());
        assert!(parse_t2("abc").is_err());
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "gridpe", "run", "--study", "hybrid", "--t2", "50pi", "--prior-lo", "-1", "--snapshot-at", "0,10",
            "--multi-pass",
        ])
        .unwrap();
        let Command::Run(args) = cli.command else { panic!() };
        let mut cfg = RunConfig::default();
        args.apply(&mut cfg);
        assert_eq!(cfg.study, Study::Hybrid);
        assert_eq!(cfg.prior_lo, -1.0);
        assert_eq!(cfg.snapshot_schedule, vec![0, 10]);
        assert!(cfg.multi_pass_refine);
        assert!(cfg.t2_true.is_some());
    }
}
