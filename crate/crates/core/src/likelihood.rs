//! Measurement models for single-qubit phase estimation.
//!
//! An experiment evolves for time `t` under an unknown frequency `omega` and
//! applies an inversion phase `x` before measuring a qubit. The ideal outcome
//! probabilities are `cos^2((omega - x) t / 2)` and `sin^2((omega - x) t / 2)`;
//! dephasing mixes them towards `1/2` with weight `exp(-t / T2)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A single measured bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub fn bit(self) -> u8 {
        match self {
            Outcome::Zero => 0,
            Outcome::One => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Outcome::Zero),
            1 => Ok(Outcome::One),
            other => Err(invalid(format!("outcome bit must be 0 or 1, got {other}"))),
        }
    }
}

/// Settings of one experiment: evolution time and inversion phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub evolution_time: f64,
    pub inversion_phase: f64,
}

impl ExperimentDesign {
    pub fn new(evolution_time: f64, inversion_phase: f64) -> Result<Self> {
        if !(evolution_time > 0.0) || !evolution_time.is_finite() {
            return Err(invalid(format!(
                "evolution time must be positive and finite, got {evolution_time}"
            )));
        }
        if !inversion_phase.is_finite() {
            return Err(invalid("inversion phase must be finite"));
        }
        Ok(Self {
            evolution_time,
            inversion_phase,
        })
    }
}

/// Probability of `outcome` for the noiseless model.
pub fn likelihood_ideal(outcome: Outcome, omega: f64, design: &ExperimentDesign) -> f64 {
    let half_phase = 0.5 * (omega - design.inversion_phase) * design.evolution_time;
    match outcome {
        Outcome::Zero => half_phase.cos().powi(2),
        Outcome::One => half_phase.sin().powi(2),
    }
}

/// Probability of `outcome` with dephasing at a known coherence time `t2`.
pub fn likelihood_dephased(
    outcome: Outcome,
    omega: f64,
    t2: f64,
    design: &ExperimentDesign,
) -> Result<f64> {
    if !(t2 > 0.0) {
        return Err(Error::Domain(format!("T2 must be positive, got {t2}")));
    }
    Ok(likelihood_dephased_rate(outcome, omega, 1.0 / t2, design))
}

/// Dephased likelihood parameterised by the rate `theta = 1/T2`.
///
/// Negative rates are clamped to zero so the result stays a probability.
pub fn likelihood_dephased_rate(
    outcome: Outcome,
    omega: f64,
    rate: f64,
    design: &ExperimentDesign,
) -> f64 {
    let visibility = (-design.evolution_time * rate.max(0.0)).exp();
    visibility * likelihood_ideal(outcome, omega, design) + 0.5 * (1.0 - visibility)
}

/// Measurement model family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LikelihoodModel {
    Ideal,
    DephasingKnown { t2: f64 },
    /// `T2` is a nuisance parameter and must be supplied per hypothesis as a rate.
    DephasingUnknown,
}

impl LikelihoodModel {
    pub fn dephasing_known(t2: f64) -> Result<Self> {
        if !(t2 > 0.0) {
            return Err(Error::Domain(format!("T2 must be positive, got {t2}")));
        }
        Ok(LikelihoodModel::DephasingKnown { t2 })
    }

    /// Outcome probability for a hypothesis. `rate` (= 1/T2) is required by
    /// [`LikelihoodModel::DephasingUnknown`] and ignored otherwise.
    pub fn probability(
        &self,
        outcome: Outcome,
        omega: f64,
        rate: Option<f64>,
        design: &ExperimentDesign,
    ) -> Result<f64> {
        match *self {
            LikelihoodModel::Ideal => Ok(likelihood_ideal(outcome, omega, design)),
            LikelihoodModel::DephasingKnown { t2 } => likelihood_dephased(outcome, omega, t2, design),
            LikelihoodModel::DephasingUnknown => match rate {
                Some(rate) => Ok(likelihood_dephased_rate(outcome, omega, rate, design)),
                None => Err(invalid("dephasing-unknown model needs a dephasing rate")),
            },
        }
    }

    /// Returns a closure `omega -> P(outcome | omega)` for models without a
    /// nuisance parameter.
    pub fn fixed(&self, outcome: Outcome, design: ExperimentDesign) -> Result<impl Fn(f64) -> f64> {
        let rate = match *self {
            LikelihoodModel::Ideal => None,
            LikelihoodModel::DephasingKnown { t2 } => {
                if !(t2 > 0.0) {
                    return Err(Error::Domain(format!("T2 must be positive, got {t2}")));
                }
                Some(1.0 / t2)
            }
            LikelihoodModel::DephasingUnknown => {
                return Err(invalid("dephasing-unknown model needs a dephasing rate"))
            }
        };
        Ok(move |omega: f64| match rate {
            None => likelihood_ideal(outcome, omega, &design),
            Some(rate) => likelihood_dephased_rate(outcome, omega, rate, &design),
        })
    }
}

/// The hidden parameters a simulated experiment is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub omega_true: f64,
    /// `None` means no dephasing (`T2 = infinity`).
    pub t2_true: Option<f64>,
    pub seed: u64,
}

impl GroundTruth {
    pub fn probability_zero(&self, design: &ExperimentDesign) -> f64 {
        match self.t2_true {
            Some(t2) => likelihood_dephased_rate(Outcome::Zero, self.omega_true, 1.0 / t2, design),
            None => likelihood_ideal(Outcome::Zero, self.omega_true, design),
        }
    }
}

/// Draws one measurement outcome. Consumes exactly one uniform variate.
pub fn simulate_outcome<R: Rng + ?Sized>(
    truth: &GroundTruth,
    design: &ExperimentDesign,
    rng: &mut R,
) -> Outcome {
    let u: f64 = rng.random();
    if u < truth.probability_zero(design) {
        Outcome::Zero
    } else {
        Outcome::One
    }
}
