//! Weighted particle ensembles, Bayes weight updates and Liu-West resampling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Point-mass approximation `sum_j w_j delta(x - x_j)` in `dim` dimensions.
///
/// Positions are stored row-major: particle `j` occupies
/// `positions[j * dim..(j + 1) * dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("ensemble dimension must be at least 1"));
        }
        if weights.is_empty() {
            return Err(invalid("ensemble must contain at least one particle"));
        }
        if positions.len() != weights.len() * dim {
            return Err(invalid(format!(
                "{} coordinates do not match {} particles of dimension {dim}",
                positions.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("particle weights must be non-negative"));
        }
        Ok(Self { positions, weights, dim })
    }

    /// Equal-weight ensemble.
    pub fn uniform(positions: Vec<f64>, dim: usize) -> Result<Self> {
        let n = positions.len().checked_div(dim).unwrap_or(0);
        Self::new(positions, vec![1.0 / n.max(1) as f64; n], dim)
    }

    /// `n` one-dimensional particles drawn i.i.d. from `U[lo, hi)`.
    pub fn sample_uniform_1d<R: Rng + ?Sized>(lo: f64, hi: f64, n: usize, rng: &mut R) -> Result<Self> {
        if !(lo < hi) {
            return Err(invalid(format!("prior bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        let positions = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        Self::uniform(positions, 1)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, j: usize) -> &[f64] {
        &self.positions[j * self.dim..(j + 1) * self.dim]
    }

    /// Weighted mean vector (weights are normalised on the fly).
    pub fn mean(&self) -> DVector<f64> {
        let total = self.total_weight();
        let mut mu = DVector::zeros(self.dim);
        for (j, &w) in self.weights.iter().enumerate() {
            for (k, x) in self.position(j).iter().enumerate() {
                mu[k] += w * x;
            }
        }
        mu / total
    }

    /// Weighted covariance `sum_j w_j (x_j - mu)(x_j - mu)^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let total = self.total_weight();
        let mu = self.mean();
        let d = self.dim;
        let mut cov = DMatrix::zeros(d, d);
        for (j, &w) in self.weights.iter().enumerate() {
            let x = self.position(j);
            for r in 0..d {
                let dr = x[r] - mu[r];
                for c in r..d {
                    cov[(r, c)] += w * dr * (x[c] - mu[c]);
                }
            }
        }
        cov /= total;
        for r in 0..d {
            for c in 0..r {
                cov[(r, c)] = cov[(c, r)];
            }
        }
        cov
    }

    /// Mean of the first coordinate.
    pub fn mean_1d(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * self.positions[j * self.dim])
            .sum()
    }

    /// Variance of the first coordinate.
    pub fn variance_1d(&self) -> f64 {
        let mu = self.mean_1d();
        self.weights
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let d = self.positions[j * self.dim] - mu;
                w * d * d
            })
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Liu-West parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    /// Shrinkage towards the mean; the kernel bandwidth is `h = sqrt(1 - a^2)`.
    pub a: f64,
    /// Resample when `ESS / N` drops below this fraction.
    pub ess_threshold: f64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self { a: 0.98, ess_threshold: 0.5 }
    }
}

impl ResampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(invalid(format!("Liu-West a must lie in (0, 1], got {}", self.a)));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return Err(invalid(format!(
                "ESS threshold must lie in (0, 1], got {}",
                self.ess_threshold
            )));
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> f64 {
        (1.0 - self.a * self.a).max(0.0).sqrt()
    }

    pub fn should_resample(&self, ens: &ParticleEnsemble) -> bool {
        effective_sample_size(ens) < self.ess_threshold * ens.len() as f64
    }
}

/// Bayes update `w_j <- w_j L_j / sum_k w_k L_k`. Positions are untouched.
pub fn update_weights(ens: &ParticleEnsemble, likelihoods: &[f64]) -> Result<ParticleEnsemble> {
    if likelihoods.len() != ens.len() {
        return Err(invalid(format!(
            "expected {} likelihoods, got {}",
            ens.len(),
            likelihoods.len()
        )));
    }
    let mut weights: Vec<f64> = ens.weights.iter().zip(likelihoods).map(|(w, l)| w * l).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(ParticleEnsemble {
        positions: ens.positions.clone(),
        weights,
        dim: ens.dim,
    })
}

/// `1 / sum_j w_j^2`.
pub fn effective_sample_size(ens: &ParticleEnsemble) -> f64 {
    1.0 / ens.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Inverse-CDF categorical sampler over a weight vector.
pub(crate) struct Categorical {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl Categorical {
    pub(crate) fn new(weights: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        Ok(Self { cumulative, last_positive })
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.last_positive)
    }
}

/// Symmetric square root of a positive semi-definite matrix; `None` when the
/// matrix is numerically zero.
fn psd_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = m.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(scale > f64::MIN_POSITIVE) {
        return None;
    }
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Liu-West resampling to the same ensemble size.
pub fn liu_west_resample<R: Rng + ?Sized>(
    ens: &ParticleEnsemble,
    cfg: &ResampleConfig,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    liu_west_resample_to(ens, ens.len(), cfg, rng)
}

/// Liu-West resampling producing `n_out` equally weighted particles.
///
/// Each output picks a parent `j` with probability `w_j`, shrinks it towards
/// the ensemble mean (`a x_j + (1 - a) mu`) and adds Gaussian noise with
/// covariance `h^2 Sigma`. A collapsed ensemble (zero covariance) yields
/// the shrunk parents without noise.
pub fn liu_west_resample_to<R: Rng + ?Sized>(
    ens: &ParticleEnsemble,
    n_out: usize,
    cfg: &ResampleConfig,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    cfg.validate()?;
    if n_out == 0 {
        return Err(invalid("resampled ensemble must contain at least one particle"));
    }
    let total = ens.total_weight();
    if !(total > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    let d = ens.dim;
    let a = cfg.a;
    let h2 = 1.0 - a * a;
    let mu = ens.mean();
    let cov = ens.covariance() * h2;
    let chol = psd_sqrt(&cov);
    let picker = Categorical::new(&ens.weights)?;

    let mut positions = Vec::with_capacity(n_out * d);
    let mut noise = DVector::zeros(d);
    for _ in 0..n_out {
        let j = picker.sample(rng);
        let parent = ens.position(j);
        let base = positions.len();
        positions.extend(parent.iter().zip(mu.iter()).map(|(x, m)| a * x + (1.0 - a) * m));
        if let Some(l) = &chol {
            for z in noise.iter_mut() {
                *z = rng.sample(StandardNormal);
            }
            let kick = l * &noise;
            for (k, dk) in kick.iter().enumerate() {
                positions[base + k] += dk;
            }
        }
    }
    ParticleEnsemble::uniform(positions, d)
}
