use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::smc::ParticleEnsemble;

/// Fourth-moment matrix of an ensemble and its eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct KurtosisReport {
    pub b: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` pairs with `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

impl KurtosisReport {
    pub fn leading_direction(&self) -> DVector<f64> {
        self.eigenvectors.column(0).into_owned()
    }
}

/// `B = sum_j w_j m_j (x_j - mu)(x_j - mu)^T` with the squared Mahalanobis
/// distance `m_j = (x_j - mu)^T Sigma^-1 (x_j - mu)`.
///
/// A singular covariance is regularised with `1e-12 * trace(Sigma)` on the
/// diagonal before giving up.
pub fn kurtosis_matrix(ens: &ParticleEnsemble) -> Result<KurtosisReport> {
    let d = ens.dim();
    let total = ens.total_weight();
    if !(total > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    let mu = ens.mean();
    let sigma = ens.covariance();
    let precision = match sigma.clone().try_inverse() {
        Some(p) if p.iter().all(|v| v.is_finite()) => p,
        _ => {
            let eps = 1e-12 * sigma.trace();
            if !(eps > 0.0) {
                return Err(Error::SingularCovariance("ensemble has zero spread".into()));
            }
            (sigma + DMatrix::identity(d, d) * eps)
                .try_inverse()
                .ok_or_else(|| Error::SingularCovariance("covariance stays singular after regularisation".into()))?
        }
    };
    let mut b = DMatrix::zeros(d, d);
    for (j, &w) in ens.weights().iter().enumerate() {
        let r = DVector::from_column_slice(ens.position(j)) - &mu;
        let m = (r.transpose() * &precision * &r)[0];
        b += (w / total * m) * &r * r.transpose();
    }
    let b = (&b + b.transpose()) * 0.5;

    let eig = SymmetricEigen::new(b.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
    Ok(KurtosisReport { b, eigenvalues, eigenvectors })
}

/// Coordinate axis with the largest `|component|` of the leading kurtosis
/// direction. Ties go to the lowest index.
pub fn select_grid_axis(ens: &ParticleEnsemble) -> Result<usize> {
    let report = kurtosis_matrix(ens)?;
    let v = report.leading_direction();
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    Ok(best)
}
