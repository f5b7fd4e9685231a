//! Group mean functions, covariance functions and the scaled diagonal
//! covariance `Σ̂`.

use nalgebra::{DMatrix, DVector};

use crate::design::{Dataset, FunctionalSample};
use crate::error::{Error, Result};

/// Column means of a sample's curves.
pub fn group_mean(sample: &FunctionalSample) -> DVector<f64> {
    sample.values().row_mean().transpose()
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceEstimate {
    /// `γ̂ᵢ(t_j, t_j)` for every grid point.
    Diagonal(DVector<f64>),
    /// `γ̂ᵢ(t_j, t_l)` on the full grid.
    Full(DMatrix<f64>),
}

impl CovarianceEstimate {
    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            CovarianceEstimate::Diagonal(d) => d.clone(),
            CovarianceEstimate::Full(m) => m.diagonal(),
        }
    }
}

/// Unbiased sample covariance with divisor `nᵢ − 1`, computed from centered
/// curves.
pub fn group_cov(sample: &FunctionalSample, diag_only: bool) -> Result<CovarianceEstimate> {
    let n = sample.size();
    if n < 2 {
        return Err(Error::InsufficientSample {
            group: sample.group_id(),
            size: n,
            required: 2,
        });
    }
    let centered = centered(sample);
    let denom = (n - 1) as f64;
    if diag_only {
        let d = DVector::from_iterator(
            centered.ncols(),
            centered.column_iter().map(|c| c.norm_squared() / denom),
        );
        Ok(CovarianceEstimate::Diagonal(d))
    } else {
        let mut full = centered.transpose() * &centered / denom;
        // exact symmetry for downstream eigensolvers
        for j in 0..full.ncols() {
            for l in 0..j {
                let v = 0.5 * (full[(j, l)] + full[(l, j)]);
                full[(j, l)] = v;
                full[(l, j)] = v;
            }
        }
        Ok(CovarianceEstimate::Full(full))
    }
}

/// Curves minus the group mean, `nᵢ × m`.
pub fn centered(sample: &FunctionalSample) -> DMatrix<f64> {
    let mean = sample.values().row_mean();
    let mut c = sample.values().clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c
}

/// Per-group moment estimates on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMoments {
    /// `k × m`, row `i` is `η̂ᵢ`.
    pub means: DMatrix<f64>,
    /// `k × m`, row `i` is `γ̂ᵢ(t, t)`.
    pub cov_diag: DMatrix<f64>,
    /// Full `m × m` covariances, only when requested.
    pub cov_full: Option<Vec<DMatrix<f64>>>,
}

impl GroupMoments {
    pub fn estimate(data: &Dataset, full_covariance: bool) -> Result<Self> {
        let k = data.num_groups();
        let m = data.grid_len();
        let mut means = DMatrix::zeros(k, m);
        let mut cov_diag = DMatrix::zeros(k, m);
        let mut full = full_covariance.then(|| Vec::with_capacity(k));
        for (i, s) in data.samples().iter().enumerate() {
            means.set_row(i, &group_mean(s).transpose());
            let cov = group_cov(s, !full_covariance)?;
            cov_diag.set_row(i, &cov.diagonal().transpose());
            if let (Some(list), CovarianceEstimate::Full(c)) = (full.as_mut(), cov) {
                list.push(c);
            }
        }
        Ok(Self {
            means,
            cov_diag,
            cov_full: full,
        })
    }

    pub fn num_groups(&self) -> usize {
        self.means.nrows()
    }
}

/// Diagonal of `Σ̂(t_j, t_j)` at every grid point, stored `k × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaHat {
    pub diag: DMatrix<f64>,
}

/// Entry `(i, j)` is `(n / nᵢ) · γ̂ᵢ(t_j, t_j)`.
pub fn sigma_hat(data: &Dataset, moments: &GroupMoments) -> SigmaHat {
    let n = data.total_size() as f64;
    let mut diag = moments.cov_diag.clone();
    for (i, s) in data.samples().iter().enumerate() {
        let factor = n / s.size() as f64;
        diag.row_mut(i).scale_mut(factor);
    }
    SigmaHat { diag }
}
