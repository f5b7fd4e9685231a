//! Parametric bootstrap calibration of the GPH statistic.
//!
//! Each replicate draws, for every group, `nᵢ` independent zero-mean Gaussian
//! curves with the group's estimated covariance, re-estimates means and
//! covariance diagonals from the replicate, and evaluates the GPH statistic of
//! every block with a zero target. All blocks of one row share one replicate.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::design::{Dataset, FunctionalSample, HypothesisFamily};
use crate::error::{Error, Result};
use crate::estimate::{centered, GroupMoments};
use crate::gph::{gph_statistic, BlockKernel};
use crate::numerics::{empirical_quantile, psd_factor, SeedSpec, PINV_RTOL};

/// How replicate curves `L·z` are generated from `γ̂ᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampler {
    /// `L = Xᵢᶜᵀ / √(nᵢ − 1)` with `Xᵢᶜ` the centered curves, so `L·Lᵀ = γ̂ᵢ`
    /// exactly and `z` has `nᵢ` entries. Scaling the data by `h` scales `L`
    /// by `h`, so replicates drawn with a shared seed scale along.
    #[default]
    CenteredData,
    /// `L` from the eigendecomposition of the materialized `m × m` `γ̂ᵢ`.
    Eigen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: SeedSpec,
    pub sampler: Sampler,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, alpha: f64, seed: u64) -> Result<Self> {
        let config = Self {
            replicates,
            alpha,
            seed: SeedSpec::new(seed),
            sampler: Sampler::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_sampler(mut self, sampler: Sampler) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("number of bootstrap replicates must be ≥ 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "significance level {} outside (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Square-root factors of the group covariances, `m × dᵢ` each.
#[derive(Debug, Clone)]
pub struct GroupFactors {
    factors: Vec<DMatrix<f64>>,
    sizes: Vec<usize>,
}

impl GroupFactors {
    pub fn new(data: &Dataset, sampler: Sampler) -> Result<Self> {
        match sampler {
            Sampler::CenteredData => Ok(Self::from_centered_data(data)),
            Sampler::Eigen => {
                let moments = GroupMoments::estimate(data, true)?;
                Self::from_moments(data, &moments)
            }
        }
    }

    pub fn from_centered_data(data: &Dataset) -> Self {
        let factors = data
            .samples()
            .iter()
            .map(|s| centered(s).transpose() / ((s.size() - 1) as f64).sqrt())
            .collect();
        Self {
            factors,
            sizes: data.group_sizes(),
        }
    }

    /// Requires `moments.cov_full`.
    pub fn from_moments(data: &Dataset, moments: &GroupMoments) -> Result<Self> {
        let full = moments.cov_full.as_ref().ok_or_else(|| {
            Error::Numeric("full covariance matrices were not materialized".into())
        })?;
        let factors = full
            .iter()
            .map(|c| psd_factor(c, PINV_RTOL))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            factors,
            sizes: data.group_sizes(),
        })
    }

    pub fn factor(&self, group: usize) -> &DMatrix<f64> {
        &self.factors[group]
    }

    /// Curves of group `i` for replicate `b`, `nᵢ × m`. Curve `j` consumes
    /// the `j`-th block of `dᵢ` normals from substream `(b, i)`.
    fn draw_group(&self, seed: &SeedSpec, b: usize, i: usize) -> DMatrix<f64> {
        let factor = &self.factors[i];
        let d = factor.ncols();
        let n = self.sizes[i];
        let mut rng = seed.stream(b as u64, i as u64);
        let mut z = DMatrix::zeros(n, d);
        for j in 0..n {
            for q in 0..d {
                z[(j, q)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        z * factor.transpose()
    }
}

/// Replicate dataset `b`: group `i` holds `nᵢ` draws from `GP(0, γ̂ᵢ)` on the
/// grid, taken from substream `(seed, b, i)`.
pub fn draw_bootstrap_dataset(
    data: &Dataset,
    factors: &GroupFactors,
    seed: &SeedSpec,
    b: usize,
) -> Result<Dataset> {
    let samples = (0..data.num_groups())
        .map(|i| FunctionalSample::new(i + 1, factors.draw_group(seed, b, i)))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(data.grid().clone(), samples)
}

/// `B × R` bootstrap statistics, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapMatrix {
    rows: usize,
    cols: usize,
    stats: Vec<f64>,
}

impl BootstrapMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let b = rows.len();
        if b == 0 {
            return Err(Error::Numeric("bootstrap matrix needs at least one row".into()));
        }
        let r = rows[0].len();
        if r == 0 || rows.iter().any(|row| row.len() != r) {
            return Err(Error::Numeric("bootstrap rows must share a positive length".into()));
        }
        let stats: Vec<f64> = rows.into_iter().flatten().collect();
        if stats.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("bootstrap matrix contains NaN".into()));
        }
        Ok(Self {
            rows: b,
            cols: r,
            stats,
        })
    }

    /// Number of replicates `B`.
    pub fn replicates(&self) -> usize {
        self.rows
    }

    /// Number of blocks `R`.
    pub fn blocks(&self) -> usize {
        self.cols
    }

    pub fn get(&self, b: usize, l: usize) -> f64 {
        self.stats[b * self.cols + l]
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.stats[b * self.cols..(b + 1) * self.cols]
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        (0..self.rows).map(|b| self.get(b, l)).collect()
    }
}

/// Runs the parametric bootstrap for every block of `family`.
pub fn bootstrap_matrix(
    data: &Dataset,
    family: &HypothesisFamily,
    config: &BootstrapConfig,
) -> Result<BootstrapMatrix> {
    config.validate()?;
    family.check_against(data)?;
    let factors = GroupFactors::new(data, config.sampler)?;
    let rows: Vec<Vec<f64>> = (0..config.replicates)
        .into_par_iter()
        .map_init(
            || ReplicateWorkspace::new(data, family),
            |ws, b| ws.replicate_row(data, &factors, &config.seed, b),
        )
        .collect();
    BootstrapMatrix::from_rows(rows)
}

struct ReplicateWorkspace {
    kernels: Vec<BlockKernel>,
    eta: Vec<f64>,
    sigma: Vec<f64>,
}

impl ReplicateWorkspace {
    fn new(data: &Dataset, family: &HypothesisFamily) -> Self {
        let k = data.num_groups();
        let m = data.grid_len();
        Self {
            kernels: family.blocks().iter().map(BlockKernel::new).collect(),
            eta: vec![0.0; k * m],
            sigma: vec![0.0; k * m],
        }
    }

    fn replicate_row(
        &mut self,
        data: &Dataset,
        factors: &GroupFactors,
        seed: &SeedSpec,
        b: usize,
    ) -> Vec<f64> {
        let k = data.num_groups();
        let m = data.grid_len();
        let n = data.total_size() as f64;
        for i in 0..k {
            let x = factors.draw_group(seed, b, i);
            let ni = x.nrows() as f64;
            for (j, col) in x.column_iter().enumerate() {
                let mean = col.sum() / ni;
                let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
                // grid-major layout: point j holds all k groups contiguously
                self.eta[j * k + i] = mean;
                self.sigma[j * k + i] = n / ni * ss / (ni - 1.0);
            }
        }
        let weights = data.grid().weights();
        self.kernels
            .iter_mut()
            .map(|kernel| {
                let mut total = 0.0;
                for j in 0..m {
                    let tf = n * kernel.quadratic_form(
                        &self.eta[j * k..(j + 1) * k],
                        &self.sigma[j * k..(j + 1) * k],
                        None,
                    );
                    total += weights[j] * tf;
                }
                total
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GlobalTestResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
}

/// Global test of a single-block family: reject iff the observed statistic
/// exceeds the empirical `(1 − α)`-quantile of the bootstrap statistics.
pub fn global_test(
    data: &Dataset,
    family: &HypothesisFamily,
    config: &BootstrapConfig,
) -> Result<GlobalTestResult> {
    if family.num_blocks() != 1 {
        return Err(Error::InvalidHypothesis(format!(
            "global test needs a single-block family, got {} blocks",
            family.num_blocks()
        )));
    }
    let observed = gph_statistic(data, family)?.per_block[0];
    let matrix = bootstrap_matrix(data, family, config)?;
    decide_global(observed, &matrix.column(0), config.alpha)
}

pub(crate) fn decide_global(observed: f64, column: &[f64], alpha: f64) -> Result<GlobalTestResult> {
    let critical_value = empirical_quantile(column, 1.0 - alpha)?;
    Ok(GlobalTestResult {
        statistic: observed,
        critical_value,
        p_value: exceedance_p_value(observed, column),
        reject: observed > critical_value,
    })
}

/// `#{b : stat_b ≥ observed} / B`.
pub fn exceedance_p_value(observed: f64, column: &[f64]) -> f64 {
    let count = column.iter().filter(|v| **v >= observed).count();
    count as f64 / column.len() as f64
}
