//! Comparison tests for homoscedastic and heteroscedastic FANOVA:
//!
//! * Fmax and GPF, the supremum and integral of the point-wise F-ratio,
//!   calibrated with a pooled nonparametric bootstrap of residual curves;
//! * L2b and Fb, the integrated between-group sum of squares and its
//!   F-type normalization, calibrated with a groupwise nonparametric
//!   bootstrap.
//!
//! Replicate statistics are recentered at `c* = H η̂` so that replicates
//! mimic the null hypothesis. Points with zero pooled variance contribute 0
//! to the F-ratio.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap::{exceedance_p_value, BootstrapConfig};
use crate::design::{Dataset, HypothesisFamily};
use crate::error::{Error, Result};
use crate::estimate::GroupMoments;
use crate::gph::BlockKernel;
use crate::numerics::{pinv, PINV_RTOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CompetitorMethod {
    Fmax,
    #[serde(rename = "GPF")]
    Gpf,
    L2b,
    Fb,
}

impl fmt::Display for CompetitorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompetitorMethod::Fmax => "Fmax",
            CompetitorMethod::Gpf => "GPF",
            CompetitorMethod::L2b => "L2b",
            CompetitorMethod::Fb => "Fb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompetitorResult {
    pub method: CompetitorMethod,
    pub statistic: f64,
    pub p_value: f64,
}

const POOLED_STREAM: u64 = 0x706f_6f6c;
const GROUPWISE_STREAM: u64 = 0x6772_7077;

/// `SSH_n(t_j) = (Hη̂ − c)ᵀ (H D_n Hᵀ)⁺ (Hη̂ − c)`, `D_n = diag(1/nᵢ)`.
pub fn ssh_pointwise(
    data: &Dataset,
    moments: &GroupMoments,
    h: &DMatrix<f64>,
    c_row: Option<&[f64]>,
    j: usize,
) -> Result<f64> {
    if h.ncols() != data.num_groups() || j >= data.grid_len() {
        return Err(Error::InvalidHypothesis(format!(
            "hypothesis with {} columns at grid index {j} does not fit {} groups on {} points",
            h.ncols(),
            data.num_groups(),
            data.grid_len()
        )));
    }
    let inv_sizes: Vec<f64> = data.group_sizes().iter().map(|n| 1.0 / *n as f64).collect();
    let mut kernel = BlockKernel::new(h);
    Ok(kernel.quadratic_form(moments.means.column(j).as_slice(), &inv_sizes, c_row))
}

/// `A_n = D^{1/2} Hᵀ (H D Hᵀ)⁺ H D^{1/2}`.
pub fn projection_matrix(h: &DMatrix<f64>, sizes: &[usize]) -> Result<DMatrix<f64>> {
    let d = DVector::from_iterator(sizes.len(), sizes.iter().map(|n| 1.0 / *n as f64));
    let d_half = DMatrix::from_diagonal(&d.map(f64::sqrt));
    let hdh = h * DMatrix::from_diagonal(&d) * h.transpose();
    let inner = pinv(&hdh, PINV_RTOL)?;
    Ok(&d_half * h.transpose() * inner * h * &d_half)
}

fn numeric_rank(h: &DMatrix<f64>) -> usize {
    let sv = h.clone().singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > PINV_RTOL * max).count()
}

/// Fmax, GPF, L2b and Fb of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BlockStats {
    pub fmax: f64,
    pub gpf: f64,
    pub l2b: f64,
    pub fb: f64,
}

/// Everything needed to evaluate the statistics of every block on the
/// observed data or on a replicate.
struct Evaluator {
    k: usize,
    m: usize,
    sizes: Vec<usize>,
    inv_sizes: Vec<f64>,
    weights: Vec<f64>,
    kernels: Vec<BlockKernel>,
    ranks: Vec<f64>,
    /// diagonal of `A_n` per block
    a_diag: Vec<Vec<f64>>,
}

impl Evaluator {
    fn new(data: &Dataset, family: &HypothesisFamily) -> Result<Self> {
        family.check_against(data)?;
        let sizes = data.group_sizes();
        let a_diag = family
            .blocks()
            .iter()
            .map(|h| projection_matrix(h, &sizes).map(|a| a.diagonal().iter().copied().collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(Self {
            k: data.num_groups(),
            m: data.grid_len(),
            inv_sizes: sizes.iter().map(|n| 1.0 / *n as f64).collect(),
            sizes,
            weights: data.grid().weights().to_vec(),
            kernels: family.blocks().iter().map(BlockKernel::new).collect(),
            ranks: family.blocks().iter().map(|h| numeric_rank(h) as f64).collect(),
            a_diag,
        })
    }

    /// `means`, `vars` grid-major (`k` values per point); `targets[l]` is
    /// grid-major `r_ℓ` values per point.
    fn evaluate(&mut self, means: &[f64], vars: &[f64], targets: &[Option<Vec<f64>>]) -> Vec<BlockStats> {
        let (k, m) = (self.k, self.m);
        let n: usize = self.sizes.iter().sum();
        let dof = (n - k) as f64;
        let mut pooled = vec![0.0; m];
        let mut var_integrals = vec![0.0; k];
        for j in 0..m {
            let v = &vars[j * k..(j + 1) * k];
            pooled[j] = v
                .iter()
                .zip(&self.sizes)
                .map(|(g, ni)| (*ni as f64 - 1.0) * g)
                .sum::<f64>()
                / dof;
            for i in 0..k {
                var_integrals[i] += self.weights[j] * v[i];
            }
        }
        let mut out = Vec::with_capacity(self.kernels.len());
        for (l, kernel) in self.kernels.iter_mut().enumerate() {
            let rows = targets[l].as_ref().map(|t| t.len() / m);
            let mut fmax = 0.0_f64;
            let mut gpf = 0.0;
            let mut l2b = 0.0;
            for j in 0..m {
                let c = targets[l]
                    .as_ref()
                    .zip(rows)
                    .map(|(t, r)| &t[j * r..(j + 1) * r]);
                let ssh = kernel.quadratic_form(&means[j * k..(j + 1) * k], &self.inv_sizes, c);
                let f = if pooled[j] > 0.0 && self.ranks[l] > 0.0 {
                    ssh / self.ranks[l] / pooled[j]
                } else {
                    0.0
                };
                fmax = fmax.max(f);
                gpf += self.weights[j] * f;
                l2b += self.weights[j] * ssh;
            }
            let denom: f64 = self.a_diag[l]
                .iter()
                .zip(&var_integrals)
                .map(|(a, v)| a * v)
                .sum();
            let fb = if denom > 0.0 { l2b / denom } else { 0.0 };
            out.push(BlockStats { fmax, gpf, l2b, fb });
        }
        out
    }
}

/// Group curves as rows, plus grid-major means and variances.
struct Curves {
    k: usize,
    m: usize,
    rows: Vec<Vec<Vec<f64>>>,
}

impl Curves {
    fn new(data: &Dataset) -> Self {
        let rows = data
            .samples()
            .iter()
            .map(|s| {
                s.values()
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect()
            })
            .collect();
        Self {
            k: data.num_groups(),
            m: data.grid_len(),
            rows,
        }
    }

    /// Means and variances of the curves `pick(i, j)` for `j < nᵢ`.
    fn moments<'a>(&self, pick: impl Fn(usize, usize) -> &'a [f64]) -> (Vec<f64>, Vec<f64>) {
        let (k, m) = (self.k, self.m);
        let mut means = vec![0.0; k * m];
        let mut vars = vec![0.0; k * m];
        for i in 0..k {
            let ni = self.rows[i].len();
            let nf = ni as f64;
            for j in 0..m {
                let mut s = 0.0;
                for q in 0..ni {
                    s += pick(i, q)[j];
                }
                let mean = s / nf;
                let mut ss = 0.0;
                for q in 0..ni {
                    let d = pick(i, q)[j] - mean;
                    ss += d * d;
                }
                means[j * k + i] = mean;
                vars[j * k + i] = ss / (nf - 1.0);
            }
        }
        (means, vars)
    }
}

fn observed_targets(family: &HypothesisFamily, m: usize) -> Vec<Option<Vec<f64>>> {
    (0..family.num_blocks())
        .map(|l| {
            family.block_target(l).map(|t| {
                let r = t.nrows();
                let mut flat = Vec::with_capacity(r * m);
                for j in 0..m {
                    for a in 0..r {
                        flat.push(t[(a, j)]);
                    }
                }
                flat
            })
        })
        .collect()
}

/// `H_ℓ η̂(t_j)` for every block, grid-major.
fn recentering_targets(family: &HypothesisFamily, means: &[f64], k: usize, m: usize) -> Vec<Option<Vec<f64>>> {
    family
        .blocks()
        .iter()
        .map(|h| {
            let r = h.nrows();
            let mut flat = Vec::with_capacity(r * m);
            for j in 0..m {
                let eta = &means[j * k..(j + 1) * k];
                for a in 0..r {
                    flat.push((0..k).map(|i| h[(a, i)] * eta[i]).sum());
                }
            }
            Some(flat)
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Resampling {
    Pooled,
    Groupwise,
}

/// Observed statistics and `B` replicate statistics for every block.
fn run(
    data: &Dataset,
    family: &HypothesisFamily,
    config: &BootstrapConfig,
    scheme: Resampling,
) -> Result<(Vec<BlockStats>, Vec<Vec<BlockStats>>)> {
    config.validate()?;
    let mut evaluator = Evaluator::new(data, family)?;
    let curves = Curves::new(data);
    let (k, m) = (curves.k, curves.m);
    let (means, vars) = curves.moments(|i, q| &curves.rows[i][q]);
    let observed = evaluator.evaluate(&means, &vars, &observed_targets(family, m));
    let recentered = recentering_targets(family, &means, k, m);

    let residuals: Vec<Vec<f64>> = match scheme {
        Resampling::Pooled => (0..k)
            .flat_map(|i| {
                let means = &means;
                curves.rows[i].iter().map(move |row| {
                    row.iter()
                        .enumerate()
                        .map(|(j, v)| v - means[j * k + i])
                        .collect()
                })
            })
            .collect(),
        Resampling::Groupwise => Vec::new(),
    };
    let seed = config.seed.derive(
        match scheme {
            Resampling::Pooled => POOLED_STREAM,
            Resampling::Groupwise => GROUPWISE_STREAM,
        },
        0,
    );
    let replicates: Vec<Vec<BlockStats>> = (0..config.replicates)
        .into_par_iter()
        .map_init(
            || Evaluator::new(data, family).expect("validated above"),
            |ev, b| {
                let mut rng = seed.stream(b as u64, 0);
                let replicate: Vec<Vec<Vec<f64>>> = (0..k)
                    .map(|i| {
                        let ni = curves.rows[i].len();
                        (0..ni)
                            .map(|_| match scheme {
                                Resampling::Pooled => {
                                    let v = &residuals[rng.random_range(0..residuals.len())];
                                    v.iter()
                                        .enumerate()
                                        .map(|(j, x)| x + means[j * k + i])
                                        .collect()
                                }
                                Resampling::Groupwise => {
                                    curves.rows[i][rng.random_range(0..ni)].clone()
                                }
                            })
                            .collect()
                    })
                    .collect();
                let (rm, rv) = curves.moments(|i, q| &replicate[i][q]);
                ev.evaluate(&rm, &rv, &recentered)
            },
        )
        .collect();
    Ok((observed, replicates))
}

fn p_value(observed: f64, replicates: &[Vec<BlockStats>], l: usize, f: impl Fn(&BlockStats) -> f64) -> f64 {
    let column: Vec<f64> = replicates.iter().map(|row| f(&row[l])).collect();
    exceedance_p_value(observed, &column)
}

/// Fmax and GPF for every block, pooled bootstrap p-values.
pub fn pooled_bootstrap_tests(
    data: &Dataset,
    family: &HypothesisFamily,
    config: &BootstrapConfig,
) -> Result<Vec<[CompetitorResult; 2]>> {
    let (obs, reps) = run(data, family, config, Resampling::Pooled)?;
    Ok(obs
        .iter()
        .enumerate()
        .map(|(l, s)| {
            [
                CompetitorResult {
                    method: CompetitorMethod::Fmax,
                    statistic: s.fmax,
                    p_value: p_value(s.fmax, &reps, l, |x| x.fmax),
                },
                CompetitorResult {
                    method: CompetitorMethod::Gpf,
                    statistic: s.gpf,
                    p_value: p_value(s.gpf, &reps, l, |x| x.gpf),
                },
            ]
        })
        .collect())
}

/// L2b and Fb for every block, groupwise bootstrap p-values.
pub fn groupwise_bootstrap_tests(
    data: &Dataset,
    family: &HypothesisFamily,
    config: &BootstrapConfig,
) -> Result<Vec<[CompetitorResult; 2]>> {
    let (obs, reps) = run(data, family, config, Resampling::Groupwise)?;
    Ok(obs
        .iter()
        .enumerate()
        .map(|(l, s)| {
            [
                CompetitorResult {
                    method: CompetitorMethod::L2b,
                    statistic: s.l2b,
                    p_value: p_value(s.l2b, &reps, l, |x| x.l2b),
                },
                CompetitorResult {
                    method: CompetitorMethod::Fb,
                    statistic: s.fb,
                    p_value: p_value(s.fb, &reps, l, |x| x.fb),
                },
            ]
        })
        .collect())
}

fn single_block(family: &HypothesisFamily) -> Result<()> {
    if family.num_blocks() != 1 {
        return Err(Error::InvalidHypothesis(format!(
            "global test needs a single-block family, got {} blocks",
            family.num_blocks()
        )));
    }
    Ok(())
}

/// Global Fmax and GPF tests of a single-block family.
pub fn fmax_gpf(
    data: &Dataset,
    family: &HypothesisFamily,
    config: &BootstrapConfig,
) -> Result<[CompetitorResult; 2]> {
    single_block(family)?;
    Ok(pooled_bootstrap_tests(data, family, config)?[0])
}

/// Global L2b and Fb tests of a single-block family.
pub fn l2b_fb(
    data: &Dataset,
    family: &HypothesisFamily,
    config: &BootstrapConfig,
) -> Result<[CompetitorResult; 2]> {
    single_block(family)?;
    Ok(groupwise_bootstrap_tests(data, family, config)?[0])
}

/// Observed Fmax, GPF, L2b and Fb of every block, without bootstrap.
pub fn competitor_statistics(data: &Dataset, family: &HypothesisFamily) -> Result<Vec<[f64; 4]>> {
    let mut evaluator = Evaluator::new(data, family)?;
    let curves = Curves::new(data);
    let (means, vars) = curves.moments(|i, q| &curves.rows[i][q]);
    Ok(evaluator
        .evaluate(&means, &vars, &observed_targets(family, curves.m))
        .into_iter()
        .map(|s| [s.fmax, s.gpf, s.l2b, s.fb])
        .collect())
}
