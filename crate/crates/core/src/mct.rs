//! Multiple contrast testing (mGPH).
//!
//! All blocks share one calibrated level `β̃`: the largest `β` on the grid
//! `{0, 1/B, …, (B−1)/B}` for which the bootstrap family-wise error rate of
//! the per-block `(1 − β)`-quantiles stays at or below `α`. Block `ℓ` is
//! rejected when its observed statistic exceeds `q_{ℓ,β̃}`; the global
//! hypothesis is rejected exactly when some block is.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bootstrap::{bootstrap_matrix, BootstrapConfig, BootstrapMatrix};
use crate::design::{Dataset, HypothesisFamily};
use crate::error::{Error, Result};
use crate::gph::gph_statistic;
use crate::numerics::empirical_quantile;

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MctResult {
    pub observed: Vec<f64>,
    pub beta_tilde: f64,
    pub critical: Vec<f64>,
    pub local_reject: Vec<bool>,
    pub global_reject: bool,
    pub adjusted_p: Vec<f64>,
}

/// Bootstrap FWER at level `β`: share of rows with some entry strictly above
/// its column's empirical `(1 − β)`-quantile.
pub fn fwer_at(beta: f64, matrix: &BootstrapMatrix) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Numeric(format!("β = {beta} outside [0, 1)")));
    }
    let quantiles = (0..matrix.blocks())
        .map(|l| empirical_quantile(&matrix.column(l), 1.0 - beta))
        .collect::<Result<Vec<_>>>()?;
    let hits = (0..matrix.replicates())
        .filter(|&b| {
            matrix
                .row(b)
                .iter()
                .zip(&quantiles)
                .any(|(v, q)| v > q)
        })
        .count();
    Ok(hits as f64 / matrix.replicates() as f64)
}

/// Exceedance structure of a bootstrap matrix on the β grid.
///
/// With ascending column values `s`, the quantile at `β = j/B` is
/// `s[B − 1 − j]`, and a value `x` exceeds it iff `j ≥ B − #{s < x}`. Each
/// row therefore first counts towards the FWER at the smallest such `j`
/// over its columns, and the whole FWER curve follows from one pass.
#[derive(Debug, Clone)]
pub struct FwerProfile {
    replicates: usize,
    sorted: Vec<Vec<f64>>,
    /// `cumulative[j]` = number of rows exceeding at grid index `j`
    cumulative: Vec<usize>,
}

impl FwerProfile {
    pub fn new(matrix: &BootstrapMatrix) -> Self {
        let b = matrix.replicates();
        let sorted: Vec<Vec<f64>> = (0..matrix.blocks())
            .map(|l| {
                let mut c = matrix.column(l);
                c.sort_by(f64::total_cmp);
                c
            })
            .collect();
        let mut first_hit = vec![0usize; b + 1];
        for row in 0..b {
            let j = matrix
                .row(row)
                .iter()
                .zip(&sorted)
                .map(|(x, s)| b - s.partition_point(|v| v < x))
                .min()
                .unwrap_or(b);
            first_hit[j] += 1;
        }
        let mut cumulative = Vec::with_capacity(b);
        let mut acc = 0;
        for count in first_hit.iter().take(b) {
            acc += count;
            cumulative.push(acc);
        }
        Self {
            replicates: b,
            sorted,
            cumulative,
        }
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn blocks(&self) -> usize {
        self.sorted.len()
    }

    /// FWER at `β = j/B` as a count of rows.
    pub fn exceed_count(&self, j: usize) -> usize {
        self.cumulative[j]
    }

    /// Empirical `(1 − j/B)`-quantile of column `l`.
    pub fn quantile(&self, l: usize, j: usize) -> f64 {
        self.sorted[l][self.replicates - 1 - j]
    }

    /// Search interval `[⌊Bα/R⌋, min(⌊Bα⌋, B − 1)]` in grid units.
    pub fn search_interval(&self, alpha: f64) -> (usize, usize) {
        let b = self.replicates as f64;
        let lo = (b * alpha / self.blocks() as f64 + GRID_EPS).floor() as usize;
        let hi = ((b * alpha + GRID_EPS).floor() as usize).min(self.replicates - 1);
        (lo.min(hi), hi)
    }

    fn feasible(&self, j: usize, alpha: f64) -> bool {
        self.exceed_count(j) as f64 / self.replicates as f64 <= alpha
    }

    /// Grid index of `β̃`, found by bisection over the search interval.
    pub fn beta_index(&self, alpha: f64) -> usize {
        let (mut lo, mut hi) = self.search_interval(alpha);
        // the lower endpoint is always feasible (union bound)
        debug_assert!(self.feasible(lo, alpha));
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if self.feasible(mid, alpha) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Same as [`FwerProfile::beta_index`] by scanning every grid point.
    pub fn beta_index_linear(&self, alpha: f64) -> usize {
        let (lo, hi) = self.search_interval(alpha);
        (lo..=hi)
            .rev()
            .find(|&j| self.feasible(j, alpha))
            .unwrap_or(lo)
    }

    /// Local decisions at level `alpha`.
    pub fn decide(&self, observed: &[f64], alpha: f64) -> (usize, Vec<f64>, Vec<bool>) {
        let j = self.beta_index(alpha);
        let critical: Vec<f64> = (0..self.blocks()).map(|l| self.quantile(l, j)).collect();
        let reject = observed
            .iter()
            .zip(&critical)
            .map(|(t, q)| exceeds(*t, *q))
            .collect();
        (j, critical, reject)
    }
}

/// `t / q > 1` with `0/0 := 1`.
fn exceeds(t: f64, q: f64) -> bool {
    if q == 0.0 {
        t > 0.0
    } else {
        t / q > 1.0
    }
}

/// `β̃` for a bootstrap matrix and significance level `alpha`.
pub fn beta_tilde(matrix: &BootstrapMatrix, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let profile = FwerProfile::new(matrix);
    Ok(profile.beta_index(alpha) as f64 / matrix.replicates() as f64)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("significance level {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Smallest level `a/B`, `a ∈ {1, …, B}`, at which each block is rejected;
/// 1 when it is never rejected.
pub fn adjusted_pvalues(observed: &[f64], matrix: &BootstrapMatrix) -> Result<Vec<f64>> {
    if observed.len() != matrix.blocks() {
        return Err(Error::InvalidHypothesis(format!(
            "{} observed statistics for {} bootstrap columns",
            observed.len(),
            matrix.blocks()
        )));
    }
    Ok(adjusted_from_profile(observed, &FwerProfile::new(matrix)))
}

fn adjusted_from_profile(observed: &[f64], profile: &FwerProfile) -> Vec<f64> {
    let b = profile.replicates();
    let mut adjusted = vec![1.0; observed.len()];
    let mut open: Vec<usize> = (0..observed.len()).collect();
    // β̃ grows with the level, so each block is rejected from some level on.
    for a in 1..=b {
        if open.is_empty() {
            break;
        }
        let level = a as f64 / b as f64;
        let j = if a == b {
            b - 1
        } else {
            profile.beta_index(level)
        };
        open.retain(|&l| {
            if exceeds(observed[l], profile.quantile(l, j)) {
                adjusted[l] = level;
                false
            } else {
                true
            }
        });
    }
    adjusted
}

/// mGPH decisions from observed statistics and a bootstrap matrix.
pub fn mct_from_matrix(observed: &[f64], matrix: &BootstrapMatrix, alpha: f64) -> Result<MctResult> {
    check_alpha(alpha)?;
    if observed.len() != matrix.blocks() {
        return Err(Error::InvalidHypothesis(format!(
            "{} observed statistics for {} bootstrap columns",
            observed.len(),
            matrix.blocks()
        )));
    }
    let profile = FwerProfile::new(matrix);
    let (j, critical, local_reject) = profile.decide(observed, alpha);
    Ok(MctResult {
        observed: observed.to_vec(),
        beta_tilde: j as f64 / matrix.replicates() as f64,
        critical,
        global_reject: local_reject.iter().any(|r| *r),
        local_reject,
        adjusted_p: adjusted_from_profile(observed, &profile),
    })
}

/// Runs the full mGPH procedure on a dataset.
pub fn mct_test(
    data: &Dataset,
    family: &HypothesisFamily,
    config: &BootstrapConfig,
) -> Result<MctResult> {
    Ok(mct_run(data, family, config)?.0)
}

/// mGPH result together with the bootstrap matrix it was computed from.
pub fn mct_run(
    data: &Dataset,
    family: &HypothesisFamily,
    config: &BootstrapConfig,
) -> Result<(MctResult, BootstrapMatrix)> {
    let observed = gph_statistic(data, family)?.per_block;
    let matrix = bootstrap_matrix(data, family, config)?;
    let result = mct_from_matrix(&observed, &matrix, config.alpha)?;
    Ok((result, matrix))
}

/// Whether the candidate `ξ` (`r_ℓ × m`) lies in the simultaneous
/// confidence region of block `l`, i.e. `T_n(H_ℓ, ξ) ≤ q_{ℓ,β̃}`.
pub fn confidence_region_contains(
    data: &Dataset,
    family: &HypothesisFamily,
    l: usize,
    xi: &DMatrix<f64>,
    result: &MctResult,
) -> Result<bool> {
    if l >= family.num_blocks() || l >= result.critical.len() {
        return Err(Error::InvalidHypothesis(format!("no block {l}")));
    }
    let block = HypothesisFamily::new(
        vec![family.block(l).clone()],
        vec![family.labels()[l].clone()],
    )?
    .with_target(xi.clone())?;
    let stat = gph_statistic(data, &block)?.per_block[0];
    Ok(stat <= result.critical[l])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> BootstrapMatrix {
        BootstrapMatrix::from_rows(vec![
            vec![1.0, 4.0],
            vec![2.0, 3.0],
            vec![3.0, 2.0],
            vec![4.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn fwer_examples() {
        let m = example();
        assert_eq!(fwer_at(0.0, &m).unwrap(), 0.0);
        assert_eq!(fwer_at(0.25, &m).unwrap(), 0.5);
        assert_eq!(fwer_at(0.75, &m).unwrap(), 1.0);
        let p = FwerProfile::new(&m);
        assert_eq!(p.exceed_count(1), 2);
        assert_eq!(p.exceed_count(3), 4);
    }

    #[test]
    fn beta_tilde_examples() {
        assert_eq!(beta_tilde(&example(), 0.5).unwrap(), 0.25);

        // one tie-free column: the upper endpoint is feasible
        let rows: Vec<Vec<f64>> = (0..1000).map(|i| vec![((i * 7919) % 1000) as f64 + 0.5]).collect();
        let m = BootstrapMatrix::from_rows(rows).unwrap();
        assert_eq!(beta_tilde(&m, 0.05).unwrap(), 0.05);

        let zeros = BootstrapMatrix::from_rows(vec![vec![0.0; 3]; 20]).unwrap();
        assert_eq!(beta_tilde(&zeros, 0.05).unwrap(), 0.05);
        let res = mct_from_matrix(&[0.0, 0.0, 0.0], &zeros, 0.05).unwrap();
        assert!(!res.global_reject);
        assert_eq!(res.adjusted_p, vec![1.0; 3]);
    }

    #[test]
    fn decisions_and_adjusted_p() {
        let m = example();
        let res = mct_from_matrix(&[0.0, 0.0], &m, 0.5).unwrap();
        assert_eq!(res.local_reject, vec![false, false]);
        assert_eq!(res.adjusted_p, vec![1.0, 1.0]);

        let res = mct_from_matrix(&[10.0, 0.5], &m, 0.5).unwrap();
        assert_eq!(res.local_reject, vec![true, false]);
        assert!(res.global_reject);

        let one = BootstrapMatrix::from_rows((1..=8).map(|v| vec![v as f64]).collect()).unwrap();
        assert_eq!(adjusted_pvalues(&[9.0], &one).unwrap(), vec![1.0 / 8.0]);
        assert_eq!(adjusted_pvalues(&[0.0], &one).unwrap(), vec![1.0]);
        // 6.5 exceeds the 7th order statistic? no; the 6th (β = 2/8) yes
        assert_eq!(adjusted_pvalues(&[6.5], &one).unwrap(), vec![0.25]);
    }

    #[test]
    fn zero_over_zero_does_not_reject() {
        let m = BootstrapMatrix::from_rows(vec![vec![0.0], vec![0.0], vec![1.0]]).unwrap();
        let p = FwerProfile::new(&m);
        let (_, crit, rej) = p.decide(&[0.0], 0.5);
        assert_eq!(crit, vec![0.0]);
        assert_eq!(rej, vec![false]);
        let (_, _, rej) = p.decide(&[1e-300], 0.5);
        assert_eq!(rej, vec![true]);
    }

    fn matrix_strategy() -> impl Strategy<Value = BootstrapMatrix> {
        (1usize..40, 1usize..5).prop_flat_map(|(b, r)| {
            proptest::collection::vec(proptest::collection::vec(0u8..12, r), b).prop_map(|rows| {
                BootstrapMatrix::from_rows(
                    rows.into_iter()
                        .map(|row| row.into_iter().map(f64::from).collect())
                        .collect(),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn profile_matches_definition(m in matrix_strategy()) {
            let p = FwerProfile::new(&m);
            let b = m.replicates();
            let mut last = 0.0;
            for j in 0..b {
                let direct = fwer_at(j as f64 / b as f64, &m).unwrap();
                prop_assert_eq!(direct, p.exceed_count(j) as f64 / b as f64);
                prop_assert!(direct >= last);
                last = direct;
            }
        }

        #[test]
        fn bisection_matches_sweep(m in matrix_strategy(), alpha in 0.01f64..0.99) {
            let p = FwerProfile::new(&m);
            let j = p.beta_index(alpha);
            prop_assert_eq!(j, p.beta_index_linear(alpha));
            let (lo, hi) = p.search_interval(alpha);
            prop_assert!(lo <= j && j <= hi);
            prop_assert!(fwer_at(lo as f64 / m.replicates() as f64, &m).unwrap() <= alpha);
        }

        #[test]
        fn coherent_and_consistent(m in matrix_strategy(),
                                   obs in proptest::collection::vec(0u8..14, 5),
                                   alpha in 0.01f64..0.99) {
            let observed: Vec<f64> = obs.iter().take(m.blocks()).map(|v| f64::from(*v) - 0.5).map(|v| v.max(0.0)).collect();
            let res = mct_from_matrix(&observed, &m, alpha).unwrap();
            prop_assert_eq!(res.global_reject, res.local_reject.iter().any(|r| *r));
            let b = m.replicates() as f64;
            for (l, p) in res.adjusted_p.iter().enumerate() {
                let steps = p * b;
                prop_assert!((steps - steps.round()).abs() < 1e-9 && *p >= 1.0 / b && *p <= 1.0);
                // same decision as the run's own level; below 1/B the level
                // grid has no point and β̃ = 0 regardless
                if alpha >= 1.0 / b {
                    prop_assert_eq!(*p <= alpha, res.local_reject[l], "l={} p={} alpha={}", l, p, alpha);
                }
            }
        }
    }
}
