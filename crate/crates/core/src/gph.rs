//! The point-wise Hotelling T² statistic and its integral over the domain
//! (the GPH statistic), evaluated block by block.

use nalgebra::DMatrix;

use crate::design::{Dataset, HypothesisFamily};
use crate::error::{Error, Result};
use crate::estimate::{sigma_hat, GroupMoments, SigmaHat};
use crate::numerics::{pinv_quadratic_form, PINV_RTOL};

/// GPH statistics of every block of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticVector {
    /// `T_n(H_ℓ, c_ℓ)` for each block.
    pub per_block: Vec<f64>,
    /// `R × m` point-wise statistics.
    pub pointwise: Option<DMatrix<f64>>,
}

/// A hypothesis block flattened for repeated evaluation.
#[derive(Debug, Clone)]
pub(crate) struct BlockKernel {
    rows: usize,
    k: usize,
    /// row-major `rows × k`
    h: Vec<f64>,
    d: Vec<f64>,
    s: Vec<f64>,
}

impl BlockKernel {
    pub(crate) fn new(h: &DMatrix<f64>) -> Self {
        let rows = h.nrows();
        let k = h.ncols();
        let mut flat = Vec::with_capacity(rows * k);
        for a in 0..rows {
            for i in 0..k {
                flat.push(h[(a, i)]);
            }
        }
        Self {
            rows,
            k,
            h: flat,
            d: vec![0.0; rows],
            s: vec![0.0; rows * rows],
        }
    }

    /// `(Hη − c)ᵀ (H diag(σ) Hᵀ)⁺ (Hη − c)` at one grid point.
    pub(crate) fn quadratic_form(&mut self, eta: &[f64], sigma: &[f64], c: Option<&[f64]>) -> f64 {
        let (r, k) = (self.rows, self.k);
        for a in 0..r {
            let row = &self.h[a * k..(a + 1) * k];
            let mut v: f64 = row.iter().zip(eta).map(|(x, y)| x * y).sum();
            if let Some(c) = c {
                v -= c[a];
            }
            self.d[a] = v;
            for b in 0..=a {
                let other = &self.h[b * k..(b + 1) * k];
                let mut acc = 0.0;
                for i in 0..k {
                    acc += row[i] * sigma[i] * other[i];
                }
                self.s[a * r + b] = acc;
                self.s[b * r + a] = acc;
            }
        }
        pinv_quadratic_form(&self.s, &self.d, PINV_RTOL)
    }
}

/// `TF_{n,H,c}(t_j) = n (Hη̂ − c)ᵀ (H Σ̂ Hᵀ)⁺ (Hη̂ − c)` at grid index `j`.
pub fn pointwise_tf(
    data: &Dataset,
    moments: &GroupMoments,
    sigma: &SigmaHat,
    h: &DMatrix<f64>,
    c_row: Option<&[f64]>,
    j: usize,
) -> Result<f64> {
    let k = data.num_groups();
    if h.ncols() != k || moments.num_groups() != k || sigma.diag.nrows() != k {
        return Err(Error::InvalidHypothesis(format!(
            "hypothesis has {} columns, dataset has {k} groups",
            h.ncols()
        )));
    }
    if j >= data.grid_len() {
        return Err(Error::InvalidHypothesis(format!(
            "grid index {j} out of range (m = {})",
            data.grid_len()
        )));
    }
    if let Some(c) = c_row {
        if c.len() != h.nrows() {
            return Err(Error::InvalidHypothesis(format!(
                "target has {} entries, hypothesis has {} rows",
                c.len(),
                h.nrows()
            )));
        }
    }
    let mut kernel = BlockKernel::new(h);
    let n = data.total_size() as f64;
    Ok(n * kernel.quadratic_form(
        moments.means.column(j).as_slice(),
        sigma.diag.column(j).as_slice(),
        c_row,
    ))
}

/// `T_n(H_ℓ, c_ℓ)` for every block, integrated with the grid's weights.
pub fn gph_statistic(data: &Dataset, family: &HypothesisFamily) -> Result<StatisticVector> {
    family.check_against(data)?;
    let moments = GroupMoments::estimate(data, false)?;
    let sigma = sigma_hat(data, &moments);
    Ok(statistic_from_moments(data, family, &moments, &sigma))
}

pub(crate) fn statistic_from_moments(
    data: &Dataset,
    family: &HypothesisFamily,
    moments: &GroupMoments,
    sigma: &SigmaHat,
) -> StatisticVector {
    let m = data.grid_len();
    let n = data.total_size() as f64;
    let weights = data.grid().weights();
    let mut pointwise = DMatrix::zeros(family.num_blocks(), m);
    let mut per_block = Vec::with_capacity(family.num_blocks());
    let mut c_buf = Vec::new();
    for (l, h) in family.blocks().iter().enumerate() {
        let mut kernel = BlockKernel::new(h);
        let target = family.block_target(l);
        let mut total = 0.0;
        for j in 0..m {
            let c = target.as_ref().map(|t| {
                c_buf.clear();
                c_buf.extend(t.column(j).iter().copied());
                c_buf.as_slice()
            });
            let tf = n * kernel.quadratic_form(
                moments.means.column(j).as_slice(),
                sigma.diag.column(j).as_slice(),
                c,
            );
            pointwise[(l, j)] = tf;
            total += weights[j] * tf;
        }
        per_block.push(total);
    }
    StatisticVector {
        per_block,
        pointwise: Some(pointwise),
    }
}
