//! Standard contrast families.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::HypothesisFamily;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastKind {
    /// `P_k = I_k − J_k/k` as one block: all means equal.
    Centering,
    /// Many-to-one against group 1, one block per row.
    Dunnett,
    /// All pairs, one block per row.
    Tukey,
}

impl fmt::Display for ContrastKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContrastKind::Centering => "centering",
            ContrastKind::Dunnett => "dunnett",
            ContrastKind::Tukey => "tukey",
        })
    }
}

impl FromStr for ContrastKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "centering" => Ok(ContrastKind::Centering),
            "dunnett" => Ok(ContrastKind::Dunnett),
            "tukey" => Ok(ContrastKind::Tukey),
            other => Err(Error::Config(format!("unknown contrast kind '{other}'"))),
        }
    }
}

/// Effects of a two-way layout with factors A (`a` levels) and B (`b` levels).
/// Groups are indexed lexicographically, `(i₁, i₂) ↦ (i₁−1)·b + i₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TwoWayEffect {
    A,
    B,
    Interaction,
}

pub fn build_contrasts(kind: ContrastKind, k: usize) -> Result<HypothesisFamily> {
    if k < 2 {
        return Err(Error::InvalidDesign(format!("need at least 2 groups, got {k}")));
    }
    match kind {
        ContrastKind::Centering => {
            HypothesisFamily::new(vec![centering(k)], vec!["global".to_string()])
        }
        ContrastKind::Dunnett => {
            let pairs: Vec<(usize, usize)> = (1..k).map(|j| (0, j)).collect();
            pairwise(k, &pairs)
        }
        ContrastKind::Tukey => {
            let pairs: Vec<(usize, usize)> = (0..k)
                .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                .collect();
            pairwise(k, &pairs)
        }
    }
}

pub fn build_two_way(effect: TwoWayEffect, a: usize, b: usize) -> Result<HypothesisFamily> {
    if a < 2 || b < 2 {
        return Err(Error::InvalidDesign(format!(
            "two-way layout needs at least 2 levels per factor, got {a}×{b}"
        )));
    }
    let (matrix, label) = two_way_matrix(effect, a, b);
    HypothesisFamily::new(vec![matrix], vec![label.to_string()])
}

/// Main effects and interaction as a three-block family.
pub fn build_two_way_all(a: usize, b: usize) -> Result<HypothesisFamily> {
    if a < 2 || b < 2 {
        return Err(Error::InvalidDesign(format!(
            "two-way layout needs at least 2 levels per factor, got {a}×{b}"
        )));
    }
    let (blocks, labels) = [TwoWayEffect::A, TwoWayEffect::B, TwoWayEffect::Interaction]
        .into_iter()
        .map(|e| {
            let (m, l) = two_way_matrix(e, a, b);
            (m, l.to_string())
        })
        .unzip();
    HypothesisFamily::new(blocks, labels)
}

fn two_way_matrix(effect: TwoWayEffect, a: usize, b: usize) -> (DMatrix<f64>, &'static str) {
    let mean_a = DMatrix::from_element(1, a, 1.0 / a as f64);
    let mean_b = DMatrix::from_element(1, b, 1.0 / b as f64);
    match effect {
        TwoWayEffect::A => (centering(a).kronecker(&mean_b), "A"),
        TwoWayEffect::B => (mean_a.kronecker(&centering(b)), "B"),
        TwoWayEffect::Interaction => (centering(a).kronecker(&centering(b)), "AB"),
    }
}

fn centering(k: usize) -> DMatrix<f64> {
    DMatrix::identity(k, k) - DMatrix::from_element(k, k, 1.0 / k as f64)
}

fn pairwise(k: usize, pairs: &[(usize, usize)]) -> Result<HypothesisFamily> {
    let mut blocks = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let mut row = DMatrix::zeros(1, k);
        row[(0, i)] = -1.0;
        row[(0, j)] = 1.0;
        blocks.push(row);
        labels.push(format!("{}-{}", i + 1, j + 1));
    }
    HypothesisFamily::new(blocks, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(f: &HypothesisFamily) -> Vec<Vec<f64>> {
        f.blocks()
            .iter()
            .flat_map(|b| {
                (0..b.nrows())
                    .map(|i| b.row(i).iter().copied().collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn dunnett_three_groups() {
        let f = build_contrasts(ContrastKind::Dunnett, 3).unwrap();
        assert_eq!(f.num_blocks(), 2);
        assert_eq!(rows(&f), vec![vec![-1.0, 1.0, 0.0], vec![-1.0, 0.0, 1.0]]);
        assert_eq!(f.labels(), &["1-2", "1-3"]);
    }

    #[test]
    fn tukey_three_groups() {
        let f = build_contrasts(ContrastKind::Tukey, 3).unwrap();
        assert_eq!(
            rows(&f),
            vec![
                vec![-1.0, 1.0, 0.0],
                vec![-1.0, 0.0, 1.0],
                vec![0.0, -1.0, 1.0]
            ]
        );
        assert_eq!(f.labels(), &["1-2", "1-3", "2-3"]);
    }

    #[test]
    fn centering_two_groups() {
        let f = build_contrasts(ContrastKind::Centering, 2).unwrap();
        assert_eq!(f.num_blocks(), 1);
        assert_eq!(rows(&f), vec![vec![0.5, -0.5], vec![-0.5, 0.5]]);
    }

    #[test]
    fn interaction_two_by_two() {
        let f = build_two_way(TwoWayEffect::Interaction, 2, 2).unwrap();
        let h = f.block(0);
        assert_eq!(h.shape(), (4, 4));
        assert!(h.iter().all(|v| (v.abs() - 0.25).abs() < 1e-15));
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.25, -0.25, -0.25, 0.25, //
                -0.25, 0.25, 0.25, -0.25, //
                -0.25, 0.25, 0.25, -0.25, //
                0.25, -0.25, -0.25, 0.25,
            ],
        );
        assert_eq!(h, &expected);
    }

    #[test]
    fn main_effects_shapes() {
        let fa = build_two_way(TwoWayEffect::A, 2, 3).unwrap();
        assert_eq!(fa.block(0).shape(), (2, 6));
        let fb = build_two_way(TwoWayEffect::B, 2, 3).unwrap();
        assert_eq!(fb.block(0).shape(), (3, 6));
        let all = build_two_way_all(3, 2).unwrap();
        assert_eq!(all.labels(), &["A", "B", "AB"]);
    }

    #[test]
    fn block_counts_and_row_sums() {
        for k in 2..9 {
            let t = build_contrasts(ContrastKind::Tukey, k).unwrap();
            assert_eq!(t.num_blocks(), k * (k - 1) / 2);
            let d = build_contrasts(ContrastKind::Dunnett, k).unwrap();
            assert_eq!(d.num_blocks(), k - 1);
            for f in [t, d] {
                for b in f.blocks() {
                    assert_eq!(b.column_sum().iter().sum::<f64>(), 0.0);
                    for i in 0..b.nrows() {
                        assert_eq!(b.row(i).sum(), 0.0);
                    }
                }
            }
            let c = build_contrasts(ContrastKind::Centering, k).unwrap();
            for i in 0..k {
                assert!(c.block(0).row(i).sum().abs() < 1e-14);
            }
        }
        for (a, b) in [(2, 2), (2, 3), (3, 4)] {
            let f = build_two_way_all(a, b).unwrap();
            for h in f.blocks() {
                for i in 0..h.nrows() {
                    assert!(h.row(i).sum().abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn too_few_groups() {
        assert!(matches!(
            build_contrasts(ContrastKind::Tukey, 1),
            Err(Error::InvalidDesign(_))
        ));
        assert!(build_two_way(TwoWayEffect::A, 1, 3).is_err());
    }
}
