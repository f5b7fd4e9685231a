//! Grids, discretized functional samples and hypothesis families.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};

/// Ordered evaluation points of the domain together with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Builds a grid with trapezoidal weights.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        check_points(&points)?;
        let m = points.len();
        let mut weights = vec![0.0; m];
        weights[0] = (points[1] - points[0]) / 2.0;
        weights[m - 1] = (points[m - 1] - points[m - 2]) / 2.0;
        for j in 1..m - 1 {
            weights[j] = (points[j + 1] - points[j - 1]) / 2.0;
        }
        Ok(Self { points, weights })
    }

    /// `m` equidistant points spanning `[start, end]`.
    pub fn equidistant(start: f64, end: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {m}")));
        }
        let step = (end - start) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|j| start + step * j as f64).collect();
        points[m - 1] = end;
        Self::new(points)
    }

    /// Grid with caller-supplied weights. Weights must be positive and sum to
    /// the length of the interval.
    pub fn with_weights(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_points(&points)?;
        if weights.len() != points.len() {
            return Err(Error::InvalidGrid(format!(
                "{} weights for {} points",
                weights.len(),
                points.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidGrid(format!("weight {w} is not positive")));
        }
        let span = points[points.len() - 1] - points[0];
        let total: f64 = weights.iter().sum();
        if (total - span).abs() > 1e-12 * span.abs().max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "weights sum to {total}, interval length is {span}"
            )));
        }
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Length of the interval covered by the grid.
    pub fn span(&self) -> f64 {
        self.points[self.points.len() - 1] - self.points[0]
    }

    /// Quadrature of grid values, summed in grid order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

fn check_points(points: &[f64]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidGrid(format!("non-finite grid point {p}")));
    }
    for (j, pair) in points.windows(2).enumerate() {
        if !(pair[1] > pair[0]) {
            return Err(Error::InvalidGrid(format!(
                "points not strictly increasing at position {}: {} then {}",
                j + 1,
                pair[0],
                pair[1]
            )));
        }
    }
    Ok(())
}

/// Curves of one group evaluated on the grid, one row per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    group_id: usize,
    values: DMatrix<f64>,
}

impl FunctionalSample {
    pub fn new(group_id: usize, values: DMatrix<f64>) -> Result<Self> {
        if group_id == 0 {
            return Err(Error::InvalidDesign("group ids start at 1".into()));
        }
        if values.nrows() == 0 {
            return Err(Error::InsufficientSample {
                group: group_id,
                size: 0,
                required: 1,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "group {group_id} contains non-finite values"
            )));
        }
        Ok(Self { group_id, values })
    }

    pub fn group_id(&self) -> usize {
        self.group_id
    }

    /// `nᵢ × m` matrix of curve evaluations.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn grid_len(&self) -> usize {
        self.values.ncols()
    }

    /// Multiplies every curve point-wise by `h`.
    pub fn scaled(&self, h: &[f64]) -> Self {
        let mut values = self.values.clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            col *= h[j];
        }
        Self {
            group_id: self.group_id,
            values,
        }
    }
}

/// k ≥ 2 independent groups observed on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    grid: Grid,
    samples: Vec<FunctionalSample>,
}

impl Dataset {
    /// Groups are reordered by id; ids must be exactly `1..=k`.
    pub fn new(grid: Grid, mut samples: Vec<FunctionalSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidDesign(format!(
                "need at least 2 groups, got {}",
                samples.len()
            )));
        }
        samples.sort_by_key(|s| s.group_id);
        for (i, s) in samples.iter().enumerate() {
            if s.group_id != i + 1 {
                return Err(Error::InvalidDesign(format!(
                    "group ids must be 1..={} with each appearing once",
                    samples.len()
                )));
            }
            if s.grid_len() != grid.len() {
                return Err(Error::InvalidDesign(format!(
                    "group {} has {} grid values, grid has {}",
                    s.group_id,
                    s.grid_len(),
                    grid.len()
                )));
            }
            if s.size() < 2 {
                return Err(Error::InsufficientSample {
                    group: s.group_id,
                    size: s.size(),
                    required: 2,
                });
            }
        }
        Ok(Self { grid, samples })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[FunctionalSample] {
        &self.samples
    }

    pub fn num_groups(&self) -> usize {
        self.samples.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.samples.iter().map(FunctionalSample::size).collect()
    }

    pub fn total_size(&self) -> usize {
        self.samples.iter().map(FunctionalSample::size).sum()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// Dataset with every curve multiplied by the nowhere-zero function `h`.
    pub fn scaled(&self, h: &[f64]) -> Result<Self> {
        if h.len() != self.grid.len() {
            return Err(Error::InvalidDesign(format!(
                "scaling function has {} values, grid has {}",
                h.len(),
                self.grid.len()
            )));
        }
        if h.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::InvalidDesign(
                "scaling function must be finite and nowhere zero".into(),
            ));
        }
        Ok(Self {
            grid: self.grid.clone(),
            samples: self.samples.iter().map(|s| s.scaled(h)).collect(),
        })
    }
}

/// Block-partitioned hypothesis matrix `H = [H₁ᵀ,…,H_Rᵀ]ᵀ` with target `c`.
///
/// Each block is one local hypothesis `H_ℓ η(t) = c_ℓ(t)`. The target is
/// stored as an `r × m` matrix aligned with the grid; `None` means `c ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisFamily {
    blocks: Vec<DMatrix<f64>>,
    labels: Vec<String>,
    target: Option<DMatrix<f64>>,
}

impl HypothesisFamily {
    pub fn new(blocks: Vec<DMatrix<f64>>, labels: Vec<String>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidHypothesis("no hypothesis blocks".into()));
        }
        if labels.len() != blocks.len() {
            return Err(Error::InvalidHypothesis(format!(
                "{} labels for {} blocks",
                labels.len(),
                blocks.len()
            )));
        }
        let k = blocks[0].ncols();
        for (l, b) in blocks.iter().enumerate() {
            if b.nrows() == 0 {
                return Err(Error::InvalidHypothesis(format!("block {} has no rows", l + 1)));
            }
            if b.ncols() != k {
                return Err(Error::InvalidHypothesis(format!(
                    "block {} has {} columns, block 1 has {k}",
                    l + 1,
                    b.ncols()
                )));
            }
            if b.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidHypothesis(format!("block {} is zero", l + 1)));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidHypothesis(format!(
                    "block {} has non-finite entries",
                    l + 1
                )));
            }
        }
        Ok(Self {
            blocks,
            labels,
            target: None,
        })
    }

    /// Attaches an `r × m` target function.
    pub fn with_target(mut self, target: DMatrix<f64>) -> Result<Self> {
        if target.nrows() != self.num_rows() {
            return Err(Error::InvalidHypothesis(format!(
                "target has {} rows, hypothesis matrix has {}",
                target.nrows(),
                self.num_rows()
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidHypothesis("target has non-finite entries".into()));
        }
        self.target = Some(target);
        Ok(self)
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, l: usize) -> &DMatrix<f64> {
        &self.blocks[l]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn target(&self) -> Option<&DMatrix<f64>> {
        self.target.as_ref()
    }

    /// Number of blocks `R`.
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Total number of rows `r`.
    pub fn num_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    /// Number of groups `k` the family applies to.
    pub fn num_groups(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// Row offset of block `l` in the stacked matrix.
    pub fn block_offset(&self, l: usize) -> usize {
        self.blocks[..l].iter().map(|b| b.nrows()).sum()
    }

    /// Rows of the target belonging to block `l`, `None` for a zero target.
    pub fn block_target(&self, l: usize) -> Option<DMatrixView<'_, f64>> {
        let off = self.block_offset(l);
        let rows = self.blocks[l].nrows();
        self.target
            .as_ref()
            .map(|c| c.view((off, 0), (rows, c.ncols())))
    }

    /// The stacked matrix `H`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let k = self.num_groups();
        let mut h = DMatrix::zeros(self.num_rows(), k);
        let mut off = 0;
        for b in &self.blocks {
            h.view_mut((off, 0), (b.nrows(), k)).copy_from(b);
            off += b.nrows();
        }
        h
    }

    /// The same hypotheses as one block, i.e. the global null hypothesis.
    pub fn collapsed(&self) -> Self {
        let label = if self.blocks.len() == 1 {
            self.labels[0].clone()
        } else {
            "global".to_string()
        };
        Self {
            blocks: vec![self.stacked()],
            labels: vec![label],
            target: self.target.clone(),
        }
    }

    /// Subfamily holding only block `l`.
    pub fn single(&self, l: usize) -> Self {
        Self {
            blocks: vec![self.blocks[l].clone()],
            labels: vec![self.labels[l].clone()],
            target: self.block_target(l).map(|v| v.into_owned()),
        }
    }

    /// Checks that the family fits the dataset's group count and grid.
    pub fn check_against(&self, data: &Dataset) -> Result<()> {
        if self.num_groups() != data.num_groups() {
            return Err(Error::InvalidHypothesis(format!(
                "hypothesis has {} columns, dataset has {} groups",
                self.num_groups(),
                data.num_groups()
            )));
        }
        if let Some(c) = &self.target {
            if c.ncols() != data.grid_len() {
                return Err(Error::InvalidHypothesis(format!(
                    "target has {} grid values, grid has {}",
                    c.ncols(),
                    data.grid_len()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_weights() {
        let g = Grid::new(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
        let g = Grid::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(g.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_unordered_points() {
        assert!(matches!(
            Grid::new(vec![0.0, 1.0, 0.5]),
            Err(Error::InvalidGrid(_))
        ));
        assert!(Grid::new(vec![0.0, 0.0]).is_err());
        assert!(Grid::new(vec![1.0]).is_err());
    }

    #[test]
    fn weights_sum_to_span() {
        let g = Grid::new(vec![-1.0, 0.1, 0.3, 2.5, 7.0]).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!((total - 8.0).abs() < 1e-12);
        assert!(Grid::with_weights(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(Grid::with_weights(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn trapezoid_exact_for_affine() {
        let g = Grid::new(vec![0.0, 0.2, 0.35, 0.9, 1.4]).unwrap();
        let f: Vec<f64> = g.points().iter().map(|t| 3.0 * t - 1.0).collect();
        // ∫₀^1.4 (3t − 1) dt = 1.5·1.96 − 1.4
        assert!((g.integrate(&f) - (1.5 * 1.96 - 1.4)).abs() < 1e-12);
    }

    #[test]
    fn dataset_checks() {
        let grid = Grid::new(vec![0.0, 1.0]).unwrap();
        let s = |id, n| FunctionalSample::new(id, DMatrix::zeros(n, 2)).unwrap();
        assert!(Dataset::new(grid.clone(), vec![s(1, 2)]).is_err());
        assert!(Dataset::new(grid.clone(), vec![s(1, 2), s(3, 2)]).is_err());
        assert!(matches!(
            Dataset::new(grid.clone(), vec![s(1, 2), s(2, 1)]),
            Err(Error::InsufficientSample { group: 2, .. })
        ));
        let d = Dataset::new(grid, vec![s(2, 3), s(1, 2)]).unwrap();
        assert_eq!(d.group_sizes(), vec![2, 3]);
        assert_eq!(d.total_size(), 5);
    }

    #[test]
    fn family_rejects_zero_block() {
        let err = HypothesisFamily::new(vec![DMatrix::zeros(1, 3)], vec!["a".into()]);
        assert!(matches!(err, Err(Error::InvalidHypothesis(_))));
    }

    #[test]
    fn block_targets_follow_offsets() {
        let f = HypothesisFamily::new(
            vec![
                DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            ],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
        .with_target(DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]))
        .unwrap();
        assert_eq!(f.block_offset(1), 1);
        assert_eq!(
            f.block_target(1).unwrap().into_owned(),
            DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 5.0, 6.0])
        );
        let g = f.collapsed();
        assert_eq!(g.num_blocks(), 1);
        assert_eq!(g.block(0).nrows(), 3);
    }
}
