//! Numerical kernels shared by the statistics: Moore-Penrose inverse,
//! PSD square roots, order-statistic quantiles and reproducible random
//! substreams.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Eigenvalues at or below `PINV_RTOL · λ_max` are treated as zero.
pub const PINV_RTOL: f64 = 1e-10;

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::Numeric(format!(
            "expected a square matrix, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m)?;
    let sym = (m + m.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym))
}

/// Moore-Penrose inverse of a symmetric matrix through its eigendecomposition.
pub fn pinv(m: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    if m.nrows() == 1 && m.ncols() == 1 {
        check_finite(m)?;
        let v = m[(0, 0)];
        return Ok(DMatrix::from_element(1, 1, if v > 0.0 { 1.0 / v } else { 0.0 }));
    }
    let eig = symmetric_eigen(m)?;
    let cutoff = retain_cutoff(eig.eigenvalues.as_slice(), rtol);
    let inv: DVector<f64> = eig
        .eigenvalues
        .map(|l| if cutoff.is_some_and(|c| l > c) { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&inv) * v.transpose())
}

/// `dᵀ S⁺ d` for a symmetric PSD `S`, without forming `S⁺`.
///
/// `s` is row-major `r × r`. The `r = 1` case is the hot path of every
/// row-wise contrast family.
pub fn pinv_quadratic_form(s: &[f64], d: &[f64], rtol: f64) -> f64 {
    let r = d.len();
    debug_assert_eq!(s.len(), r * r);
    if r == 1 {
        return if s[0] > 0.0 { d[0] * d[0] / s[0] } else { 0.0 };
    }
    let m = DMatrix::from_fn(r, r, |i, j| 0.5 * (s[i * r + j] + s[j * r + i]));
    let eig = SymmetricEigen::new(m);
    let Some(cutoff) = retain_cutoff(eig.eigenvalues.as_slice(), rtol) else {
        return 0.0;
    };
    let dv = DVector::from_column_slice(d);
    let mut q = 0.0;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cutoff {
            let proj = eig.eigenvectors.column(j).dot(&dv);
            q += proj * proj / l;
        }
    }
    q
}

fn retain_cutoff(eigenvalues: &[f64], rtol: f64) -> Option<f64> {
    let max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (max > 0.0).then(|| rtol * max)
}

/// Square root `L` of a symmetric PSD matrix with `L·Lᵀ ≈ S`.
///
/// Negative eigenvalues produced by round-off are clipped to zero; anything
/// below `−10·rtol·λ_max` is reported as [`Error::NotPsd`].
pub fn psd_factor(s: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(s)?;
    let max = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -10.0 * rtol * max || (max == 0.0 && min < 0.0) {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    let mut l = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let root = lambda.max(0.0).sqrt();
        l.column_mut(j).scale_mut(root);
    }
    Ok(l)
}

/// 1-based rank of the order statistic returned for probability `p`, i.e.
/// `⌈p·n⌉` clamped to `[1, n]`. Products within 1e-9 of an integer are
/// snapped to it so `p = 1 − j/n` maps to `n − j` exactly.
pub fn order_statistic_rank(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    let nearest = x.round();
    let rank = if (x - nearest).abs() < 1e-9 {
        nearest
    } else {
        x.ceil()
    };
    (rank.max(1.0) as usize).min(n)
}

/// Empirical quantile with the inverse-CDF convention: the `⌈p·B⌉`-th
/// smallest value. `p = 1` gives the maximum.
pub fn empirical_quantile(x: &[f64], p: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Numeric("quantile of an empty sample".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Numeric(format!("probability {p} outside (0, 1]")));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("quantile of a sample containing NaN".into()));
    }
    let rank = order_statistic_rank(p, x.len());
    let mut buf = x.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    Ok(*v)
}

/// Root of a reproducible family of random streams.
///
/// A stream is addressed by `(replicate, group)`; the same address always
/// yields the same draws no matter which thread consumes it or in which
/// order. Distinct addresses map to distinct ChaCha stream ids under one key,
/// so their outputs never overlap. [`SeedSpec::derive`] builds independent
/// keys for nested experiments (e.g. one per Monte-Carlo repetition).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master: u64,
}

const GROUP_BITS: u32 = 16;

impl SeedSpec {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// Child seed for sub-experiment `index` within domain `tag`.
    pub fn derive(&self, tag: u64, index: u64) -> Self {
        let mut state = self.master ^ splitmix64(&mut tag.wrapping_mul(0xA24B_AED4_963E_E407));
        state ^= splitmix64(&mut index.wrapping_add(0x9FB2_1C65_1E98_DF25));
        Self {
            master: splitmix64(&mut state),
        }
    }

    /// Generator for substream `(replicate, group)`.
    pub fn stream(&self, replicate: u64, group: u64) -> ChaCha8Rng {
        assert!(group < 1 << GROUP_BITS, "group index {group} too large");
        assert!(replicate < 1 << (64 - GROUP_BITS), "replicate index {replicate} too large");
        let mut state = self.master;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((replicate << GROUP_BITS) | group);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `L·z` with `z` i.i.d. standard normal drawn from `rng`.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, factor: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn pinv_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let p = pinv(&d, PINV_RTOL).unwrap();
        assert!(max_abs(&(p - DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0])))) < 1e-15);

        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!(max_abs(&(pinv(&i3, PINV_RTOL).unwrap() - &i3)) < 1e-15);

        let ones = DMatrix::from_element(2, 2, 1.0);
        let p = pinv(&ones, PINV_RTOL).unwrap();
        assert!(max_abs(&(&p - DMatrix::from_element(2, 2, 0.25))) < 1e-14);
        assert!(max_abs(&(&ones * &p * &ones - &ones)) < 1e-14);
    }

    #[test]
    fn pinv_rejects_nan() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(pinv(&m, PINV_RTOL), Err(Error::Numeric(_))));
    }

    #[test]
    fn quadratic_form_matches_pinv() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let s = &a * a.transpose(); // rank 2
        let p = pinv(&s, PINV_RTOL).unwrap();
        let d = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let expected = (d.transpose() * &p * &d)[(0, 0)];
        let row_major: Vec<f64> = s.transpose().iter().copied().collect();
        let got = pinv_quadratic_form(&row_major, d.as_slice(), PINV_RTOL);
        assert!((got - expected).abs() < 1e-10 * expected.abs().max(1.0));
        assert_eq!(pinv_quadratic_form(&[0.0], &[3.0], PINV_RTOL), 0.0);
        assert_eq!(pinv_quadratic_form(&[4.0], &[2.0], PINV_RTOL), 1.0);
    }

    #[test]
    fn psd_factor_examples() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let l = psd_factor(&s, PINV_RTOL).unwrap();
        assert!(max_abs(&(&l * l.transpose() - &s)) < 1e-12);

        let z = DMatrix::zeros(3, 3);
        assert_eq!(psd_factor(&z, PINV_RTOL).unwrap(), z);

        // rank-1 covariance of two curves: rows (1, 2, 0) and (3, −1, 4)
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 3.0, -1.0, 4.0]);
        let mean = x.row_mean();
        let c = DMatrix::from_fn(2, 3, |i, j| x[(i, j)] - mean[j]);
        let s = c.transpose() * &c; // divisor n − 1 = 1
        let l = psd_factor(&s, PINV_RTOL).unwrap();
        assert!(max_abs(&(&l * l.transpose() - &s)) <= 1e-10);
    }

    #[test]
    fn psd_factor_rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(psd_factor(&s, PINV_RTOL), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn quantile_examples() {
        let x = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(empirical_quantile(&x, 0.6).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&x, 1.0).unwrap(), 5.0);
        assert_eq!(empirical_quantile(&[7.0], 0.01).unwrap(), 7.0);
        assert_eq!(empirical_quantile(&[7.0], 1.0).unwrap(), 7.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&x, 0.0).is_err());
    }

    #[test]
    fn quantile_rank_is_exact_on_the_beta_grid() {
        for n in [1usize, 3, 7, 500, 1000, 2000] {
            for j in 0..n {
                let p = 1.0 - j as f64 / n as f64;
                assert_eq!(order_statistic_rank(p, n), n - j, "n={n} j={j}");
            }
        }
    }

    #[test]
    fn gaussian_vector_examples() {
        let seed = SeedSpec::new(42);
        let zero = DMatrix::zeros(4, 4);
        assert!(gaussian_vector(&mut seed.stream(0, 0), &zero).iter().all(|v| *v == 0.0));

        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 2.0]);
        let a = gaussian_vector(&mut seed.stream(3, 1), &l);
        let b = gaussian_vector(&mut seed.stream(3, 1), &l);
        assert_eq!(a, b);
        let c = gaussian_vector(&mut seed.stream(3, 2), &l);
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_vector_unit_variance() {
        // s² of N draws has standard error σ²·sqrt(2/(N−1)).
        let n = 100_000;
        let l = DMatrix::from_element(1, 1, 1.0);
        let mut rng = SeedSpec::new(1).stream(0, 0);
        let draws: Vec<f64> = (0..n).map(|_| gaussian_vector(&mut rng, &l)[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (2.0 / (n - 1) as f64).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se, "variance {var}");
    }

    #[test]
    fn derived_seeds_differ() {
        let s = SeedSpec::new(1);
        assert_ne!(s.derive(0, 0), s.derive(0, 1));
        assert_ne!(s.derive(0, 0), s.derive(1, 0));
        assert_eq!(s.derive(5, 9), s.derive(5, 9));
        let mut a = s.stream(0, 0);
        let mut b = s.stream(1, 0);
        let xa: Vec<u64> = (0..8).map(|_| rand::Rng::random(&mut a)).collect();
        let xb: Vec<u64> = (0..8).map(|_| rand::Rng::random(&mut b)).collect();
        assert_ne!(xa, xb);
    }

    fn random_psd(dim: usize, rank: usize, entries: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, rank, |i, j| entries[(i * rank + j) % entries.len()]);
        &a * a.transpose()
    }

    fn random_orthogonal(dim: usize, entries: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, dim, |i, j| {
            entries[(i * dim + j) % entries.len()] + if i == j { 3.0 } else { 0.0 }
        });
        a.qr().q()
    }

    proptest! {
        #[test]
        fn penrose_identities(dim in 1usize..6, rank in 1usize..6,
                              entries in proptest::collection::vec(-2.0f64..2.0, 36)) {
            let m = random_psd(dim, rank.min(dim), &entries);
            let p = pinv(&m, PINV_RTOL).unwrap();
            let scale = max_abs(&m).max(1.0);
            prop_assert!(max_abs(&(&m * &p * &m - &m)) < 1e-8 * scale);
            let pscale = max_abs(&p).max(1.0);
            prop_assert!(max_abs(&(&p * &m * &p - &p)) < 1e-8 * pscale * pscale * scale);
            prop_assert!(max_abs(&((&m * &p) - (&m * &p).transpose())) < 1e-8 * pscale * scale);
        }

        #[test]
        fn pinv_orthogonally_equivariant(dim in 2usize..5,
                                         entries in proptest::collection::vec(-2.0f64..2.0, 25),
                                         rot in proptest::collection::vec(-1.0f64..1.0, 25)) {
            let m = random_psd(dim, dim - 1, &entries);
            let q = random_orthogonal(dim, &rot);
            let lhs = pinv(&(&q * &m * q.transpose()), PINV_RTOL).unwrap();
            let rhs = &q * pinv(&m, PINV_RTOL).unwrap() * q.transpose();
            let scale = max_abs(&rhs).max(1.0);
            prop_assert!(max_abs(&(lhs - rhs)) < 1e-8 * scale);
        }

        #[test]
        fn quantile_exceedance_bound(x in proptest::collection::vec(0.0f64..10.0, 1..60),
                                     ties in 0usize..4) {
            let mut x = x;
            for i in 0..ties.min(x.len()) { x[i] = 1.0; }
            let b = x.len();
            for j in 0..b {
                let beta = j as f64 / b as f64;
                let q = empirical_quantile(&x, 1.0 - beta).unwrap();
                let exceed = x.iter().filter(|v| **v > q).count();
                prop_assert!(exceed <= j);
            }
        }
    }
}
