//! Heteroscedastic functional ANOVA.
//!
//! Groups of curves observed on a common grid are compared through general
//! linear hypotheses `H η(t) = c(t)` on their mean functions. The crate
//! provides
//!
//! * the globalizing point-wise Hotelling T² statistic ([`gph`]),
//! * its parametric bootstrap calibration ([`bootstrap`]),
//! * the coherent multiple contrast test mGPH ([`mct`]),
//! * the Fmax, GPF, L2b and Fb comparison tests ([`competitors`]),
//! * a Monte-Carlo study harness ([`simulate`]) and CSV/JSON plumbing ([`io`],
//!   [`report`], [`cli`]).
//!
//! ```
//! use hfanova::{build_contrasts, gph_statistic, ContrastKind, Dataset, FunctionalSample, Grid};
//! use nalgebra::DMatrix;
//!
//! let grid = Grid::new(vec![0.0, 0.5, 1.0]).unwrap();
//! let g1 = FunctionalSample::new(1, DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 2.0, 2.0, 2.0])).unwrap();
//! let g2 = FunctionalSample::new(2, DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 3.0, 3.0, 3.0])).unwrap();
//! let data = Dataset::new(grid, vec![g1, g2]).unwrap();
//! let family = build_contrasts(ContrastKind::Dunnett, 2).unwrap();
//! let stat = gph_statistic(&data, &family).unwrap();
//! assert!((stat.per_block[0] - 0.5).abs() < 1e-12);
//! ```

pub mod bootstrap;
pub mod cli;
pub mod competitors;
pub mod contrasts;
pub mod design;
pub mod error;
pub mod estimate;
pub mod gph;
pub mod io;
pub mod mct;
pub mod numerics;
pub mod report;
pub mod simulate;

pub use bootstrap::{
    bootstrap_matrix, draw_bootstrap_dataset, global_test, BootstrapConfig, BootstrapMatrix,
    GlobalTestResult, GroupFactors, Sampler,
};
pub use competitors::{
    competitor_statistics, fmax_gpf, groupwise_bootstrap_tests, l2b_fb, pooled_bootstrap_tests,
    ssh_pointwise, CompetitorMethod, CompetitorResult,
};
pub use contrasts::{build_contrasts, build_two_way, ContrastKind, TwoWayEffect};
pub use design::{Dataset, FunctionalSample, Grid, HypothesisFamily};
pub use error::{Error, Result};
pub use estimate::{group_cov, group_mean, sigma_hat, GroupMoments, SigmaHat};
pub use gph::{gph_statistic, pointwise_tf, StatisticVector};
pub use mct::{
    adjusted_pvalues, beta_tilde, confidence_region_contains, fwer_at, mct_from_matrix, mct_run,
    mct_test, FwerProfile, MctResult,
};
pub use io::{ingest_csv, write_csv};
pub use simulate::{generate_curves, run_study, Method, ScenarioSpec, StudyReport};
pub use numerics::{empirical_quantile, gaussian_vector, pinv, psd_factor, SeedSpec};
