//! Monte-Carlo study harness for four-group designs.
//!
//! Curves live on `J` equidistant points of `[0, 1]`:
//!
//! ```text
//! x_ij(t) = μᵢ(t) + h(t) λᵢ Σ_{q=1}^{10} (√(2/q) sin(πqt) Y_ijq + √(1/q) cos(πqt) Z_ijq)
//! ```
//!
//! with standardized i.i.d. innovations `Y`, `Z`. Innovations are drawn from
//! per-subject substreams before `h` is applied, so the scaled and unscaled
//! versions of a scenario see the same random numbers.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_matrix, exceedance_p_value, BootstrapConfig};
use crate::competitors::{groupwise_bootstrap_tests, pooled_bootstrap_tests};
use crate::contrasts::{build_contrasts, ContrastKind};
use crate::design::{Dataset, FunctionalSample, Grid, HypothesisFamily};
use crate::error::{Error, Result};
use crate::gph::gph_statistic;
use crate::mct::mct_from_matrix;
use crate::numerics::SeedSpec;

pub const BASE_SIZES: [usize; 4] = [15, 20, 25, 30];
const TERMS: usize = 10;
const DATA_TAG: u64 = 0x6461_7461;
const BOOT_TAG: u64 = 0x626f_6f74;

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name().eq_ignore_ascii_case(s))
                    .ok_or_else(|| {
                        let options: Vec<&str> = $name::ALL.iter().map(|v| v.name()).collect();
                        Error::Config(format!(
                            "unknown {} '{s}' (expected one of {})",
                            stringify!($name).to_lowercase(),
                            options.join(", ")
                        ))
                    })
            }
        }
    };
}

named_enum!(
    /// Innovation distribution, standardized to mean 0 and variance 1.
    Distribution { Normal => "normal", T5 => "t5", ChiSq5 => "chisq5" }
);
named_enum!(Lambdas { Homoscedastic => "homoscedastic", PositivePairing => "positive_pairing", NegativePairing => "negative_pairing" });
named_enum!(Scaling { None => "none", InverseShift => "inverse_shift" });
named_enum!(Alternative { Null => "null", A1 => "A1", A2 => "A2", A3 => "A3", A4 => "A4", A5 => "A5", A6 => "A6" });
named_enum!(
    /// Testing procedures compared by the harness. `GPH` applies the
    /// Bonferroni correction to per-hypothesis GPH tests.
    Method { Fmax => "Fmax", Gpf => "GPF", L2b => "L2b", Fb => "Fb", Gph => "GPH", Mgph => "mGPH" }
);

impl Distribution {
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Distribution::Normal => rng.sample(StandardNormal),
            Distribution::T5 => {
                let t: f64 = rng.sample(StudentT::new(5.0).expect("valid dof"));
                t / (5.0f64 / 3.0).sqrt()
            }
            Distribution::ChiSq5 => {
                let x: f64 = rng.sample(ChiSquared::new(5.0).expect("valid dof"));
                (x - 5.0) / 10.0f64.sqrt()
            }
        }
    }
}

impl Lambdas {
    /// `λᵢ`, `i = 1..=k`.
    pub fn values(self, k: usize) -> Vec<f64> {
        (1..=k)
            .map(|i| match self {
                Lambdas::Homoscedastic => 1.0,
                Lambdas::PositivePairing => 0.75 + 0.25 * i as f64,
                Lambdas::NegativePairing => 2.0 - 0.25 * i as f64,
            })
            .collect()
    }
}

impl Scaling {
    /// `h` at the grid points.
    pub fn values(self, points: &[f64]) -> Vec<f64> {
        let j = points.len() as f64;
        points
            .iter()
            .map(|t| match self {
                Scaling::None => 1.0,
                Scaling::InverseShift => 1.0 / (t + 1.0 / j),
            })
            .collect()
    }
}

impl Alternative {
    /// `4 × J` matrix of group means; time enters as the index `t = 1..=J`.
    pub fn means(self, grid_len: usize) -> DMatrix<f64> {
        let jf = grid_len as f64;
        let up = |t: f64| if grid_len > 1 { (t - 1.0) / (jf - 1.0) } else { 0.0 };
        let down = |t: f64| (jf - t) / jf;
        DMatrix::from_fn(4, grid_len, |i, col| {
            let t = (col + 1) as f64;
            let slope = i as f64;
            match self {
                Alternative::Null => 0.0,
                Alternative::A1 if i == 3 => 2.0 * up(t),
                Alternative::A2 if i == 3 => 1.5,
                Alternative::A3 => 0.75 * slope,
                Alternative::A4 => slope * up(t),
                Alternative::A5 if i == 3 => 2.0 * down(t),
                Alternative::A6 => slope * down(t),
                _ => 0.0,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub distribution: Distribution,
    /// Group sizes are `K·(15, 20, 25, 30)`.
    pub size_factor: usize,
    pub lambdas: Lambdas,
    pub scaling: Scaling,
    pub contrast: ContrastKind,
    pub alternative: Alternative,
    pub reps: usize,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub grid_len: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            distribution: Distribution::Normal,
            size_factor: 1,
            lambdas: Lambdas::Homoscedastic,
            scaling: Scaling::None,
            contrast: ContrastKind::Dunnett,
            alternative: Alternative::Null,
            reps: 500,
            replicates: 500,
            alpha: 0.05,
            seed: 1,
            grid_len: 50,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size_factor == 0 {
            return Err(Error::Config("size factor K must be ≥ 1".into()));
        }
        if self.grid_len < 2 {
            return Err(Error::Config("need at least 2 grid points".into()));
        }
        if self.contrast == ContrastKind::Centering {
            return Err(Error::Config("simulation contrasts are dunnett or tukey".into()));
        }
        BootstrapConfig::new(self.replicates, self.alpha, self.seed).map(|_| ())
    }

    pub fn sizes(&self) -> Vec<usize> {
        BASE_SIZES.iter().map(|n| n * self.size_factor).collect()
    }

    pub fn grid(&self) -> Grid {
        Grid::equidistant(0.0, 1.0, self.grid_len).expect("validated grid length")
    }

    pub fn family(&self) -> Result<HypothesisFamily> {
        build_contrasts(self.contrast, BASE_SIZES.len())
    }

    fn bootstrap_config(&self, rep: usize) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.replicates,
            alpha: self.alpha,
            seed: SeedSpec::new(self.seed).derive(BOOT_TAG, rep as u64),
            sampler: Default::default(),
        }
    }
}

/// `2·10 × J` rows `√(2/q) sin(πqt)` and `√(1/q) cos(πqt)`, interleaved.
fn basis(points: &[f64]) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(2 * TERMS, points.len());
    for (j, t) in points.iter().enumerate() {
        for q in 1..=TERMS {
            let qf = q as f64;
            let arg = std::f64::consts::PI * qf * t;
            basis[(2 * (q - 1), j)] = (2.0 / qf).sqrt() * arg.sin();
            basis[(2 * (q - 1) + 1, j)] = (1.0 / qf).sqrt() * arg.cos();
        }
    }
    basis
}

/// Dataset of repetition `rep`.
pub fn generate_curves(spec: &ScenarioSpec, rep: usize) -> Result<Dataset> {
    spec.validate()?;
    let grid = spec.grid();
    let m = grid.len();
    let basis = basis(grid.points());
    let h = spec.scaling.values(grid.points());
    let lambdas = spec.lambdas.values(BASE_SIZES.len());
    let means = spec.alternative.means(m);
    let seed = SeedSpec::new(spec.seed).derive(DATA_TAG, rep as u64);

    let samples = spec
        .sizes()
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            // one substream per subject: Y₁, Z₁, Y₂, Z₂, …
            let mut innovations = DMatrix::zeros(n, 2 * TERMS);
            for s in 0..n {
                let mut rng = seed.stream(s as u64, i as u64);
                for c in 0..2 * TERMS {
                    innovations[(s, c)] = spec.distribution.draw(&mut rng);
                }
            }
            let noise = innovations * &basis;
            let values = DMatrix::from_fn(n, m, |s, j| means[(i, j)] + h[j] * lambdas[i] * noise[(s, j)]);
            FunctionalSample::new(i + 1, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(grid, samples)
}

/// Which hypotheses of `family` hold for the scenario's mean functions.
pub fn true_nulls(spec: &ScenarioSpec, family: &HypothesisFamily) -> Vec<bool> {
    let means = spec.alternative.means(spec.grid_len);
    family
        .blocks()
        .iter()
        .map(|h| (h * &means).iter().all(|v| v.abs() < 1e-12))
        .collect()
}

/// Per-hypothesis decisions of every method in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub decisions: Vec<(Method, Vec<bool>)>,
}

impl RepOutcome {
    pub fn decisions_of(&self, method: Method) -> Option<&[bool]> {
        self.decisions
            .iter()
            .find(|(m, _)| *m == method)
            .map(|(_, d)| d.as_slice())
    }
}

fn bonferroni(p_values: impl Iterator<Item = f64>, r: usize, alpha: f64) -> Vec<bool> {
    p_values.map(|p| (r as f64 * p).min(1.0) <= alpha).collect()
}

/// Runs the requested methods on repetition `rep`.
pub fn simulate_rep(spec: &ScenarioSpec, family: &HypothesisFamily, methods: &[Method], rep: usize) -> Result<RepOutcome> {
    let data = generate_curves(spec, rep)?;
    let config = spec.bootstrap_config(rep);
    let r = family.num_blocks();
    let alpha = spec.alpha;
    let wants = |m: Method| methods.contains(&m);

    let gph = if wants(Method::Gph) || wants(Method::Mgph) {
        let observed = gph_statistic(&data, family)?.per_block;
        let matrix = bootstrap_matrix(&data, family, &config)?;
        let mct = mct_from_matrix(&observed, &matrix, alpha)?;
        let bonf = bonferroni(
            (0..r).map(|l| exceedance_p_value(observed[l], &matrix.column(l))),
            r,
            alpha,
        );
        Some((bonf, mct.local_reject))
    } else {
        None
    };
    let pooled = if wants(Method::Fmax) || wants(Method::Gpf) {
        Some(pooled_bootstrap_tests(&data, family, &config)?)
    } else {
        None
    };
    let groupwise = if wants(Method::L2b) || wants(Method::Fb) {
        Some(groupwise_bootstrap_tests(&data, family, &config)?)
    } else {
        None
    };

    let decisions = methods
        .iter()
        .map(|&method| {
            let d = match method {
                Method::Gph => gph.as_ref().expect("computed").0.clone(),
                Method::Mgph => gph.as_ref().expect("computed").1.clone(),
                Method::Fmax | Method::Gpf => {
                    let idx = usize::from(method == Method::Gpf);
                    bonferroni(pooled.as_ref().expect("computed").iter().map(|b| b[idx].p_value), r, alpha)
                }
                Method::L2b | Method::Fb => {
                    let idx = usize::from(method == Method::Fb);
                    bonferroni(groupwise.as_ref().expect("computed").iter().map(|b| b[idx].p_value), r, alpha)
                }
            };
            (method, d)
        })
        .collect();
    Ok(RepOutcome { rep, decisions })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRates {
    pub method: Method,
    /// Rejection rate of each hypothesis, in percent.
    pub rejection_rate: Vec<f64>,
    /// Rate of repetitions rejecting at least one true null, in percent;
    /// absent when every hypothesis is false.
    pub fwer: Option<f64>,
    /// Rate of repetitions rejecting at least one hypothesis, in percent.
    pub any_rejection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub scenario: ScenarioSpec,
    pub sizes: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub hypotheses: Vec<String>,
    pub true_null: Vec<bool>,
    pub methods: Vec<MethodRates>,
    /// Not serialized, so that reports of identical runs are byte-identical.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Runs a whole scenario; see [`run_study_with_outcomes`].
pub fn run_study(spec: &ScenarioSpec, methods: &[Method]) -> Result<StudyReport> {
    Ok(run_study_with_outcomes(spec, methods)?.0)
}

/// Runs a whole scenario and also returns each repetition's decisions.
/// Repetitions are independent parallel jobs; aggregation only counts, so the
/// report does not depend on scheduling.
pub fn run_study_with_outcomes(spec: &ScenarioSpec, requested: &[Method]) -> Result<(StudyReport, Vec<RepOutcome>)> {
    spec.validate()?;
    let start = Instant::now();
    let mut methods: Vec<Method> = Vec::with_capacity(requested.len());
    for m in requested {
        if !methods.contains(m) {
            methods.push(*m);
        }
    }
    let family = spec.family()?;
    let true_null = true_nulls(spec, &family);
    let outcomes = (0..spec.reps)
        .into_par_iter()
        .map(|rep| simulate_rep(spec, &family, &methods, rep))
        .collect::<Result<Vec<_>>>()?;

    let r = family.num_blocks();
    let percent = |count: usize| {
        if spec.reps == 0 {
            0.0
        } else {
            100.0 * count as f64 / spec.reps as f64
        }
    };
    let any_null = true_null.iter().any(|t| *t);
    let rates = methods
        .iter()
        .map(|&method| {
            let mut per = vec![0usize; r];
            let mut fwer = 0;
            let mut any = 0;
            for outcome in &outcomes {
                let d = outcome.decisions_of(method).expect("every method decided");
                for (c, &x) in per.iter_mut().zip(d) {
                    *c += usize::from(x);
                }
                fwer += usize::from(d.iter().zip(&true_null).any(|(x, t)| *x && *t));
                any += usize::from(d.iter().any(|x| *x));
            }
            MethodRates {
                method,
                rejection_rate: per.into_iter().map(percent).collect(),
                fwer: any_null.then(|| percent(fwer)),
                any_rejection: percent(any),
            }
        })
        .collect();
    let report = StudyReport {
        scenario: spec.clone(),
        sizes: spec.sizes(),
        lambdas: spec.lambdas.values(BASE_SIZES.len()),
        hypotheses: family.labels().to_vec(),
        true_null,
        methods: rates,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, outcomes))
}

impl StudyReport {
    /// Aligned plain-text table: one row per hypothesis plus an FWER row,
    /// one column per method, rates in percent.
    pub fn to_table(&self) -> String {
        let s = &self.scenario;
        let mut out = format!(
            "{} {:?} λ=({}) scaling={} {} {} reps={} B={} α={} seed={}\n",
            s.distribution,
            self.sizes,
            self.lambdas.iter().map(|l| format!("{l}")).collect::<Vec<_>>().join(","),
            s.scaling,
            s.contrast,
            s.alternative,
            s.reps,
            s.replicates,
            s.alpha,
            s.seed
        );
        let label_width = self.hypotheses.iter().map(|h| h.len() + 2).max().unwrap_or(0).max(6);
        out.push_str(&format!("{:<label_width$}", "H"));
        for m in &self.methods {
            out.push_str(&format!("{:>8}", m.method.name()));
        }
        out.push('\n');
        for (l, label) in self.hypotheses.iter().enumerate() {
            let mark = if self.true_null[l] { "" } else { " *" };
            out.push_str(&format!("{:<label_width$}", format!("{label}{mark}")));
            for m in &self.methods {
                out.push_str(&format!("{:>8.2}", m.rejection_rate[l]));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:<label_width$}", "FWER"));
        for m in &self.methods {
            match m.fwer {
                Some(f) => out.push_str(&format!("{f:>8.2}")),
                None => out.push_str(&format!("{:>8}", "-")),
            }
        }
        out.push('\n');
        out.push_str(&format!("(* false hypothesis; wall time {:.1} s)\n", self.wall_seconds));
        out
    }
}
