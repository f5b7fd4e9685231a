//! Command-line front end: `test`, `mct` and `simulate`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bootstrap::{bootstrap_matrix, decide_global, BootstrapConfig};
use crate::competitors::{groupwise_bootstrap_tests, pooled_bootstrap_tests, CompetitorResult};
use crate::contrasts::{build_contrasts, ContrastKind};
use crate::design::{Dataset, HypothesisFamily};
use crate::error::{Error, Result};
use crate::gph::gph_statistic;
use crate::io::{ingest_csv, ingest_csv_with_grid, read_contrasts, read_grid, read_matrix};
use crate::mct::mct_from_matrix;
use crate::report::{CompetitorEntry, HypothesisRow, MctReport, Report, RunInfo, SimulateReport, TestReport};
use crate::simulate::{run_study, Alternative, Distribution, Lambdas, Method, ScenarioSpec, Scaling};

/// Environment variable holding the default number of worker threads.
pub const THREADS_ENV: &str = "HFANOVA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hfanova", version, about = "Heteroscedastic functional ANOVA")]
pub struct Cli {
    /// Worker threads [default: $HFANOVA_THREADS, else all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Global GPH test of one hypothesis (all blocks stacked)
    Test(AnalysisArgs),
    /// mGPH multiple contrast test, one hypothesis per block
    Mct(AnalysisArgs),
    /// Monte-Carlo FWER / power study
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    /// CSV file: header `group,t1,...,tm`, one row per subject
    #[arg(long)]
    pub input: PathBuf,
    /// Grid file overriding the header's grid points
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// centering | dunnett | tukey | file:PATH
    #[arg(long, default_value = "centering")]
    pub contrast: String,
    /// Target c as file:PATH (one row per contrast row, one column per grid point)
    #[arg(long)]
    pub c: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Bootstrap replicates
    #[arg(long = "B", default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comparison tests to add, comma separated: Fmax,GPF,L2b,Fb
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "normal")]
    pub distribution: String,
    /// homoscedastic | positive_pairing | negative_pairing
    #[arg(long, default_value = "homoscedastic")]
    pub lambdas: String,
    /// none | inverse_shift
    #[arg(long, default_value = "none")]
    pub scaling: String,
    /// dunnett | tukey
    #[arg(long, default_value = "dunnett")]
    pub contrast: String,
    /// null | A1 ... A6
    #[arg(long, default_value = "null")]
    pub alternative: String,
    /// Group sizes K·(15,20,25,30)
    #[arg(long = "K", default_value_t = 1)]
    pub size_factor: usize,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long = "B", default_value_t = 500)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub grid_points: usize,
    /// Full study scale: 2000 repetitions with B=1000
    #[arg(long)]
    pub full_scale: bool,
    /// Methods, comma separated [default: all]
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Parses arguments, runs the command and writes its report. Returns the
/// process exit status; the test decision never affects it.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Ingest { .. } | Error::Io { .. } => 3,
        Error::InvalidDesign(_)
        | Error::InvalidGrid(_)
        | Error::InvalidHypothesis(_)
        | Error::InsufficientSample { .. } => 4,
        _ => 1,
    }
}

fn threads(cli: &Cli) -> Result<Option<usize>> {
    if let Some(t) = cli.threads {
        return Ok(Some(t));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{THREADS_ENV}='{v}' is not a thread count"))),
        _ => Ok(None),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads(cli)? {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let (report, output) = pool.install(|| -> Result<(Report, &OutputArgs)> {
        Ok(match &cli.command {
            Command::Test(args) => (cmd_test(args)?, &args.output),
            Command::Mct(args) => (cmd_mct(args)?, &args.output),
            Command::Simulate(args) => (cmd_simulate(args)?, &args.output),
        })
    })?;
    if let Report::Simulate(s) = &report {
        eprintln!("wall time {:.1} s", s.study.wall_seconds);
    }
    let text = match output.format {
        Format::Json => report.to_json(),
        Format::Table => report.to_table(),
    };
    match &output.out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn file_arg<'a>(value: &'a str, what: &str) -> Result<&'a Path> {
    value
        .strip_prefix("file:")
        .map(Path::new)
        .ok_or_else(|| Error::Config(format!("{what} must be given as file:PATH, got '{value}'")))
}

struct Analysis {
    data: Dataset,
    family: HypothesisFamily,
    config: BootstrapConfig,
    competitors: Vec<Method>,
    run: RunInfo,
}

fn prepare(args: &AnalysisArgs) -> Result<Analysis> {
    let config = BootstrapConfig::new(args.replicates, args.alpha, args.seed)?;
    let competitors = args
        .methods
        .iter()
        .filter(|m| !m.trim().is_empty())
        .map(|m| m.trim().parse::<Method>())
        .collect::<Result<Vec<_>>>()?;
    if let Some(m) = competitors.iter().find(|m| matches!(m, Method::Gph | Method::Mgph)) {
        return Err(Error::Config(format!("{m} is always reported; --methods selects comparison tests")));
    }
    let data = match &args.grid {
        Some(g) => ingest_csv_with_grid(&args.input, read_grid(g)?)?,
        None => ingest_csv(&args.input)?,
    };
    let mut family = match args.contrast.strip_prefix("file:") {
        Some(path) => read_contrasts(path)?,
        None => build_contrasts(args.contrast.parse::<ContrastKind>()?, data.num_groups())?,
    };
    if let Some(c) = &args.c {
        family = family.with_target(read_matrix(file_arg(c, "--c")?)?)?;
    }
    family.check_against(&data)?;
    let run = RunInfo {
        groups: data.num_groups(),
        sizes: data.group_sizes(),
        grid_points: data.grid_len(),
        contrast: args.contrast.clone(),
        alpha: args.alpha,
        replicates: args.replicates,
        seed: args.seed,
    };
    Ok(Analysis {
        data,
        family,
        config,
        competitors,
        run,
    })
}

/// Competitor entries per block, Bonferroni-adjusted over `r` hypotheses.
fn competitor_entries(a: &Analysis, family: &HypothesisFamily) -> Result<Vec<Vec<CompetitorEntry>>> {
    let r = family.num_blocks();
    let wants = |m: Method| a.competitors.contains(&m);
    let mut per_block: Vec<Vec<CompetitorResult>> = vec![Vec::new(); r];
    if wants(Method::Fmax) || wants(Method::Gpf) {
        for (l, pair) in pooled_bootstrap_tests(&a.data, family, &a.config)?.into_iter().enumerate() {
            per_block[l].extend(pair);
        }
    }
    if wants(Method::L2b) || wants(Method::Fb) {
        for (l, pair) in groupwise_bootstrap_tests(&a.data, family, &a.config)?.into_iter().enumerate() {
            per_block[l].extend(pair);
        }
    }
    Ok(per_block
        .into_iter()
        .map(|results| {
            a.competitors
                .iter()
                .filter_map(|m| results.iter().find(|res| res.method.to_string() == m.name()))
                .map(|res| {
                    let adjusted_p = (r as f64 * res.p_value).min(1.0);
                    CompetitorEntry {
                        method: res.method,
                        statistic: res.statistic,
                        p_value: res.p_value,
                        adjusted_p,
                        reject: adjusted_p <= a.config.alpha,
                    }
                })
                .collect()
        })
        .collect())
}

pub fn cmd_test(args: &AnalysisArgs) -> Result<Report> {
    let a = prepare(args)?;
    let family = a.family.collapsed();
    let observed = gph_statistic(&a.data, &family)?.per_block[0];
    let matrix = bootstrap_matrix(&a.data, &family, &a.config)?;
    let result = decide_global(observed, &matrix.column(0), a.config.alpha)?;
    let competitors = competitor_entries(&a, &family)?.pop().unwrap_or_default();
    Ok(Report::Test(TestReport {
        command: "test",
        hypothesis: family.labels()[0].clone(),
        statistic: result.statistic,
        critical_value: result.critical_value,
        p_value: result.p_value,
        reject: result.reject,
        competitors,
        run: a.run,
    }))
}

pub fn cmd_mct(args: &AnalysisArgs) -> Result<Report> {
    let a = prepare(args)?;
    let observed = gph_statistic(&a.data, &a.family)?.per_block;
    let matrix = bootstrap_matrix(&a.data, &a.family, &a.config)?;
    let result = mct_from_matrix(&observed, &matrix, a.config.alpha)?;
    let competitors = competitor_entries(&a, &a.family)?;
    let hypotheses = a
        .family
        .labels()
        .iter()
        .zip(competitors)
        .enumerate()
        .map(|(l, (label, competitors))| HypothesisRow {
            label: label.clone(),
            statistic: result.observed[l],
            critical_value: result.critical[l],
            adjusted_p: result.adjusted_p[l],
            reject: result.local_reject[l],
            competitors,
        })
        .collect();
    Ok(Report::Mct(MctReport {
        command: "mct",
        run: a.run,
        beta_tilde: result.beta_tilde,
        global_reject: result.global_reject,
        hypotheses,
    }))
}

pub fn scenario_from_args(args: &SimulateArgs) -> Result<ScenarioSpec> {
    let contrast: ContrastKind = args.contrast.parse()?;
    let (reps, replicates) = if args.full_scale {
        (2000, 1000)
    } else {
        (args.reps, args.replicates)
    };
    let spec = ScenarioSpec {
        distribution: args.distribution.parse::<Distribution>()?,
        size_factor: args.size_factor,
        lambdas: args.lambdas.parse::<Lambdas>()?,
        scaling: args.scaling.parse::<Scaling>()?,
        contrast,
        alternative: args.alternative.parse::<Alternative>()?,
        reps,
        replicates,
        alpha: args.alpha,
        seed: args.seed,
        grid_len: args.grid_points,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Report> {
    let spec = scenario_from_args(args)?;
    let methods = if args.methods.iter().all(|m| m.trim().is_empty()) {
        Method::ALL.to_vec()
    } else {
        args.methods
            .iter()
            .filter(|m| !m.trim().is_empty())
            .map(|m| m.trim().parse::<Method>())
            .collect::<Result<Vec<_>>>()?
    };
    Ok(Report::Simulate(SimulateReport {
        command: "simulate",
        study: run_study(&spec, &methods)?,
    }))
}
