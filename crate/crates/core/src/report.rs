//! Machine-readable reports. Every report serializes deterministically: no
//! timestamps, no wall times, fields in declaration order.

use serde::Serialize;

use crate::competitors::CompetitorMethod;
use crate::simulate::StudyReport;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunInfo {
    pub groups: usize,
    pub sizes: Vec<usize>,
    pub grid_points: usize,
    pub contrast: String,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompetitorEntry {
    pub method: CompetitorMethod,
    pub statistic: f64,
    pub p_value: f64,
    /// Bonferroni-adjusted `min(1, R·p)`; equals `p_value` for a single
    /// hypothesis.
    pub adjusted_p: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub command: &'static str,
    pub run: RunInfo,
    pub hypothesis: String,
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub competitors: Vec<CompetitorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisRow {
    pub label: String,
    pub statistic: f64,
    pub critical_value: f64,
    pub adjusted_p: f64,
    pub reject: bool,
    pub competitors: Vec<CompetitorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MctReport {
    pub command: &'static str,
    pub run: RunInfo,
    pub beta_tilde: f64,
    pub global_reject: bool,
    pub hypotheses: Vec<HypothesisRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub command: &'static str,
    #[serde(flatten)]
    pub study: StudyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Test(TestReport),
    Mct(MctReport),
    Simulate(SimulateReport),
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports contain only finite numbers");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        match self {
            Report::Test(r) => {
                let mut out = run_header(&r.run);
                out.push_str(&format!(
                    "{:<8}{:>14}{:>14}{:>10}{:>8}\n",
                    "method", "statistic", "critical", "p", "reject"
                ));
                out.push_str(&format!(
                    "{:<8}{:>14.6}{:>14.6}{:>10.4}{:>8}\n",
                    "GPH",
                    r.statistic,
                    r.critical_value,
                    r.p_value,
                    yes_no(r.reject)
                ));
                for c in &r.competitors {
                    out.push_str(&format!(
                        "{:<8}{:>14.6}{:>14}{:>10.4}{:>8}\n",
                        c.method.to_string(),
                        c.statistic,
                        "",
                        c.p_value,
                        yes_no(c.reject)
                    ));
                }
                out
            }
            Report::Mct(r) => {
                let mut out = run_header(&r.run);
                out.push_str(&format!(
                    "β̃ = {}, global decision: {}\nadjusted p-values in %\n",
                    r.beta_tilde,
                    if r.global_reject { "reject" } else { "retain" }
                ));
                let width = r.hypotheses.iter().map(|h| h.label.len()).max().unwrap_or(0).max(10);
                out.push_str(&format!("{:<width$}{:>12}{:>12}{:>9}", "hypothesis", "statistic", "critical", "mGPH"));
                if let Some(first) = r.hypotheses.first() {
                    for c in &first.competitors {
                        out.push_str(&format!("{:>9}", c.method.to_string()));
                    }
                }
                out.push('\n');
                for h in &r.hypotheses {
                    out.push_str(&format!(
                        "{:<width$}{:>12.4}{:>12.4}{:>8.2}{}",
                        h.label,
                        h.statistic,
                        h.critical_value,
                        100.0 * h.adjusted_p,
                        if h.reject { "*" } else { " " }
                    ));
                    for c in &h.competitors {
                        out.push_str(&format!("{:>8.2}{}", 100.0 * c.adjusted_p, if c.reject { "*" } else { " " }));
                    }
                    out.push('\n');
                }
                out.push_str("(* rejected)\n");
                out
            }
            Report::Simulate(r) => r.study.to_table(),
        }
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn run_header(run: &RunInfo) -> String {
    format!(
        "k={} n={:?} m={} contrast={} α={} B={} seed={}\n",
        run.groups, run.sizes, run.grid_points, run.contrast, run.alpha, run.replicates, run.seed
    )
}
