//! Reports: `report.json` plus the CSV tables derived from it.

use std::fs;
use std::path::{Path, PathBuf};

use gapbench_core::adversary::{Certificate, ErrorCurve, RateFit, Verdict};
use gapbench_core::operator::{ContractionReport, PushforwardReport, UniformModeBound};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ExperimentConfig, VoidLayout};
use crate::kind::Kind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub gapbench: String,
    pub gapbench_core: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            gapbench: env!("CARGO_PKG_VERSION").into(),
            gapbench_core: gapbench_core::VERSION.into(),
        }
    }
}

/// Execution details; the only part of a report that differs between runs of
/// the same configuration. The embedded config has `threads` reset to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    /// Worker threads actually used.
    #[serde(default)]
    pub threads: usize,
}

/// One named pass/fail condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoidRow {
    pub layout: VoidLayout,
    pub d: usize,
    pub n: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub radius: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoidExact {
    pub estimate: f64,
    pub stderr: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoidResults {
    /// The guaranteed lower bound ½.
    pub bound: f64,
    pub rows: Vec<VoidRow>,
    #[serde(default)]
    pub exact: Option<VoidExact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmResult {
    pub name: String,
    pub curve: ErrorCurve,
    #[serde(default)]
    pub fit: Option<RateFit>,
    /// Carries its own copy of the curve so it can be re-checked alone.
    #[serde(default)]
    pub certificate: Option<Certificate>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderInfo {
    pub label: String,
    #[serde(default)]
    pub delta_hat: Option<f64>,
    #[serde(default)]
    pub achieved_eps: Option<f64>,
    #[serde(default)]
    pub epsilon0: Option<f64>,
    #[serde(default)]
    pub blocks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorExtras {
    pub encoder: EncoderInfo,
    /// The `d → ∞` ceiling `1/p`.
    pub ceiling: f64,
    /// Depth discount `s` in `α/(α+s)`; `None` for `ℓ* = ∞`.
    pub depth_discount: Option<u64>,
    /// Certified bounds for `p ∈ {1, 2, 4, 8}` in the uniform-mode route.
    pub uniform_mode: Vec<UniformModeBound>,
    /// How unit-ball rescalings enter the bound.
    pub scaling: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResults {
    pub lambda: f64,
    pub algorithms: Vec<AlgorithmResult>,
    #[serde(default)]
    pub operator: Option<OperatorExtras>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderRow {
    pub encoder: EncoderInfo,
    #[serde(default)]
    pub report: Option<PushforwardReport>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderResults {
    pub rows: Vec<EncoderRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixRow {
    pub m: usize,
    pub value_error: f64,
    pub slope_error: f64,
    /// `3/M`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixResults {
    pub rows: Vec<AppendixRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub d: usize,
    pub index: usize,
    pub map: String,
    pub report: ContractionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionResults {
    pub rows: Vec<ContractionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Results {
    VoidCheck(VoidResults),
    FiniteGap(GapResults),
    OperatorGap(GapResults),
    EncoderCheck(EncoderResults),
    AppendixCheck(AppendixResults),
    ContractionCheck(ContractionResults),
}

/// Everything one run produced, including the configuration that reproduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub versions: Versions,
    pub kind: Kind,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub verdict: Verdict,
    /// Trials aborted by protocol violations.
    pub protocol_failures: usize,
    pub checks: Vec<Check>,
    pub results: Results,
    pub timing: Timing,
}

/// One row of `curve.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveCsvRow {
    pub series: String,
    pub n: usize,
    pub trials: Option<usize>,
    pub mean: f64,
    pub stderr: Option<f64>,
    pub p: Option<f64>,
    pub failures: usize,
}

/// One row of `plotdata.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub series: String,
    pub n: usize,
    pub mean: f64,
    pub stderr: Option<f64>,
    pub theory: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("report is inconsistent: {0}")]
    Inconsistent(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `C·N^{−λ}` through the first row with a positive mean.
fn theory_line(curve: &ErrorCurve, lambda: f64) -> impl Fn(usize) -> Option<f64> {
    let anchor = curve
        .rows
        .iter()
        .find(|r| r.mean_error > 0.0)
        .map(|r| r.mean_error * (r.n as f64).powf(lambda));
    move |n| anchor.map(|c| c * (n as f64).powf(-lambda))
}

impl Report {
    /// Re-validates every certificate against its embedded curve, and the
    /// hash against the embedded configuration.
    pub fn validate(&self) -> Result<(), ReportError> {
        let bad = |m: String| Err(ReportError::Inconsistent(m));
        if self.config.hash() != self.config_hash {
            return bad(format!(
                "config hash {} does not match the embedded configuration ({})",
                self.config_hash,
                self.config.hash()
            ));
        }
        if self.config.kind() != self.kind {
            return bad(format!(
                "kind {} differs from the configuration's {}",
                self.kind,
                self.config.kind()
            ));
        }
        let all_pass = self.checks.iter().all(|c| c.passed) && self.protocol_failures == 0;
        if (self.verdict == Verdict::Pass) != all_pass {
            return bad(format!("verdict {:?} does not follow from the checks", self.verdict));
        }
        if let Results::FiniteGap(g) | Results::OperatorGap(g) = &self.results {
            for a in &g.algorithms {
                let Some(cert) = &a.certificate else { continue };
                if cert.curve.as_ref() != Some(&a.curve) {
                    return bad(format!("{}: certificate curve differs from the reported curve", a.name));
                }
                if cert.config_hash.as_deref() != Some(self.config_hash.as_str()) {
                    return bad(format!("{}: certificate carries a different config hash", a.name));
                }
                if (cert.lambda - g.lambda).abs() > 1e-12 {
                    return bad(format!(
                        "{}: certificate λ = {} but the report has {}",
                        a.name, cert.lambda, g.lambda
                    ));
                }
                cert.validate()
                    .map_err(|e| ReportError::Inconsistent(format!("{}: {e}", a.name)))?;
                if a.fit.as_ref() != Some(&cert.fit) {
                    return bad(format!("{}: fit differs from the certificate's", a.name));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(io(path))?;
        let report: Report = serde_json::from_str(&text).map_err(|e| ReportError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        report.validate()?;
        Ok(report)
    }

    pub fn curve_rows(&self) -> Vec<CurveCsvRow> {
        let mut out = Vec::new();
        match &self.results {
            Results::VoidCheck(v) => {
                for r in &v.rows {
                    out.push(CurveCsvRow {
                        series: format!("{}/d={}", layout_name(r.layout), r.d),
                        n: r.n,
                        trials: Some(r.trials),
                        mean: r.estimate,
                        stderr: Some(r.stderr),
                        p: None,
                        failures: 0,
                    });
                }
            }
            Results::FiniteGap(g) | Results::OperatorGap(g) => {
                for a in &g.algorithms {
                    for r in &a.curve.rows {
                        out.push(CurveCsvRow {
                            series: a.name.clone(),
                            n: r.n,
                            trials: Some(r.trials),
                            mean: r.mean_error,
                            stderr: Some(r.stderr),
                            p: Some(r.p),
                            failures: r.failures.len(),
                        });
                    }
                }
            }
            Results::EncoderCheck(e) => {
                for r in &e.rows {
                    if let Some(rep) = &r.report {
                        out.push(CurveCsvRow {
                            series: r.encoder.label.clone(),
                            n: rep.samples,
                            trials: None,
                            mean: rep.c_hat,
                            stderr: None,
                            p: None,
                            failures: 0,
                        });
                    }
                }
            }
            Results::AppendixCheck(a) => {
                for r in &a.rows {
                    for (series, v) in [("value", r.value_error), ("slope", r.slope_error)] {
                        out.push(CurveCsvRow {
                            series: series.into(),
                            n: r.m,
                            trials: None,
                            mean: v,
                            stderr: None,
                            p: None,
                            failures: 0,
                        });
                    }
                }
            }
            Results::ContractionCheck(c) => {
                for r in &c.rows {
                    out.push(CurveCsvRow {
                        series: format!("{}/d={}", r.map, r.d),
                        n: r.index,
                        trials: Some(r.report.samples),
                        mean: r.report.min_density_ratio,
                        stderr: None,
                        p: None,
                        failures: 0,
                    });
                }
            }
        }
        out
    }

    /// `N`, mean, stderr and the reference line of each series.
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        match &self.results {
            Results::FiniteGap(g) | Results::OperatorGap(g) => g
                .algorithms
                .iter()
                .flat_map(|a| {
                    let line = theory_line(&a.curve, g.lambda);
                    a.curve.rows.iter().map(move |r| PlotRow {
                        series: a.name.clone(),
                        n: r.n,
                        mean: r.mean_error,
                        stderr: Some(r.stderr),
                        theory: line(r.n),
                    })
                })
                .collect(),
            Results::VoidCheck(v) => v
                .rows
                .iter()
                .map(|r| PlotRow {
                    series: format!("{}/d={}", layout_name(r.layout), r.d),
                    n: r.n,
                    mean: r.estimate,
                    stderr: Some(r.stderr),
                    theory: Some(v.bound),
                })
                .collect(),
            Results::AppendixCheck(a) => a
                .rows
                .iter()
                .map(|r| PlotRow {
                    series: "w1inf".into(),
                    n: r.m,
                    mean: r.value_error.max(r.slope_error),
                    stderr: None,
                    theory: Some(r.bound),
                })
                .collect(),
            Results::ContractionCheck(c) => c
                .rows
                .iter()
                .map(|r| PlotRow {
                    series: format!("{}/d={}", r.map, r.d),
                    n: r.index,
                    mean: r.report.min_density_ratio,
                    stderr: None,
                    theory: Some(r.report.c0),
                })
                .collect(),
            Results::EncoderCheck(_) => self
                .curve_rows()
                .into_iter()
                .map(|r| PlotRow {
                    series: r.series,
                    n: r.n,
                    mean: r.mean,
                    stderr: None,
                    theory: None,
                })
                .collect(),
        }
    }

    /// Writes `report.json`, `curve.csv` and `plotdata.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let json = dir.join("report.json");
        fs::write(&json, self.to_json()).map_err(io(&json))?;
        write_csv(&dir.join("curve.csv"), &self.curve_rows())?;
        write_csv(&dir.join("plotdata.csv"), &self.plot_rows())?;
        Ok(())
    }

    /// Plain-text summary for the terminal.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} [{}]  config {}\n",
            self.kind,
            verdict_word(self.verdict),
            &self.config_hash[..12]
        );
        if let Results::FiniteGap(g) | Results::OperatorGap(g) = &self.results {
            s.push_str(&format!("  λ = {:.4}\n", g.lambda));
            if let Some(op) = &g.operator {
                s.push_str(&format!("  d → ∞ ceiling 1/p = {:.4}\n", op.ceiling));
            }
            for a in &g.algorithms {
                match &a.fit {
                    Some(f) => s.push_str(&format!(
                        "  {:<28} β̂ = {:.4}  95% CI [{:.4}, {:.4}]\n",
                        a.name, f.beta_hat, f.ci_low, f.ci_high
                    )),
                    None => s.push_str(&format!("  {:<28} no fit\n", a.name)),
                }
            }
        }
        for c in &self.checks {
            s.push_str(&format!(
                "  {} {}: {}\n",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        if self.protocol_failures > 0 {
            s.push_str(&format!(
                "  {} trial(s) failed with protocol errors\n",
                self.protocol_failures
            ));
        }
        s
    }
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
    }
}

pub fn layout_name(l: VoidLayout) -> &'static str {
    match l {
        VoidLayout::Grid => "grid",
        VoidLayout::Iid => "iid",
        VoidLayout::Corner => "corner",
        VoidLayout::Coincident => "coincident",
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ReportError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    for r in rows {
        w.serialize(r).map_err(|e| ReportError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
    }
    w.flush().map_err(io(path))
}
