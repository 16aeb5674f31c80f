//! Experiment configurations: TOML or JSON on disk, canonical JSON for hashing.

use std::path::{Path, PathBuf};

use gapbench_core::baselines::{ExternalAlgorithmSpec, Layout};
use gapbench_core::operator::{FunctionalFamily, OperatorKind, OperatorParams, RandomFieldSpec, MIN_MC_INPUTS};
use gapbench_core::quadrature::QuadratureSpec;
use gapbench_core::spaces::{DepthGrowth, SpaceParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kind::Kind;

/// Smallest number of trials per budget accepted by the adversary.
pub const MIN_TRIALS: usize = gapbench_core::adversary::MIN_TRIALS;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("configuration is invalid:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),
}

/// A complete, serializable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; 0 picks one per core. Not part of the hash.
    #[serde(default)]
    pub threads: usize,
    /// Output directory. Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    VoidCheck(VoidCheck),
    FiniteGap(FiniteGap),
    OperatorGap(OperatorGap),
    EncoderCheck(EncoderCheck),
    AppendixCheck(AppendixCheck),
    ContractionCheck(ContractionCheck),
}

/// Point configurations for the void experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoidLayout {
    /// Midpoint tensor grid with balanced per-axis counts.
    Grid,
    /// I.i.d. uniform on `[0,1]^d`.
    Iid,
    /// I.i.d. uniform on the corner cube `[0, 1/20]^d`.
    Corner,
    /// All points at the center.
    Coincident,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoidCheck {
    pub dims: Vec<usize>,
    pub ns: Vec<usize>,
    pub layouts: Vec<VoidLayout>,
    /// Monte-Carlo centers per configuration.
    pub trials: usize,
    /// Allowed shortfall below ½.
    pub tolerance: f64,
    /// Also estimates the equispaced `d = 1, N = 4` case with exact value ½.
    pub exact_case: bool,
}

impl Default for VoidCheck {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 3],
            ns: vec![10, 100, 1000],
            layouts: vec![
                VoidLayout::Grid,
                VoidLayout::Iid,
                VoidLayout::Corner,
                VoidLayout::Coincident,
            ],
            trials: 100_000,
            tolerance: 0.01,
            exact_case: true,
        }
    }
}

/// A reconstruction method on `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Zero,
    NearestNeighbor {
        #[serde(default = "grid_layout")]
        layout: Layout,
    },
    Multilinear,
    External(ExternalAlgorithmSpec),
}

fn grid_layout() -> Layout {
    Layout::Grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FiniteGap {
    pub params: SpaceParams,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub kappa: f64,
    pub algorithms: Vec<AlgorithmSpec>,
    /// PASS needs `β̂ ≤ λ + slack`.
    pub slack: f64,
    /// When set, PASS also needs the bootstrap upper bound `≤ λ + ci_slack`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_slack: Option<f64>,
    /// When set, the zero algorithm must reproduce `λ` within this tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_tolerance: Option<f64>,
    pub quadrature: QuadratureSpec,
}

fn powers_of_two(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

impl Default for FiniteGap {
    fn default() -> Self {
        Self {
            params: SpaceParams::new(2.0, 2.0, 2, DepthGrowth::constant(3)),
            ns: powers_of_two(4, 12),
            trials: 200,
            kappa: 1.0,
            algorithms: vec![
                AlgorithmSpec::Zero,
                AlgorithmSpec::NearestNeighbor { layout: Layout::Grid },
                AlgorithmSpec::Multilinear,
            ],
            slack: 0.15,
            ci_slack: Some(0.25),
            zero_tolerance: Some(0.05),
            quadrature: QuadratureSpec::default(),
        }
    }
}

/// A reconstruction method for operators on grid functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorAlgorithmSpec {
    Zero,
    NearestNeighborEncoded,
    External(ExternalAlgorithmSpec),
}

/// The encoder `ℰ: 𝒳 → ℝ^d` through which instances are composed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    /// Exact dual moments, `δ = 0`.
    CosineMoments,
    /// Least squares over `count` point evaluations; fails unless `δ̂ ≤ delta`.
    PointEvals { count: usize, delta: f64 },
    /// Exact dual moments with coefficients perturbed to residual `delta`.
    Perturbed { delta: f64 },
    /// ANO lifting encoder. `eps` defaults to `ε₀/(2d)` for the coefficient
    /// box, `b_prime` to the measure's sup bound.
    Ano {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b_prime: Option<f64>,
    },
}

impl EncoderSpec {
    pub fn label(&self) -> String {
        match self {
            EncoderSpec::CosineMoments => "cosine_moments".into(),
            EncoderSpec::PointEvals { count, .. } => format!("point_evals({count})"),
            EncoderSpec::Perturbed { delta } => format!("perturbed({delta})"),
            EncoderSpec::Ano { .. } => "ano".into(),
        }
    }

    pub fn family(&self) -> Option<FunctionalFamily> {
        match self {
            EncoderSpec::CosineMoments | EncoderSpec::Perturbed { .. } => Some(FunctionalFamily::CosineMoments),
            EncoderSpec::PointEvals { count, .. } => Some(FunctionalFamily::PointEvals { count: *count }),
            EncoderSpec::Ano { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorGap {
    pub params: OperatorParams,
    pub measure: RandomFieldSpec,
    /// Defaults to cosine moments for DeepONets and the ANO encoder for
    /// neural operators.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder: Option<EncoderSpec>,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub kappa: f64,
    pub mc_inputs: usize,
    /// Middle stratum half-width in support half-widths.
    pub focus: f64,
    pub algorithms: Vec<OperatorAlgorithmSpec>,
    pub slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_tolerance: Option<f64>,
}

impl Default for OperatorGap {
    fn default() -> Self {
        Self {
            params: OperatorParams {
                alpha: 2.0,
                p: 2.0,
                d: 4,
                ell: DepthGrowth::constant(4),
                kind: OperatorKind::Deeponet,
            },
            measure: RandomFieldSpec {
                grid: 256,
                ..Default::default()
            },
            encoder: None,
            ns: powers_of_two(4, 10),
            trials: 30,
            kappa: 1.0,
            mc_inputs: 2000,
            focus: 6.0,
            algorithms: vec![
                OperatorAlgorithmSpec::Zero,
                OperatorAlgorithmSpec::NearestNeighborEncoded,
            ],
            slack: 0.15,
            ci_slack: None,
            zero_tolerance: Some(0.07),
        }
    }
}

impl OperatorGap {
    pub fn encoder_spec(&self) -> EncoderSpec {
        self.encoder.clone().unwrap_or(match self.params.kind {
            OperatorKind::Deeponet => EncoderSpec::CosineMoments,
            OperatorKind::No => EncoderSpec::Ano {
                eps: None,
                b_prime: None,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderCheck {
    pub measure: RandomFieldSpec,
    pub d: usize,
    /// Bins per axis.
    pub bins: usize,
    pub samples: usize,
    pub encoders: Vec<EncoderSpec>,
    /// Smallest acceptable `c_hat` for the exact (`δ = 0`) encoder.
    pub exact_min_c_hat: f64,
}

impl Default for EncoderCheck {
    fn default() -> Self {
        Self {
            measure: RandomFieldSpec::default(),
            d: 2,
            bins: 10,
            samples: 1_000_000,
            encoders: vec![
                EncoderSpec::CosineMoments,
                EncoderSpec::PointEvals { count: 32, delta: 0.05 },
                EncoderSpec::Perturbed { delta: 0.05 },
                EncoderSpec::Ano {
                    eps: None,
                    b_prime: None,
                },
            ],
            exact_min_c_hat: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppendixCheck {
    pub ms: Vec<usize>,
    /// Grid points on `[−2, 2]`.
    pub samples: usize,
    /// Added to `3/M` for grid and finite-difference error.
    pub slack: f64,
}

impl Default for AppendixCheck {
    fn default() -> Self {
        Self {
            ms: vec![8, 32, 128],
            samples: 4001,
            slack: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractionCheck {
    pub dims: Vec<usize>,
    /// Random perturbations per dimension.
    pub count: usize,
    pub samples: usize,
    /// Also runs the collapsing counterexample.
    pub collapse: bool,
}

impl Default for ContractionCheck {
    fn default() -> Self {
        Self {
            dims: vec![1, 2],
            count: 50,
            samples: 200_000,
            collapse: true,
        }
    }
}

impl Experiment {
    pub fn kind(&self) -> Kind {
        match self {
            Experiment::VoidCheck(_) => Kind::VoidCheck,
            Experiment::FiniteGap(_) => Kind::FiniteGap,
            Experiment::OperatorGap(_) => Kind::OperatorGap,
            Experiment::EncoderCheck(_) => Kind::EncoderCheck,
            Experiment::AppendixCheck(_) => Kind::AppendixCheck,
            Experiment::ContractionCheck(_) => Kind::ContractionCheck,
        }
    }

    pub fn default_for(kind: Kind) -> Self {
        match kind {
            Kind::VoidCheck => Experiment::VoidCheck(Default::default()),
            Kind::FiniteGap => Experiment::FiniteGap(Default::default()),
            Kind::OperatorGap => Experiment::OperatorGap(Default::default()),
            Kind::EncoderCheck => Experiment::EncoderCheck(Default::default()),
            Kind::AppendixCheck => Experiment::AppendixCheck(Default::default()),
            Kind::ContractionCheck => Experiment::ContractionCheck(Default::default()),
        }
    }
}

fn check_budgets(ns: &[usize], out: &mut Vec<String>) {
    if ns.len() < 3 {
        out.push(format!("ns needs at least 3 budgets for a rate fit, got {}", ns.len()));
    }
    if ns.first() == Some(&0) {
        out.push("budgets must be positive".into());
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        out.push("ns must be strictly increasing".into());
    }
}

fn check_trials(trials: usize, out: &mut Vec<String>) {
    if trials < MIN_TRIALS {
        out.push(format!("trials must be at least {MIN_TRIALS}, got {trials}"));
    }
}

fn check_slack(name: &str, v: Option<f64>, out: &mut Vec<String>) {
    if let Some(v) = v {
        if !(v >= 0.0) {
            out.push(format!("{name} must be nonnegative, got {v}"));
        }
    }
}

fn check_external(spec: &ExternalAlgorithmSpec, out: &mut Vec<String>) {
    if spec.command.is_empty() {
        out.push("external algorithm needs a non-empty command".into());
    }
    if !(spec.timeout > 0.0) {
        out.push(format!("external timeout must be positive, got {}", spec.timeout));
    }
}

fn check_measure(m: &RandomFieldSpec, out: &mut Vec<String>) {
    if let Err(e) = m.build() {
        out.push(format!("measure: {e}"));
    }
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            seed: default_seed(),
            threads: 0,
            output: None,
            experiment,
        }
    }

    pub fn kind(&self) -> Kind {
        self.experiment.kind()
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let parsed = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        };
        parsed.map_err(|detail| ConfigError::Parse {
            path: path.to_path_buf(),
            detail,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Fails only for values TOML cannot hold, such as seeds above `i64::MAX`.
    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string_pretty(self)
    }

    /// Canonical JSON of the hashed part: sorted keys, no `threads` or
    /// `output`.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("configs serialize to JSON");
        if let Some(map) = v.as_object_mut() {
            map.remove("threads");
            map.remove("output");
        }
        serde_json::to_string(&v).expect("values serialize")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Lists every violated precondition.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        if i64::try_from(self.seed).is_err() {
            v.push(format!("seed must be at most {} to be representable in TOML", i64::MAX));
        }
        match &self.experiment {
            Experiment::VoidCheck(c) => {
                if c.dims.is_empty() || c.dims.contains(&0) {
                    v.push("dims must be a non-empty list of positive dimensions".into());
                }
                if c.ns.is_empty() || c.ns.contains(&0) {
                    v.push("ns must be a non-empty list of positive point counts".into());
                }
                if c.layouts.is_empty() {
                    v.push("layouts must not be empty".into());
                }
                if c.trials == 0 {
                    v.push("trials must be positive".into());
                }
                check_slack("tolerance", Some(c.tolerance), &mut v);
            }
            Experiment::FiniteGap(c) => {
                if let Err(e) = c.params.validate() {
                    v.push(e.to_string());
                }
                if c.params.require_ell_star(3).is_err() {
                    v.push(format!(
                        "ℓ must be non-decreasing with ℓ* ≥ 3, got ℓ* = {}",
                        c.params.ell_star()
                    ));
                }
                check_budgets(&c.ns, &mut v);
                check_trials(c.trials, &mut v);
                if !(c.kappa > 0.0 && c.kappa <= 1.0) {
                    v.push(format!("kappa must lie in (0, 1], got {}", c.kappa));
                }
                if c.algorithms.is_empty() {
                    v.push("algorithms must not be empty".into());
                }
                for a in &c.algorithms {
                    if let AlgorithmSpec::External(spec) = a {
                        check_external(spec, &mut v);
                    }
                }
                check_slack("slack", Some(c.slack), &mut v);
                check_slack("ci_slack", c.ci_slack, &mut v);
                check_slack("zero_tolerance", c.zero_tolerance, &mut v);
            }
            Experiment::OperatorGap(c) => {
                let space = c.params.space();
                if let Err(e) = space.validate() {
                    v.push(e.to_string());
                }
                if !c.params.p.is_finite() {
                    v.push("p must be finite for the Bochner norm; the uniform limit is reported as a family".into());
                }
                if space.require_ell_star(4).is_err() {
                    v.push(format!(
                        "ℓ must be non-decreasing with ℓ* ≥ 4, got ℓ* = {}",
                        space.ell_star()
                    ));
                }
                check_measure(&c.measure, &mut v);
                if c.params.d > c.measure.terms {
                    v.push(format!(
                        "embedded dimension d = {} exceeds the {} measure terms",
                        c.params.d, c.measure.terms
                    ));
                }
                match (c.params.kind, c.encoder_spec()) {
                    (OperatorKind::No, EncoderSpec::Ano { .. }) => {}
                    (OperatorKind::No, e) => v.push(format!(
                        "neural-operator classes need the ano encoder, got {}",
                        e.label()
                    )),
                    (OperatorKind::Deeponet, EncoderSpec::Ano { .. }) => {
                        v.push("DeepONet classes need a linear-functional encoder, got ano".into())
                    }
                    _ => {}
                }
                check_budgets(&c.ns, &mut v);
                check_trials(c.trials, &mut v);
                if !(c.kappa > 0.0 && c.kappa <= 1.0) {
                    v.push(format!("kappa must lie in (0, 1], got {}", c.kappa));
                }
                if c.mc_inputs < MIN_MC_INPUTS {
                    v.push(format!(
                        "mc_inputs must be at least {MIN_MC_INPUTS}, got {}",
                        c.mc_inputs
                    ));
                }
                if !(c.focus >= 1.0) {
                    v.push(format!("focus must be at least 1, got {}", c.focus));
                }
                if c.algorithms.is_empty() {
                    v.push("algorithms must not be empty".into());
                }
                for a in &c.algorithms {
                    if let OperatorAlgorithmSpec::External(spec) = a {
                        check_external(spec, &mut v);
                    }
                }
                check_slack("slack", Some(c.slack), &mut v);
                check_slack("ci_slack", c.ci_slack, &mut v);
                check_slack("zero_tolerance", c.zero_tolerance, &mut v);
            }
            Experiment::EncoderCheck(c) => {
                check_measure(&c.measure, &mut v);
                if c.d == 0 || c.d > c.measure.terms {
                    v.push(format!("d must lie in 1..={}, got {}", c.measure.terms, c.d));
                }
                if c.bins == 0 {
                    v.push("bins must be positive".into());
                } else if (c.bins as f64).powi(c.d as i32) * 20.0 > c.samples as f64 {
                    v.push(format!(
                        "samples = {} is below 20 per bin for {}^{} bins",
                        c.samples, c.bins, c.d
                    ));
                }
                if c.encoders.is_empty() {
                    v.push("encoders must not be empty".into());
                }
                for e in &c.encoders {
                    match e {
                        EncoderSpec::PointEvals { count, delta } => {
                            if *count < c.d {
                                v.push(format!("point_evals needs count ≥ d, got {count}"));
                            }
                            check_slack("delta", Some(*delta), &mut v);
                        }
                        EncoderSpec::Perturbed { delta } => check_slack("delta", Some(*delta), &mut v),
                        EncoderSpec::Ano { eps, b_prime } => {
                            if eps.is_some_and(|e| !(e > 0.0)) {
                                v.push("ano eps must be positive".into());
                            }
                            if b_prime.is_some_and(|b| !(b > 0.0)) {
                                v.push("ano b_prime must be positive".into());
                            }
                        }
                        EncoderSpec::CosineMoments => {}
                    }
                }
            }
            Experiment::AppendixCheck(c) => {
                if c.ms.is_empty() || c.ms.contains(&0) {
                    v.push("ms must be a non-empty list of positive widths".into());
                }
                if c.samples < 2 {
                    v.push("samples must be at least 2".into());
                }
                check_slack("slack", Some(c.slack), &mut v);
            }
            Experiment::ContractionCheck(c) => {
                if c.dims.is_empty() || c.dims.iter().any(|&d| d == 0 || d > 3) {
                    v.push("dims must be a non-empty list with entries in 1..=3".into());
                }
                if c.samples == 0 {
                    v.push("samples must be positive".into());
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for k in Kind::ALL {
            let c = ExperimentConfig::new(Experiment::default_for(k));
            c.validate().unwrap();
            let toml = c.to_toml().unwrap();
            let back = ExperimentConfig::parse(&toml, Path::new("x.toml")).unwrap();
            assert_eq!(back, c, "{toml}");
            let json = serde_json::to_string(&c).unwrap();
            let back = ExperimentConfig::parse(&json, Path::new("x.json")).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash(), c.hash());
        }
    }

    #[test]
    fn minimal_toml_fills_defaults() {
        let c = ExperimentConfig::parse("kind = \"void-check\"\n", Path::new("x")).unwrap();
        assert_eq!(c, ExperimentConfig::new(Experiment::VoidCheck(Default::default())));
        let c = ExperimentConfig::parse(
            "kind = \"finite-gap\"\nseed = 7\n[params]\nalpha = 1.5\np = \"inf\"\nd = 1\nell = { kind = \"constant\", value = \"inf\" }\n",
            Path::new("x"),
        )
        .unwrap();
        let Experiment::FiniteGap(g) = &c.experiment else {
            panic!()
        };
        assert_eq!(g.params.p, f64::INFINITY);
        assert_eq!(c.seed, 7);
        c.validate().unwrap();
    }

    #[test]
    fn hash_ignores_threads_and_output_only() {
        let a = ExperimentConfig::new(Experiment::default_for(Kind::FiniteGap));
        let mut b = a.clone();
        b.threads = 3;
        b.output = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn shallow_depth_is_rejected_with_the_threshold() {
        let mut g = FiniteGap::default();
        g.params.ell = DepthGrowth::constant(2);
        g.trials = 5;
        let err = ExperimentConfig::new(Experiment::FiniteGap(g)).validate().unwrap_err();
        let ConfigError::Invalid(list) = &err else { panic!() };
        assert_eq!(list.len(), 2, "{list:?}");
        assert!(err.to_string().contains("ℓ* ≥ 3"));
        assert!(err.to_string().contains("trials"));

        let mut o = OperatorGap::default();
        o.params.ell = DepthGrowth::constant(3);
        let err = ExperimentConfig::new(Experiment::OperatorGap(o))
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("ℓ* ≥ 4"));
    }

    #[test]
    fn encoder_must_match_the_class() {
        let mut o = OperatorGap::default();
        o.params.kind = OperatorKind::No;
        o.encoder = Some(EncoderSpec::CosineMoments);
        let err = ExperimentConfig::new(Experiment::OperatorGap(o))
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("ano encoder"));
    }
}
