//! Operator learning on grid functions over `D = [0,1]`: input measures,
//! encoders into `ℝ^d`, averaging neural operators, and the operator-level
//! adversary.

mod adversary;
mod ano;
mod appendix;
mod contraction;
mod encoder;
mod measure;

pub use adversary::{
    bochner_norm, operator_adversary_run, operator_curve, operator_depth_discount, operator_rate, stratified_error,
    uniform_mode_family, EncodedNearestNeighbor, ExternalOperatorAlgorithm, InstanceOperator, OperatorAdversaryOptions,
    OperatorAlgorithm, OperatorKind, OperatorParams, OperatorReconstruction, OperatorSession, UniformModeBound,
    ZeroOperatorAlgorithm, MIN_MC_INPUTS,
};
pub use ano::{ano_encoder_build, embed_network_in_ano, Ano, AnoEncoder, AnoEncoderBuild, AnoLayer, AnoStats};
pub use appendix::{shallow_w1inf_approximant, shallow_w1inf_errors, sigma_rho, RHO_PRIME_L1};
pub use contraction::{
    contraction_coverage_check, perturbation_family, w1inf_distance_to_identity, ContractionReport, ContractionStatus,
    Perturbation, SineTerm, VectorField,
};
pub use encoder::{
    deeponet_encoder_build, pushforward_certify, DeepOnetEncoder, Encoder, Functional, FunctionalFamily,
    PushforwardReport,
};
pub use measure::{compact_set_measure, decompose, FieldMeasure, MeasureSample, RandomFieldSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("dimension {requested} exceeds the {available} available coordinates")]
    TooManyCoordinates { requested: usize, available: usize },
    #[error("grid sizes differ ({expected} vs {found})")]
    GridMismatch { expected: usize, found: usize },
    #[error("vertices are affinely dependent (normalized Gram determinant {0:e})")]
    Dependent(f64),
    #[error("requested accuracy {requested} is unattainable; best achieved {achieved}")]
    Unachievable { requested: f64, achieved: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Space(#[from] crate::spaces::SpaceError),
    #[error(transparent)]
    Adversary(#[from] crate::adversary::AdversaryError),
}

/// Samples of a function on the `G` cell midpoints `(i + ½)/G` of `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(g: usize) -> Self {
        Self { values: vec![0.0; g] }
    }

    pub fn from_fn(g: usize, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: (0..g).map(|i| f(node(i, g))).collect(),
        }
    }

    pub fn grid(&self) -> usize {
        self.values.len()
    }

    /// `⨍ u`, the midpoint rule.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.grid() as f64
    }

    /// `⨍ u·v`.
    pub fn pair(&self, other: &GridFunction) -> f64 {
        debug_assert_eq!(self.grid(), other.grid());
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() / self.grid() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `self += c·other`.
    pub fn axpy(&mut self, c: f64, other: &GridFunction) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// The `i`-th of `g` cell midpoints.
#[inline]
pub fn node(i: usize, g: usize) -> f64 {
    (i as f64 + 0.5) / g as f64
}
