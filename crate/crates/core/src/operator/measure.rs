//! Input measures: laws of `u = u₀ + Σ_j Z_j e_j` with independent
//! `Z_j ~ Unif([lo_j, hi_j])` and explicit biorthogonal duals `e*_j`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GridFunction, OperatorError};
use crate::rng::StreamRng;

/// A draw together with its coefficient record.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSample {
    pub u: GridFunction,
    pub z: Vec<f64>,
}

/// Product-uniform measure on an affine family of grid functions.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMeasure {
    grid: usize,
    offset: Option<GridFunction>,
    basis: Vec<GridFunction>,
    duals: Vec<GridFunction>,
    intervals: Vec<(f64, f64)>,
}

/// Cosine random field `u = Σ_{j≤J} Z_j cos(πjx)`, `Z_j ~ Unif([−s j^{−q}, s j^{−q}])`,
/// with duals `e*_j = 2cos(πjx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomFieldSpec {
    /// Truncation `J`.
    pub terms: usize,
    /// Grid resolution `G`.
    pub grid: usize,
    pub s: f64,
    pub q: f64,
}

impl Default for RandomFieldSpec {
    fn default() -> Self {
        Self {
            terms: 32,
            grid: 512,
            s: 1.0,
            q: 2.0,
        }
    }
}

impl RandomFieldSpec {
    pub fn build(&self) -> Result<FieldMeasure, OperatorError> {
        if self.terms == 0 || self.terms >= self.grid {
            return Err(OperatorError::Invalid(format!(
                "need 1 ≤ J < G, got J = {}, G = {}",
                self.terms, self.grid
            )));
        }
        if !(self.q > 1.0) || !(self.s >= 0.0) {
            return Err(OperatorError::Invalid(format!(
                "need s ≥ 0 and q > 1, got s = {}, q = {}",
                self.s, self.q
            )));
        }
        let g = self.grid;
        let pi = std::f64::consts::PI;
        let basis = (1..=self.terms)
            .map(|j| GridFunction::from_fn(g, |x| (pi * j as f64 * x).cos()))
            .collect();
        let duals = (1..=self.terms)
            .map(|j| GridFunction::from_fn(g, |x| 2.0 * (pi * j as f64 * x).cos()))
            .collect();
        let intervals = (1..=self.terms)
            .map(|j| {
                let h = self.s * (j as f64).powf(-self.q);
                (-h, h)
            })
            .collect();
        Ok(FieldMeasure {
            grid: g,
            offset: None,
            basis,
            duals,
            intervals,
        })
    }
}

/// Law of `u = v₀ + Σ_j y_j e_j` with `e_j = (v_j − v₀)/d` and
/// `y_j ~ Unif([0,1])`; every draw is a convex combination of the vertices.
/// Duals are obtained from the inverse Gram matrix of the `e_j`.
pub fn compact_set_measure(vertices: &[GridFunction]) -> Result<FieldMeasure, OperatorError> {
    if vertices.len() < 2 {
        return Err(OperatorError::Invalid("need at least two vertices".into()));
    }
    let g = vertices[0].grid();
    if let Some(v) = vertices.iter().find(|v| v.grid() != g) {
        return Err(OperatorError::GridMismatch {
            expected: g,
            found: v.grid(),
        });
    }
    let d = vertices.len() - 1;
    let v0 = &vertices[0];
    let basis: Vec<GridFunction> = vertices[1..]
        .iter()
        .map(|v| {
            GridFunction::new(
                v.values
                    .iter()
                    .zip(&v0.values)
                    .map(|(a, b)| (a - b) / d as f64)
                    .collect(),
            )
        })
        .collect();
    let gram = DMatrix::from_fn(d, d, |j, l| basis[j].pair(&basis[l]));
    let normalized = gram.determinant() / (0..d).map(|j| gram[(j, j)]).product::<f64>();
    if !(normalized > 1e-10) {
        return Err(OperatorError::Dependent(normalized));
    }
    let inv = gram.try_inverse().ok_or(OperatorError::Dependent(normalized))?;
    let duals = (0..d)
        .map(|k| {
            let mut e = GridFunction::zeros(g);
            for (l, b) in basis.iter().enumerate() {
                e.axpy(inv[(k, l)], b);
            }
            e
        })
        .collect();
    Ok(FieldMeasure {
        grid: g,
        offset: Some(v0.clone()),
        basis,
        duals,
        intervals: vec![(0.0, 1.0); d],
    })
}

impl FieldMeasure {
    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Number of random coordinates.
    pub fn terms(&self) -> usize {
        self.basis.len()
    }

    /// `e_{j+1}` (coordinates are zero-based).
    pub fn basis(&self, j: usize) -> &GridFunction {
        &self.basis[j]
    }

    pub fn dual(&self, j: usize) -> &GridFunction {
        &self.duals[j]
    }

    pub fn interval(&self, j: usize) -> (f64, f64) {
        self.intervals[j]
    }

    pub fn offset(&self) -> Option<&GridFunction> {
        self.offset.as_ref()
    }

    /// `⨍ u₀ e*_j` (zero without an offset).
    pub fn offset_coordinate(&self, j: usize) -> f64 {
        self.offset.as_ref().map_or(0.0, |o| o.pair(&self.duals[j]))
    }

    /// Deterministic bound `‖u₀‖_∞ + Σ_j max(|lo_j|, |hi_j|)·‖e_j‖_∞` on `‖u‖_∞`.
    pub fn sup_bound(&self) -> f64 {
        self.offset.as_ref().map_or(0.0, GridFunction::sup_norm)
            + self
                .basis
                .iter()
                .zip(&self.intervals)
                .map(|(e, (lo, hi))| lo.abs().max(hi.abs()) * e.sup_norm())
                .sum::<f64>()
    }

    pub fn sample_coords(&self, rng: &mut StreamRng) -> Vec<f64> {
        self.intervals
            .iter()
            .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo })
            .collect()
    }

    /// `u₀ + Σ_j z_j e_j`.
    pub fn realize(&self, z: &[f64]) -> GridFunction {
        let mut u = self.offset.clone().unwrap_or_else(|| GridFunction::zeros(self.grid));
        for (e, &c) in self.basis.iter().zip(z) {
            if c != 0.0 {
                u.axpy(c, e);
            }
        }
        u
    }

    pub fn sample(&self, rng: &mut StreamRng) -> MeasureSample {
        let z = self.sample_coords(rng);
        MeasureSample { u: self.realize(&z), z }
    }
}

/// Splits `u` into `y_j = ⨍ (u − u₀) e*_j` for `j < d` and the remainder
/// `ξ = u − Σ_{j<d} y_j e_j`.
pub fn decompose(u: &GridFunction, mu: &FieldMeasure, d: usize) -> Result<(Vec<f64>, GridFunction), OperatorError> {
    if d > mu.terms() {
        return Err(OperatorError::TooManyCoordinates {
            requested: d,
            available: mu.terms(),
        });
    }
    if u.grid() != mu.grid() {
        return Err(OperatorError::GridMismatch {
            expected: mu.grid(),
            found: u.grid(),
        });
    }
    let y: Vec<f64> = (0..d).map(|j| u.pair(mu.dual(j)) - mu.offset_coordinate(j)).collect();
    let mut xi = u.clone();
    for (j, &c) in y.iter().enumerate() {
        xi.axpy(-c, mu.basis(j));
    }
    Ok((y, xi))
}
