//! `L^p([0,1]^d)` norms of differences of evaluable functions.
//!
//! The rule is a midpoint rule on an adaptive dyadic partition: coarse cells
//! away from a declared bump-support cube, a medium resolution in a focus box
//! around it (where reconstructions of the bump typically live), and at least
//! `cells_per_bump_side` cells per side inside the support cube itself. For
//! `p = ∞` the maximum is taken over all nodes plus the corners and center of
//! the support cube.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::ProtocolError;
use crate::relu::{Network, Workspace};

/// Failure while evaluating a function at quadrature nodes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{0}")]
    Failed(String),
}

/// A real function on `[0,1]^d` that can be evaluated in batches.
///
/// `xs` holds points in row-major order (`xs.len() == out.len() * dim`).
pub trait Evaluable: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) -> Result<(), EvalError>;
}

/// Wraps a plain closure.
pub struct FnEval<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnEval<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Evaluable for FnEval<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (x, o) in xs.chunks_exact(self.dim).zip(out.iter_mut()) {
            *o = (self.f)(x);
        }
        Ok(())
    }
}

/// The zero function on `[0,1]^d`.
pub struct Zero(pub usize);

impl Evaluable for Zero {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval_batch(&self, _xs: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        out.fill(0.0);
        Ok(())
    }
}

impl Evaluable for Network<f64> {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let mut ws = Workspace::new();
        for (x, o) in xs.chunks_exact(self.input_dim()).zip(out.iter_mut()) {
            *o = self
                .evaluate_scalar_with(&mut ws, x)
                .map_err(|e| EvalError::Failed(e.to_string()))?;
        }
        Ok(())
    }
}

/// Resolution parameters of the adaptive rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Cells per axis away from the focus box.
    pub coarse_cells: usize,
    /// Minimum cells per side of the bump-support cube.
    pub cells_per_bump_side: usize,
    /// Half-width of the focus box in units of the support half-width.
    pub focus_radius: f64,
    /// Minimum cells per support side inside the focus box.
    pub focus_cells_per_bump_side: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            coarse_cells: 32,
            cells_per_bump_side: 64,
            focus_radius: 6.0,
            focus_cells_per_bump_side: 8,
        }
    }
}

/// A cube `center ± half_width` (in the `ℓ∞` sense) declared as the support
/// of a localized bump.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportCube {
    pub center: Vec<f64>,
    pub half_width: f64,
}

/// Nodes and weights of a quadrature rule on `[0,1]^d`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub dim: usize,
    /// Row-major node coordinates.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Points used only for the `p = ∞` maximum.
    pub sup_nodes: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Builds the adaptive rule, refined around `cube` if given.
    pub fn build(dim: usize, spec: &QuadratureSpec, cube: Option<&SupportCube>) -> Self {
        assert!(dim >= 1 && spec.coarse_cells >= 1);
        let mut rule = Rule {
            dim,
            nodes: Vec::new(),
            weights: Vec::new(),
            sup_nodes: Vec::new(),
        };
        let coarse = 1.0 / spec.coarse_cells as f64;
        let mut lo = vec![0.0; dim];
        let mut idx = vec![0usize; dim];
        loop {
            for (l, &i) in lo.iter_mut().zip(&idx) {
                *l = i as f64 * coarse;
            }
            rule.refine(&lo, coarse, spec, cube);
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < spec.coarse_cells {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
                if axis == dim {
                    break;
                }
            }
            if axis == dim {
                break;
            }
        }
        if let Some(c) = cube {
            rule.add_sup_points(c);
        }
        rule
    }

    fn target_width(&self, lo: &[f64], width: f64, spec: &QuadratureSpec, cube: Option<&SupportCube>) -> f64 {
        let coarse = 1.0 / spec.coarse_cells as f64;
        let Some(c) = cube else { return coarse };
        let side = 2.0 * c.half_width;
        let hits = |r: f64| lo.iter().zip(&c.center).all(|(&l, &m)| l < m + r && l + width > m - r);
        if hits(c.half_width) {
            side / spec.cells_per_bump_side as f64
        } else if hits(c.half_width * spec.focus_radius) {
            side / spec.focus_cells_per_bump_side as f64
        } else {
            coarse
        }
    }

    fn refine(&mut self, lo: &[f64], width: f64, spec: &QuadratureSpec, cube: Option<&SupportCube>) {
        let target = self.target_width(lo, width, spec, cube);
        if width <= target * (1.0 + 1e-9) {
            let vol = width.powi(self.dim as i32);
            self.nodes.extend(lo.iter().map(|&l| l + 0.5 * width));
            self.weights.push(vol);
            return;
        }
        let half = 0.5 * width;
        let mut child = lo.to_vec();
        for mask in 0..(1usize << self.dim) {
            for (a, c) in child.iter_mut().enumerate() {
                *c = lo[a] + if mask >> a & 1 == 1 { half } else { 0.0 };
            }
            self.refine(&child.clone(), half, spec, cube);
        }
    }

    fn add_sup_points(&mut self, c: &SupportCube) {
        let clamp = |v: f64| v.clamp(0.0, 1.0);
        self.sup_nodes.extend(c.center.iter().map(|&v| clamp(v)));
        for mask in 0..(1usize << self.dim) {
            for (a, &m) in c.center.iter().enumerate() {
                let s = if mask >> a & 1 == 1 { 1.0 } else { -1.0 };
                self.sup_nodes.push(clamp(m + s * c.half_width));
            }
        }
    }
}

/// `‖f − g‖_{L^p([0,1]^d)}` under `rule`.
pub fn lp_error(f: &dyn Evaluable, g: &dyn Evaluable, p: f64, rule: &Rule) -> Result<f64, EvalError> {
    for e in [f.dim(), g.dim()] {
        if e != rule.dim {
            return Err(EvalError::Dimension {
                expected: rule.dim,
                found: e,
            });
        }
    }
    let diff = |xs: &[f64]| -> Result<Vec<f64>, EvalError> {
        let n = xs.len() / rule.dim;
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        f.eval_batch(xs, &mut a)?;
        g.eval_batch(xs, &mut b)?;
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            for v in [*x, *y] {
                if !v.is_finite() {
                    return Err(EvalError::NonFinite { index: i, value: v });
                }
            }
        }
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect())
    };
    let d = diff(&rule.nodes)?;
    if p.is_infinite() {
        let extra = diff(&rule.sup_nodes)?;
        return Ok(d.iter().chain(&extra).fold(0.0f64, |m, &v| m.max(v)));
    }
    let sum: f64 = d
        .iter()
        .zip(&rule.weights)
        .map(|(&v, &w)| if v == 0.0 { 0.0 } else { w * v.powf(p) })
        .sum();
    Ok(sum.powf(1.0 / p))
}

/// `∫ |v|^p` over a polyline through `(xs[i], vs[i])`, exact for finite `p`.
pub fn polyline_power_integral(xs: &[f64], vs: &[f64], p: f64) -> f64 {
    assert_eq!(xs.len(), vs.len());
    let piece = |h: f64, a: f64, b: f64| -> f64 {
        // a, b have the same sign (or one is zero).
        let (a, b) = (a.abs(), b.abs());
        if (b - a).abs() <= 1e-300 {
            h * a.powf(p)
        } else {
            h * (b.powf(p + 1.0) - a.powf(p + 1.0)) / ((p + 1.0) * (b - a))
        }
    };
    let mut total = 0.0;
    for i in 1..xs.len() {
        let (x0, x1, v0, v1) = (xs[i - 1], xs[i], vs[i - 1], vs[i]);
        let h = x1 - x0;
        if v0 * v1 < 0.0 {
            let t = v0 / (v0 - v1);
            total += piece(h * t, v0, 0.0) + piece(h * (1.0 - t), 0.0, v1);
        } else {
            total += piece(h, v0, v1);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent_at(center: Vec<f64>, hw: f64) -> impl Fn(&[f64]) -> f64 + Send + Sync {
        move |x: &[f64]| {
            let r = x.iter().zip(&center).fold(0.0f64, |m, (&v, &c)| m.max((v - c).abs())) / hw;
            (1.0 - r).max(0.0)
        }
    }

    #[test]
    fn weights_cover_unit_cube() {
        let cube = SupportCube {
            center: vec![0.3, 0.95],
            half_width: 1.0 / 64.0,
        };
        let rule = Rule::build(2, &QuadratureSpec::default(), Some(&cube));
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(rule.nodes.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn equal_functions_have_zero_error() {
        let f = FnEval::new(2, tent_at(vec![0.5, 0.5], 0.1));
        let rule = Rule::build(2, &QuadratureSpec::default(), None);
        assert_eq!(lp_error(&f, &f, 2.0, &rule).unwrap(), 0.0);
    }

    #[test]
    fn pyramid_mass_within_one_percent() {
        // ∫ (1 − |x|_∞/h)_+ over ℝ² is (4/3) h².
        let h = 1.0 / 16.0;
        let cube = SupportCube {
            center: vec![0.41, 0.63],
            half_width: h,
        };
        let g = FnEval::new(2, tent_at(vec![0.41, 0.63], h));
        let rule = Rule::build(2, &QuadratureSpec::default(), Some(&cube));
        let mass = lp_error(&g, &Zero(2), 1.0, &rule).unwrap();
        let exact = 4.0 / 3.0 * h * h;
        assert!((mass / exact - 1.0).abs() < 0.01, "{mass} vs {exact}");
    }

    #[test]
    fn sup_norm_hits_center() {
        let height = 0.37;
        let cube = SupportCube {
            center: vec![0.123_456],
            half_width: 0.01,
        };
        let g = FnEval::new(1, move |x: &[f64]| {
            height * (1.0 - (x[0] - 0.123_456).abs() / 0.01).max(0.0)
        });
        let rule = Rule::build(1, &QuadratureSpec::default(), Some(&cube));
        let sup = lp_error(&g, &Zero(1), f64::INFINITY, &rule).unwrap();
        assert!((sup - height).abs() < 1e-6);
    }

    #[test]
    fn nonfinite_values_are_errors() {
        let bad = FnEval::new(1, |_x: &[f64]| f64::NAN);
        let rule = Rule::build(1, &QuadratureSpec::default(), None);
        assert!(matches!(
            lp_error(&bad, &Zero(1), 1.0, &rule),
            Err(EvalError::NonFinite { .. })
        ));
    }

    #[test]
    fn polyline_integral_matches_closed_forms() {
        // Tent of half-width 1: ∫|v|^p = 2/(p+1).
        for p in [1.0, 2.0, 3.5] {
            let v = polyline_power_integral(&[-1.0, 0.0, 1.0], &[0.0, 1.0, 0.0], p);
            assert!((v - 2.0 / (p + 1.0)).abs() < 1e-14);
        }
        // Sign change: ∫_0^1 |2x − 1| dx = 1/2.
        let v = polyline_power_integral(&[0.0, 1.0], &[-1.0, 1.0], 1.0);
        assert!((v - 0.5).abs() < 1e-15);
    }
}
