//! Explicit ReLU networks.
//!
//! A network is an ordered list of affine layers `(A_j, b_j)`. Its realization
//! is `T_L ∘ σ ∘ T_{L-1} ∘ … ∘ σ ∘ T_1` with `σ(t) = max(t, 0)` applied
//! componentwise between layers and never after the last one.
//!
//! Storage is dense. Size accounting follows the nonzero-count convention:
//! `W(ψ)` is the number of nonzero matrix and bias entries and `‖ψ‖_NN` is the
//! largest entry magnitude.

mod algebra;
mod minimum;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use algebra::{affine_precompose, compose, homogeneous_rescale, merge_affine};
pub use minimum::min_network;

/// Errors raised while building or evaluating a network.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("layer {layer}: expected {expected} inputs, found {found}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer}: bias has length {bias} but matrix has {rows} rows")]
    BiasMismatch { layer: usize, rows: usize, bias: usize },
    #[error("layer {layer}: matrix rows have unequal lengths")]
    RaggedMatrix { layer: usize },
    #[error("a network needs at least one layer")]
    Empty,
    #[error("rescaling factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("min network needs at least one input")]
    ZeroArity,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    /// Builds a matrix from a list of rows; `None` if the rows are ragged.
    /// The column count of an empty row list is `cols_if_empty`.
    pub fn from_rows(rows: &[Vec<T>], cols_if_empty: usize) -> Option<Self> {
        let cols = rows.first().map_or(cols_if_empty, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "matmul shapes");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let v = out.get(i, j) + a * rhs.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// Matrix-vector product `self · x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "matvec shapes");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// One affine map `x ↦ A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>) -> Self {
        Self { weights, bias }
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(rows: &[Vec<T>], bias: Vec<T>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let weights = Matrix::from_rows(rows, cols).expect("rectangular rows");
        Self { weights, bias }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    fn apply_into(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.bias
                .iter()
                .enumerate()
                .map(|(r, &b)| dot(self.weights.row(r), x) + b),
        );
    }
}

/// Size, depth and weight-magnitude statistics of a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    /// Number of affine layers `L`.
    pub depth: usize,
    /// Nonzero entries over all matrices and biases, `W`.
    pub weight_count: usize,
    /// Largest entry magnitude, `‖ψ‖_NN`.
    pub weight_sup: f64,
}

/// Reusable buffers for allocation-free evaluation.
#[derive(Debug, Clone, Default)]
pub struct Workspace<T> {
    front: Vec<T>,
    back: Vec<T>,
}

impl<T> Workspace<T> {
    pub fn new() -> Self {
        Self {
            front: Vec::new(),
            back: Vec::new(),
        }
    }
}

/// A feed-forward ReLU network with validated layer chaining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr<T>", into = "NetworkRepr<T>", bound = "T: Scalar")]
pub struct Network<T: Scalar> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Validates that consecutive layers chain and that biases fit.
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        for (j, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(NetworkError::BiasMismatch {
                    layer: j,
                    rows: layer.outputs(),
                    bias: layer.bias.len(),
                });
            }
            if j > 0 && layer.inputs() != layers[j - 1].outputs() {
                return Err(NetworkError::DimensionMismatch {
                    layer: j,
                    expected: layers[j - 1].outputs(),
                    found: layer.inputs(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Single affine layer `x ↦ A x + b`.
    pub fn affine(weights: Matrix<T>, bias: Vec<T>) -> Result<Self, NetworkError> {
        Self::new(vec![Layer::new(weights, bias)])
    }

    /// Single identity layer on `ℝ^n`.
    pub fn identity(n: usize) -> Self {
        Self {
            layers: vec![Layer::new(Matrix::identity(n), vec![T::zero(); n])],
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Layer<T>> {
        self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Widths `(d_0, d_1, …, d_L)`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::outputs))
            .collect()
    }

    pub fn stats(&self) -> NetworkStats {
        let mut weight_count = 0;
        let mut weight_sup = 0.0f64;
        for layer in &self.layers {
            for &v in layer.weights.as_slice().iter().chain(&layer.bias) {
                if v != T::zero() {
                    weight_count += 1;
                }
                weight_sup = weight_sup.max(v.abs().to_f64().unwrap_or(f64::NAN));
            }
        }
        NetworkStats {
            depth: self.depth(),
            weight_count,
            weight_sup,
        }
    }

    /// Evaluates the realization at `x`.
    pub fn evaluate(&self, x: &[T]) -> Result<Vec<T>, NetworkError> {
        let mut ws = Workspace::new();
        self.evaluate_with(&mut ws, x).map(<[T]>::to_vec)
    }

    /// Evaluates using caller-provided buffers; the returned slice borrows `ws`.
    pub fn evaluate_with<'w>(&self, ws: &'w mut Workspace<T>, x: &[T]) -> Result<&'w [T], NetworkError> {
        if x.len() != self.input_dim() {
            return Err(NetworkError::DimensionMismatch {
                layer: 0,
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        self.layers[0].apply_into(x, &mut ws.front);
        for layer in &self.layers[1..] {
            for v in ws.front.iter_mut() {
                *v = v.relu();
            }
            layer.apply_into(&ws.front, &mut ws.back);
            std::mem::swap(&mut ws.front, &mut ws.back);
        }
        Ok(&ws.front)
    }

    /// Evaluates a scalar-output network.
    pub fn evaluate_scalar_with(&self, ws: &mut Workspace<T>, x: &[T]) -> Result<T, NetworkError> {
        Ok(self.evaluate_with(ws, x)?[0])
    }

    /// Multiplies the last layer (weights and bias) by `c`.
    pub fn scale_output(mut self, c: T) -> Self {
        let last = self.layers.len() - 1;
        let layer = &mut self.layers[last];
        for v in layer.weights.data.iter_mut().chain(layer.bias.iter_mut()) {
            *v = *v * c;
        }
        self
    }

    /// Realization-preserving simplification of hidden units.
    ///
    /// Hidden units with identical incoming rows and biases are merged by
    /// summing their outgoing columns, and units that are identically zero
    /// (zero row, nonpositive bias) are removed. The result evaluates to the
    /// same function up to floating-point summation order, but generally
    /// violates weight-magnitude budgets, so it is meant for fast evaluation
    /// only.
    pub fn compacted(&self) -> Self {
        let mut layers = self.layers.clone();
        for j in 0..layers.len() - 1 {
            let (head, tail) = layers.split_at_mut(j + 1);
            let cur = &mut head[j];
            let next = &mut tail[0];
            let n = cur.outputs();
            let mut keep: Vec<usize> = Vec::with_capacity(n);
            let mut target: Vec<Option<usize>> = vec![None; n];
            for u in 0..n {
                let dead = cur.bias[u] <= T::zero() && cur.weights.row(u).iter().all(|&w| w == T::zero());
                if dead {
                    continue;
                }
                let dup = keep
                    .iter()
                    .position(|&k| cur.bias[k] == cur.bias[u] && cur.weights.row(k) == cur.weights.row(u));
                match dup {
                    Some(pos) => target[u] = Some(pos),
                    None => {
                        target[u] = Some(keep.len());
                        keep.push(u);
                    }
                }
            }
            let cols = cur.inputs();
            let mut w = Matrix::zeros(keep.len(), cols);
            let mut b = Vec::with_capacity(keep.len());
            for (i, &u) in keep.iter().enumerate() {
                for c in 0..cols {
                    w.set(i, c, cur.weights.get(u, c));
                }
                b.push(cur.bias[u]);
            }
            let mut nw = Matrix::zeros(next.outputs(), keep.len());
            for r in 0..next.outputs() {
                for u in 0..n {
                    if let Some(t) = target[u] {
                        let v = nw.get(r, t) + next.weights.get(r, u);
                        nw.set(r, t, v);
                    }
                }
            }
            *cur = Layer::new(w, b);
            next.weights = nw;
        }
        Self { layers }
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let conv = |v: &T| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan());
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix {
                        rows: l.weights.rows,
                        cols: l.weights.cols,
                        data: l.weights.data.iter().map(conv).collect(),
                    },
                    bias: l.bias.iter().map(conv).collect(),
                })
                .collect(),
        }
    }

    /// Serializes to the `{"layers":[{"A":[[…]],"b":[…]}]}` JSON schema.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct LayerRepr<T: Scalar> {
    #[serde(rename = "A")]
    a: Vec<Vec<T>>,
    b: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct NetworkRepr<T: Scalar> {
    layers: Vec<LayerRepr<T>>,
}

impl<T: Scalar> TryFrom<NetworkRepr<T>> for Network<T> {
    type Error = NetworkError;

    fn try_from(repr: NetworkRepr<T>) -> Result<Self, Self::Error> {
        let layers = repr
            .layers
            .into_iter()
            .enumerate()
            .map(|(j, l)| {
                let w = Matrix::from_rows(&l.a, 0).ok_or(NetworkError::RaggedMatrix { layer: j })?;
                Ok(Layer::new(w, l.b))
            })
            .collect::<Result<Vec<_>, NetworkError>>()?;
        Network::new(layers)
    }
}

impl<T: Scalar> From<Network<T>> for NetworkRepr<T> {
    fn from(net: Network<T>) -> Self {
        NetworkRepr {
            layers: net
                .layers
                .into_iter()
                .map(|l| LayerRepr {
                    a: l.weights.to_rows(),
                    b: l.bias,
                })
                .collect(),
        }
    }
}
