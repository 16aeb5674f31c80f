//! Averaging neural operators
//! `Ψ(u) = Q ∘ L_L ∘ … ∘ L_1 ∘ R(u)` with hidden layers
//! `L_j v(x) = σ(W_j v(x) + b_j + ⨍ v)`, the lifting-network encoder
//! `ℰ(u) = ⨍ R(u(x), x) dx`, and the embedding of `ψ ∘ ℰ` into an ANO.

use serde::{Deserialize, Serialize};

use super::encoder::Encoder;
use super::measure::FieldMeasure;
use super::{node, GridFunction, OperatorError};
use crate::relu::{Layer, Matrix, Network, Workspace};

/// One hidden layer `v ↦ σ(W v + b + ⨍ v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnoLayer {
    pub w: Matrix<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ano {
    /// `(η, x) ↦ ℝ^{d_c}`.
    pub lifting: Network<f64>,
    pub layers: Vec<AnoLayer>,
    /// `ℝ^{d_c} → ℝ`.
    pub projection: Network<f64>,
}

/// Size statistics: `depth` counts hidden layers, `weight_count` is
/// `W(R) + Σ_j (‖W_j‖₀ + ‖b_j‖₀) + W(Q)` and `weight_sup` the largest
/// magnitude among all of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnoStats {
    pub depth: usize,
    pub weight_count: usize,
    pub weight_sup: f64,
    pub channels: usize,
}

impl Ano {
    pub fn new(lifting: Network<f64>, layers: Vec<AnoLayer>, projection: Network<f64>) -> Result<Self, OperatorError> {
        if lifting.input_dim() != 2 {
            return Err(OperatorError::Invalid(format!(
                "lifting takes (η, x), got input dimension {}",
                lifting.input_dim()
            )));
        }
        let dc = lifting.output_dim();
        for (j, l) in layers.iter().enumerate() {
            if l.w.rows() != dc || l.w.cols() != dc || l.b.len() != dc {
                return Err(OperatorError::Invalid(format!(
                    "hidden layer {j} is {}×{} with {} biases, expected {dc} channels",
                    l.w.rows(),
                    l.w.cols(),
                    l.b.len()
                )));
            }
        }
        if projection.input_dim() != dc || projection.output_dim() != 1 {
            return Err(OperatorError::Invalid(format!(
                "projection maps ℝ^{} → ℝ^{}, expected ℝ^{dc} → ℝ",
                projection.input_dim(),
                projection.output_dim()
            )));
        }
        Ok(Self {
            lifting,
            layers,
            projection,
        })
    }

    pub fn channels(&self) -> usize {
        self.lifting.output_dim()
    }

    pub fn stats(&self) -> AnoStats {
        let r = self.lifting.stats();
        let q = self.projection.stats();
        let mut count = r.weight_count + q.weight_count;
        let mut sup = r.weight_sup.max(q.weight_sup);
        for l in &self.layers {
            for &v in l.w.as_slice().iter().chain(&l.b) {
                if v != 0.0 {
                    count += 1;
                }
                sup = sup.max(v.abs());
            }
        }
        AnoStats {
            depth: self.layers.len(),
            weight_count: count,
            weight_sup: sup,
            channels: self.channels(),
        }
    }

    /// Applies the operator on the grid; averages are grid means.
    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        let g = u.grid();
        let dc = self.channels();
        let mut ws = Workspace::new();
        let mut v: Vec<Vec<f64>> = u
            .values
            .iter()
            .enumerate()
            .map(|(i, &eta)| {
                self.lifting
                    .evaluate_with(&mut ws, &[eta, node(i, g)])
                    .expect("lifting takes two inputs")
                    .to_vec()
            })
            .collect();
        for layer in &self.layers {
            let mut mean = vec![0.0; dc];
            for vi in &v {
                for (m, x) in mean.iter_mut().zip(vi) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= g as f64);
            for vi in v.iter_mut() {
                let pre = layer.w.matvec(vi);
                for (c, out) in vi.iter_mut().enumerate() {
                    *out = (pre[c] + layer.b[c] + mean[c]).max(0.0);
                }
            }
        }
        GridFunction::new(
            v.iter()
                .map(|vi| {
                    self.projection
                        .evaluate_scalar_with(&mut ws, vi)
                        .expect("width checked")
                })
                .collect(),
        )
    }
}

/// `ℰ(u) = ⨍ R(u(x), x) dx` for a shallow lifting `R` that is piecewise
/// constant in `x` over `K` blocks and linear in `η` on `[−B′, B′]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnoEncoder {
    /// Normalized lifting `ℝ² → ℝ^d`.
    pub lifting: Network<f64>,
    /// The lifting before normalization, approximating `(η, x) ↦ η e*_k(x)`.
    pub raw_lifting: Network<f64>,
    pub grid: usize,
    pub blocks: usize,
    pub b_prime: f64,
    /// Normalized per-block coefficients, `d × K`.
    block_coeffs: Vec<Vec<f64>>,
    shift: Vec<f64>,
}

/// Result of [`ano_encoder_build`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnoEncoderBuild {
    pub encoder: AnoEncoder,
    /// `⨍_D ‖R(·, x) − R†(·, x)‖_{W^{1,∞}([−B′, B′])} dx`, measured on the grid.
    pub achieved_eps: f64,
    /// False when even `K = G` blocks miss the target.
    pub converged: bool,
}

/// Raw lifting with blocks `[a_i, a_{i+1})`, `a_i = i/K`, realizing
/// `η · c_{k, block(x)}` on grid nodes for `|η| ≤ B′`.
///
/// Block `i` contributes the pair `σ(±η + B′ + L(x − a_i))` with
/// `L = 8B′G`; at every node their difference is `2η` right of `a_i` and
/// `0` left of it, since nodes sit at least `1/(2G)` away from block edges.
fn block_lifting(coeffs: &[Vec<f64>], g: usize, b_prime: f64) -> Network<f64> {
    let k = coeffs[0].len();
    let slope = 8.0 * b_prime * g as f64;
    let mut w1 = Matrix::zeros(2 * k, 2);
    let mut b1 = vec![0.0; 2 * k];
    for i in 0..k {
        let a = i as f64 / k as f64;
        let (sx, bias) = if i == 0 {
            (0.0, b_prime)
        } else {
            (slope, b_prime - slope * a)
        };
        w1.set(2 * i, 0, 1.0);
        w1.set(2 * i + 1, 0, -1.0);
        w1.set(2 * i, 1, sx);
        w1.set(2 * i + 1, 1, sx);
        b1[2 * i] = bias;
        b1[2 * i + 1] = bias;
    }
    let d = coeffs.len();
    let mut w2 = Matrix::zeros(d, 2 * k);
    for (r, c) in coeffs.iter().enumerate() {
        for i in 0..k {
            let step = (c[i] - if i == 0 { 0.0 } else { c[i - 1] }) / 2.0;
            w2.set(r, 2 * i, step);
            w2.set(r, 2 * i + 1, -step);
        }
    }
    Network::new(vec![Layer::new(w1, b1), Layer::new(w2, vec![0.0; d])]).expect("shapes chain")
}

/// Grid-measured `W^{1,∞}([−B′, B′])` distance between `net` and
/// `(η, x) ↦ η e*_k(x)`, averaged over `x`.
fn lifting_eps(net: &Network<f64>, duals: &[&GridFunction], b_prime: f64) -> f64 {
    let g = duals[0].grid();
    let mut ws = Workspace::new();
    let mut total = 0.0;
    for i in 0..g {
        let x = node(i, g);
        let hi = net.evaluate_with(&mut ws, &[b_prime, x]).expect("two inputs").to_vec();
        let lo = net.evaluate_with(&mut ws, &[-b_prime, x]).expect("two inputs").to_vec();
        let mid = net.evaluate_with(&mut ws, &[0.0, x]).expect("two inputs").to_vec();
        let mut worst = 0.0f64;
        for (k, e) in duals.iter().enumerate() {
            let t = e.values[i];
            let value = (hi[k] - b_prime * t)
                .abs()
                .max((lo[k] + b_prime * t).abs())
                .max(mid[k].abs());
            let slope = ((hi[k] - mid[k]) / b_prime - t)
                .abs()
                .max(((mid[k] - lo[k]) / b_prime - t).abs());
            worst = worst.max(value.max(slope));
        }
        total += worst;
    }
    total / g as f64
}

/// Builds the lifting encoder for the first `d` coordinates of `mu`.
///
/// `b_prime` bounds `|u(x)|` on the inputs of interest; `None` uses the
/// measure's deterministic bound. The number of blocks `K` is the smallest
/// power of two dividing `G` (or `G` itself) whose grid-measured error is at
/// most `eps`.
pub fn ano_encoder_build(
    mu: &FieldMeasure,
    d: usize,
    b_prime: Option<f64>,
    eps: f64,
) -> Result<AnoEncoderBuild, OperatorError> {
    if d == 0 || d > mu.terms() {
        return Err(OperatorError::TooManyCoordinates {
            requested: d,
            available: mu.terms(),
        });
    }
    let b_prime = b_prime.unwrap_or_else(|| mu.sup_bound());
    if !(b_prime > 0.0) || !b_prime.is_finite() || !(eps > 0.0) {
        return Err(OperatorError::Invalid(format!(
            "need B′ > 0 and ε > 0, got B′ = {b_prime}, ε = {eps}"
        )));
    }
    let g = mu.grid();
    let duals: Vec<&GridFunction> = (0..d).map(|k| mu.dual(k)).collect();
    let mut candidates: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2))
        .take_while(|&k| k <= g && g % k == 0)
        .collect();
    if candidates.last() != Some(&g) {
        candidates.push(g);
    }
    let mut best = None;
    for &k in &candidates {
        let coeffs: Vec<Vec<f64>> = duals.iter().map(|e| block_means(e, k)).collect();
        let raw = block_lifting(&coeffs, g, b_prime);
        let achieved = lifting_eps(&raw, &duals, b_prime);
        let done = achieved <= eps;
        best = Some((k, coeffs, raw, achieved));
        if done {
            break;
        }
    }
    let (blocks, coeffs, raw, achieved_eps) = best.expect("at least one candidate");
    let encoder = normalize(mu, blocks, coeffs, raw, b_prime);
    Ok(AnoEncoderBuild {
        encoder,
        achieved_eps,
        converged: achieved_eps <= eps,
    })
}

fn block_means(e: &GridFunction, k: usize) -> Vec<f64> {
    let g = e.grid();
    let per = g / k;
    (0..k)
        .map(|i| e.values[i * per..(i + 1) * per].iter().sum::<f64>() / per as f64)
        .collect()
}

fn piecewise(coeffs: &[f64], g: usize) -> GridFunction {
    let per = g / coeffs.len();
    GridFunction::new((0..g).map(|i| coeffs[i / per]).collect())
}

/// Maps the nominal image of the coefficient box onto `[0,1]^d` by folding
/// an affine rescaling into the lifting's output layer.
fn normalize(mu: &FieldMeasure, blocks: usize, coeffs: Vec<Vec<f64>>, raw: Network<f64>, b_prime: f64) -> AnoEncoder {
    let g = mu.grid();
    let mut scale = Vec::with_capacity(coeffs.len());
    let mut shift = Vec::with_capacity(coeffs.len());
    for c in &coeffs {
        let w = piecewise(c, g);
        let (mut lo, mut hi) = (0.0, 0.0);
        for i in 0..mu.terms() {
            let s = mu.basis(i).pair(&w);
            let (zl, zh) = mu.interval(i);
            lo += (s * zl).min(s * zh);
            hi += (s * zl).max(s * zh);
        }
        let off = mu.offset().map_or(0.0, |o| o.pair(&w));
        let sc = if hi > lo { 1.0 / (hi - lo) } else { 1.0 };
        scale.push(sc);
        shift.push(-(off + lo) * sc);
    }
    let mut layers = raw.clone().into_layers();
    let last = layers.last_mut().expect("two layers");
    for r in 0..last.outputs() {
        for c in 0..last.inputs() {
            let v = last.weights.get(r, c) * scale[r];
            last.weights.set(r, c, v);
        }
        last.bias[r] = last.bias[r] * scale[r] + shift[r];
    }
    let block_coeffs = coeffs
        .iter()
        .zip(&scale)
        .map(|(c, s)| c.iter().map(|v| v * s).collect())
        .collect();
    AnoEncoder {
        lifting: Network::new(layers).expect("shapes unchanged"),
        raw_lifting: raw,
        grid: g,
        blocks,
        b_prime,
        block_coeffs,
        shift,
    }
}

fn grid_mean_of(net: &Network<f64>, u: &GridFunction, out: &mut [f64]) {
    let g = u.grid();
    let mut ws = Workspace::new();
    out.fill(0.0);
    for (i, &eta) in u.values.iter().enumerate() {
        let v = net.evaluate_with(&mut ws, &[eta, node(i, g)]).expect("two inputs");
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= g as f64);
}

impl AnoEncoder {
    /// `⨍ R(u(x), x) dx` by evaluating the normalized lifting at every node.
    pub fn encode_full(&self, u: &GridFunction, out: &mut [f64]) {
        grid_mean_of(&self.lifting, u, out);
    }

    /// `⨍ R_raw(u(x), x) dx`, the unnormalized encoder approximating
    /// `(⨍ u e*_k)_k`.
    pub fn encode_raw(&self, u: &GridFunction) -> Vec<f64> {
        let mut out = vec![0.0; self.block_coeffs.len()];
        grid_mean_of(&self.raw_lifting, u, &mut out);
        out
    }
}

impl Encoder for AnoEncoder {
    fn out_dim(&self) -> usize {
        self.block_coeffs.len()
    }

    fn grid(&self) -> usize {
        self.grid
    }

    /// Uses block sums when `‖u‖_∞ ≤ B′`, where the lifting is exactly
    /// linear in `η` at every node, and the full network otherwise.
    fn encode_into(&self, u: &GridFunction, out: &mut [f64]) {
        if u.sup_norm() > self.b_prime {
            return self.encode_full(u, out);
        }
        let per = self.grid / self.blocks;
        let sums: Vec<f64> = u.values.chunks_exact(per).map(|c| c.iter().sum()).collect();
        for ((o, c), s) in out.iter_mut().zip(&self.block_coeffs).zip(&self.shift) {
            *o = s + c.iter().zip(&sums).map(|(a, b)| a * b).sum::<f64>() / self.grid as f64;
        }
    }
}

fn padded(m: &Matrix<f64>, rows: usize, cols: usize) -> Matrix<f64> {
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out.set(r, c, m.get(r, c));
        }
    }
    out
}

fn padded_vec(v: &[f64], len: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    out.resize(len, 0.0);
    out
}

/// Builds an ANO `Ψ` with `Ψ(u) ≡ ψ(⨍ R(u(x), x) dx)`.
///
/// For `ψ = (A_1, b_1), …, (A_L, b_L)`: the lifting is `A_1 R + b_1`, the
/// first hidden layer (`W = 0`, `b = 0`) turns its average into the constant
/// channel field `σ(A_1 ℰ(u) + b_1)`, layers `j = 2, …, L−2` use
/// `W_j = A_j − I` (channels are constant, so `⨍ v = v`), and `Q` packs
/// `(A_{L−1}, b_{L−1}), (A_L, b_L)`. Channels are zero-padded to the widest
/// hidden layer. For `L = 2`, `Q = ((I, 0), (A_2, b_2))`.
pub fn embed_network_in_ano(psi: &Network<f64>, lifting: &Network<f64>) -> Result<Ano, OperatorError> {
    let layers = psi.layers();
    let depth = layers.len();
    if depth < 2 {
        return Err(OperatorError::Invalid(format!(
            "ψ must have depth at least 2, got {depth}"
        )));
    }
    if psi.output_dim() != 1 {
        return Err(OperatorError::Invalid("ψ must be scalar-valued".into()));
    }
    if lifting.depth() != 2 || lifting.input_dim() != 2 {
        return Err(OperatorError::Invalid(
            "lifting must be a depth-2 network on (η, x)".into(),
        ));
    }
    if lifting.output_dim() != psi.input_dim() {
        return Err(OperatorError::Invalid(format!(
            "lifting has {} outputs but ψ takes {} inputs",
            lifting.output_dim(),
            psi.input_dim()
        )));
    }
    // Hidden widths n_1, …, n_{L−2} carried as channels; for L = 2 only n_1.
    let carried = depth.saturating_sub(2).max(1);
    let dc = layers[..carried].iter().map(Layer::outputs).max().expect("nonempty");

    let a1 = &layers[0];
    let r_out = &lifting.layers()[1];
    let folded_w = padded(&a1.weights.matmul(&r_out.weights), dc, r_out.inputs());
    let folded_b: Vec<f64> = a1
        .weights
        .matvec(&r_out.bias)
        .iter()
        .zip(&a1.bias)
        .map(|(x, b)| x + b)
        .collect();
    let new_lifting = Network::new(vec![
        lifting.layers()[0].clone(),
        Layer::new(folded_w, padded_vec(&folded_b, dc)),
    ])
    .map_err(|e| OperatorError::Invalid(e.to_string()))?;

    let mut hidden = vec![AnoLayer {
        w: Matrix::zeros(dc, dc),
        b: vec![0.0; dc],
    }];
    for layer in &layers[1..carried] {
        let mut w = padded(&layer.weights, dc, dc);
        for c in 0..dc {
            w.set(c, c, w.get(c, c) - 1.0);
        }
        hidden.push(AnoLayer {
            w,
            b: padded_vec(&layer.bias, dc),
        });
    }

    let projection = if depth == 2 {
        let out = &layers[1];
        Network::new(vec![
            Layer::new(Matrix::identity(dc), vec![0.0; dc]),
            Layer::new(padded(&out.weights, 1, dc), out.bias.clone()),
        ])
    } else {
        let pen = &layers[depth - 2];
        Network::new(vec![
            Layer::new(padded(&pen.weights, pen.outputs(), dc), pen.bias.clone()),
            layers[depth - 1].clone(),
        ])
    }
    .map_err(|e| OperatorError::Invalid(e.to_string()))?;
    Ano::new(new_lifting, hidden, projection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::measure::RandomFieldSpec;
    use crate::rng;
    use rand::Rng;

    fn field(terms: usize, grid: usize) -> FieldMeasure {
        RandomFieldSpec {
            terms,
            grid,
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    fn random_net(widths: &[usize], r: &mut rng::StreamRng) -> Network<f64> {
        let layers = widths
            .windows(2)
            .map(|w| {
                let m = Matrix::from_vec(w[1], w[0], (0..w[0] * w[1]).map(|_| r.gen_range(-1.0..1.0)).collect());
                Layer::new(m, (0..w[1]).map(|_| r.gen_range(-0.5..0.5)).collect())
            })
            .collect();
        Network::new(layers).unwrap()
    }

    #[test]
    fn pure_averaging_layer() {
        // R(η, x) = η through σ(η + B) − σ(−η + B) with B large enough.
        let lifting = Network::new(vec![
            Layer::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]], vec![10.0, 10.0]),
            Layer::from_rows(&[vec![0.5, -0.5]], vec![0.0]),
        ])
        .unwrap();
        let ano = Ano::new(
            lifting.clone(),
            vec![AnoLayer {
                w: Matrix::zeros(1, 1),
                b: vec![0.0],
            }],
            Network::new(vec![
                Layer::from_rows(&[vec![1.0]], vec![0.0]),
                Layer::from_rows(&[vec![1.0]], vec![0.0]),
            ])
            .unwrap(),
        )
        .unwrap();
        let u = GridFunction::from_fn(64, |x| (3.0 * x).sin() - 0.2);
        let out = ano.apply(&u);
        let expect = u.mean().max(0.0);
        assert!(out.values.iter().all(|v| (v - expect).abs() < 1e-12));

        let ano = Ano::new(
            lifting,
            vec![AnoLayer {
                w: Matrix::identity(1),
                b: vec![0.0],
            }],
            Network::new(vec![
                Layer::from_rows(&[vec![1.0]], vec![0.0]),
                Layer::from_rows(&[vec![1.0]], vec![0.0]),
            ])
            .unwrap(),
        )
        .unwrap();
        let c = 0.7;
        let out = ano.apply(&GridFunction::new(vec![c; 32]));
        assert!(out.values.iter().all(|v| (v - 2.0 * c).abs() < 1e-12));
    }

    #[test]
    fn grid_refinement_consistency() {
        let mut r = rng::derive(11, &[]);
        let lifting = random_net(&[2, 6, 3], &mut r);
        let layers = (0..2)
            .map(|_| AnoLayer {
                w: Matrix::from_vec(3, 3, (0..9).map(|_| r.gen_range(-0.5..0.5)).collect()),
                b: (0..3).map(|_| r.gen_range(-0.2..0.2)).collect(),
            })
            .collect();
        let q = random_net(&[3, 4, 1], &mut r);
        let ano = Ano::new(lifting, layers, q).unwrap();
        let f = |x: f64| (std::f64::consts::PI * x).cos() + 0.3 * x * x;
        // The output varies with x, so the resolutions are compared through
        // their grid means.
        let coarse = ano.apply(&GridFunction::from_fn(256, f));
        let fine = ano.apply(&GridFunction::from_fn(512, f));
        assert!((coarse.mean() - fine.mean()).abs() <= 1e-3);
    }

    #[test]
    fn ramp_reproduces_eta_for_a_constant_dual() {
        let one = GridFunction::new(vec![1.0; 32]);
        let net = block_lifting(&[vec![1.0]], 32, 2.0);
        for i in 0..=40 {
            let eta = -2.0 + 0.1 * i as f64;
            for x in [0.01, 0.5, 0.99] {
                assert!((net.evaluate(&[eta, x]).unwrap()[0] - eta).abs() < 1e-12);
            }
        }
        assert!(lifting_eps(&net, &[&one], 2.0) < 1e-12);
    }

    #[test]
    fn encoder_accuracy_and_fast_path() {
        let mu = field(16, 256);
        let d = 2;
        let eps = 1.0 / 8.0 / (2.0 * d as f64);
        let built = ano_encoder_build(&mu, d, None, eps).unwrap();
        assert!(built.converged, "ε = {}", built.achieved_eps);
        let enc = &built.encoder;
        let b = enc.b_prime;
        // η-slope against e*_k, averaged over x.
        for k in 0..d {
            let mut total = 0.0;
            for i in 0..256 {
                let x = node(i, 256);
                let h = 1e-3;
                let fd = (enc.raw_lifting.evaluate(&[h, x]).unwrap()[k]
                    - enc.raw_lifting.evaluate(&[-h, x]).unwrap()[k])
                    / (2.0 * h);
                total += (fd - mu.dual(k).values[i]).abs();
            }
            assert!(total / 256.0 <= eps);
        }
        let mut r = rng::derive(12, &[]);
        for _ in 0..50 {
            let s = mu.sample(&mut r);
            let raw = enc.encode_raw(&s.u);
            for k in 0..d {
                assert!((raw[k] - s.z[k]).abs() <= eps * (1.0 + b));
            }
            let mut fast = vec![0.0; d];
            let mut full = vec![0.0; d];
            enc.encode_into(&s.u, &mut fast);
            enc.encode_full(&s.u, &mut full);
            for (a, c) in fast.iter().zip(&full) {
                assert!((a - c).abs() < 1e-9, "{a} vs {c}");
            }
        }
    }

    #[test]
    fn embedding_matches_composition() {
        let mu = field(16, 128);
        let d = 3;
        let enc = ano_encoder_build(&mu, d, None, 0.05).unwrap().encoder;
        let mut r = rng::derive(13, &[]);
        for depth in 2usize..=5 {
            for _ in 0..10 {
                let mut widths = vec![d];
                widths.extend((1..depth).map(|_| r.gen_range(1..6)));
                widths.push(1);
                let psi = random_net(&widths, &mut r);
                let ano = embed_network_in_ano(&psi, &enc.lifting).unwrap();
                assert_eq!(ano.stats().depth, depth.saturating_sub(2).max(1));
                assert_eq!(ano.lifting.depth(), 2);
                assert_eq!(ano.projection.depth(), 2);
                let u = mu.sample(&mut r).u;
                let mut e = vec![0.0; d];
                enc.encode_full(&u, &mut e);
                let target = psi.evaluate(&e).unwrap()[0];
                let out = ano.apply(&u);
                for v in &out.values {
                    assert!((v - target).abs() <= 1e-10 * (1.0 + target.abs()), "{v} vs {target}");
                }
            }
        }
    }

    #[test]
    fn embedding_rejects_bad_shapes() {
        let mut r = rng::derive(14, &[]);
        let lifting = random_net(&[2, 4, 3], &mut r);
        assert!(embed_network_in_ano(&random_net(&[2, 4, 1], &mut r), &lifting).is_err());
        assert!(embed_network_in_ano(&random_net(&[3, 1], &mut r), &lifting).is_err());
        assert!(embed_network_in_ano(&random_net(&[3, 2, 2], &mut r), &lifting).is_err());
    }
}
