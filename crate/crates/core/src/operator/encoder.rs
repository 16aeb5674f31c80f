//! Encoders `ℰ: 𝒳 → ℝ^d`, the linear-functional (DeepONet) construction,
//! and histogram certification of `ℰ_#μ ≥ c·Unif([0,1]^d)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use super::measure::FieldMeasure;
use super::{GridFunction, OperatorError};
use crate::adversary::Verdict;
use crate::rng;

/// A map from grid functions to `ℝ^d` whose nominal image of the measure's
/// coefficient box is `[0,1]^d`.
pub trait Encoder: Send + Sync {
    fn out_dim(&self) -> usize;

    fn grid(&self) -> usize;

    fn encode_into(&self, u: &GridFunction, out: &mut [f64]);

    /// True when `ℰ` is affine in `u`, which lets samplers work directly on
    /// the coefficient vector.
    fn is_affine(&self) -> bool {
        false
    }

    fn encode(&self, u: &GridFunction) -> Result<Vec<f64>, OperatorError> {
        if u.grid() != self.grid() {
            return Err(OperatorError::GridMismatch {
                expected: self.grid(),
                found: u.grid(),
            });
        }
        let mut out = vec![0.0; self.out_dim()];
        self.encode_into(u, &mut out);
        Ok(out)
    }
}

/// A linear functional on grid functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// `u ↦ ⨍ u·w`.
    Moment { weight: GridFunction },
    /// `u ↦ u(x_index)`.
    Point { index: usize },
}

impl Functional {
    pub fn apply(&self, u: &GridFunction) -> f64 {
        match self {
            Functional::Moment { weight } => u.pair(weight),
            Functional::Point { index } => u.values[*index],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalFamily {
    /// `ℓ_k = e*_k`, `d₀ = d`.
    CosineMoments,
    /// Evaluations at `count` equispaced grid nodes.
    PointEvals { count: usize },
}

/// `ℰ(u) = b + a·(ℓ_1(u), …, ℓ_{d₀}(u))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetEncoder {
    pub functionals: Vec<Functional>,
    /// `d × d₀`, row-major.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub grid: usize,
    /// Bound on `|e*_j(u) − Σ_k c_{jk} ℓ_k(u)|` over `u` in the span of the
    /// measure's basis with `‖u‖_∞ ≤ 1`.
    pub delta_hat: f64,
    /// The unnormalized dual coefficients `c`.
    pub dual_coefficients: Vec<Vec<f64>>,
}

impl Encoder for DeepOnetEncoder {
    fn out_dim(&self) -> usize {
        self.b.len()
    }

    fn grid(&self) -> usize {
        self.grid
    }

    fn encode_into(&self, u: &GridFunction, out: &mut [f64]) {
        let l: Vec<f64> = self.functionals.iter().map(|f| f.apply(u)).collect();
        for ((o, row), b) in out.iter_mut().zip(&self.a).zip(&self.b) {
            *o = b + row.iter().zip(&l).map(|(a, v)| a * v).sum::<f64>();
        }
    }

    fn is_affine(&self) -> bool {
        true
    }
}

fn point_indices(count: usize, g: usize) -> Vec<usize> {
    (0..count).map(|k| ((2 * k + 1) * g) / (2 * count)).collect()
}

/// Largest `‖r_j‖₂ / √λ_min(Gram)` where `r_{ji} = δ_{ij} − Σ_k c_{jk} ℓ_k(e_i)`.
fn span_residual(mu: &FieldMeasure, functionals: &[Functional], c: &[Vec<f64>]) -> f64 {
    let j_terms = mu.terms();
    let gram = DMatrix::from_fn(j_terms, j_terms, |i, l| mu.basis(i).pair(mu.basis(l)));
    let lam_min = SymmetricEigen::new(gram).eigenvalues.min().max(f64::MIN_POSITIVE);
    let lvals: Vec<Vec<f64>> = (0..j_terms)
        .map(|i| functionals.iter().map(|f| f.apply(mu.basis(i))).collect())
        .collect();
    c.iter()
        .enumerate()
        .map(|(j, cj)| {
            let r2: f64 = (0..j_terms)
                .map(|i| {
                    let approx: f64 = cj.iter().zip(&lvals[i]).map(|(a, b)| a * b).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    (target - approx).powi(2)
                })
                .sum();
            r2.sqrt() / lam_min.sqrt()
        })
        .fold(0.0, f64::max)
}

/// Builds a DeepONet encoder from dual coefficients `c` (`d × d₀`) and
/// normalizes it so that the coefficient box maps onto `[0,1]^d`.
fn assemble(mu: &FieldMeasure, functionals: Vec<Functional>, c: Vec<Vec<f64>>, delta_hat: f64) -> DeepOnetEncoder {
    let d = c.len();
    // Nominal image of u₀ + Σ_i z_i e_i under y_j = Σ_k c_jk ℓ_k(u − u₀).
    let lvals: Vec<Vec<f64>> = (0..mu.terms())
        .map(|i| functionals.iter().map(|f| f.apply(mu.basis(i))).collect())
        .collect();
    let offset_l: Vec<f64> = mu
        .offset()
        .map(|o| functionals.iter().map(|f| f.apply(o)).collect())
        .unwrap_or_else(|| vec![0.0; functionals.len()]);
    let mut a = Vec::with_capacity(d);
    let mut b = Vec::with_capacity(d);
    for cj in &c {
        let dot = |l: &[f64]| cj.iter().zip(l).map(|(x, y)| x * y).sum::<f64>();
        let (mut lo, mut hi) = (0.0, 0.0);
        for (i, li) in lvals.iter().enumerate() {
            let w = dot(li);
            let (zl, zh) = mu.interval(i);
            lo += (w * zl).min(w * zh);
            hi += (w * zl).max(w * zh);
        }
        let width = hi - lo;
        let scale = if width > 0.0 { 1.0 / width } else { 1.0 };
        a.push(cj.iter().map(|v| v * scale).collect());
        b.push(-(dot(&offset_l) + lo) * scale);
    }
    DeepOnetEncoder {
        functionals,
        a,
        b,
        grid: mu.grid(),
        delta_hat,
        dual_coefficients: c,
    }
}

/// Builds `ℰ` from the given functional family.
///
/// Cosine moments use `ℓ_k = e*_k` and are exact (`δ̂ = 0`). Point
/// evaluations solve `Σ_k c_{jk} e_i(x_k) ≈ δ_{ij}` by minimum-norm least
/// squares over the measure's basis; the build fails if the achieved `δ̂`
/// exceeds `delta`.
pub fn deeponet_encoder_build(
    mu: &FieldMeasure,
    d: usize,
    delta: f64,
    family: FunctionalFamily,
) -> Result<DeepOnetEncoder, OperatorError> {
    if d == 0 || d > mu.terms() {
        return Err(OperatorError::TooManyCoordinates {
            requested: d,
            available: mu.terms(),
        });
    }
    if !(delta >= 0.0) {
        return Err(OperatorError::Invalid(format!("δ must be nonnegative, got {delta}")));
    }
    match family {
        FunctionalFamily::CosineMoments => {
            let functionals = (0..d)
                .map(|k| Functional::Moment {
                    weight: mu.dual(k).clone(),
                })
                .collect();
            let c = (0..d)
                .map(|j| (0..d).map(|k| if j == k { 1.0 } else { 0.0 }).collect())
                .collect();
            Ok(assemble(mu, functionals, c, 0.0))
        }
        FunctionalFamily::PointEvals { count } => {
            if count == 0 || count > mu.grid() {
                return Err(OperatorError::Invalid(format!(
                    "point count must lie in 1..={}, got {count}",
                    mu.grid()
                )));
            }
            let idx = point_indices(count, mu.grid());
            let functionals: Vec<Functional> = idx.iter().map(|&index| Functional::Point { index }).collect();
            let j_terms = mu.terms();
            // E[i][k] = e_i(x_k); solve Eᵀ-rows: Σ_k c_jk E[i][k] = δ_ij.
            let e = DMatrix::from_fn(j_terms, count, |i, k| mu.basis(i).values[idx[k]]);
            let svd = e.clone().svd(true, true);
            let mut c = Vec::with_capacity(d);
            for j in 0..d {
                let rhs = DVector::from_fn(j_terms, |i, _| if i == j { 1.0 } else { 0.0 });
                let sol = svd
                    .solve(&rhs, 1e-12)
                    .map_err(|e| OperatorError::Invalid(format!("least squares failed: {e}")))?;
                c.push(sol.iter().copied().collect::<Vec<f64>>());
            }
            let delta_hat = span_residual(mu, &functionals, &c);
            if delta_hat > delta {
                return Err(OperatorError::Unachievable {
                    requested: delta,
                    achieved: delta_hat,
                });
            }
            Ok(assemble(mu, functionals, c, delta_hat))
        }
    }
}

impl DeepOnetEncoder {
    /// A copy whose dual coefficients are moved along random directions so
    /// that the span residual `δ̂` becomes `delta` (to first order), then
    /// renormalized.
    pub fn perturbed(&self, mu: &FieldMeasure, delta: f64, seed: u64) -> Self {
        let mut r = rng::derive(seed, &[rng::label::ALGORITHM]);
        let d0 = self.functionals.len();
        let mut c = self.dual_coefficients.clone();
        let dirs: Vec<Vec<f64>> = (0..c.len())
            .map(|_| (0..d0).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        // Residual contributed by a unit step along each direction.
        let per: Vec<f64> = dirs
            .iter()
            .map(|dir| span_residual_linear(mu, &self.functionals, dir))
            .collect();
        for ((cj, dir), p) in c.iter_mut().zip(&dirs).zip(&per) {
            let t = if *p > 0.0 { delta / p } else { 0.0 };
            for (a, v) in cj.iter_mut().zip(dir) {
                *a += t * v;
            }
        }
        let delta_hat = span_residual(mu, &self.functionals, &c);
        assemble(mu, self.functionals.clone(), c, delta_hat)
    }
}

/// `‖(Σ_k w_k ℓ_k(e_i))_i‖₂ / √λ_min`, the residual size of a coefficient step `w`.
fn span_residual_linear(mu: &FieldMeasure, functionals: &[Functional], w: &[f64]) -> f64 {
    let j_terms = mu.terms();
    let gram = DMatrix::from_fn(j_terms, j_terms, |i, l| mu.basis(i).pair(mu.basis(l)));
    let lam_min = SymmetricEigen::new(gram).eigenvalues.min().max(f64::MIN_POSITIVE);
    let s: f64 = (0..j_terms)
        .map(|i| {
            functionals
                .iter()
                .zip(w)
                .map(|(f, a)| a * f.apply(mu.basis(i)))
                .sum::<f64>()
                .powi(2)
        })
        .sum();
    s.sqrt() / lam_min.sqrt()
}

/// The affine map `z ↦ ℰ(u₀ + Σ z_i e_i) = c + A z` of an affine encoder.
pub(crate) struct CoordinateMap {
    pub c: Vec<f64>,
    /// `d × J`, row-major.
    pub a: Vec<Vec<f64>>,
}

impl CoordinateMap {
    pub fn of(enc: &dyn Encoder, mu: &FieldMeasure) -> Self {
        let d = enc.out_dim();
        let mut c = vec![0.0; d];
        enc.encode_into(&mu.realize(&[]), &mut c);
        let mut a = vec![vec![0.0; mu.terms()]; d];
        let mut col = vec![0.0; d];
        let mut z = vec![0.0; mu.terms()];
        for i in 0..mu.terms() {
            z[i] = 1.0;
            enc.encode_into(&mu.realize(&z), &mut col);
            z[i] = 0.0;
            for (row, (v, c0)) in a.iter_mut().zip(col.iter().zip(&c)) {
                row[i] = v - c0;
            }
        }
        Self { c, a }
    }

    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        for ((o, row), c) in out.iter_mut().zip(&self.a).zip(&self.c) {
            *o = c + row.iter().zip(z).map(|(a, v)| a * v).sum::<f64>();
        }
    }
}

/// Histogram certificate of `ℰ_#μ ≥ c·Unif([0,1]^d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushforwardReport {
    pub dim: usize,
    pub bins: usize,
    pub samples: usize,
    /// `min_bin_count / (samples / bins^d)`.
    pub c_hat: f64,
    /// Multi-index of a least-populated bin.
    pub min_bin: Vec<usize>,
    pub min_count: usize,
    /// One-sided 95% Clopper–Pearson lower bound on that bin's mass.
    pub mass_lower_bound: f64,
    /// Samples whose image fell outside `[0,1]^d`.
    pub outside: usize,
    pub verdict: Verdict,
}

/// One-sided lower confidence bound for a binomial proportion.
pub(crate) fn clopper_pearson_lower(k: usize, n: usize, confidence: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    inv_beta_reg(k as f64, (n - k + 1) as f64, 1.0 - confidence)
}

const CHUNK: usize = 8192;

/// Histograms `ℰ(u)` for `samples` draws `u ~ μ` on `bins` cells per axis.
/// PASS iff every bin is hit, which is equivalent to a positive 95% lower
/// bound on the least-populated bin's mass.
pub fn pushforward_certify(
    enc: &dyn Encoder,
    mu: &FieldMeasure,
    bins: usize,
    samples: usize,
    seed: u64,
) -> Result<PushforwardReport, OperatorError> {
    let d = enc.out_dim();
    if enc.grid() != mu.grid() {
        return Err(OperatorError::GridMismatch {
            expected: mu.grid(),
            found: enc.grid(),
        });
    }
    let cells = bins
        .checked_pow(d as u32)
        .filter(|&c| bins > 0 && c.checked_mul(20).is_some_and(|m| m <= samples))
        .ok_or_else(|| {
            OperatorError::Invalid(format!(
                "need bins^d · 20 ≤ samples, got bins = {bins}, d = {d}, samples = {samples}"
            ))
        })?;
    let map = enc.is_affine().then(|| CoordinateMap::of(enc, mu));
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(Vec<usize>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut r = rng::derive(seed, &[rng::label::INPUTS, ci as u64]);
            let count = CHUNK.min(samples - ci * CHUNK);
            let mut hist = vec![0usize; cells];
            let mut outside = 0usize;
            let mut e = vec![0.0; d];
            for _ in 0..count {
                let z = mu.sample_coords(&mut r);
                match &map {
                    Some(m) => m.apply(&z, &mut e),
                    None => enc.encode_into(&mu.realize(&z), &mut e),
                }
                match bin_index(&e, bins) {
                    Some(b) => hist[b] += 1,
                    None => outside += 1,
                }
            }
            (hist, outside)
        })
        .collect();
    let mut hist = vec![0usize; cells];
    let mut outside = 0;
    for (h, o) in partial {
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
        outside += o;
    }
    let (min_flat, &min_count) = hist
        .iter()
        .enumerate()
        .min_by_key(|(_, &c)| c)
        .expect("at least one bin");
    let mut min_bin = vec![0; d];
    let mut rest = min_flat;
    for slot in min_bin.iter_mut() {
        *slot = rest % bins;
        rest /= bins;
    }
    let c_hat = min_count as f64 / (samples as f64 / cells as f64);
    let mass_lower_bound = clopper_pearson_lower(min_count, samples, 0.95);
    Ok(PushforwardReport {
        dim: d,
        bins,
        samples,
        c_hat,
        min_bin,
        min_count,
        mass_lower_bound,
        outside,
        verdict: if mass_lower_bound > 0.0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
    })
}

fn bin_index(e: &[f64], bins: usize) -> Option<usize> {
    let mut flat = 0;
    let mut stride = 1;
    for &v in e {
        if !(0.0..=1.0).contains(&v) {
            return None;
        }
        let b = ((v * bins as f64) as usize).min(bins - 1);
        flat += b * stride;
        stride *= bins;
    }
    Some(flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::measure::RandomFieldSpec;

    fn field(terms: usize, grid: usize) -> FieldMeasure {
        RandomFieldSpec {
            terms,
            grid,
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    #[test]
    fn cosine_encoder_is_the_normalized_coefficient_map() {
        let mu = field(8, 128);
        let enc = deeponet_encoder_build(&mu, 2, 0.0, FunctionalFamily::CosineMoments).unwrap();
        assert_eq!(enc.delta_hat, 0.0);
        let mut r = rng::derive(1, &[]);
        for _ in 0..50 {
            let s = mu.sample(&mut r);
            let e = enc.encode(&s.u).unwrap();
            for j in 0..2 {
                let (lo, hi) = mu.interval(j);
                assert!((e[j] - (s.z[j] - lo) / (hi - lo)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn point_evaluation_residual() {
        let mu = field(8, 256);
        let enc = deeponet_encoder_build(&mu, 2, 0.05, FunctionalFamily::PointEvals { count: 64 }).unwrap();
        assert!(enc.delta_hat <= 0.05, "δ̂ = {}", enc.delta_hat);
        // Too few points to resolve eight cosines.
        let err = deeponet_encoder_build(&mu, 2, 0.05, FunctionalFamily::PointEvals { count: 3 }).unwrap_err();
        assert!(matches!(err, OperatorError::Unachievable { .. }));
    }

    #[test]
    fn residual_bound_dominates_observed_dual_error() {
        let mu = field(8, 256);
        let enc = deeponet_encoder_build(&mu, 2, 0.05, FunctionalFamily::PointEvals { count: 64 }).unwrap();
        let enc = enc.perturbed(&mu, 0.05, 3);
        assert!((enc.delta_hat - 0.05).abs() < 0.02, "δ̂ = {}", enc.delta_hat);
        let mut r = rng::derive(4, &[]);
        for _ in 0..200 {
            let z: Vec<f64> = (0..8).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect();
            let u = mu.realize(&z);
            let sup = u.sup_norm();
            for j in 0..2 {
                let approx: f64 = enc.dual_coefficients[j]
                    .iter()
                    .zip(&enc.functionals)
                    .map(|(c, f)| c * f.apply(&u))
                    .sum();
                assert!((approx - u.pair(mu.dual(j))).abs() <= enc.delta_hat * sup + 1e-12);
            }
        }
    }

    #[test]
    fn coordinate_map_matches_direct_encoding() {
        let mu = field(6, 64);
        let enc = deeponet_encoder_build(&mu, 3, 0.05, FunctionalFamily::PointEvals { count: 32 }).unwrap();
        let map = CoordinateMap::of(&enc, &mu);
        let mut r = rng::derive(5, &[]);
        let mut fast = vec![0.0; 3];
        for _ in 0..20 {
            let s = mu.sample(&mut r);
            map.apply(&s.z, &mut fast);
            let slow = enc.encode(&s.u).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    struct Constant(usize);

    impl Encoder for Constant {
        fn out_dim(&self) -> usize {
            2
        }
        fn grid(&self) -> usize {
            self.0
        }
        fn encode_into(&self, _: &GridFunction, out: &mut [f64]) {
            out.fill(0.5);
        }
    }

    #[test]
    fn constant_encoder_fails() {
        let mu = field(4, 32);
        let rep = pushforward_certify(&Constant(32), &mu, 4, 400, 1).unwrap();
        assert_eq!(rep.c_hat, 0.0);
        assert_eq!(rep.verdict, Verdict::Fail);
    }

    #[test]
    fn sample_count_precondition() {
        let mu = field(4, 32);
        let enc = deeponet_encoder_build(&mu, 2, 0.0, FunctionalFamily::CosineMoments).unwrap();
        assert!(pushforward_certify(&enc, &mu, 10, 1999, 1).is_err());
        assert!(pushforward_certify(&enc, &mu, 10, 2000, 1).is_ok());
    }

    #[test]
    fn clopper_pearson_reference_values() {
        // k = n: lower bound (1 − c)^{1/n}.
        let v = clopper_pearson_lower(10, 10, 0.95);
        assert!((v - 0.05f64.powf(0.1)).abs() < 1e-9, "{v} vs {}", 0.05f64.powf(0.1));
        // k = 1: 1 − 0.95^{1/n}.
        assert!((clopper_pearson_lower(1, 100, 0.95) - (1.0 - 0.95f64.powf(0.01))).abs() < 1e-9);
        assert_eq!(clopper_pearson_lower(0, 100, 0.95), 0.0);
    }
}
