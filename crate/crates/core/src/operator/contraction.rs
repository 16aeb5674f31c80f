//! Coverage of a small ball by near-identity maps: if
//! `‖F − id‖_{W^{1,∞}(V)} ≤ ε₀ = min(½, r/4)` then `F(V) ⊃ V₀ = B(y₀, r/4)`
//! and `F_#Unif(V) ≥ c₀·Unif(V₀)` with `c₀ = (|V₀|/|V|)(2/3)^d`, where
//! `B(y₀, r)` is the ball inscribed in the box `V`.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::clopper_pearson_lower;
use super::OperatorError;
use crate::rng::{self, StreamRng};

/// A map `ℝ^d → ℝ^d`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, y: &[f64], out: &mut [f64]);
}

/// One term `a sin(2π⟨k, y⟩ + φ)` added to coordinate `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineTerm {
    pub axis: usize,
    pub amplitude: f64,
    pub frequency: Vec<f64>,
    pub phase: f64,
}

/// Test maps for the coverage check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Identity {
        d: usize,
    },
    /// `F = id + Σ` sine terms.
    Sinusoidal {
        d: usize,
        terms: Vec<SineTerm>,
    },
    /// Sets the last coordinate to zero, e.g. `F(y) = (y₁, 0)` in `d = 2`.
    Collapse {
        d: usize,
    },
}

impl VectorField for Perturbation {
    fn dim(&self) -> usize {
        match self {
            Perturbation::Identity { d } | Perturbation::Sinusoidal { d, .. } | Perturbation::Collapse { d } => *d,
        }
    }

    fn apply(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
        match self {
            Perturbation::Identity { .. } => {}
            Perturbation::Sinusoidal { terms, .. } => {
                for t in terms {
                    let arg: f64 = t.frequency.iter().zip(y).map(|(k, v)| k * v).sum();
                    out[t.axis] += t.amplitude * (std::f64::consts::TAU * arg + t.phase).sin();
                }
            }
            Perturbation::Collapse { d } => out[d - 1] = 0.0,
        }
    }
}

impl Perturbation {
    /// Analytic bound on `max(sup|F − id|₂, sup‖D(F − id)‖₂)` for sinusoidal
    /// maps; `None` otherwise.
    pub fn sine_bound(&self) -> Option<f64> {
        let Perturbation::Sinusoidal { d, terms } = self else {
            return None;
        };
        let mut amp = vec![0.0; *d];
        let mut frob = 0.0;
        for t in terms {
            amp[t.axis] += t.amplitude.abs();
            let k2: f64 = t.frequency.iter().map(|k| k * k).sum();
            frob += (t.amplitude * std::f64::consts::TAU).powi(2) * k2;
        }
        // Frobenius of a sum of rank-one rows, bounded via the triangle
        // inequality per row and Cauchy–Schwarz across terms.
        let n = terms.len().max(1) as f64;
        let value = amp.iter().map(|a| a * a).sum::<f64>().sqrt();
        Some(value.max((n * frob).sqrt()))
    }
}

/// `count` random sinusoidal perturbations in dimension `d` with
/// `W^{1,∞}` bound between `0.5·0.95·ε` and `0.95·ε`.
pub fn perturbation_family(d: usize, count: usize, eps: f64, seed: u64) -> Vec<Perturbation> {
    (0..count)
        .map(|i| {
            let mut r = rng::derive(seed, &[rng::label::INSTANCE, i as u64]);
            let n_terms = r.gen_range(1..=3) * d;
            let terms: Vec<SineTerm> = (0..n_terms)
                .map(|j| SineTerm {
                    axis: j % d,
                    amplitude: r.gen_range(-1.0..1.0),
                    frequency: (0..d).map(|_| r.gen_range(-2i32..=2) as f64).collect(),
                    phase: r.gen_range(0.0..std::f64::consts::TAU),
                })
                .collect();
            let mut p = Perturbation::Sinusoidal { d, terms };
            let bound = p.sine_bound().expect("sinusoidal");
            let target = 0.95 * eps * r.gen_range(0.5..1.0);
            if let Perturbation::Sinusoidal { terms, .. } = &mut p {
                for t in terms.iter_mut() {
                    t.amplitude *= target / bound;
                }
            }
            p
        })
        .collect()
}

/// Dense finite-difference estimate of
/// `‖F − id‖_{W^{1,∞}(V)} = max(sup|F − id|₂, sup‖D(F − id)‖₂)` on a
/// tensor grid with `per_axis` nodes per axis.
pub fn w1inf_distance_to_identity(f: &dyn VectorField, bounds: &[(f64, f64)], per_axis: usize) -> f64 {
    let d = f.dim();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut y = vec![0.0; d];
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let total = per_axis.pow(d as u32);
    for flat in 0..total {
        let mut rest = flat;
        for (j, yj) in y.iter_mut().enumerate() {
            let (lo, hi) = bounds[j];
            let k = rest % per_axis;
            rest /= per_axis;
            *yj = lo + (hi - lo) * (k as f64 + 0.5) / per_axis as f64;
        }
        f.apply(&y, &mut a);
        let disp = a.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let mut jac = DMatrix::<f64>::zeros(d, d);
        for c in 0..d {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[c] += h;
            ym[c] -= h;
            f.apply(&yp, &mut a);
            f.apply(&ym, &mut b);
            for r in 0..d {
                let delta = if r == c { 1.0 } else { 0.0 };
                jac[(r, c)] = (a[r] - b[r]) / (2.0 * h) - delta;
            }
        }
        let norm = jac.singular_values().max();
        worst = worst.max(disp).max(norm);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContractionStatus {
    Pass,
    Fail,
    /// The map is farther than `ε₀` from the identity.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub dim: usize,
    pub radius: f64,
    pub epsilon0: f64,
    pub c0: f64,
    pub w1inf: f64,
    pub status: ContractionStatus,
    /// Cells of the `20^d` partition of `V₀`'s bounding cube lying inside `V₀`.
    pub bins: usize,
    pub bins_hit: usize,
    /// `min_b` of the 95% lower bound on `P(F(Y) ∈ b)` times `|V₀|/|b|`;
    /// coverage with density `c₀` needs this to be at least `c₀`.
    pub min_density_ratio: f64,
    pub samples: usize,
}

fn ball_volume(d: usize, r: f64) -> f64 {
    // V_d = V_{d−2} · 2π/d · r², V_0 = 1, V_1 = 2r.
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 * r };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= std::f64::consts::TAU / k as f64 * r * r;
        k += 2;
    }
    v
}

const BINS_PER_AXIS: usize = 20;
const CHUNK: usize = 16384;

/// Runs the coverage check for `F` on the box `V = Π [lo_j, hi_j]`.
///
/// Only preimages within `ε₀` of `V₀` can land in `V₀`, so `Y` is drawn
/// uniformly from `V₀`'s bounding cube widened by `ε₀` (clipped to `V`) and
/// bin masses are rescaled by that region's share of `|V|`.
pub fn contraction_coverage_check(
    f: &dyn VectorField,
    bounds: &[(f64, f64)],
    samples: usize,
    seed: u64,
) -> Result<ContractionReport, OperatorError> {
    let d = f.dim();
    if bounds.len() != d || bounds.iter().any(|(lo, hi)| !(hi > lo)) {
        return Err(OperatorError::Invalid(
            "V must be a nondegenerate box of the map's dimension".into(),
        ));
    }
    if samples == 0 {
        return Err(OperatorError::Invalid("need at least one sample".into()));
    }
    let center: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let r = bounds
        .iter()
        .map(|(lo, hi)| 0.5 * (hi - lo))
        .fold(f64::INFINITY, f64::min);
    let r0 = r / 4.0;
    let eps0 = 0.5f64.min(r / 4.0);
    let vol_v: f64 = bounds.iter().map(|(lo, hi)| hi - lo).product();
    let vol_v0 = ball_volume(d, r0);
    let c0 = vol_v0 / vol_v * (2.0f64 / 3.0).powi(d as i32);
    let per_axis = ((40_000f64).powf(1.0 / d as f64) as usize).clamp(8, 400);
    let w1inf = w1inf_distance_to_identity(f, bounds, per_axis);
    let mut report = ContractionReport {
        dim: d,
        radius: r,
        epsilon0: eps0,
        c0,
        w1inf,
        status: ContractionStatus::NotApplicable,
        bins: 0,
        bins_hit: 0,
        min_density_ratio: 0.0,
        samples,
    };
    if w1inf > eps0 {
        return Ok(report);
    }

    let side = 2.0 * r0 / BINS_PER_AXIS as f64;
    let cells = BINS_PER_AXIS.pow(d as u32);
    let lower_corner: Vec<f64> = center.iter().map(|c| c - r0).collect();
    let inside: Vec<bool> = (0..cells)
        .map(|flat| {
            let mut rest = flat;
            let mut far = 0.0;
            for (j, lc) in lower_corner.iter().enumerate() {
                let k = rest % BINS_PER_AXIS;
                rest /= BINS_PER_AXIS;
                let a = lc + k as f64 * side - center[j];
                let b = a + side;
                far += a.abs().max(b.abs()).powi(2);
            }
            far <= r0 * r0
        })
        .collect();
    let region: Vec<(f64, f64)> = bounds
        .iter()
        .zip(&center)
        .map(|(&(lo, hi), c)| ((c - r0 - eps0).max(lo), (c + r0 + eps0).min(hi)))
        .collect();
    let share = region.iter().map(|(a, b)| b - a).product::<f64>() / vol_v;

    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Vec<usize>> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rg: StreamRng = rng::derive(seed, &[rng::label::INPUTS, ci as u64]);
            let mut hist = vec![0usize; cells];
            let mut y = vec![0.0; d];
            let mut fy = vec![0.0; d];
            for _ in 0..CHUNK.min(samples - ci * CHUNK) {
                for (v, (a, b)) in y.iter_mut().zip(&region) {
                    *v = rg.gen_range(*a..*b);
                }
                f.apply(&y, &mut fy);
                let mut flat = 0;
                let mut stride = 1;
                let mut ok = true;
                for (j, v) in fy.iter().enumerate() {
                    let t = (v - lower_corner[j]) / side;
                    if !(0.0..BINS_PER_AXIS as f64).contains(&t) {
                        ok = false;
                        break;
                    }
                    flat += t as usize * stride;
                    stride *= BINS_PER_AXIS;
                }
                if ok {
                    hist[flat] += 1;
                }
            }
            hist
        })
        .collect();
    let mut hist = vec![0usize; cells];
    for h in partial {
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
    }
    let bin_vol = side.powi(d as i32);
    let mut bins = 0;
    let mut hit = 0;
    let mut ratio = f64::INFINITY;
    for (count, _) in hist.iter().zip(&inside).filter(|(_, &inside)| inside) {
        bins += 1;
        if *count > 0 {
            hit += 1;
        }
        let lower = clopper_pearson_lower(*count, samples, 0.95) * share;
        ratio = ratio.min(lower * vol_v0 / bin_vol);
    }
    report.bins = bins;
    report.bins_hit = hit;
    report.min_density_ratio = ratio;
    report.status = if hit == bins && ratio >= c0 {
        ContractionStatus::Pass
    } else {
        ContractionStatus::Fail
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); d]
    }

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(1, 0.5) - 1.0).abs() < 1e-15);
        assert!((ball_volume(2, 1.0) - std::f64::consts::PI).abs() < 1e-15);
        assert!((ball_volume(3, 1.0) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn identity_passes() {
        for d in [1, 2] {
            let rep = contraction_coverage_check(&Perturbation::Identity { d }, &unit(d), 200_000, 1).unwrap();
            assert_eq!(rep.status, ContractionStatus::Pass, "{rep:?}");
            assert!(rep.w1inf < 1e-8, "{}", rep.w1inf);
            assert!((rep.epsilon0 - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn collapse_is_not_applicable() {
        for d in [1, 2] {
            let rep = contraction_coverage_check(&Perturbation::Collapse { d }, &unit(d), 1000, 1).unwrap();
            assert_eq!(rep.status, ContractionStatus::NotApplicable);
            assert!(rep.w1inf > rep.epsilon0);
        }
    }

    #[test]
    fn sine_family_respects_the_budget() {
        for d in [1, 2] {
            for p in perturbation_family(d, 10, 0.125, 3) {
                let bound = p.sine_bound().unwrap();
                assert!(bound <= 0.95 * 0.125 + 1e-12);
                let measured = w1inf_distance_to_identity(&p, &unit(d), 64);
                assert!(measured <= bound + 1e-6, "{measured} > {bound}");
            }
        }
    }

    #[test]
    fn perturbed_maps_cover() {
        for d in [1, 2] {
            for p in perturbation_family(d, 3, 0.125, 4) {
                let rep = contraction_coverage_check(&p, &unit(d), 200_000, 5).unwrap();
                assert_eq!(rep.status, ContractionStatus::Pass, "{rep:?}");
            }
        }
    }
}
