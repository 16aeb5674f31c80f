//! Localized bump networks `ϑ_{M,y}` and the scaled adversarial bumps
//! `g_{M,y} = κ M^{−α/(α+⌊ℓ*/2⌋)} ϑ_{M,y}`.
//!
//! The bump realizes `ϑ_M(x) = σ(min_j (1 − M|x_j|))`, a pyramid of height one
//! supported on `|x|_∞ < 1/M`. The steepness `M` is spread over `s`
//! steepening stages, each multiplying by `k = M^{1/s}` through `⌈k⌉`
//! duplicated copies of `σ(±t)` read out with weight `k/⌈k⌉ ≤ 1`. The
//! stages are followed by a left-balanced min tree and one final rectifier,
//! so the depth is `s + ⌈log₂ d⌉ + 2` and every weight lies in `[−1, 1]`.

use serde::{Deserialize, Serialize};

use crate::relu::{affine_precompose, merge_affine, min_network, Layer, Matrix, Network};
use crate::spaces::{depth_fraction, Depth, SpaceError, SpaceParams};

/// Depth used for the construction when `ℓ* = ∞`.
pub const DEFAULT_DEPTH_CAP: u64 = 64;

/// Requested bump geometry and network budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub d: usize,
    /// Steepness; the support is the cube of half-side `1/M`.
    pub m: f64,
    pub depth_budget: usize,
    pub width_budget: usize,
}

impl BumpSpec {
    /// The smallest budget realizing steepness `m` with `stages` stages.
    pub fn with_stages(d: usize, m: f64, stages: usize) -> Self {
        let k = stage_factor(m, stages);
        Self {
            d,
            m,
            depth_budget: bump_depth(d, stages),
            width_budget: 2 * d * copies(k),
        }
    }
}

/// `⌈log₂ k⌉` for `k ≥ 1`.
pub fn ceil_log2(k: usize) -> usize {
    (usize::BITS - (k.max(1) - 1).leading_zeros()) as usize
}

/// Depth of the bump network with `stages` steepening stages.
pub fn bump_depth(d: usize, stages: usize) -> usize {
    stages + ceil_log2(d) + 2
}

fn stage_factor(m: f64, stages: usize) -> f64 {
    m.powf(1.0 / stages.max(1) as f64)
}

fn copies(k: f64) -> usize {
    ((k * (1.0 - 1e-12)).ceil() as usize).max(1)
}

/// Builds `ϑ_M` centered at the origin.
pub fn bump_network(spec: &BumpSpec) -> Result<Network<f64>, SpaceError> {
    let d = spec.d;
    if d == 0 || !(spec.m >= 1.0) || !spec.m.is_finite() {
        return Err(SpaceError::Invalid(format!(
            "bump needs d ≥ 1 and finite M ≥ 1, got d = {d}, M = {}",
            spec.m
        )));
    }
    let overhead = ceil_log2(d) + 2;
    let stages = spec.depth_budget.saturating_sub(overhead);
    let max_copies = spec.width_budget / (2 * d);
    let max_m = if stages == 0 || max_copies == 0 {
        0.0
    } else {
        (max_copies as f64).powi(stages as i32)
    };
    if spec.m > max_m * (1.0 + 1e-12) {
        return Err(SpaceError::BudgetInsufficient {
            depth: spec.depth_budget,
            width: spec.width_budget,
            max_m,
            requested: spec.m,
        });
    }
    let k = stage_factor(spec.m, stages);
    let m = copies(k).min(max_copies);
    let read = k / m as f64;
    let width = 2 * d * m;
    // Unit (j, s, c) sits at index j·2m + s·m + c, s = 0 for +t and 1 for −t.
    let unit = |j: usize, s: usize, c: usize| j * 2 * m + s * m + c;
    let sign = |s: usize| if s == 0 { 1.0 } else { -1.0 };

    let mut layers = Vec::with_capacity(stages + 1);
    let mut first = Matrix::zeros(width, d);
    for j in 0..d {
        for s in 0..2 {
            for c in 0..m {
                first.set(unit(j, s, c), j, sign(s));
            }
        }
    }
    layers.push(Layer::new(first, vec![0.0; width]));
    for _ in 1..stages {
        let mut a = Matrix::zeros(width, width);
        for j in 0..d {
            for s in 0..2 {
                for c in 0..m {
                    for s2 in 0..2 {
                        for c2 in 0..m {
                            a.set(unit(j, s, c), unit(j, s2, c2), sign(s) * sign(s2) * read);
                        }
                    }
                }
            }
        }
        layers.push(Layer::new(a, vec![0.0; width]));
    }
    // z_j = ½ − ½|t_j|, so that the min tree's first layer keeps biases ≤ 1.
    let mut z = Matrix::zeros(d, width);
    for j in 0..d {
        for s in 0..2 {
            for c in 0..m {
                z.set(j, unit(j, s, c), -0.5 * read);
            }
        }
    }
    layers.push(Layer::new(z, vec![0.5; d]));
    let stages_net = Network::new(layers).map_err(|e| SpaceError::Invalid(e.to_string()))?;
    let min = min_network::<f64>(d).map_err(|e| SpaceError::Invalid(e.to_string()))?;
    let tail = Network::new(vec![
        Layer::from_rows(&[vec![2.0]], vec![0.0]),
        Layer::from_rows(&[vec![1.0]], vec![0.0]),
    ])
    .expect("tail chains");
    let net = merge_affine(&min, &stages_net)
        .and_then(|n| merge_affine(&tail, &n))
        .map_err(|e| SpaceError::Invalid(e.to_string()))?;
    Ok(net)
}

/// Exponent `α/(α+s)` of the adversarial amplitude for depth discount `s`
/// (`None` for an infinite discount).
pub fn amplitude_exponent(alpha: f64, discount: Option<u64>) -> f64 {
    depth_fraction(alpha, discount)
}

/// `κ · M^{−α/(α+⌊ℓ*/2⌋)}`.
pub fn adversarial_amplitude(params: &SpaceParams, m: f64, kappa: f64) -> f64 {
    kappa * m.powf(-amplitude_exponent(params.alpha, params.ell_star().half_floor()))
}

/// Number of steepening stages `⌊min(ℓ*, cap)/2⌋` used for depth supremum `ℓ*`.
pub fn steepening_stages(ell_star: Depth, cap: u64) -> usize {
    (ell_star.capped(cap) / 2).max(1) as usize
}

/// `amplitude · ϑ_M(x − y)` with `stages` steepening stages.
///
/// Errors if the amplitude exceeds one, since it is carried by a single
/// output weight.
pub fn shifted_bump(d: usize, m: f64, stages: usize, amplitude: f64, y: &[f64]) -> Result<Network<f64>, SpaceError> {
    if amplitude.abs() > 1.0 {
        return Err(SpaceError::AmplitudeTooLarge(amplitude));
    }
    if y.len() != d {
        return Err(SpaceError::Invalid(format!(
            "center has length {}, expected {d}",
            y.len()
        )));
    }
    let theta = bump_network(&BumpSpec::with_stages(d, m, stages))?;
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    let shifted =
        affine_precompose(&theta, &Matrix::identity(d), &neg).map_err(|e| SpaceError::Invalid(e.to_string()))?;
    Ok(shifted.scale_output(amplitude))
}

/// `g_{M,y} = κ M^{−α/(α+⌊ℓ*/2⌋)} ϑ_{M,y}` with the default depth cap.
pub fn make_g(params: &SpaceParams, m: f64, y: &[f64], kappa: f64) -> Result<Network<f64>, SpaceError> {
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(SpaceError::Invalid("center must lie in [0,1]^d".into()));
    }
    let stages = steepening_stages(params.ell_star(), DEFAULT_DEPTH_CAP);
    shifted_bump(params.d, m, stages, adversarial_amplitude(params, m, kappa), y)
}

/// `‖ϑ_M‖^p_{L^p(ℝ^d)} = d·2^d·B(d, p+1)·M^{−d}` for the pyramid bump.
pub fn pyramid_power_integral(d: usize, m: f64, p: f64) -> f64 {
    // B(d, p+1) = Γ(d)Γ(p+1)/Γ(d+p+1) = (d−1)! / ((p+1)(p+2)…(p+d)).
    let mut beta = 1.0;
    for i in 1..d {
        beta *= i as f64;
    }
    for i in 1..=d {
        beta /= p + i as f64;
    }
    d as f64 * 2f64.powi(d as i32) * beta * m.powi(-(d as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::DepthGrowth;

    #[test]
    fn ceil_log2_values() {
        let v: Vec<usize> = (1..=9).map(ceil_log2).collect();
        assert_eq!(v, vec![0, 1, 2, 2, 3, 3, 3, 3, 4]);
    }

    #[test]
    fn unit_steepness_is_a_hat() {
        let net = bump_network(&BumpSpec::with_stages(1, 1.0, 1)).unwrap();
        assert_eq!(net.evaluate(&[0.0]).unwrap(), vec![1.0]);
        assert_eq!(net.evaluate(&[1.0]).unwrap(), vec![0.0]);
        assert_eq!(net.evaluate(&[-1.0]).unwrap(), vec![0.0]);
        assert_eq!(net.evaluate(&[0.5]).unwrap(), vec![0.5]);
    }

    #[test]
    fn support_predicate_in_two_dimensions() {
        let net = bump_network(&BumpSpec::with_stages(2, 4.0, 1)).unwrap();
        assert_eq!(net.evaluate(&[0.3, 0.0]).unwrap(), vec![0.0]);
        assert_eq!(net.evaluate(&[0.0, 0.0]).unwrap(), vec![1.0]);
        let v = net.evaluate(&[0.125, -0.0625]).unwrap()[0];
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn depth_and_weights_follow_budget() {
        for d in 1..=5 {
            for stages in 1..=4 {
                let spec = BumpSpec::with_stages(d, 16.0, stages);
                let net = bump_network(&spec).unwrap();
                assert_eq!(net.depth(), bump_depth(d, stages));
                assert!(net.stats().weight_sup <= 1.0 + 1e-15, "d={d} s={stages}");
                let v = net.evaluate(&vec![0.0; d]).unwrap()[0];
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn insufficient_budget_reports_max_m() {
        let spec = BumpSpec {
            d: 2,
            m: 100.0,
            depth_budget: 5,
            width_budget: 20,
        };
        match bump_network(&spec).unwrap_err() {
            SpaceError::BudgetInsufficient { max_m, .. } => assert_eq!(max_m, 25.0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn amplitude_examples() {
        let params = SpaceParams::new(1.0, 2.0, 1, DepthGrowth::constant(3));
        assert!((adversarial_amplitude(&params, 16.0, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(adversarial_amplitude(&params, 1.0, 0.7), 0.7);
        let inf = SpaceParams::new(1.0, 2.0, 1, DepthGrowth::Constant { value: Depth::Infinite });
        assert_eq!(adversarial_amplitude(&inf, 1e6, 0.5), 0.5);
    }

    #[test]
    fn make_g_values() {
        let params = SpaceParams::new(1.0, 2.0, 2, DepthGrowth::constant(3));
        let y = [0.3, 0.8];
        let m = 16.0;
        let g = make_g(&params, m, &y, 1.0).unwrap();
        let a = adversarial_amplitude(&params, m, 1.0);
        assert_eq!(g.evaluate(&y).unwrap(), vec![a]);
        assert_eq!(g.evaluate(&[0.3 + 2.0 / m, 0.8]).unwrap(), vec![0.0]);
        assert!(g.stats().weight_sup <= 1.0);
        assert!(matches!(
            make_g(&params, m, &y, 100.0),
            Err(SpaceError::AmplitudeTooLarge(_))
        ));
    }

    #[test]
    fn pyramid_integral_one_dimensional() {
        assert!((pyramid_power_integral(1, 4.0, 1.0) - 0.25).abs() < 1e-15);
        assert!((pyramid_power_integral(2, 1.0, 1.0) - 4.0 / 3.0).abs() < 1e-15);
    }
}
