//! The mollified rectifier `σ_ρ = σ ∗ ρ` for `ρ(t) = ¾(1 − t²)` on `[−1, 1]`
//! and its shallow `W^{1,∞}` approximant.

use crate::relu::{Layer, Matrix, Network};

/// `‖ρ′‖_{L¹} = 2ρ(0) = 3/2`.
pub const RHO_PRIME_L1: f64 = 1.5;

/// `(σ_ρ(x), σ_ρ′(x))`. Between the breakpoints `σ_ρ(x) = 3/16 + x/2 + 3x²/8 − x⁴/16`.
pub fn sigma_rho(x: f64) -> (f64, f64) {
    if x <= -1.0 {
        (0.0, 0.0)
    } else if x >= 1.0 {
        (x, 1.0)
    } else {
        let x2 = x * x;
        (
            3.0 / 16.0 + x / 2.0 + 3.0 * x2 / 8.0 - x2 * x2 / 16.0,
            0.5 + 0.75 * x - x2 * x / 4.0,
        )
    }
}

/// `Σ_{m=1}^M c_m σ(x − x_m)` with `x_m = −1 + 2m/M` and
/// `c_m = σ_ρ′(x_m) − σ_ρ′(x_{m−1})`, which is within `2‖ρ′‖_{L¹}/M = 3/M`
/// of `σ_ρ` in `W^{1,∞}(ℝ)`.
pub fn shallow_w1inf_approximant(m: usize) -> Network<f64> {
    let m = m.max(1);
    let knot = |k: usize| -1.0 + 2.0 * k as f64 / m as f64;
    let hidden = Layer::new(
        Matrix::from_vec(m, 1, vec![1.0; m]),
        (1..=m).map(|k| -knot(k)).collect(),
    );
    let coeffs = (1..=m)
        .map(|k| sigma_rho(knot(k)).1 - sigma_rho(knot(k - 1)).1)
        .collect();
    let out = Layer::new(Matrix::from_vec(1, m, coeffs), vec![0.0]);
    Network::new(vec![hidden, out]).expect("shapes chain")
}

/// Largest value error and largest central-difference derivative error of
/// the `M`-term approximant against `σ_ρ` on `samples` equispaced points of
/// `[−2, 2]`.
pub fn shallow_w1inf_errors(m: usize, samples: usize) -> (f64, f64) {
    let net = shallow_w1inf_approximant(m);
    let f = |x: f64| net.evaluate(&[x]).expect("scalar input")[0];
    let h = 1e-6;
    let mut value = 0.0f64;
    let mut slope = 0.0f64;
    for i in 0..samples {
        let x = -2.0 + 4.0 * i as f64 / (samples - 1).max(1) as f64;
        let (s, ds) = sigma_rho(x);
        value = value.max((f(x) - s).abs());
        let fd = (f(x + h) - f(x - h)) / (2.0 * h);
        slope = slope.max((fd - ds).abs());
    }
    (value, slope)
}
