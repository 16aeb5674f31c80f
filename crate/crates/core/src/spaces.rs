//! Approximation-space bookkeeping: depth growth, rate bounds and membership
//! in the network budget sets `Σ^ℓ_{d,n}`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::relu::Network;

/// Errors from space bookkeeping and bump construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("depth supremum ℓ* = {found} violates the requirement ℓ* ≥ {required}")]
    DepthTooSmall { found: Depth, required: u64 },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("budget (depth {depth}, width {width}) supports steepness up to M = {max_m}, requested {requested}")]
    BudgetInsufficient {
        depth: usize,
        width: usize,
        max_m: f64,
        requested: f64,
    },
    #[error("amplitude {0} exceeds 1; the output row cannot keep weights within [−1, 1]")]
    AmplitudeTooLarge(f64),
}

/// A depth value `ℓ(n) ∈ ℕ ∪ {∞}`. Serialized as an integer or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Depth {
    Finite(u64),
    Infinite,
}

impl Depth {
    pub fn finite(self) -> Option<u64> {
        match self {
            Depth::Finite(v) => Some(v),
            Depth::Infinite => None,
        }
    }

    /// `⌊ℓ/2⌋`, or `None` for `ℓ = ∞`.
    pub fn half_floor(self) -> Option<u64> {
        self.finite().map(|v| v / 2)
    }

    /// Replaces `∞` by `cap` and clamps finite values to at most `cap`.
    pub fn capped(self, cap: u64) -> u64 {
        self.finite().map_or(cap, |v| v.min(cap))
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Depth::Finite(v) => write!(f, "{v}"),
            Depth::Infinite => f.write_str("∞"),
        }
    }
}

impl Serialize for Depth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Depth::Finite(v) => s.serialize_u64(*v),
            Depth::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Depth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Depth::Finite(v)),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "∞") => Ok(Depth::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("invalid depth {t:?}"))),
        }
    }
}

/// Nondecreasing depth-growth function `ℓ: ℕ → ℕ ∪ {∞}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthGrowth {
    /// `ℓ(n) = value` for all `n`.
    Constant { value: Depth },
    /// `ℓ(n) = values[n-1]` for `n ≤ len`, then `tail`.
    Table { values: Vec<u64>, tail: Depth },
    /// `ℓ(n) = a·n + b`.
    Affine { a: u64, b: u64 },
}

impl DepthGrowth {
    pub fn constant(v: u64) -> Self {
        DepthGrowth::Constant {
            value: Depth::Finite(v),
        }
    }

    /// Checks monotonicity of a table rule.
    pub fn validate(&self) -> Result<(), SpaceError> {
        if let DepthGrowth::Table { values, tail } = self {
            let sorted = values.windows(2).all(|w| w[0] <= w[1]);
            let tail_ok = values.last().map_or(true, |&l| Depth::Finite(l) <= *tail);
            if !sorted || !tail_ok {
                return Err(SpaceError::Invalid("depth table must be nondecreasing".into()));
            }
        }
        Ok(())
    }

    /// `ℓ(n)`.
    pub fn at(&self, n: u64) -> Depth {
        match self {
            DepthGrowth::Constant { value } => *value,
            DepthGrowth::Table { values, tail } => {
                if n >= 1 && (n as usize) <= values.len() {
                    Depth::Finite(values[n as usize - 1])
                } else if n == 0 {
                    values.first().map_or(*tail, |&v| Depth::Finite(v))
                } else {
                    *tail
                }
            }
            DepthGrowth::Affine { a, b } => Depth::Finite(a.saturating_mul(n).saturating_add(*b)),
        }
    }
}

/// `ℓ* = sup_n ℓ(n)`.
pub fn ell_star(ell: &DepthGrowth) -> Depth {
    match ell {
        DepthGrowth::Constant { value } => *value,
        DepthGrowth::Table { values, tail } => values
            .iter()
            .map(|&v| Depth::Finite(v))
            .chain(std::iter::once(*tail))
            .max()
            .unwrap_or(*tail),
        DepthGrowth::Affine { a, b } => {
            if *a > 0 {
                Depth::Infinite
            } else {
                Depth::Finite(*b)
            }
        }
    }
}

/// Parameters `(α, p, d, ℓ)` identifying an approximation space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub alpha: f64,
    #[serde(with = "crate::extended_real")]
    pub p: f64,
    pub d: usize,
    pub ell: DepthGrowth,
}

impl SpaceParams {
    pub fn new(alpha: f64, p: f64, d: usize, ell: DepthGrowth) -> Self {
        Self { alpha, p, d, ell }
    }

    pub fn ell_star(&self) -> Depth {
        ell_star(&self.ell)
    }

    /// Checks `α > 0`, `p ≥ 1`, `d ≥ 1` and a monotone `ℓ`.
    pub fn validate(&self) -> Result<(), SpaceError> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(SpaceError::Invalid(format!("α must be positive, got {}", self.alpha)));
        }
        if !(self.p >= 1.0) {
            return Err(SpaceError::Invalid(format!("p must lie in [1, ∞], got {}", self.p)));
        }
        if self.d == 0 {
            return Err(SpaceError::Invalid("d must be positive".into()));
        }
        self.ell.validate()
    }

    /// Errors unless `ℓ* ≥ required`.
    pub fn require_ell_star(&self, required: u64) -> Result<(), SpaceError> {
        let found = self.ell_star();
        if found < Depth::Finite(required) {
            return Err(SpaceError::DepthTooSmall { found, required });
        }
        Ok(())
    }
}

/// `1/p` with `1/∞ = 0`.
pub fn inv_p(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// `α / (α + s)` where `s` is a depth discount; `s = ∞` gives 0.
pub fn depth_fraction(alpha: f64, discount: Option<u64>) -> f64 {
    match discount {
        Some(s) => alpha / (alpha + s as f64),
        None => 0.0,
    }
}

/// Upper bound on the sampling rate in finite dimension,
/// `λ = 1/p + (1/d)·α/(α+⌊ℓ*/2⌋)`. Requires `ℓ* ≥ 3`.
pub fn theoretical_rate(params: &SpaceParams) -> Result<f64, SpaceError> {
    params.require_ell_star(3)?;
    let frac = depth_fraction(params.alpha, params.ell_star().half_floor());
    Ok(inv_p(params.p) + frac / params.d as f64)
}

/// One violated budget constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub measured: String,
    pub limit: String,
}

/// Outcome of [`sigma_membership`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub member: bool,
    pub violations: Vec<Violation>,
}

/// Tests `net ∈ Σ^ℓ_{d,n}`: `W ≤ n`, `L ≤ ℓ(n)`, `‖ψ‖_NN ≤ 1`, and the
/// signature `ℝ^d → ℝ`.
pub fn sigma_membership(net: &Network<f64>, n: u64, params: &SpaceParams) -> MembershipReport {
    let stats = net.stats();
    let mut violations = Vec::new();
    let mut push = |c: &str, m: String, l: String| {
        violations.push(Violation {
            constraint: c.into(),
            measured: m,
            limit: l,
        })
    };
    if net.input_dim() != params.d {
        push("input dimension", net.input_dim().to_string(), params.d.to_string());
    }
    if net.output_dim() != 1 {
        push("output dimension", net.output_dim().to_string(), "1".into());
    }
    if stats.weight_count as u64 > n {
        push("weight count W ≤ n", stats.weight_count.to_string(), n.to_string());
    }
    let depth_limit = params.ell.at(n);
    if Depth::Finite(stats.depth as u64) > depth_limit {
        push("depth L ≤ ℓ(n)", stats.depth.to_string(), depth_limit.to_string());
    }
    if stats.weight_sup > 1.0 {
        push("weight magnitude ≤ 1", stats.weight_sup.to_string(), "1".into());
    }
    MembershipReport {
        member: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relu::{homogeneous_rescale, tests::hat, Layer, Matrix};

    fn params(alpha: f64, p: f64, d: usize, ell: u64) -> SpaceParams {
        SpaceParams::new(alpha, p, d, DepthGrowth::constant(ell))
    }

    #[test]
    fn ell_star_examples() {
        assert_eq!(ell_star(&DepthGrowth::constant(3)), Depth::Finite(3));
        let table = DepthGrowth::Table {
            values: vec![2, 2, 5, 5],
            tail: Depth::Finite(5),
        };
        assert_eq!(ell_star(&table), Depth::Finite(5));
        assert_eq!(ell_star(&DepthGrowth::Affine { a: 1, b: 1 }), Depth::Infinite);
        assert_eq!(DepthGrowth::Affine { a: 1, b: 1 }.at(4), Depth::Finite(5));
    }

    #[test]
    fn nonmonotone_table_rejected() {
        let t = DepthGrowth::Table {
            values: vec![3, 2],
            tail: Depth::Finite(4),
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn rate_formula() {
        let lam = theoretical_rate(&params(2.0, 2.0, 2, 3)).unwrap();
        assert!((lam - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        let inf = SpaceParams::new(1.0, 2.0, 3, DepthGrowth::Constant { value: Depth::Infinite });
        assert_eq!(theoretical_rate(&inf).unwrap(), 0.5);
        let linf = theoretical_rate(&params(1e9, f64::INFINITY, 4, 3)).unwrap();
        assert!((linf - 0.25).abs() < 1e-8);
    }

    #[test]
    fn rate_requires_depth_three() {
        let err = theoretical_rate(&params(1.0, 2.0, 1, 2)).unwrap_err();
        assert!(err.to_string().contains("ℓ* ≥ 3"), "{err}");
    }

    #[test]
    fn hat_is_not_a_member() {
        let rep = sigma_membership(&hat(), 8, &params(1.0, 2.0, 1, 3));
        assert!(!rep.member);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].constraint, "weight magnitude ≤ 1");
    }

    #[test]
    fn spread_hat_is_a_member() {
        // Halve the output row and rescale the rest so every weight is ≤ 1.
        let scaled = homogeneous_rescale(&hat(), 2.0).unwrap();
        let mut layers = scaled.into_layers();
        layers[1] = Layer::from_rows(&[vec![0.5, -1.0, 0.5]], vec![0.0]);
        let net = Network::new(layers).unwrap();
        let rep = sigma_membership(&net, 8, &params(1.0, 2.0, 1, 3));
        assert!(rep.member, "{:?}", rep.violations);
    }

    #[test]
    fn zero_network_is_a_member_of_the_empty_budget() {
        let zero = Network::affine(Matrix::zeros(1, 2), vec![0.0]).unwrap();
        assert!(sigma_membership(&zero, 0, &params(1.0, 1.0, 2, 3)).member);
    }

    #[test]
    fn depth_serde() {
        let g: DepthGrowth = serde_json::from_str(r#"{"kind":"constant","value":"inf"}"#).unwrap();
        assert_eq!(ell_star(&g), Depth::Infinite);
        let s = serde_json::to_string(&DepthGrowth::constant(4)).unwrap();
        assert_eq!(s, r#"{"kind":"constant","value":4}"#);
    }
}
