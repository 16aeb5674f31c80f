use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The experiment kinds understood by `gapbench run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    VoidCheck,
    FiniteGap,
    OperatorGap,
    EncoderCheck,
    AppendixCheck,
    ContractionCheck,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::VoidCheck,
        Kind::FiniteGap,
        Kind::OperatorGap,
        Kind::EncoderCheck,
        Kind::AppendixCheck,
        Kind::ContractionCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::VoidCheck => "void-check",
            Kind::FiniteGap => "finite-gap",
            Kind::OperatorGap => "operator-gap",
            Kind::EncoderCheck => "encoder-check",
            Kind::AppendixCheck => "appendix-check",
            Kind::ContractionCheck => "contraction-check",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Kind::VoidCheck => "probability that a random cube of side ½N^{−1/d} misses every sample point",
            Kind::FiniteGap => "adversarial error curves and rate certificates on [0,1]^d",
            Kind::OperatorGap => "adversarial error curves for operator learning in the Bochner norm",
            Kind::EncoderCheck => "pushforward-domination certificates for DeepONet and ANO encoders",
            Kind::AppendixCheck => "shallow W^{1,∞} approximation of the mollified rectifier",
            Kind::ContractionCheck => "coverage of a ball by near-identity perturbations",
        }
    }

    /// Long help text, stating the bound each kind exercises.
    pub fn describe(self) -> &'static str {
        match self {
            Kind::VoidCheck => {
                "void-check: existence of a void.\n\
                 \n\
                 For every configuration of N points in [0,1]^d, a uniform random center y\n\
                 satisfies min_j |y − x_j|_∞ > ¼N^{−1/d} with probability at least ½.\n\
                 The experiment estimates this probability by Monte Carlo for grid, i.i.d.\n\
                 uniform, corner-clustered and coincident configurations, and checks the\n\
                 equispaced d = 1, N = 4 case against its exact value ½.\n\
                 \n\
                 Checks: estimate ≥ ½ − tolerance for every configuration."
            }
            Kind::FiniteGap => {
                "finite-gap: sampling-rate upper bound on [0,1]^d.\n\
                 \n\
                 For the unit ball of A^{α,p}_ℓ with ℓ non-decreasing and ℓ* ≥ 3, no\n\
                 (randomized) algorithm using N point samples beats the rate\n\
                 \n\
                     β* ≤ λ = 1/p + (1/d)·α/(α + ⌊ℓ*/2⌋).\n\
                 \n\
                 The adversary draws a randomly shifted, randomly signed localized ReLU bump\n\
                 of steepness M = 4N^{1/d}, hands each algorithm its N sample values and\n\
                 measures the L^p error. A power law is fitted to the mean errors, and the\n\
                 certificate passes when β̂ ≤ λ + slack (and, if set, the bootstrap upper\n\
                 bound is ≤ λ + ci_slack). The zero algorithm's curve decays exactly like\n\
                 N^{−λ}."
            }
            Kind::OperatorGap => {
                "operator-gap: sampling-rate bound for operator learning.\n\
                 \n\
                 For DeepONet-type classes (ℓ* ≥ 4) and averaging neural operators, the\n\
                 Bochner L^p(μ) sampling rate obeys β* ≤ 1/p whatever the input dimension.\n\
                 At embedded dimension d the adversary gives the bound\n\
                 \n\
                     β* ≤ 1/p + (1/d)·α/(α + s),\n\
                 \n\
                 with s = ⌊(ℓ*−1)/2⌋ for DeepONets and s = 1 for neural operators. Instances\n\
                 are finite-dimensional bumps composed with an encoder whose pushforward of\n\
                 μ dominates the uniform law. The report lists the bounds for\n\
                 p ∈ {1, 2, 4, 8}, which approach the ceiling 1/p as d grows, and in the\n\
                 uniform (sup-norm) limit p, d → ∞ the rate is 0."
            }
            Kind::EncoderCheck => {
                "encoder-check: pushforward domination ℰ_#μ ≥ c·Unif([0,1]^d).\n\
                 \n\
                 Histograms the encoded images of draws u ~ μ on a bins^d partition and\n\
                 reports c_hat = min count / expected count together with a one-sided 95%\n\
                 Clopper–Pearson lower bound on the emptiest bin's mass. Encoders: exact\n\
                 cosine moments (δ = 0), point evaluations solved by least squares (span\n\
                 residual δ̂), perturbed duals, and the ANO lifting encoder built at\n\
                 accuracy ε = ε₀/(2d)."
            }
            Kind::AppendixCheck => {
                "appendix-check: shallow approximation of σ_ρ = σ ∗ ρ, ρ(t) = ¾(1 − t²).\n\
                 \n\
                 The M-term shallow ReLU network with knots −1 + 2m/M is within\n\
                 2‖ρ′‖_{L¹}/M = 3/M of σ_ρ in W^{1,∞}(ℝ). Value and derivative errors are\n\
                 measured on a grid of [−2, 2] and must stay below 3/M + slack and decrease\n\
                 strictly in M."
            }
            Kind::ContractionCheck => {
                "contraction-check: near-identity maps cover a ball.\n\
                 \n\
                 For a box V with center y₀ and smallest half-width r, every map F with\n\
                 ‖F − id‖_{W^{1,∞}} ≤ ε₀ = min(½, r/4) pushes the uniform law on V onto a\n\
                 measure with density at least c₀ = (|V₀|/|V|)(2/3)^d on V₀ = B(y₀, r/4).\n\
                 Random sinusoidal perturbations must hit every bin of a 20^d partition of\n\
                 V₀ with density above c₀ after a 95% confidence margin; the collapsing map\n\
                 (y₁, …, y_{d−1}, 0) is reported as NOT_APPLICABLE."
            }
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown experiment kind {name:?}{}", hint(.suggestions))]
pub struct UnknownKind {
    pub name: String,
    pub suggestions: Vec<&'static str>,
}

fn hint(suggestions: &[&str]) -> String {
    if suggestions.is_empty() {
        let all: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
        format!("; known kinds: {}", all.join(", "))
    } else {
        format!("; did you mean {}?", suggestions.join(" or "))
    }
}

impl FromStr for Kind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        if let Some(k) = Kind::ALL.iter().find(|k| k.name() == norm) {
            return Ok(*k);
        }
        let mut scored: Vec<(f64, &'static str)> = Kind::ALL
            .iter()
            .map(|k| {
                let name = k.name();
                let prefix = !norm.is_empty() && (name.starts_with(&norm) || name.split('-').any(|w| w == norm));
                let score = if prefix { 1.0 } else { strsim::jaro_winkler(&norm, name) };
                (score, name)
            })
            .filter(|(score, _)| *score >= 0.8)
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        Err(UnknownKind {
            name: s.to_string(),
            suggestions: scored.into_iter().map(|(_, n)| n).collect(),
        })
    }
}
