//! Power-law fits `mean_error ≈ C·N^{−β}` and rate certificates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AdversaryError, ErrorCurve};
use crate::rng;
use crate::spaces::{theoretical_rate, SpaceError, SpaceParams};

/// Bootstrap resamples used for the confidence interval.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Least-squares fit of `log mean_error` against `log N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Negated slope.
    pub beta_hat: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// 95% percentile-bootstrap interval for `beta_hat`, resampling trials
    /// within each row. Degenerates to `beta_hat` when rows carry no
    /// per-trial errors.
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
}

/// `(slope, intercept, r²)` of the least-squares line through `(x, y)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        1.0 - ss_res / syy
    };
    (slope, intercept, r2)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fits the curve with the bootstrap stream derived from `seed`.
pub fn fit_rate_seeded(curve: &ErrorCurve, seed: u64) -> Result<RateFit, AdversaryError> {
    let rows = &curve.rows;
    if rows.len() < 3 {
        return Err(AdversaryError::TooFewRows(rows.len()));
    }
    if let Some(r) = rows.iter().find(|r| !(r.mean_error > 0.0) || !r.mean_error.is_finite()) {
        return Err(AdversaryError::NonPositiveMean {
            n: r.n,
            mean: r.mean_error,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean_error.ln()).collect();
    let (slope, intercept, r_squared) = ols(&x, &y);
    let beta_hat = -slope;

    let resample = rows.iter().all(|r| !r.errors.is_empty());
    let (ci_low, ci_high, resamples) = if resample {
        let mut gen = rng::derive(seed, &[rng::label::BOOTSTRAP]);
        let mut betas = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        let mut yb = vec![0.0; rows.len()];
        for _ in 0..BOOTSTRAP_RESAMPLES {
            for (k, r) in rows.iter().enumerate() {
                let m = r.errors.len();
                let s: f64 = (0..m).map(|_| r.errors[gen.gen_range(0..m)]).sum();
                yb[k] = (s / m as f64).ln();
            }
            if yb.iter().all(|v| v.is_finite()) {
                betas.push(-ols(&x, &yb).0);
            }
        }
        betas.sort_by(f64::total_cmp);
        if betas.is_empty() {
            (beta_hat, beta_hat, 0)
        } else {
            (percentile(&betas, 0.025), percentile(&betas, 0.975), betas.len())
        }
    } else {
        (beta_hat, beta_hat, 0)
    };
    Ok(RateFit {
        beta_hat,
        intercept,
        r_squared,
        ci_low,
        ci_high,
        resamples,
    })
}

/// [`fit_rate_seeded`] with seed 0.
pub fn fit_rate(curve: &ErrorCurve) -> Result<RateFit, AdversaryError> {
    fit_rate_seeded(curve, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Outcome of comparing a fitted rate with the bound `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lambda: f64,
    pub slack: f64,
    /// Optional allowance for the bootstrap upper bound: when set, a pass
    /// additionally needs `ci_high ≤ λ + ci_slack`.
    #[serde(default)]
    pub ci_slack: Option<f64>,
    pub fit: RateFit,
    pub verdict: Verdict,
    #[serde(default)]
    pub curve: Option<ErrorCurve>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// PASS iff `beta_hat ≤ λ + slack` (and `ci_high ≤ λ + ci_slack` if given).
pub fn verdict_for(fit: &RateFit, lambda: f64, slack: f64, ci_slack: Option<f64>) -> Verdict {
    let point = fit.beta_hat <= lambda + slack;
    let ci = ci_slack.map_or(true, |c| fit.ci_high <= lambda + c);
    if point && ci {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Certifies `fit` against `λ = 1/p + (1/d)·α/(α+⌊ℓ*/2⌋)`.
pub fn certify_gap(fit: &RateFit, params: &SpaceParams, slack: f64) -> Result<Certificate, SpaceError> {
    let lambda = theoretical_rate(params)?;
    Ok(Certificate::new(fit.clone(), lambda, slack))
}

impl Certificate {
    pub fn new(fit: RateFit, lambda: f64, slack: f64) -> Self {
        let slack = slack.max(0.0);
        Self {
            lambda,
            slack,
            ci_slack: None,
            verdict: verdict_for(&fit, lambda, slack, None),
            fit,
            curve: None,
            seed: None,
            config_hash: None,
        }
    }

    pub fn with_ci_slack(mut self, ci_slack: f64) -> Self {
        self.ci_slack = Some(ci_slack);
        self.verdict = verdict_for(&self.fit, self.lambda, self.slack, self.ci_slack);
        self
    }

    pub fn with_context(mut self, curve: ErrorCurve, seed: u64, config_hash: impl Into<String>) -> Self {
        self.curve = Some(curve);
        self.seed = Some(seed);
        self.config_hash = Some(config_hash.into());
        self
    }

    /// Refits the embedded curve and checks that the stored fit and verdict
    /// agree with it.
    pub fn validate(&self) -> Result<(), String> {
        let expected = verdict_for(&self.fit, self.lambda, self.slack, self.ci_slack);
        if expected != self.verdict {
            return Err(format!("verdict {:?} does not follow from the fit", self.verdict));
        }
        let Some(curve) = &self.curve else {
            return Ok(());
        };
        let refit = fit_rate_seeded(curve, self.seed.unwrap_or(0)).map_err(|e| e.to_string())?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs());
        if !close(refit.beta_hat, self.fit.beta_hat)
            || !close(refit.ci_low, self.fit.ci_low)
            || !close(refit.ci_high, self.fit.ci_high)
        {
            return Err(format!(
                "stored fit β̂ = {} [{}, {}] but the curve gives {} [{}, {}]",
                self.fit.beta_hat, self.fit.ci_low, self.fit.ci_high, refit.beta_hat, refit.ci_low, refit.ci_high
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::CurveRow;
    use crate::spaces::DepthGrowth;

    fn curve(f: impl Fn(f64) -> f64) -> ErrorCurve {
        let mut c = ErrorCurve::new();
        for k in 4..=12 {
            let n = 1usize << k;
            c.push(CurveRow {
                errors: Vec::new(),
                ..CurveRow::from_errors(n, 2.0, vec![f(n as f64)])
            })
            .unwrap();
        }
        c
    }

    #[test]
    fn exact_power_law() {
        let fit = fit_rate(&curve(|n| 2.0 * n.powf(-0.75))).unwrap();
        assert!((fit.beta_hat - 0.75).abs() < 1e-12);
        assert!((fit.intercept - 2f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rows() {
        let fit = fit_rate(&curve(|_| 0.3)).unwrap();
        assert!(fit.beta_hat.abs() < 1e-12);
    }

    #[test]
    fn fit_preconditions() {
        let mut c = curve(|n| 1.0 / n);
        c.rows.truncate(2);
        assert_eq!(fit_rate(&c), Err(AdversaryError::TooFewRows(2)));
        let mut c = curve(|n| 1.0 / n);
        c.rows[1].mean_error = 0.0;
        assert!(matches!(fit_rate(&c), Err(AdversaryError::NonPositiveMean { .. })));
    }

    #[test]
    fn certificate_examples() {
        let params = SpaceParams::new(2.0, 2.0, 2, DepthGrowth::constant(3));
        let lambda = theoretical_rate(&params).unwrap();
        assert!((lambda - 0.8333333333333334).abs() < 1e-12);
        let fit = |b: f64| RateFit {
            beta_hat: b,
            intercept: 0.0,
            r_squared: 1.0,
            ci_low: b,
            ci_high: b,
            resamples: 0,
        };
        assert_eq!(certify_gap(&fit(0.8), &params, 0.15).unwrap().verdict, Verdict::Pass);
        assert_eq!(certify_gap(&fit(1.2), &params, 0.15).unwrap().verdict, Verdict::Fail);
        assert_eq!(certify_gap(&fit(lambda), &params, 0.0).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn validation_detects_tampering() {
        let mut c = ErrorCurve::new();
        for (k, n) in [16usize, 64, 256].into_iter().enumerate() {
            let errs: Vec<f64> = (0..40)
                .map(|i| (1.0 + 0.01 * i as f64) / n as f64 * (k + 1) as f64)
                .collect();
            c.push(CurveRow::from_errors(n, 1.0, errs)).unwrap();
        }
        let fit = fit_rate_seeded(&c, 5).unwrap();
        let cert = Certificate::new(fit, 1.0, 0.1).with_context(c, 5, "abc");
        cert.validate().unwrap();
        let mut bad = cert.clone();
        bad.fit.beta_hat += 0.1;
        assert!(bad.validate().is_err());
        let mut bad = cert;
        bad.verdict = Verdict::Fail;
        assert!(bad.validate().is_err());
    }
}
