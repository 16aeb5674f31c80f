//! The randomized adversary: voids in point configurations, randomly shifted
//! and signed localized bumps, Monte-Carlo estimates of the expected
//! reconstruction error, and power-law fits of the resulting curves.

mod fit;

pub use fit::{
    certify_gap, fit_rate, fit_rate_seeded, ols, verdict_for, Certificate, RateFit, Verdict, BOOTSTRAP_RESAMPLES,
};

use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{Budget, Concurrency, Reconstruction, ReconstructionAlgorithm};
use crate::bump::{adversarial_amplitude, shifted_bump, steepening_stages, DEFAULT_DEPTH_CAP};
use crate::points::{linf, LinfIndex, PointSet};
use crate::protocol::{ProtoCode, ProtocolError};
use crate::quadrature::{lp_error, EvalError, Evaluable, QuadratureSpec, Rule, SupportCube};
use crate::relu::{Network, Workspace};
use crate::rng::{self, StreamRng};
use crate::spaces::{SpaceError, SpaceParams};

/// Minimum number of trials per curve row.
pub const MIN_TRIALS: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("point list is empty")]
    EmptyPoints,
    #[error("at least {MIN_TRIALS} trials are required, got {0}")]
    TooFewTrials(usize),
    #[error("N must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("mean point count {mean} exceeds the budget {n}")]
    ExpectedBudget { mean: f64, n: usize },
    #[error("fit needs at least 3 rows, got {0}")]
    TooFewRows(usize),
    #[error("mean error at N = {n} is {mean}; a log-log fit needs positive means")]
    NonPositiveMean { n: usize, mean: f64 },
    #[error("N must be strictly increasing ({prev} then {next})")]
    NotIncreasing { prev: usize, next: usize },
}

/// `min_j |y − x_j|_∞`.
pub fn min_linf_distance(y: &[f64], points: &PointSet) -> Result<f64, AdversaryError> {
    if points.is_empty() {
        return Err(AdversaryError::EmptyPoints);
    }
    Ok(points.iter().map(|x| linf(x, y)).fold(f64::INFINITY, f64::min))
}

/// The void radius `¼ N^{−1/d}`.
pub fn void_radius(n: usize, d: usize) -> f64 {
    0.25 * (n as f64).powf(-1.0 / d as f64)
}

/// Monte-Carlo estimate of a void probability with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoidEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub radius: f64,
    pub trials: usize,
}

/// Estimates `P_y[min_j |y − x_j|_∞ > ¼N^{−1/d}]` for `y ~ Unif([0,1]^d)`.
pub fn void_probability_estimate(points: &PointSet, trials: usize, seed: u64) -> Result<VoidEstimate, AdversaryError> {
    if points.is_empty() {
        return Err(AdversaryError::EmptyPoints);
    }
    let trials = trials.max(1);
    let d = points.dim();
    let radius = void_radius(points.len(), d);
    let index = LinfIndex::new(points.clone());
    let mut r = rng::derive(seed, &[rng::label::VOID, points.len() as u64, d as u64]);
    let mut y = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..trials {
        y.iter_mut().for_each(|v| *v = r.gen());
        if index.nearest(&y).1 > radius {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    let stderr = if trials > 1 {
        (p * (1.0 - p) / (trials - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(VoidEstimate {
        estimate: p,
        stderr,
        radius,
        trials,
    })
}

/// `4 N^{1/d}`.
pub fn steepness(n: usize, d: usize) -> f64 {
    4.0 * (n as f64).powf(1.0 / d as f64)
}

/// One draw `ψ_ξ = sign · g_{M,y}` of the adversary.
#[derive(Debug, Clone)]
pub struct AdversarialInstance {
    pub n: usize,
    pub y: Vec<f64>,
    pub sign: f64,
    pub m: f64,
    pub amplitude: f64,
    pub stages: usize,
    /// The realized network, sign included.
    pub g: Network<f64>,
    /// Equivalent network with duplicated units merged, used for norms.
    fast: Network<f64>,
}

/// Draws `y ~ Unif([0,1]^d)` and a uniform sign, then builds `sign · g_{M,y}`.
pub fn draw_instance(
    n: usize,
    params: &SpaceParams,
    kappa: f64,
    rng: &mut StreamRng,
) -> Result<AdversarialInstance, AdversaryError> {
    if n == 0 {
        return Err(AdversaryError::ZeroBudget);
    }
    params.validate()?;
    let d = params.d;
    let y: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let m = steepness(n, d);
    let amplitude = adversarial_amplitude(params, m, kappa);
    let stages = steepening_stages(params.ell_star(), DEFAULT_DEPTH_CAP);
    AdversarialInstance::build(n, y, sign, m, amplitude, stages)
}

impl AdversarialInstance {
    pub fn build(
        n: usize,
        y: Vec<f64>,
        sign: f64,
        m: f64,
        amplitude: f64,
        stages: usize,
    ) -> Result<Self, AdversaryError> {
        let g = shifted_bump(y.len(), m, stages, sign * amplitude, &y)?;
        let fast = g.compacted();
        Ok(Self {
            n,
            y,
            sign,
            m,
            amplitude,
            stages,
            g,
            fast,
        })
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    /// The same instance with the opposite sign.
    pub fn flipped(&self) -> Self {
        Self {
            sign: -self.sign,
            g: self.g.clone().scale_output(-1.0),
            fast: self.fast.clone().scale_output(-1.0),
            ..self.clone()
        }
    }

    pub fn support(&self) -> SupportCube {
        SupportCube {
            center: self.y.clone(),
            half_width: 1.0 / self.m,
        }
    }

    fn outside(&self, x: &[f64]) -> bool {
        linf(x, &self.y) * self.m >= 1.0 + 1e-9
    }

    /// Values of the realized network at the given points. Points clearly
    /// outside the support are assigned the network's exact value zero
    /// without evaluation.
    pub fn sample(&self, points: &PointSet) -> Vec<f64> {
        let mut ws = Workspace::new();
        points
            .iter()
            .map(|x| {
                if self.outside(x) {
                    0.0
                } else {
                    self.g.evaluate_scalar_with(&mut ws, x).expect("dimension checked")
                }
            })
            .collect()
    }

    /// `‖ψ_ξ‖_{L^p([0,1]^d)}` under `rule`.
    pub fn norm(&self, p: f64, rule: &Rule) -> Result<f64, EvalError> {
        lp_error(self, &crate::quadrature::Zero(self.dim()), p, rule)
    }
}

impl Evaluable for AdversarialInstance {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let mut ws = Workspace::new();
        for (x, o) in xs.chunks_exact(self.dim()).zip(out.iter_mut()) {
            *o = if self.outside(x) {
                0.0
            } else {
                self.fast
                    .evaluate_scalar_with(&mut ws, x)
                    .map_err(|e| EvalError::Failed(e.to_string()))?
            };
        }
        Ok(())
    }
}

/// A trial that was aborted, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    /// A protocol code (`PROTO_…`) or `EVAL` for other evaluation failures.
    pub code: String,
    pub detail: String,
}

impl TrialFailure {
    pub(crate) fn protocol(trial: usize, e: ProtocolError) -> Self {
        Self {
            trial,
            code: e.code.to_string(),
            detail: e.detail,
        }
    }

    pub(crate) fn eval(trial: usize, e: EvalError) -> Self {
        match e {
            EvalError::Protocol(p) => Self::protocol(trial, p),
            EvalError::NonFinite { index, value } => Self {
                trial,
                code: ProtoCode::NonFinite.to_string(),
                detail: format!("reconstruction is {value} at quadrature node {index}"),
            },
            other => Self {
                trial,
                code: "EVAL".into(),
                detail: other.to_string(),
            },
        }
    }
}

/// One row of an error curve. `errors` holds the per-trial errors of the
/// successful trials in trial order; `mean_error` and `stderr` are computed
/// from them (NaN when every trial failed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: usize,
    pub trials: usize,
    #[serde(with = "crate::extended_real::nullable")]
    pub mean_error: f64,
    #[serde(with = "crate::extended_real::nullable")]
    pub stderr: f64,
    #[serde(with = "crate::extended_real")]
    pub p: f64,
    #[serde(default)]
    pub errors: Vec<f64>,
    #[serde(default)]
    pub failures: Vec<TrialFailure>,
    /// Mean number of sampled points per trial.
    #[serde(default)]
    pub mean_points: f64,
}

impl CurveRow {
    /// Builds a row from per-trial errors.
    pub fn from_errors(n: usize, p: f64, errors: Vec<f64>) -> Self {
        let (mean_error, stderr) = mean_stderr(&errors);
        Self {
            n,
            trials: errors.len(),
            mean_error,
            stderr,
            p,
            errors,
            failures: Vec::new(),
            mean_points: n as f64,
        }
    }
}

/// Sample mean and `sd / √n` (sample standard deviation).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Rows with strictly increasing `N`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub rows: Vec<CurveRow>,
}

impl ErrorCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: CurveRow) -> Result<(), AdversaryError> {
        if let Some(last) = self.rows.last() {
            if row.n <= last.n {
                return Err(AdversaryError::NotIncreasing {
                    prev: last.n,
                    next: row.n,
                });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn failures(&self) -> impl Iterator<Item = &TrialFailure> {
        self.rows.iter().flat_map(|r| r.failures.iter())
    }
}

/// Options shared by the adversary runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryOptions {
    pub trials: usize,
    pub kappa: f64,
    pub seed: u64,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

/// Runs `trials` independent trials in parallel; `trial` maps an instance
/// and a trial index to the reconstruction error or a failure. Results are
/// reduced in trial order.
pub fn run_trials<F>(
    n: usize,
    params: &SpaceParams,
    opts: &AdversaryOptions,
    trial: F,
) -> Result<CurveRow, AdversaryError>
where
    F: Fn(&AdversarialInstance, usize) -> Result<(f64, usize), TrialFailure> + Sync,
{
    if opts.trials < MIN_TRIALS {
        return Err(AdversaryError::TooFewTrials(opts.trials));
    }
    params.validate()?;
    let outcomes: Vec<Result<Result<(f64, usize), TrialFailure>, AdversaryError>> = (0..opts.trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::derive(opts.seed, &[rng::label::INSTANCE, n as u64, t as u64]);
            let inst = draw_instance(n, params, opts.kappa, &mut r)?;
            Ok(trial(&inst, t))
        })
        .collect();
    let mut errors = Vec::with_capacity(opts.trials);
    let mut failures = Vec::new();
    let mut points = 0usize;
    for o in outcomes {
        match o? {
            Ok((e, k)) => {
                errors.push(e);
                points += k;
            }
            Err(f) => failures.push(f),
        }
    }
    let mut row = CurveRow::from_errors(n, params.p, errors);
    row.mean_points = if row.trials > 0 {
        points as f64 / row.trials as f64
    } else {
        0.0
    };
    row.failures = failures;
    Ok(row)
}

/// Stream seed for the algorithm's own randomness in one trial.
pub fn algorithm_stream(seed: u64, n: usize, trial: usize) -> u64 {
    rng::derive(seed, &[rng::label::ALGORITHM, n as u64, trial as u64]).gen()
}

fn check_plan(points: &PointSet, n: usize, d: usize, budget: Budget) -> Result<(), ProtocolError> {
    if points.dim() != d && !points.is_empty() {
        return Err(ProtocolError::new(
            ProtoCode::Malformed,
            format!("points have dimension {}, expected {d}", points.dim()),
        ));
    }
    if budget == Budget::Exact && points.len() != n {
        return Err(ProtocolError::new(
            ProtoCode::PointCount,
            format!("expected {n} points, received {}", points.len()),
        ));
    }
    if points.as_flat().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(ProtocolError::new(ProtoCode::Range, "point outside [0,1]^d"));
    }
    Ok(())
}

/// Estimates `E_ξ ‖ψ_ξ − A(ψ_ξ)‖_{L^p}` for one budget `N`.
///
/// Failing trials are listed in the row and excluded from the mean. For
/// algorithms with an expected budget the mean point count must not exceed
/// `N`.
pub fn run_adversary(
    alg: &dyn ReconstructionAlgorithm,
    n: usize,
    params: &SpaceParams,
    opts: &AdversaryOptions,
) -> Result<CurveRow, AdversaryError> {
    let serial = Mutex::new(());
    let budget = alg.budget();
    let d = params.d;
    let row = run_trials(n, params, opts, |inst, t| {
        let _guard = match alg.concurrency() {
            Concurrency::Serial => Some(serial.lock().unwrap_or_else(|e| e.into_inner())),
            Concurrency::Reentrant => None,
        };
        let fail = |e| TrialFailure::protocol(t, e);
        let session = alg.start(n, d, algorithm_stream(opts.seed, n, t)).map_err(fail)?;
        let points = session.points().clone();
        check_plan(&points, n, d, budget).map_err(fail)?;
        let values = inst.sample(&points);
        let recon = session.finish(&values).map_err(fail)?;
        let rule = Rule::build(d, &opts.quadrature, Some(&inst.support()));
        let err = lp_error(inst, &recon, params.p, &rule);
        let closed = recon.close();
        let err = err.map_err(|e| TrialFailure::eval(t, e))?;
        closed.map_err(fail)?;
        Ok((err, points.len()))
    })?;
    if budget == Budget::Expected && row.mean_points > n as f64 {
        return Err(AdversaryError::ExpectedBudget {
            mean: row.mean_points,
            n,
        });
    }
    Ok(row)
}

/// Runs the adversary over an increasing list of budgets.
pub fn run_curve(
    alg: &dyn ReconstructionAlgorithm,
    ns: &[usize],
    params: &SpaceParams,
    opts: &AdversaryOptions,
) -> Result<ErrorCurve, AdversaryError> {
    let mut curve = ErrorCurve::new();
    for &n in ns {
        curve.push(run_adversary(alg, n, params, opts)?)?;
    }
    Ok(curve)
}

/// Reconstruction that returns the instance itself. It violates the
/// sampling contract and serves only as a test double.
pub fn oracle_cheat_row(n: usize, params: &SpaceParams, opts: &AdversaryOptions) -> Result<CurveRow, AdversaryError> {
    run_trials(n, params, opts, |inst, t| {
        let rule = Rule::build(params.d, &opts.quadrature, Some(&inst.support()));
        let copy: Box<dyn Reconstruction> = Box::new(CheatCopy(inst.clone()));
        lp_error(inst, &copy, params.p, &rule)
            .map(|e| (e, n))
            .map_err(|e| TrialFailure::eval(t, e))
    })
}

struct CheatCopy(AdversarialInstance);

impl Evaluable for CheatCopy {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.0.eval_batch(xs, out)
    }
}

impl Reconstruction for CheatCopy {}
