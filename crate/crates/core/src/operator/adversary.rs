//! The operator-level adversary: finite-dimensional bump instances composed
//! with an encoder, `Ψ_ξ = ψ_ξ ∘ ℰ`, and Monte-Carlo estimates of
//! `‖Ψ_ξ − A(Ψ_ξ)‖_{L^p(μ)}`.

use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::Encoder;
use super::measure::FieldMeasure;
use super::{GridFunction, OperatorError};
use crate::adversary::{
    algorithm_stream, run_trials, AdversarialInstance, AdversaryOptions, CurveRow, ErrorCurve, TrialFailure,
};
use crate::baselines::{Concurrency, ExternalAlgorithmSpec, ExternalProcess};
use crate::points::{balanced_midpoint_grid, LinfIndex, PointSet};
use crate::protocol::{check_finite, ClientMessage, HarnessMessage, ProtoCode, ProtocolError};
use crate::quadrature::{EvalError, Evaluable};
use crate::rng::{self, StreamRng};
use crate::spaces::{depth_fraction, inv_p, Depth, DepthGrowth, SpaceError, SpaceParams};

/// Which operator architecture the instances are embedded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Deeponet,
    No,
}

/// `(α, p, d, ℓ)` for operator spaces; `d` is the embedded dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub alpha: f64,
    #[serde(with = "crate::extended_real")]
    pub p: f64,
    pub d: usize,
    pub ell: DepthGrowth,
    pub kind: OperatorKind,
}

impl OperatorParams {
    pub fn space(&self) -> SpaceParams {
        SpaceParams::new(self.alpha, self.p, self.d, self.ell.clone())
    }

    /// Checks `α > 0`, `1 ≤ p < ∞`, `d ≥ 1` and `ℓ* ≥ 4`.
    pub fn validate(&self) -> Result<(), SpaceError> {
        let space = self.space();
        space.validate()?;
        if !self.p.is_finite() {
            return Err(SpaceError::Invalid("the Bochner norm needs a finite p".into()));
        }
        space.require_ell_star(4)
    }

    /// Finite-dimensional parameters whose bump recipe (stages and amplitude
    /// exponent) carries the operator depth discount.
    fn instance_space(&self) -> Result<SpaceParams, SpaceError> {
        let value = match operator_depth_discount(self)? {
            Some(s) => Depth::Finite(2 * s + 1),
            None => Depth::Infinite,
        };
        Ok(SpaceParams::new(
            self.alpha,
            self.p,
            self.d,
            DepthGrowth::Constant { value },
        ))
    }
}

/// Depth discount `s` in the rate `1/p + (1/d)·α/(α+s)`: `⌊(ℓ*−1)/2⌋` for
/// DeepONets (`None` when `ℓ* = ∞`) and `⌊ℓ₀/2⌋ = 1` with `ℓ₀ = 3` for
/// neural operators. Both need `ℓ* ≥ 4`.
pub fn operator_depth_discount(params: &OperatorParams) -> Result<Option<u64>, SpaceError> {
    params.validate()?;
    Ok(match params.kind {
        OperatorKind::Deeponet => params.space().ell_star().finite().map(|l| (l - 1) / 2),
        OperatorKind::No => Some(1),
    })
}

/// `1/p + (1/d)·α/(α+s)` with the discount of [`operator_depth_discount`].
pub fn operator_rate(params: &OperatorParams) -> Result<f64, SpaceError> {
    let s = operator_depth_discount(params)?;
    Ok(inv_p(params.p) + depth_fraction(params.alpha, s) / params.d as f64)
}

/// The certified rate bound for one `p` in uniform mode, and its
/// `d → ∞` ceiling `1/p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformModeBound {
    pub p: f64,
    pub bound: f64,
    pub ceiling: f64,
}

/// Bounds for `p ∈ {1, 2, 4, 8}`; they decrease to 0 as `p, d → ∞`.
pub fn uniform_mode_family(params: &OperatorParams) -> Result<Vec<UniformModeBound>, SpaceError> {
    [1.0, 2.0, 4.0, 8.0]
        .into_iter()
        .map(|p| {
            let bound = operator_rate(&OperatorParams { p, ..params.clone() })?;
            Ok(UniformModeBound {
                p,
                bound,
                ceiling: 1.0 / p,
            })
        })
        .collect()
}

/// `Ψ_ξ(u) = ψ_ξ(ℰ(u))`.
pub struct InstanceOperator<'a> {
    pub inst: &'a AdversarialInstance,
    pub encoder: &'a dyn Encoder,
}

impl InstanceOperator<'_> {
    pub fn eval(&self, u: &GridFunction) -> f64 {
        let mut e = vec![0.0; self.encoder.out_dim()];
        self.encoder.encode_into(u, &mut e);
        let mut out = [0.0];
        self.inst.eval_batch(&e, &mut out).expect("dimension matches");
        out[0]
    }

    /// Values handed to an algorithm, from the realized network.
    pub fn sample(&self, inputs: &[GridFunction]) -> Vec<f64> {
        let d = self.encoder.out_dim();
        let mut pts = PointSet::new(d);
        let mut e = vec![0.0; d];
        for u in inputs {
            self.encoder.encode_into(u, &mut e);
            pts.push(&e);
        }
        self.inst.sample(&pts)
    }
}

/// A reconstruction `A(Ψ)` evaluated on batches of input functions.
pub trait OperatorReconstruction: Send + Sync {
    fn eval(&self, inputs: &[GridFunction]) -> Result<Vec<f64>, EvalError>;

    fn close(self: Box<Self>) -> Result<(), ProtocolError> {
        Ok(())
    }
}

/// One trial: the inputs are fixed before any value is revealed.
pub trait OperatorSession: Send {
    fn inputs(&self) -> &[GridFunction];
    fn finish(self: Box<Self>, values: &[f64]) -> Result<Box<dyn OperatorReconstruction>, ProtocolError>;
}

/// A nonadaptive operator-learning method with `N` input functions.
pub trait OperatorAlgorithm: Send + Sync {
    fn name(&self) -> String;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Reentrant
    }

    fn start(&self, n: usize, mu: &FieldMeasure, omega: u64) -> Result<Box<dyn OperatorSession + '_>, ProtocolError>;
}

struct Fixed<R> {
    inputs: Vec<GridFunction>,
    build: R,
}

impl<R> OperatorSession for Fixed<R>
where
    R: FnOnce(&[GridFunction], &[f64]) -> Box<dyn OperatorReconstruction> + Send,
{
    fn inputs(&self) -> &[GridFunction] {
        &self.inputs
    }

    fn finish(self: Box<Self>, values: &[f64]) -> Result<Box<dyn OperatorReconstruction>, ProtocolError> {
        let Fixed { inputs, build } = *self;
        Ok(build(&inputs, values))
    }
}

struct ZeroReconstruction;

impl OperatorReconstruction for ZeroReconstruction {
    fn eval(&self, inputs: &[GridFunction]) -> Result<Vec<f64>, EvalError> {
        Ok(vec![0.0; inputs.len()])
    }
}

/// Queries `N` zero functions and returns the zero operator.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroOperatorAlgorithm;

impl OperatorAlgorithm for ZeroOperatorAlgorithm {
    fn name(&self) -> String {
        "zero".into()
    }

    fn start(&self, n: usize, mu: &FieldMeasure, _omega: u64) -> Result<Box<dyn OperatorSession + '_>, ProtocolError> {
        Ok(Box::new(Fixed {
            inputs: vec![GridFunction::zeros(mu.grid()); n],
            build: |_: &[GridFunction], _: &[f64]| Box::new(ZeroReconstruction) as Box<dyn OperatorReconstruction>,
        }))
    }
}

/// Normalized coordinates `t ∈ [0,1]^d` of the first `d` coefficients,
/// mapped back to a coefficient vector with the remaining ones set to `tail`.
fn coefficients_from_unit(mu: &FieldMeasure, t: &[f64], tail: &[f64]) -> Vec<f64> {
    let mut z = tail.to_vec();
    for (j, &tj) in t.iter().enumerate() {
        let (lo, hi) = mu.interval(j);
        z[j] = lo + tj * (hi - lo);
    }
    z
}

/// Inputs on a midpoint grid of the normalized first `d` coefficients (the
/// rest zero); predicts the value of the input whose encoding is nearest in
/// `ℓ∞`.
#[derive(Clone)]
pub struct EncodedNearestNeighbor {
    encoder: Arc<dyn Encoder>,
}

impl EncodedNearestNeighbor {
    pub fn new(encoder: Arc<dyn Encoder>) -> Self {
        Self { encoder }
    }
}

struct NearestFit {
    encoder: Arc<dyn Encoder>,
    index: LinfIndex,
    values: Vec<f64>,
}

impl OperatorReconstruction for NearestFit {
    fn eval(&self, inputs: &[GridFunction]) -> Result<Vec<f64>, EvalError> {
        let mut e = vec![0.0; self.encoder.out_dim()];
        Ok(inputs
            .iter()
            .map(|u| {
                self.encoder.encode_into(u, &mut e);
                self.values[self.index.nearest(&e).0]
            })
            .collect())
    }
}

impl OperatorAlgorithm for EncodedNearestNeighbor {
    fn name(&self) -> String {
        "nearest_neighbor_encoded".into()
    }

    fn start(&self, n: usize, mu: &FieldMeasure, _omega: u64) -> Result<Box<dyn OperatorSession + '_>, ProtocolError> {
        let d = self.encoder.out_dim();
        let grid = balanced_midpoint_grid(n, d);
        let zeros = vec![0.0; mu.terms()];
        let inputs: Vec<GridFunction> = grid
            .iter()
            .map(|t| mu.realize(&coefficients_from_unit(mu, t, &zeros)))
            .collect();
        let encoder = self.encoder.clone();
        Ok(Box::new(Fixed {
            inputs,
            build: move |inputs: &[GridFunction], values: &[f64]| {
                let mut pts = PointSet::new(d);
                let mut e = vec![0.0; d];
                for u in inputs {
                    encoder.encode_into(u, &mut e);
                    pts.push(&e);
                }
                Box::new(NearestFit {
                    encoder,
                    index: LinfIndex::new(pts),
                    values: values.to_vec(),
                }) as Box<dyn OperatorReconstruction>
            },
        }))
    }
}

/// Functions per query message.
const QUERY_FUNCTIONS: usize = 256;

/// An operator-learning method served by an external process.
#[derive(Debug, Clone)]
pub struct ExternalOperatorAlgorithm {
    pub spec: ExternalAlgorithmSpec,
}

struct ExternalOperatorSession {
    proc: ExternalProcess,
    inputs: Vec<GridFunction>,
    grid: usize,
}

struct ExternalOperatorFit {
    proc: Mutex<ExternalProcess>,
    grid: usize,
}

fn check_inputs(
    functions: Vec<Vec<f64>>,
    n: usize,
    grid: usize,
    reported: usize,
) -> Result<Vec<GridFunction>, ProtocolError> {
    if reported != grid {
        return Err(ProtocolError::new(
            ProtoCode::Malformed,
            format!("inputs declare grid {reported}, expected {grid}"),
        ));
    }
    if functions.len() != n {
        return Err(ProtocolError::new(
            ProtoCode::PointCount,
            format!("expected {n} input functions, received {}", functions.len()),
        ));
    }
    if let Some(i) = functions.iter().position(|f| f.len() != grid) {
        return Err(ProtocolError::new(
            ProtoCode::Malformed,
            format!("input function {i} has {} values, expected {grid}", functions[i].len()),
        ));
    }
    check_finite(functions.iter().flatten(), "input functions")?;
    Ok(functions.into_iter().map(GridFunction::new).collect())
}

impl OperatorAlgorithm for ExternalOperatorAlgorithm {
    fn name(&self) -> String {
        self.spec.display_name()
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Reentrant
    }

    fn start(&self, n: usize, mu: &FieldMeasure, _omega: u64) -> Result<Box<dyn OperatorSession + '_>, ProtocolError> {
        let grid = mu.grid();
        let mut proc = ExternalProcess::spawn(&self.spec)?;
        proc.send(&HarnessMessage::Plan {
            n,
            d: None,
            grid: Some(grid),
        })?;
        let ClientMessage::Inputs {
            grid: reported,
            functions,
        } = proc.expect("inputs")?
        else {
            unreachable!("kind checked")
        };
        let inputs = check_inputs(functions, n, grid, reported)?;
        Ok(Box::new(ExternalOperatorSession { proc, inputs, grid }))
    }
}

impl OperatorSession for ExternalOperatorSession {
    fn inputs(&self) -> &[GridFunction] {
        &self.inputs
    }

    fn finish(self: Box<Self>, values: &[f64]) -> Result<Box<dyn OperatorReconstruction>, ProtocolError> {
        let ExternalOperatorSession { mut proc, grid, .. } = *self;
        proc.send(&HarnessMessage::Values {
            values: values.to_vec(),
        })?;
        proc.expect("model_ready")?;
        Ok(Box::new(ExternalOperatorFit {
            proc: Mutex::new(proc),
            grid,
        }))
    }
}

impl OperatorReconstruction for ExternalOperatorFit {
    fn eval(&self, inputs: &[GridFunction]) -> Result<Vec<f64>, EvalError> {
        let mut proc = self
            .proc
            .lock()
            .map_err(|_| EvalError::Failed("adapter poisoned".into()))?;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(QUERY_FUNCTIONS) {
            proc.send(&HarnessMessage::Query {
                points: None,
                grid: Some(self.grid),
                functions: Some(chunk.iter().map(|u| u.values.clone()).collect()),
            })?;
            let ClientMessage::Predictions { values } = proc.expect("predictions")? else {
                unreachable!("kind checked")
            };
            if values.len() != chunk.len() {
                return Err(ProtocolError::new(
                    ProtoCode::PointCount,
                    format!("expected {} predictions, received {}", chunk.len(), values.len()),
                )
                .into());
            }
            check_finite(&values, "predictions")?;
            out.extend(values);
        }
        Ok(out)
    }

    fn close(self: Box<Self>) -> Result<(), ProtocolError> {
        self.proc
            .into_inner()
            .map_err(|_| ProtocolError::new(ProtoCode::Io, "adapter poisoned"))?
            .end()
    }
}

/// Smallest accepted number of Monte-Carlo inputs per trial.
pub const MIN_MC_INPUTS: usize = 1000;

/// Options of the operator adversary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorAdversaryOptions {
    pub trials: usize,
    pub kappa: f64,
    pub seed: u64,
    /// Monte-Carlo inputs per trial for the Bochner norm.
    pub mc_inputs: usize,
    /// Half-width of the middle stratum in units of the support half-width.
    #[serde(default = "default_focus")]
    pub focus: f64,
}

fn default_focus() -> f64 {
    6.0
}

/// Uniform draw from `outer \ inner` for boxes with `inner ⊂ outer`.
///
/// The difference splits into the disjoint slabs where the first coordinate
/// leaving `inner` is coordinate `j`.
fn sample_box_minus(outer: &[(f64, f64)], inner: &[(f64, f64)], r: &mut StreamRng, out: &mut [f64]) {
    let d = outer.len();
    let width = |b: (f64, f64)| b.1 - b.0;
    let vols: Vec<f64> = (0..d)
        .map(|j| {
            let head: f64 = inner[..j].iter().map(|&b| width(b)).product();
            let tail: f64 = outer[j + 1..].iter().map(|&b| width(b)).product();
            head * (width(outer[j]) - width(inner[j])) * tail
        })
        .collect();
    let total: f64 = vols.iter().sum();
    let mut pick = r.gen::<f64>() * total;
    let mut j = d - 1;
    for (k, v) in vols.iter().enumerate() {
        if pick < *v {
            j = k;
            break;
        }
        pick -= v;
    }
    for (k, o) in out.iter_mut().enumerate() {
        let (lo, hi) = if k < j { inner[k] } else { outer[k] };
        *o = if hi > lo { r.gen_range(lo..hi) } else { lo };
    }
    let left = inner[j].0 - outer[j].0;
    let right = outer[j].1 - inner[j].1;
    let s = r.gen::<f64>() * (left + right);
    out[j] = if s < left {
        outer[j].0 + s
    } else {
        inner[j].1 + (s - left)
    };
}

fn volume(b: &[(f64, f64)]) -> f64 {
    b.iter().map(|(lo, hi)| (hi - lo).max(0.0)).product()
}

fn clip_box(center: &[f64], half: f64) -> Vec<(f64, f64)> {
    center
        .iter()
        .map(|c| ((c - half).max(0.0), (c + half).min(1.0)))
        .collect()
}

/// Stratified estimate of `‖Ψ − A(Ψ)‖_{L^p(μ)}` together with the largest
/// `|Ψ − A(Ψ)|` over the same inputs.
///
/// Strata live in the normalized coordinates `t ∈ [0,1]^d` of the first `d`
/// coefficients: the support cube of the bump, a focus box of `focus`
/// support half-widths around it, and the rest. Each receives an equal share
/// of `mc` inputs and is weighted by its volume.
pub fn stratified_error(
    op: &InstanceOperator<'_>,
    recon: &dyn OperatorReconstruction,
    mu: &FieldMeasure,
    p: f64,
    mc: usize,
    focus: f64,
    r: &mut StreamRng,
) -> Result<(f64, f64), EvalError> {
    let d = op.encoder.out_dim();
    let unit = vec![(0.0, 1.0); d];
    let half = 1.0 / op.inst.m;
    let b1 = clip_box(&op.inst.y, half);
    let b2 = clip_box(&op.inst.y, half * focus.max(1.0));
    let strata: Vec<(f64, Option<&[(f64, f64)]>, &[(f64, f64)])> = vec![
        (volume(&b1), None, &b1),
        (volume(&b2) - volume(&b1), Some(&b1), &b2),
        (1.0 - volume(&b2), Some(&b2), &unit),
    ];
    let live: Vec<_> = strata.into_iter().filter(|s| s.0 > 1e-15).collect();
    let per = (mc / live.len()).max(1);
    let mut total = 0.0;
    let mut sup = 0.0f64;
    let mut t = vec![0.0; d];
    for (vol, inner, outer) in live {
        let inputs: Vec<GridFunction> = (0..per)
            .map(|_| {
                match inner {
                    None => {
                        for (v, (lo, hi)) in t.iter_mut().zip(outer) {
                            *v = if hi > lo { r.gen_range(*lo..*hi) } else { *lo };
                        }
                    }
                    Some(inner) => sample_box_minus(outer, inner, r, &mut t),
                }
                let tail = mu.sample_coords(r);
                mu.realize(&coefficients_from_unit(mu, &t, &tail))
            })
            .collect();
        let predicted = recon.eval(&inputs)?;
        if predicted.len() != inputs.len() {
            return Err(EvalError::Failed(
                "reconstruction returned the wrong number of values".into(),
            ));
        }
        let mut acc = 0.0;
        for (u, a) in inputs.iter().zip(&predicted) {
            let diff = (op.eval(u) - a).abs();
            sup = sup.max(diff);
            acc += diff.powf(p);
        }
        total += vol * acc / per as f64;
    }
    Ok((total.powf(1.0 / p), sup))
}

/// Plain Monte-Carlo estimate of `E_{u∼μ}[|G(u)|^p]^{1/p}` and its
/// delta-method standard error.
pub fn bochner_norm<F>(op: F, mu: &FieldMeasure, p: f64, mc_inputs: usize, seed: u64) -> (f64, f64)
where
    F: Fn(&GridFunction) -> f64,
{
    let mut r = rng::derive(seed, &[rng::label::INPUTS]);
    let n = mc_inputs.max(2);
    let vals: Vec<f64> = (0..n).map(|_| op(&mu.sample(&mut r).u).abs().powf(p)).collect();
    let (mean, se) = crate::adversary::mean_stderr(&vals);
    let est = mean.powf(1.0 / p);
    let stderr = if mean > 0.0 { est / (p * mean) * se } else { 0.0 };
    (est, stderr)
}

/// Estimates `E_ξ ‖Ψ_ξ − A(Ψ_ξ)‖_{L^p(μ)}` for one budget `N`, where
/// `Ψ_ξ = ψ_ξ ∘ ℰ` and `ψ_ξ` is the finite-dimensional bump instance in the
/// encoder's `d` coordinates.
pub fn operator_adversary_run(
    alg: &dyn OperatorAlgorithm,
    n: usize,
    params: &OperatorParams,
    mu: &FieldMeasure,
    encoder: &dyn Encoder,
    opts: &OperatorAdversaryOptions,
) -> Result<CurveRow, OperatorError> {
    let space = params.instance_space()?;
    if opts.mc_inputs < MIN_MC_INPUTS {
        return Err(OperatorError::Invalid(format!(
            "mc_inputs = {} is below the minimum of {MIN_MC_INPUTS}",
            opts.mc_inputs
        )));
    }
    if encoder.out_dim() != params.d {
        return Err(OperatorError::Invalid(format!(
            "encoder has {} outputs but d = {}",
            encoder.out_dim(),
            params.d
        )));
    }
    if encoder.grid() != mu.grid() {
        return Err(OperatorError::GridMismatch {
            expected: mu.grid(),
            found: encoder.grid(),
        });
    }
    let serial = Mutex::new(());
    let base = AdversaryOptions {
        trials: opts.trials,
        kappa: opts.kappa,
        seed: opts.seed,
        quadrature: Default::default(),
    };
    let row = run_trials(n, &space, &base, |inst, t| {
        let _guard = match alg.concurrency() {
            Concurrency::Serial => Some(serial.lock().unwrap_or_else(|e| e.into_inner())),
            Concurrency::Reentrant => None,
        };
        let fail = |e| TrialFailure::protocol(t, e);
        let op = InstanceOperator { inst, encoder };
        let session = alg.start(n, mu, algorithm_stream(opts.seed, n, t)).map_err(fail)?;
        let inputs = session.inputs();
        if inputs.len() != n {
            return Err(fail(ProtocolError::new(
                ProtoCode::PointCount,
                format!("expected {n} input functions, received {}", inputs.len()),
            )));
        }
        if inputs.iter().any(|u| u.grid() != mu.grid()) {
            return Err(fail(ProtocolError::new(
                ProtoCode::Malformed,
                "input function on the wrong grid",
            )));
        }
        let values = op.sample(inputs);
        let recon = session.finish(&values).map_err(fail)?;
        let mut r = rng::derive(opts.seed, &[rng::label::INPUTS, n as u64, t as u64]);
        let err = stratified_error(&op, recon.as_ref(), mu, params.p, opts.mc_inputs, opts.focus, &mut r);
        let closed = recon.close();
        let (err, sup) = err.map_err(|e| TrialFailure::eval(t, e))?;
        closed.map_err(fail)?;
        if err > sup * (1.0 + 1e-9) {
            return Err(TrialFailure {
                trial: t,
                code: "EVAL".into(),
                detail: format!("L^p error {err} exceeds the sup {sup} over the same inputs"),
            });
        }
        Ok((err, n))
    })?;
    Ok(row)
}

/// Runs [`operator_adversary_run`] over increasing budgets.
pub fn operator_curve(
    alg: &dyn OperatorAlgorithm,
    ns: &[usize],
    params: &OperatorParams,
    mu: &FieldMeasure,
    encoder: &dyn Encoder,
    opts: &OperatorAdversaryOptions,
) -> Result<ErrorCurve, OperatorError> {
    let mut curve = ErrorCurve::new();
    for &n in ns {
        curve.push(operator_adversary_run(alg, n, params, mu, encoder, opts)?)?;
    }
    Ok(curve)
}
