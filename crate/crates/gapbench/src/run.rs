//! Executes a validated configuration and assembles its report.

use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use gapbench_core::adversary::{
    fit_rate_seeded, run_curve, void_probability_estimate, AdversaryOptions, Certificate, ErrorCurve, Verdict,
};
use gapbench_core::baselines::{
    external_algorithm, multilinear_interpolation_algorithm, nearest_neighbor_algorithm, zero_algorithm,
    ExternalAlgorithmSpec, ReconstructionAlgorithm,
};
use gapbench_core::operator::{
    ano_encoder_build, contraction_coverage_check, deeponet_encoder_build, operator_curve, operator_depth_discount,
    operator_rate, perturbation_family, pushforward_certify, shallow_w1inf_errors, uniform_mode_family,
    EncodedNearestNeighbor, Encoder, ExternalOperatorAlgorithm, FieldMeasure, OperatorAdversaryOptions,
    OperatorAlgorithm, OperatorError, Perturbation, ZeroOperatorAlgorithm,
};
use gapbench_core::points::{balanced_midpoint_grid, iid_uniform, PointSet};
use gapbench_core::rng;
use gapbench_core::spaces::theoretical_rate;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{
    AlgorithmSpec, AppendixCheck, ConfigError, ContractionCheck, EncoderCheck, EncoderSpec, Experiment,
    ExperimentConfig, FiniteGap, OperatorAlgorithmSpec, OperatorGap, VoidCheck, VoidLayout,
};
use crate::report::{
    AlgorithmResult, AppendixResults, AppendixRow, Check, ContractionResults, ContractionRow, EncoderInfo,
    EncoderResults, EncoderRow, GapResults, OperatorExtras, Report, Results, Timing, Versions, VoidExact, VoidResults,
    VoidRow,
};

/// Stand-in for the running executable in external commands.
pub const SELF_COMMAND: &str = "@self";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot start the worker pool: {0}")]
    Pool(String),
    #[error("{0}")]
    Experiment(String),
}

impl From<OperatorError> for RunError {
    fn from(e: OperatorError) -> Self {
        RunError::Experiment(e.to_string())
    }
}

impl From<gapbench_core::adversary::AdversaryError> for RunError {
    fn from(e: gapbench_core::adversary::AdversaryError) -> Self {
        RunError::Experiment(e.to_string())
    }
}

impl From<gapbench_core::spaces::SpaceError> for RunError {
    fn from(e: gapbench_core::spaces::SpaceError) -> Self {
        RunError::Experiment(e.to_string())
    }
}

/// Replaces a leading `@self` by the path of the running executable.
pub fn resolve_command(spec: &ExternalAlgorithmSpec) -> ExternalAlgorithmSpec {
    let mut spec = spec.clone();
    if spec.command.first().map(String::as_str) == Some(SELF_COMMAND) {
        if let Ok(exe) = std::env::current_exe() {
            spec.command[0] = exe.to_string_lossy().into_owned();
        }
        if spec.name.is_none() {
            spec.name = Some(spec.command[1..].join(" "));
        }
    }
    spec
}

fn sub_seed(seed: u64, labels: &[u64]) -> u64 {
    rng::derive(seed, labels).gen()
}

/// Validates `config` and runs it on a pool of `config.threads` workers.
pub fn execute(config: &ExperimentConfig) -> Result<Report, RunError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let hash = config.hash();
    let (results, checks) = pool.install(|| match &config.experiment {
        Experiment::VoidCheck(c) => Ok(void_check(c, config.seed)),
        Experiment::FiniteGap(c) => finite_gap(c, config.seed, &hash),
        Experiment::OperatorGap(c) => operator_gap(c, config.seed, &hash),
        Experiment::EncoderCheck(c) => Ok(encoder_check(c, config.seed)),
        Experiment::AppendixCheck(c) => Ok(appendix_check(c)),
        Experiment::ContractionCheck(c) => contraction_check(c, config.seed),
    })?;
    let protocol_failures = match &results {
        Results::FiniteGap(g) | Results::OperatorGap(g) => {
            g.algorithms.iter().map(|a| a.curve.failures().count()).sum()
        }
        _ => 0,
    };
    let verdict = if protocol_failures == 0 && checks.iter().all(|c| c.passed) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(Report {
        versions: Versions::default(),
        kind: config.kind(),
        config_hash: hash,
        config: ExperimentConfig {
            threads: 0,
            output: None,
            ..config.clone()
        },
        verdict,
        protocol_failures,
        checks,
        results,
        timing: Timing {
            started_unix,
            wall_clock_seconds: clock.elapsed().as_secs_f64(),
            threads: pool.current_num_threads(),
        },
    })
}

fn void_points(layout: VoidLayout, n: usize, d: usize, seed: u64) -> PointSet {
    match layout {
        VoidLayout::Grid => balanced_midpoint_grid(n, d),
        VoidLayout::Iid => iid_uniform(n, d, seed),
        VoidLayout::Corner => {
            let pts = iid_uniform(n, d, seed);
            PointSet::from_flat(d, pts.as_flat().iter().map(|v| v / 20.0).collect())
        }
        VoidLayout::Coincident => PointSet::from_flat(d, vec![0.5; n * d]),
    }
}

fn void_check(c: &VoidCheck, seed: u64) -> (Results, Vec<Check>) {
    let mut combos = Vec::new();
    for (li, &layout) in c.layouts.iter().enumerate() {
        for &d in &c.dims {
            for &n in &c.ns {
                combos.push((li, layout, d, n));
            }
        }
    }
    let rows: Vec<VoidRow> = combos
        .par_iter()
        .map(|&(li, layout, d, n)| {
            let s = sub_seed(seed, &[li as u64, d as u64, n as u64]);
            let pts = void_points(layout, n, d, s);
            let est = void_probability_estimate(&pts, c.trials, s).expect("non-empty configuration");
            VoidRow {
                layout,
                d,
                n,
                estimate: est.estimate,
                stderr: est.stderr,
                radius: est.radius,
                trials: est.trials,
            }
        })
        .collect();
    let floor = 0.5 - c.tolerance;
    let worst = rows.iter().min_by(|a, b| a.estimate.total_cmp(&b.estimate));
    let mut checks = vec![Check::new(
        "void probability ≥ ½ − tolerance",
        rows.iter().all(|r| r.estimate >= floor),
        match worst {
            Some(w) => format!(
                "{} configurations; smallest estimate {:.4} ({}, d = {}, N = {}) vs floor {:.4}",
                rows.len(),
                w.estimate,
                crate::report::layout_name(w.layout),
                w.d,
                w.n,
                floor
            ),
            None => "no configurations".into(),
        },
    )];
    let exact = c.exact_case.then(|| {
        let pts = PointSet::from_flat(1, vec![0.125, 0.375, 0.625, 0.875]);
        let est = void_probability_estimate(&pts, c.trials, sub_seed(seed, &[u64::MAX])).expect("four points");
        VoidExact {
            estimate: est.estimate,
            stderr: est.stderr,
            exact: 0.5,
        }
    });
    if let Some(e) = &exact {
        checks.push(Check::new(
            "equispaced d = 1, N = 4 matches ½",
            (e.estimate - e.exact).abs() <= 3.0 * e.stderr,
            format!("{:.4} ± {:.4}", e.estimate, e.stderr),
        ));
    }
    (
        Results::VoidCheck(VoidResults {
            bound: 0.5,
            rows,
            exact,
        }),
        checks,
    )
}

struct CurveOutcome {
    name: String,
    curve: ErrorCurve,
}

/// Fits each curve, certifies it against `lambda`, and adds the checks.
fn certify_curves(
    outcomes: Vec<(CurveOutcome, bool)>,
    lambda: f64,
    slack: f64,
    ci_slack: Option<f64>,
    zero_tolerance: Option<f64>,
    seed: u64,
    hash: &str,
) -> (Vec<AlgorithmResult>, Vec<Check>) {
    let mut results = Vec::new();
    let mut checks = Vec::new();
    for (o, is_zero) in outcomes {
        let fit = fit_rate_seeded(&o.curve, seed);
        let failures = o.curve.failures().count();
        match fit {
            Ok(fit) => {
                let mut cert = Certificate::new(fit.clone(), lambda, slack);
                if let Some(ci) = ci_slack {
                    cert = cert.with_ci_slack(ci);
                }
                let cert = cert.with_context(o.curve.clone(), seed, hash);
                let ci_note = ci_slack.map_or(String::new(), |c| {
                    format!(", CI upper {:.4} vs λ + {c} = {:.4}", fit.ci_high, lambda + c)
                });
                checks.push(Check::new(
                    format!("{}: β̂ ≤ λ + {slack}", o.name),
                    cert.verdict == Verdict::Pass,
                    format!("β̂ = {:.4} vs {:.4}{ci_note}", fit.beta_hat, lambda + slack),
                ));
                if let (true, Some(tol)) = (is_zero, zero_tolerance) {
                    checks.push(Check::new(
                        format!("{}: |β̂ − λ| ≤ {tol}", o.name),
                        (fit.beta_hat - lambda).abs() <= tol,
                        format!("β̂ = {:.4}, λ = {:.4}", fit.beta_hat, lambda),
                    ));
                }
                results.push(AlgorithmResult {
                    name: o.name,
                    curve: o.curve,
                    fit: Some(fit),
                    certificate: Some(cert),
                    error: None,
                });
            }
            Err(e) => {
                checks.push(Check::new(
                    format!("{}: rate fit", o.name),
                    false,
                    format!("{e} ({failures} failed trials)"),
                ));
                results.push(AlgorithmResult {
                    name: o.name,
                    curve: o.curve,
                    fit: None,
                    certificate: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    (results, checks)
}

fn finite_algorithm(spec: &AlgorithmSpec) -> Box<dyn ReconstructionAlgorithm> {
    match spec {
        AlgorithmSpec::Zero => Box::new(zero_algorithm()),
        AlgorithmSpec::NearestNeighbor { layout } => Box::new(nearest_neighbor_algorithm(*layout)),
        AlgorithmSpec::Multilinear => Box::new(multilinear_interpolation_algorithm()),
        AlgorithmSpec::External(spec) => Box::new(external_algorithm(resolve_command(spec))),
    }
}

fn finite_gap(c: &FiniteGap, seed: u64, hash: &str) -> Result<(Results, Vec<Check>), RunError> {
    let lambda = theoretical_rate(&c.params)?;
    let opts = AdversaryOptions {
        trials: c.trials,
        kappa: c.kappa,
        seed,
        quadrature: c.quadrature.clone(),
    };
    let mut outcomes = Vec::new();
    for spec in &c.algorithms {
        let alg = finite_algorithm(spec);
        let curve = run_curve(alg.as_ref(), &c.ns, &c.params, &opts)?;
        outcomes.push((
            CurveOutcome {
                name: alg.name(),
                curve,
            },
            matches!(spec, AlgorithmSpec::Zero),
        ));
    }
    let (algorithms, checks) = certify_curves(outcomes, lambda, c.slack, c.ci_slack, c.zero_tolerance, seed, hash);
    Ok((
        Results::FiniteGap(GapResults {
            lambda,
            algorithms,
            operator: None,
        }),
        checks,
    ))
}

/// `ε₀ = min(½, r/4)` for the box of the first `d` coefficient intervals.
pub fn coefficient_epsilon0(mu: &FieldMeasure, d: usize) -> f64 {
    let r = (0..d)
        .map(|j| {
            let (lo, hi) = mu.interval(j);
            0.5 * (hi - lo)
        })
        .fold(f64::INFINITY, f64::min);
    (0.25 * r).min(0.5)
}

/// Builds the encoder described by `spec` for the first `d` coordinates.
pub fn build_encoder(
    spec: &EncoderSpec,
    mu: &FieldMeasure,
    d: usize,
    seed: u64,
) -> Result<(Arc<dyn Encoder>, EncoderInfo), OperatorError> {
    let mut info = EncoderInfo {
        label: spec.label(),
        delta_hat: None,
        achieved_eps: None,
        epsilon0: None,
        blocks: None,
    };
    let enc: Arc<dyn Encoder> = match spec {
        EncoderSpec::CosineMoments => {
            let e = deeponet_encoder_build(mu, d, 0.0, spec.family().expect("linear family"))?;
            info.delta_hat = Some(e.delta_hat);
            Arc::new(e)
        }
        EncoderSpec::PointEvals { delta, .. } => {
            let e = deeponet_encoder_build(mu, d, *delta, spec.family().expect("linear family"))?;
            info.delta_hat = Some(e.delta_hat);
            Arc::new(e)
        }
        EncoderSpec::Perturbed { delta } => {
            let base = deeponet_encoder_build(mu, d, 0.0, spec.family().expect("linear family"))?;
            let e = base.perturbed(mu, *delta, seed);
            info.delta_hat = Some(e.delta_hat);
            Arc::new(e)
        }
        EncoderSpec::Ano { eps, b_prime } => {
            let eps0 = coefficient_epsilon0(mu, d);
            let target = eps.unwrap_or(eps0 / (2.0 * d as f64));
            let built = ano_encoder_build(mu, d, *b_prime, target)?;
            info.achieved_eps = Some(built.achieved_eps);
            info.epsilon0 = Some(eps0);
            info.blocks = Some(built.encoder.blocks);
            if !built.converged {
                return Err(OperatorError::Unachievable {
                    requested: target,
                    achieved: built.achieved_eps,
                });
            }
            Arc::new(built.encoder)
        }
    };
    Ok((enc, info))
}

fn operator_algorithm(spec: &OperatorAlgorithmSpec, enc: &Arc<dyn Encoder>) -> Box<dyn OperatorAlgorithm> {
    match spec {
        OperatorAlgorithmSpec::Zero => Box::new(ZeroOperatorAlgorithm),
        OperatorAlgorithmSpec::NearestNeighborEncoded => Box::new(EncodedNearestNeighbor::new(enc.clone())),
        OperatorAlgorithmSpec::External(spec) => Box::new(ExternalOperatorAlgorithm {
            spec: resolve_command(spec),
        }),
    }
}

const SCALING_NOTE: &str = "Instances ψ_ξ∘ℰ lie in R·U (DeepONet, from the affine rescaling f(C·+b)) or γ·U \
                            (neural operators, from the ANO embedding) for constants R, γ independent of N; \
                            the factors rescale every error by the same constant and cancel in the fitted rate.";

fn operator_gap(c: &OperatorGap, seed: u64, hash: &str) -> Result<(Results, Vec<Check>), RunError> {
    let mu = c.measure.build()?;
    let lambda = operator_rate(&c.params)?;
    let (enc, info) = build_encoder(
        &c.encoder_spec(),
        &mu,
        c.params.d,
        sub_seed(seed, &[rng::label::ALGORITHM]),
    )?;
    let opts = OperatorAdversaryOptions {
        trials: c.trials,
        kappa: c.kappa,
        seed,
        mc_inputs: c.mc_inputs,
        focus: c.focus,
    };
    let mut outcomes = Vec::new();
    for spec in &c.algorithms {
        let alg = operator_algorithm(spec, &enc);
        let curve = operator_curve(alg.as_ref(), &c.ns, &c.params, &mu, enc.as_ref(), &opts)?;
        outcomes.push((
            CurveOutcome {
                name: alg.name(),
                curve,
            },
            matches!(spec, OperatorAlgorithmSpec::Zero),
        ));
    }
    let (algorithms, mut checks) = certify_curves(outcomes, lambda, c.slack, c.ci_slack, c.zero_tolerance, seed, hash);
    let uniform = uniform_mode_family(&c.params)?;
    let ceiling = 1.0 / c.params.p;
    checks.push(Check::new(
        "uniform-mode bounds decrease in p and stay above 1/p",
        uniform.windows(2).all(|w| w[1].bound < w[0].bound) && uniform.iter().all(|b| b.bound > b.ceiling),
        uniform
            .iter()
            .map(|b| format!("p = {}: {:.4}", b.p, b.bound))
            .collect::<Vec<_>>()
            .join(", "),
    ));
    Ok((
        Results::OperatorGap(GapResults {
            lambda,
            algorithms,
            operator: Some(OperatorExtras {
                encoder: info,
                ceiling,
                depth_discount: operator_depth_discount(&c.params)?,
                uniform_mode: uniform,
                scaling: SCALING_NOTE.into(),
            }),
        }),
        checks,
    ))
}

fn encoder_check(c: &EncoderCheck, seed: u64) -> (Results, Vec<Check>) {
    let mu = c.measure.build().expect("validated measure");
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, spec) in c.encoders.iter().enumerate() {
        let s = sub_seed(seed, &[i as u64]);
        let built = build_encoder(spec, &mu, c.d, s);
        let (row, ok, detail) = match built {
            Ok((enc, info)) => match pushforward_certify(enc.as_ref(), &mu, c.bins, c.samples, s) {
                Ok(rep) => {
                    let exact = matches!(spec, EncoderSpec::CosineMoments);
                    let ok = rep.verdict == Verdict::Pass && (!exact || rep.c_hat >= c.exact_min_c_hat);
                    let detail = format!(
                        "c_hat = {:.4}, emptiest-bin 95% lower mass {:.3e}{}",
                        rep.c_hat,
                        rep.mass_lower_bound,
                        if exact {
                            format!(" (needs c_hat ≥ {})", c.exact_min_c_hat)
                        } else {
                            String::new()
                        }
                    );
                    (
                        EncoderRow {
                            encoder: info,
                            report: Some(rep),
                            error: None,
                        },
                        ok,
                        detail,
                    )
                }
                Err(e) => (
                    EncoderRow {
                        encoder: info,
                        report: None,
                        error: Some(e.to_string()),
                    },
                    false,
                    e.to_string(),
                ),
            },
            Err(e) => (
                EncoderRow {
                    encoder: EncoderInfo {
                        label: spec.label(),
                        delta_hat: None,
                        achieved_eps: None,
                        epsilon0: None,
                        blocks: None,
                    },
                    report: None,
                    error: Some(e.to_string()),
                },
                false,
                e.to_string(),
            ),
        };
        checks.push(Check::new(
            format!("{}: pushforward dominates Unif", spec.label()),
            ok,
            detail,
        ));
        rows.push(row);
    }
    (Results::EncoderCheck(EncoderResults { rows }), checks)
}

fn appendix_check(c: &AppendixCheck) -> (Results, Vec<Check>) {
    let rows: Vec<AppendixRow> =
        c.ms.iter()
            .map(|&m| {
                let (value_error, slope_error) = shallow_w1inf_errors(m, c.samples);
                AppendixRow {
                    m,
                    value_error,
                    slope_error,
                    bound: 3.0 / m as f64,
                }
            })
            .collect();
    let mut checks: Vec<Check> = rows
        .iter()
        .map(|r| {
            Check::new(
                format!("M = {}: W^{{1,∞}} error ≤ 3/M + {}", r.m, c.slack),
                r.value_error <= r.bound + c.slack && r.slope_error <= r.bound + c.slack,
                format!(
                    "value {:.3e}, slope {:.3e}, bound {:.3e}",
                    r.value_error, r.slope_error, r.bound
                ),
            )
        })
        .collect();
    let mut sorted: Vec<&AppendixRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.m);
    let errs: Vec<f64> = sorted.iter().map(|r| r.value_error.max(r.slope_error)).collect();
    checks.push(Check::new(
        "error strictly decreasing in M",
        errs.windows(2).all(|w| w[1] < w[0]),
        errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" > "),
    ));
    (Results::AppendixCheck(AppendixResults { rows }), checks)
}

fn contraction_check(c: &ContractionCheck, seed: u64) -> Result<(Results, Vec<Check>), RunError> {
    let mut jobs: Vec<(usize, usize, &'static str, Perturbation)> = Vec::new();
    for &d in &c.dims {
        // Unit cube: r = ½, so ε₀ = min(½, r/4) = ⅛.
        let eps0 = 0.125;
        for (i, f) in perturbation_family(d, c.count, eps0, sub_seed(seed, &[d as u64]))
            .into_iter()
            .enumerate()
        {
            jobs.push((d, i, "sinusoidal", f));
        }
        if c.collapse {
            jobs.push((d, 0, "collapse", Perturbation::Collapse { d }));
        }
    }
    let rows: Vec<ContractionRow> = jobs
        .into_par_iter()
        .map(|(d, index, map, f)| {
            let bounds = vec![(0.0, 1.0); d];
            let s = sub_seed(seed, &[d as u64, index as u64, (map == "collapse") as u64]);
            contraction_coverage_check(&f, &bounds, c.samples, s).map(|report| ContractionRow {
                d,
                index,
                map: map.into(),
                report,
            })
        })
        .collect::<Result<_, _>>()?;
    use gapbench_core::operator::ContractionStatus;
    let mut checks = Vec::new();
    for &d in &c.dims {
        let sines: Vec<&ContractionRow> = rows.iter().filter(|r| r.d == d && r.map == "sinusoidal").collect();
        let worst = sines
            .iter()
            .map(|r| r.report.min_density_ratio / r.report.c0)
            .fold(f64::INFINITY, f64::min);
        let max_w = sines.iter().map(|r| r.report.w1inf).fold(0.0, f64::max);
        checks.push(Check::new(
            format!("d = {d}: perturbations cover V₀ with density ≥ c₀"),
            sines.iter().all(|r| r.report.status == ContractionStatus::Pass),
            format!(
                "{} maps, max ‖F − id‖ = {max_w:.4}, smallest density / c₀ = {worst:.3}",
                sines.len()
            ),
        ));
        if let Some(col) = rows.iter().find(|r| r.d == d && r.map == "collapse") {
            checks.push(Check::new(
                format!("d = {d}: collapsing map is NOT_APPLICABLE"),
                col.report.status == ContractionStatus::NotApplicable,
                format!("‖F − id‖ = {:.4} vs ε₀ = {:.4}", col.report.w1inf, col.report.epsilon0),
            ));
        }
    }
    Ok((Results::ContractionCheck(ContractionResults { rows }), checks))
}
