//! Replicated experiments: weight selection per penalty factor and weight
//! set, loss/risk ratios against the feasible optimum, and event
//! frequencies, reduced deterministically over the replication index.

pub mod stats;

use crate::dgp::{generate, ScenarioSpec};
use crate::error::{Error, Result};
use crate::nested_projection::{coords, factorize, sigma_hat, NestedDesign};
use crate::objectives::{build_criterion, build_loss, build_risk, WeightSet};
use crate::simplex_solver::{solve_discrete, solve_restricted, solve_simplex};
use rayon::prelude::*;

/// Penalty factor in the weight selection criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phi {
    /// `φ = 2` (Mallows).
    Mma,
    /// `φ = log n` (natural log).
    LogN,
    /// Any fixed positive value.
    Fixed(f64),
}

impl Phi {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mma" => Ok(Phi::Mma),
            "logn" => Ok(Phi::LogN),
            other => {
                let v: f64 = other.parse().map_err(|_| {
                    Error::Argument(format!(
                        "bad penalty factor '{other}' (expected mma, logn, or a positive number)"
                    ))
                })?;
                if !(v > 0.0) {
                    return Err(Error::Argument(format!(
                        "penalty factor must be positive, got {v}"
                    )));
                }
                Ok(Phi::Fixed(v))
            }
        }
    }

    pub fn value(&self, n: usize) -> f64 {
        match self {
            Phi::Mma => 2.0,
            Phi::LogN => (n as f64).ln(),
            Phi::Fixed(v) => *v,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Phi::Mma => "mma".into(),
            Phi::LogN => "logn".into(),
            Phi::Fixed(v) => format!("{v}"),
        }
    }
}

pub fn weight_set_label(set: &WeightSet) -> String {
    match set {
        WeightSet::Simplex => "simplex".into(),
        WeightSet::Discrete { n_grid } => format!("discrete:{n_grid}"),
        WeightSet::Restricted { delta, tau0, .. } => format!("restricted:{delta},{tau0}"),
    }
}

fn solve_over(
    obj: &crate::objectives::SeparableSimplexObjective,
    set: &WeightSet,
    n: usize,
) -> Result<crate::simplex_solver::SolveReport> {
    match set {
        WeightSet::Simplex => solve_simplex(obj),
        WeightSet::Discrete { n_grid } => solve_discrete(obj, *n_grid),
        WeightSet::Restricted { delta, tau0, m0 } => {
            solve_restricted(obj, *delta, *tau0, *m0, n)
        }
    }
}

/// One criterion estimator's outcome within a replication.
#[derive(Debug, Clone)]
pub struct EstimatorOutcome {
    pub phi: Phi,
    pub set: WeightSet,
    pub weights: Vec<f64>,
    /// `L_n(ŵ) / inf_{H_n} L_n`.
    pub loss_ratio: f64,
    /// `R_n(ŵ) / inf_{H_n} R_n`.
    pub risk_ratio: f64,
}

/// Everything measured on one replication.
#[derive(Debug, Clone)]
pub struct RepOutcome {
    /// `L_n(w⁰_{M0+1}) / inf L_n`.
    pub loss_ratio_true: f64,
    /// `R_n(w⁰_{M0+1}) / inf R_n`.
    pub risk_ratio_true: f64,
    /// `inf L_n / L_n(w⁰_{M0+1})` (in [0, 1]).
    pub loss_ratio_optimal_inverse: f64,
    /// `w^L = w⁰_{M0+1}` within 1e-10 in max norm.
    pub wl_equals_true: bool,
    pub w_l: Vec<f64>,
    pub w_r: Vec<f64>,
    pub estimators: Vec<EstimatorOutcome>,
    /// Per extra weight set: does `inf` of the loss over that set hit the
    /// true model's loss? (None for the plain simplex.)
    pub set_loss_inf_at_true: Vec<Option<bool>>,
}

fn true_vertex(m_n: usize, m0: usize) -> Vec<f64> {
    let mut w = vec![0.0; m_n];
    w[m0] = 1.0;
    w
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return 1.0;
    }
    let r = num / den;
    // Objective values are small differences of large cancelling sums
    // (c0 = ‖μ‖² dwarfs the loss itself), so a ratio can land a few parts
    // in 1e9 off an exact tie; snap those to exactly 1.
    if (r - 1.0).abs() <= 1e-8 {
        1.0
    } else {
        r
    }
}

/// Run one replication: generate, factorize, select weights for every
/// (φ, weight set) pair, and measure loss/risk ratios with the known truth.
pub fn run_rep(
    spec: &ScenarioSpec,
    master_seed: u64,
    rep: u64,
    phis: &[Phi],
    weight_sets: &[WeightSet],
) -> Result<RepOutcome> {
    run_rep_inner(spec, master_seed, rep, phis, weight_sets).map_err(|e| Error::Replication {
        rep,
        source: Box::new(e),
    })
}

fn run_rep_inner(
    spec: &ScenarioSpec,
    master_seed: u64,
    rep: u64,
    phis: &[Phi],
    weight_sets: &[WeightSet],
) -> Result<RepOutcome> {
    let data = generate(spec, master_seed, rep)?;
    let design: NestedDesign = factorize(&data.x, &spec.sizes)?;
    let c_y = coords(&design, &data.y)?;
    let c_mu = coords(&design, &data.mu)?;
    let s2hat = sigma_hat(&design, &c_y)?;

    let loss = build_loss(&design, &c_y, &c_mu)?;
    let risk = build_risk(&design, &c_mu, spec.sigma2)?;
    let loss_rep = solve_simplex(&loss)?;
    let risk_rep = solve_simplex(&risk)?;
    let inf_loss = loss_rep.objective_value;
    let inf_risk = risk_rep.objective_value;

    let m_n = design.num_models();
    let w0 = true_vertex(m_n, spec.m0);
    let loss_true = loss.eval_weights(&w0);
    let risk_true = risk.eval_weights(&w0);

    let wl_equals_true = loss_rep
        .weights
        .w
        .iter()
        .zip(&w0)
        .all(|(a, b)| (a - b).abs() < 1e-10);

    let mut estimators = Vec::with_capacity(phis.len() * weight_sets.len());
    for &phi in phis {
        let crit = build_criterion(&design, &c_y, phi.value(spec.n), s2hat)?;
        for set in weight_sets {
            let rep_w = solve_over(&crit, set, spec.n)?;
            let w = &rep_w.weights.w;
            estimators.push(EstimatorOutcome {
                phi,
                set: *set,
                weights: w.clone(),
                loss_ratio: ratio(loss.eval_weights(w), inf_loss),
                risk_ratio: ratio(risk.eval_weights(w), inf_risk),
            });
        }
    }

    // Whether the loss-infimum over each non-simplex set is attained at the
    // true model.
    let mut set_loss_inf_at_true = Vec::with_capacity(weight_sets.len());
    for set in weight_sets {
        match set {
            WeightSet::Simplex => set_loss_inf_at_true.push(None),
            _ => {
                let rep_l = solve_over(&loss, set, spec.n)?;
                let hit = (rep_l.objective_value - loss_true).abs()
                    <= 1e-10 * (1.0 + loss_true.abs());
                set_loss_inf_at_true.push(Some(hit));
            }
        }
    }

    let out = RepOutcome {
        loss_ratio_true: ratio(loss_true, inf_loss),
        risk_ratio_true: ratio(risk_true, inf_risk),
        loss_ratio_optimal_inverse: ratio(inf_loss, loss_true),
        wl_equals_true,
        w_l: loss_rep.weights.w,
        w_r: risk_rep.weights.w,
        estimators,
        set_loss_inf_at_true,
    };

    // Optimality of the infimum: every ratio is at least 1 up to roundoff.
    for (label, r) in [
        ("true-model loss", out.loss_ratio_true),
        ("true-model risk", out.risk_ratio_true),
    ]
    .into_iter()
    .chain(
        out.estimators
            .iter()
            .flat_map(|e| [("estimator loss", e.loss_ratio), ("estimator risk", e.risk_ratio)]),
    ) {
        if r < 1.0 - 1e-10 {
            return Err(Error::Validation(format!(
                "{label} ratio {r} fell below 1; the infimum solve is inconsistent"
            )));
        }
    }
    if !(-1e-10..=1.0 + 1e-10).contains(&out.loss_ratio_optimal_inverse) {
        return Err(Error::Validation(format!(
            "inverse optimal loss ratio {} outside [0, 1]",
            out.loss_ratio_optimal_inverse
        )));
    }
    Ok(out)
}

/// One row of the summary: a (estimator, metric) pair with its Monte Carlo
/// mean and standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub r2: Option<f64>,
    pub n: usize,
    pub estimator: String,
    pub metric: String,
    pub mean: f64,
    pub mc_se: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Full experiment output: the summary plus every per-rep outcome for
/// distributional plots.
#[derive(Debug)]
pub struct ExperimentResult {
    pub summary: SummaryTable,
    pub outcomes: Vec<RepOutcome>,
}

/// Run `reps` independent replications over `threads` workers and reduce in
/// replication order. Results are bit-identical for any thread budget.
pub fn run_experiment(
    spec: &ScenarioSpec,
    reps: usize,
    master_seed: u64,
    phis: &[Phi],
    weight_sets: &[WeightSet],
    threads: usize,
) -> Result<ExperimentResult> {
    if reps == 0 {
        return Err(Error::Argument("need reps >= 1".into()));
    }
    if threads == 0 {
        return Err(Error::Argument("need a positive thread budget".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    // Fail-fast: `collect` over Results aborts remaining work on first error;
    // the rep-indexed order of the output vector is preserved by rayon.
    let outcomes: Vec<RepOutcome> = pool.install(|| {
        (0..reps as u64)
            .into_par_iter()
            .map(|rep| run_rep(spec, master_seed, rep, phis, weight_sets))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(spec, &outcomes, phis, weight_sets);
    Ok(ExperimentResult { summary, outcomes })
}

/// Sequential reduction of per-rep outcomes into the summary table.
pub fn summarize(
    spec: &ScenarioSpec,
    outcomes: &[RepOutcome],
    phis: &[Phi],
    weight_sets: &[WeightSet],
) -> SummaryTable {
    let reps = outcomes.len();
    let scenario = spec.kind.name().to_string();
    let mut rows = Vec::new();
    let mut push = |estimator: String, metric: &str, values: Vec<f64>| {
        let (mean, mc_se) = mean_se(&values);
        rows.push(SummaryRow {
            scenario: scenario.clone(),
            r2: spec.r2,
            n: spec.n,
            estimator,
            metric: metric.to_string(),
            mean,
            mc_se,
            reps,
        });
    };

    push(
        "true".into(),
        "loss_ratio",
        outcomes.iter().map(|o| o.loss_ratio_true).collect(),
    );
    push(
        "true".into(),
        "risk_ratio",
        outcomes.iter().map(|o| o.risk_ratio_true).collect(),
    );
    for (pi, phi) in phis.iter().enumerate() {
        for (si, set) in weight_sets.iter().enumerate() {
            let idx = pi * weight_sets.len() + si;
            let name = if matches!(set, WeightSet::Simplex) {
                format!("phi={}", phi.label())
            } else {
                format!("phi={}@{}", phi.label(), weight_set_label(set))
            };
            push(
                name.clone(),
                "loss_ratio",
                outcomes.iter().map(|o| o.estimators[idx].loss_ratio).collect(),
            );
            push(
                name,
                "risk_ratio",
                outcomes.iter().map(|o| o.estimators[idx].risk_ratio).collect(),
            );
        }
    }
    push(
        "wL".into(),
        "prob_equals_true",
        outcomes
            .iter()
            .map(|o| if o.wl_equals_true { 1.0 } else { 0.0 })
            .collect(),
    );
    for (si, set) in weight_sets.iter().enumerate() {
        if matches!(set, WeightSet::Simplex) {
            continue;
        }
        push(
            format!("set:{}", weight_set_label(set)),
            "loss_inf_at_true_prob",
            outcomes
                .iter()
                .map(|o| match o.set_loss_inf_at_true[si] {
                    Some(true) => 1.0,
                    _ => 0.0,
                })
                .collect(),
        );
    }
    SummaryTable { rows }
}
