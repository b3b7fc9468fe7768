//! Experiment drivers: missing-fraction sweeps, sample-size sweeps over a
//! weighted constant, and chain-censorship sweeps against low-rank
//! completion. Each driver is a pure function of its settings and seed.
//!
//! # Stream layout
//!
//! For top-level seed `seed`, trial `t` and sweep index `v` (position in the
//! fraction / grid list):
//!
//! * data (ground truth, design, noise) uses stream `t` when the sweep keeps
//!   `(n, p, s)` fixed, and `(v << 32) | t` for the sample-size grid;
//! * fraction masks use stream `MASK_STREAM_BIT | (v << 32) | t`.
//!
//! Every method of a trial sees the same data and mask.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::covariance::{build_neighbor_model, pairwise_covariance, population_neighbor_model};
use crate::data::{save_table, save_table_with_comment, CensoredMatrix, Mask, Record};
use crate::error::{Error, Result};
use crate::impute::{
    impute_baseline, impute_lowrank, impute_top_neighbor, BaselineStrategy, ImputedDesign,
    LowRankConfig, Method,
};
use crate::lasso::{solve_lasso, LassoConfig, LassoSolution};
use crate::synth::{
    apply_mask, make_mask, make_sigma, sample_ground_truth, sample_dataset, trial_rng,
    GenerationConfig, GroundTruth, MaskSpec, SyntheticSample, RNG_CONTRACT,
};
use crate::witness::{lambda_bound, NeighborRatios, PopulationModel};

pub const MASK_STREAM_BIT: u64 = 1 << 63;

/// Missing fraction held fixed in the sample-size sweep.
pub const EXP2_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the regularization weight is picked for each fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    /// `1.05` times the variance-proxy threshold (needs population truth).
    Theory,
    /// `c * sigma_hat * sqrt(log p / n)`, `sigma_hat` from a ridge residual.
    Scaled { c: f64 },
    Fixed(f64),
}

impl LambdaPolicy {
    pub const DEFAULT_SCALE: f64 = 1.1;
    pub const THEORY_FACTOR: f64 = 1.05;
    pub const FLOOR: f64 = 1e-8;
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        LambdaPolicy::Scaled {
            c: Self::DEFAULT_SCALE,
        }
    }
}

impl fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaPolicy::Theory => f.write_str("theory"),
            LambdaPolicy::Scaled { c } => write!(f, "scaled:{c}"),
            LambdaPolicy::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl FromStr for LambdaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let number = |a: &str| {
            a.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| Error::Validation(format!("bad lambda policy argument {a:?}")))
        };
        match (head, arg) {
            ("theory", None) => Ok(LambdaPolicy::Theory),
            ("scaled", None) => Ok(LambdaPolicy::default()),
            ("scaled", Some(a)) => Ok(LambdaPolicy::Scaled { c: number(a)? }),
            ("fixed", Some(a)) => Ok(LambdaPolicy::Fixed(number(a)?)),
            _ => Err(Error::Validation(format!("unknown lambda policy {s:?}"))),
        }
    }
}

/// What a lambda policy may look at.
pub struct LambdaContext<'a> {
    pub design: &'a DMatrix<f64>,
    pub labels: &'a DVector<f64>,
    pub population: Option<&'a PopulationModel>,
    pub mask: Option<&'a Mask>,
    pub w_star: Option<&'a DVector<f64>>,
}

/// `c * sigma_hat * sqrt(log p / n)`.
pub fn scaled_lambda(c: f64, sigma_hat: f64, n: usize, p: usize) -> f64 {
    c * sigma_hat * ((p as f64).ln() / n as f64).sqrt()
}

/// Noise scale from the residual of a lightly regularized ridge fit,
/// `RSS / (n - df)` with `df` the trace of the ridge hat matrix.
pub fn estimate_noise_sd(design: &DMatrix<f64>, labels: &DVector<f64>) -> f64 {
    let (n, p) = design.shape();
    let nf = n as f64;
    let gram = design.tr_mul(design) / nf;
    let ridge = 1e-2 * gram.trace() / p as f64;
    let ridge = if ridge > 0.0 { ridge } else { 1e-2 };
    let mut reg = gram.clone();
    for i in 0..p {
        reg[(i, i)] += ridge;
    }
    let rhs = design.tr_mul(labels) / nf;
    let w = reg
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(p));
    let rss = (design * &w - labels).norm_squared();
    let df: f64 = gram
        .symmetric_eigenvalues()
        .iter()
        .map(|&d| d.max(0.0) / (d.max(0.0) + ridge))
        .sum();
    let dof = if nf - df > 1.0 { nf - df } else { nf };
    (rss / dof).sqrt()
}

pub fn choose_lambda(policy: LambdaPolicy, ctx: &LambdaContext<'_>) -> Result<f64> {
    let (n, p) = ctx.design.shape();
    let raw = match policy {
        LambdaPolicy::Fixed(v) => return Ok(v),
        LambdaPolicy::Scaled { c } => {
            scaled_lambda(c, estimate_noise_sd(ctx.design, ctx.labels), n, p)
        }
        LambdaPolicy::Theory => {
            let (model, mask, w_star) = match (ctx.population, ctx.mask, ctx.w_star) {
                (Some(m), Some(k), Some(w)) => (m, k, w),
                _ => {
                    return Err(Error::Validation(
                        "theory lambda needs a population model, mask and w*".into(),
                    ))
                }
            };
            let pop = population_neighbor_model(&model.sigma)?;
            let ratios = NeighborRatios {
                tau: &pop.ratio,
                top: &pop.top,
            };
            LambdaPolicy::THEORY_FACTOR
                * lambda_bound(model, mask, w_star, ratios, ratios)?.lambda_min
        }
    };
    if raw < LambdaPolicy::FLOOR {
        log::warn!("lambda {raw:e} below floor, clamped to {:e}", LambdaPolicy::FLOOR);
        Ok(LambdaPolicy::FLOOR)
    } else {
        Ok(raw)
    }
}

/// Weighted constant `log(n / (s^3 log(s (p - s))))`; `None` when
/// `s (p - s) <= 1`.
pub fn weighted_constant(n: usize, p: usize, s: usize) -> Option<f64> {
    let prod = (s * p.saturating_sub(s)) as f64;
    if prod <= 1.0 {
        return None;
    }
    let s3 = (s as f64).powi(3);
    Some((n as f64 / (s3 * prod.ln())).ln())
}

/// One synthetic trial: population, truth, clean data and its censored view.
#[derive(Debug, Clone)]
pub struct TrialInstance {
    pub config: GenerationConfig,
    pub population: PopulationModel,
    pub truth: GroundTruth,
    pub sample: SyntheticSample,
    pub mask: Mask,
    pub censored: CensoredMatrix,
}

pub fn generate_instance(
    config: &GenerationConfig,
    mask_spec: &MaskSpec,
    data_stream: u64,
    mask_stream: u64,
) -> Result<TrialInstance> {
    config.validate()?;
    let sigma = make_sigma(&config.sigma, config.p)?;
    let mut rng = trial_rng(config.seed, data_stream);
    let truth = sample_ground_truth(config, &mut rng)?;
    let sample = sample_dataset(config, &sigma, &truth, &mut rng)?;
    let mask = make_mask(
        mask_spec,
        config.n,
        config.p,
        &mut trial_rng(config.seed, mask_stream),
    )?;
    let censored = apply_mask(&sample.x_true, &mask)?;
    let population = PopulationModel::new(
        sigma,
        truth.support.clone(),
        1.0,
        config.sigma_eps * config.sigma_eps,
    )?;
    Ok(TrialInstance {
        config: config.clone(),
        population,
        truth,
        sample,
        mask,
        censored,
    })
}

/// Settings shared by every fit in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub lambda_policy: LambdaPolicy,
    pub lasso_tol: f64,
    pub max_sweeps: usize,
    pub support_threshold: f64,
    /// Low-rank completion settings; `None` uses the shape defaults.
    pub lowrank: Option<LowRankConfig>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda_policy: LambdaPolicy::default(),
            lasso_tol: LassoConfig::DEFAULT_TOL,
            max_sweeps: LassoConfig::DEFAULT_MAX_SWEEPS,
            support_threshold: LassoConfig::DEFAULT_SUPPORT_THRESHOLD,
            lowrank: None,
        }
    }
}

impl FitOptions {
    pub fn lasso_config(&self, lambda: f64) -> LassoConfig {
        LassoConfig {
            lambda,
            tol: self.lasso_tol,
            max_sweeps: self.max_sweeps,
            support_threshold: self.support_threshold,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodFit {
    pub method: Method,
    pub imputed: ImputedDesign,
    pub lambda: f64,
    pub solution: LassoSolution,
}

pub fn impute_with(
    censored: &CensoredMatrix,
    method: Method,
    lowrank: Option<&LowRankConfig>,
) -> Result<ImputedDesign> {
    Ok(match method {
        Method::Neighbor => {
            let model = build_neighbor_model(&pairwise_covariance(censored))?;
            impute_top_neighbor(censored, &model)?
        }
        Method::Zero => impute_baseline(censored, BaselineStrategy::Zero),
        Method::Mean => impute_baseline(censored, BaselineStrategy::Mean),
        Method::Median => impute_baseline(censored, BaselineStrategy::Median),
        Method::LowRank => {
            let (n, p) = censored.shape();
            let cfg = lowrank.copied().unwrap_or_else(|| LowRankConfig::for_shape(n, p));
            let out = impute_lowrank(censored, &cfg)?;
            if !out.converged {
                log::debug!("low-rank completion stopped after {} iterations", out.iterations);
            }
            out.design
        }
    })
}

/// Imputes, picks lambda and solves the Lasso for one method.
pub fn fit_method(instance: &TrialInstance, method: Method, options: &FitOptions) -> Result<MethodFit> {
    let imputed = impute_with(&instance.censored, method, options.lowrank.as_ref())?;
    let ctx = LambdaContext {
        design: &imputed.xhat,
        labels: &instance.sample.y,
        population: Some(&instance.population),
        mask: Some(&instance.mask),
        w_star: Some(&instance.truth.w_star),
    };
    let lambda = choose_lambda(options.lambda_policy, &ctx)?;
    let solution = solve_lasso(&imputed.xhat, &instance.sample.y, &options.lasso_config(lambda))?;
    Ok(MethodFit {
        method,
        imputed,
        lambda,
        solution,
    })
}

/// One row of `records.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub experiment: ExperimentId,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub missing_fraction: Option<f64>,
    pub chain_width: Option<usize>,
    pub method: Method,
    pub lambda_policy: LambdaPolicy,
    pub lambda_used: f64,
    pub recovered: bool,
    pub linf_error: f64,
    pub c_constant: Option<f64>,
    pub support_size: usize,
    pub converged: bool,
    pub error: Option<String>,
}

pub const RECORD_COLUMNS: [&str; 17] = [
    "experiment",
    "trial",
    "seed",
    "n",
    "p",
    "s",
    "missing_fraction",
    "chain_width",
    "method",
    "lambda_policy",
    "lambda_used",
    "recovered",
    "linf_error",
    "c_constant",
    "support_size",
    "converged",
    "error",
];

impl ExperimentRecord {
    pub fn to_record(&self) -> Record {
        Record::new()
            .with("experiment", self.experiment.as_str())
            .with("trial", self.trial)
            .with("seed", self.seed)
            .with("n", self.n)
            .with("p", self.p)
            .with("s", self.s)
            .with("missing_fraction", self.missing_fraction)
            .with("chain_width", self.chain_width)
            .with("method", self.method.as_str())
            .with("lambda_policy", self.lambda_policy.to_string())
            .with("lambda_used", self.lambda_used)
            .with("recovered", self.recovered)
            .with("linf_error", self.linf_error)
            .with("c_constant", self.c_constant)
            .with("support_size", self.support_size)
            .with("converged", self.converged)
            .with("error", self.error.clone().map(|e| e.replace([',', '\n'], ";")))
    }

    fn sort_key(&self) -> (ExperimentId, usize, usize, usize, u64, usize, usize, Method) {
        (
            self.experiment,
            self.n,
            self.p,
            self.s,
            self.missing_fraction.map_or(0, f64::to_bits),
            self.chain_width.unwrap_or(0),
            self.trial,
            self.method,
        )
    }
}

/// Sweep coordinates of a record, shared by all methods of a trial.
#[derive(Debug, Clone, Copy)]
struct Cell {
    experiment: ExperimentId,
    trial: usize,
    missing_fraction: Option<f64>,
    chain_width: Option<usize>,
    c_constant: Option<f64>,
}

fn evaluate_cell(
    cell: Cell,
    config: &GenerationConfig,
    instance: Result<TrialInstance>,
    methods: &[Method],
    options: &FitOptions,
) -> Vec<ExperimentRecord> {
    let base = |method: Method| ExperimentRecord {
        experiment: cell.experiment,
        trial: cell.trial,
        seed: config.seed,
        n: config.n,
        p: config.p,
        s: config.s,
        missing_fraction: cell.missing_fraction,
        chain_width: cell.chain_width,
        method,
        lambda_policy: options.lambda_policy,
        lambda_used: f64::NAN,
        recovered: false,
        linf_error: f64::NAN,
        c_constant: cell.c_constant,
        support_size: 0,
        converged: false,
        error: None,
    };
    let instance = match instance {
        Ok(i) => i,
        Err(e) => {
            return methods
                .iter()
                .map(|&m| ExperimentRecord {
                    error: Some(e.to_string()),
                    ..base(m)
                })
                .collect()
        }
    };
    methods
        .iter()
        .map(|&m| match fit_method(&instance, m, options) {
            Ok(fit) => ExperimentRecord {
                lambda_used: fit.lambda,
                recovered: fit.solution.support == instance.truth.support,
                linf_error: (&fit.solution.w - &instance.truth.w_star).amax(),
                support_size: fit.solution.support.len(),
                converged: fit.solution.converged,
                missing_fraction: cell
                    .missing_fraction
                    .or_else(|| Some(instance.censored.missing_count() as f64 / (config.n * config.p) as f64)),
                ..base(m)
            },
            Err(e) => ExperimentRecord {
                error: Some(e.to_string()),
                ..base(m)
            },
        })
        .collect()
}

fn sorted(mut records: Vec<ExperimentRecord>) -> Vec<ExperimentRecord> {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    records
}

pub const EXP1_METHODS: [Method; 4] = [Method::Neighbor, Method::Zero, Method::Mean, Method::Median];
pub const EXP3_METHODS: [Method; 2] = [Method::Neighbor, Method::LowRank];

pub fn exp1_stream(trial: usize) -> u64 {
    trial as u64
}

pub fn mask_stream(sweep: usize, trial: usize) -> u64 {
    MASK_STREAM_BIT | ((sweep as u64) << 32) | trial as u64
}

pub fn grid_stream(sweep: usize, trial: usize) -> u64 {
    ((sweep as u64) << 32) | trial as u64
}

/// The instance behind exp1 cell `(fraction index, trial)`.
pub fn exp1_instance(
    base: &GenerationConfig,
    fractions: &[f64],
    sweep: usize,
    trial: usize,
) -> Result<TrialInstance> {
    generate_instance(
        base,
        &MaskSpec::Fraction(fractions[sweep]),
        exp1_stream(trial),
        mask_stream(sweep, trial),
    )
}

/// Missing-fraction sweep over `methods` (default: neighbor, zero, mean,
/// median).
pub fn run_experiment1(
    trials: usize,
    fractions: &[f64],
    base: &GenerationConfig,
    methods: &[Method],
    options: &FitOptions,
) -> Vec<ExperimentRecord> {
    let cells: Vec<(usize, usize)> = (0..fractions.len())
        .flat_map(|v| (0..trials).map(move |t| (v, t)))
        .collect();
    let records = cells
        .par_iter()
        .flat_map_iter(|&(v, t)| {
            let cell = Cell {
                experiment: ExperimentId::Exp1,
                trial: t,
                missing_fraction: Some(fractions[v]),
                chain_width: None,
                c_constant: None,
            };
            evaluate_cell(cell, base, exp1_instance(base, fractions, v, t), methods, options)
        })
        .collect();
    sorted(records)
}

/// Grid of `(n, p, s)` used when none is given: three support sizes at
/// `p = 50` over a doubling range of sample sizes.
pub fn default_exp2_grid() -> Vec<(usize, usize, usize)> {
    let mut grid = Vec::new();
    for &s in &[4usize, 6, 8] {
        for &n in &[100usize, 200, 400, 800, 1600] {
            grid.push((n, 50, s));
        }
    }
    grid
}

/// Sample-size sweep at a fixed 20% missing fraction, neighbor method only.
pub fn run_experiment2(
    grid: &[(usize, usize, usize)],
    trials: usize,
    base: &GenerationConfig,
    options: &FitOptions,
) -> Vec<ExperimentRecord> {
    let cells: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|v| (0..trials).map(move |t| (v, t)))
        .collect();
    let records = cells
        .par_iter()
        .flat_map_iter(|&(v, t)| {
            let (n, p, s) = grid[v];
            let config = GenerationConfig {
                n,
                p,
                s,
                ..base.clone()
            };
            let cell = Cell {
                experiment: ExperimentId::Exp2,
                trial: t,
                missing_fraction: Some(EXP2_FRACTION),
                chain_width: None,
                c_constant: weighted_constant(n, p, s),
            };
            let instance = generate_instance(
                &config,
                &MaskSpec::Fraction(EXP2_FRACTION),
                grid_stream(v, t),
                mask_stream(v, t),
            );
            evaluate_cell(cell, &config, instance, &[Method::Neighbor], options)
        })
        .collect();
    sorted(records)
}

pub fn exp3_instance(base: &GenerationConfig, width: usize, trial: usize) -> Result<TrialInstance> {
    // chain masks draw no randomness; the stream is unused
    generate_instance(base, &MaskSpec::Chain(width), exp1_stream(trial), mask_stream(0, trial))
}

/// Chain-width sweep comparing neighbor imputation with low-rank completion.
pub fn run_experiment3(
    widths: &[usize],
    trials: usize,
    base: &GenerationConfig,
    options: &FitOptions,
) -> Vec<ExperimentRecord> {
    let cells: Vec<(usize, usize)> = widths
        .iter()
        .flat_map(|&w| (0..trials).map(move |t| (w, t)))
        .collect();
    let records = cells
        .par_iter()
        .flat_map_iter(|&(w, t)| {
            let cell = Cell {
                experiment: ExperimentId::Exp3,
                trial: t,
                missing_fraction: None,
                chain_width: Some(w),
                c_constant: None,
            };
            evaluate_cell(cell, base, exp3_instance(base, w, t), &EXP3_METHODS, options)
        })
        .collect();
    sorted(records)
}

/// Aggregate over trials for one (experiment, method, sweep point).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: ExperimentId,
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub missing_fraction: Option<f64>,
    pub chain_width: Option<usize>,
    pub c_constant: Option<f64>,
    pub recovery_probability: f64,
    pub mean_linf: f64,
    pub std_linf: f64,
    pub trial_count: usize,
    pub error_count: usize,
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "experiment",
    "method",
    "n",
    "p",
    "s",
    "missing_fraction",
    "chain_width",
    "c_constant",
    "recovery_probability",
    "mean_linf",
    "std_linf",
    "trial_count",
    "error_count",
];

impl SummaryRow {
    pub fn to_record(&self) -> Record {
        Record::new()
            .with("experiment", self.experiment.as_str())
            .with("method", self.method.as_str())
            .with("n", self.n)
            .with("p", self.p)
            .with("s", self.s)
            .with("missing_fraction", self.missing_fraction)
            .with("chain_width", self.chain_width)
            .with("c_constant", self.c_constant)
            .with("recovery_probability", self.recovery_probability)
            .with("mean_linf", self.mean_linf)
            .with("std_linf", self.std_linf)
            .with("trial_count", self.trial_count)
            .with("error_count", self.error_count)
    }
}

/// Groups records by experiment, method and sweep point. Failed trials count
/// as not recovered and are left out of the error statistics.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    type Key = (ExperimentId, Method, usize, usize, usize, usize, u64);
    let mut groups: BTreeMap<Key, Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        let key = (
            r.experiment,
            r.method,
            r.n,
            r.p,
            r.s,
            r.chain_width.unwrap_or(usize::MAX),
            r.missing_fraction.map_or(u64::MAX, f64::to_bits),
        );
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_values()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let first = g[0];
            let ok: Vec<f64> = g
                .iter()
                .filter(|r| r.error.is_none())
                .map(|r| r.linf_error)
                .collect();
            let mean = if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().sum::<f64>() / ok.len() as f64
            };
            let std = if ok.len() > 1 {
                (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                experiment: first.experiment,
                method: first.method,
                n: first.n,
                p: first.p,
                s: first.s,
                missing_fraction: first.missing_fraction,
                chain_width: first.chain_width,
                c_constant: first.c_constant,
                recovery_probability: g.iter().filter(|r| r.recovered).count() as f64
                    / g.len() as f64,
                mean_linf: mean,
                std_linf: std,
                trial_count: g.len(),
                error_count: g.len() - ok.len(),
            }
        })
        .collect()
}

/// Writes `records.csv` (preceded by a timestamp comment line) and
/// `summary.csv` into `dir`.
pub fn write_run(dir: &Path, records: &[ExperimentRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let rows: Vec<Record> = records.iter().map(ExperimentRecord::to_record).collect();
    save_table_with_comment(
        &dir.join("records.csv"),
        Some(&format!("generated_at={stamp} rng={RNG_CONTRACT}")),
        &RECORD_COLUMNS,
        &rows,
    )?;
    let summary: Vec<Record> = summarize(records).iter().map(SummaryRow::to_record).collect();
    save_table(&dir.join("summary.csv"), &SUMMARY_COLUMNS, &summary)
}

/// Flat `key=value` settings; blank lines and `#` comments are ignored.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            row: idx + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        out.insert(k.trim().trim_start_matches("--").to_string(), v.trim().to_string());
    }
    Ok(out)
}
