use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use censored_recovery::covariance::{
    build_neighbor_model, pairwise_covariance, RANKING_COLUMNS,
};
use censored_recovery::data::{
    default_feature_names, load_design_table, load_matrix, load_vector, read_raw_table,
    save_design, save_mask, save_matrix, save_table, save_vector, DesignTable, Record,
};
use censored_recovery::experiments::{
    default_exp2_grid, parse_key_values, run_experiment1, run_experiment2, run_experiment3,
    write_run, ExperimentRecord, FitOptions, LambdaContext, LambdaPolicy, EXP1_METHODS,
    EXP2_FRACTION,
};
use censored_recovery::impute::{impute_lowrank, LowRankConfig, Method, FALLBACK_COLUMNS};
use censored_recovery::experiments::impute_with;
use censored_recovery::lasso::{solve_lasso, LassoConfig};
use censored_recovery::synth::{
    apply_mask, make_mask, make_sigma, sample_dataset, sample_ground_truth, trial_rng,
    GenerationConfig, MaskSpec, SigmaSpec, RNG_CONTRACT,
};
use censored_recovery::witness::{construct_witness, PopulationModel, WitnessTruth};
use censored_recovery::{Error, Result};

#[derive(Parser)]
#[command(name = "censored-recovery", version, about = "Sparse recovery from censored designs")]
struct Cli {
    /// key=value settings file; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic censored instance.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Fill missing cells of a design CSV.
    #[command(args_override_self = true)]
    Impute(ImputeArgs),
    /// Solve the Lasso on a fully observed design.
    #[command(args_override_self = true)]
    Solve(SolveArgs),
    /// Build the primal-dual witness for a candidate support.
    #[command(args_override_self = true)]
    Witness(WitnessArgs),
    /// Dump the pairwise covariance, scores and neighbor ranking.
    #[command(args_override_self = true)]
    Inspect(InspectArgs),
    /// Missing-fraction sweep over imputation methods.
    #[command(args_override_self = true)]
    Exp1(Exp1Args),
    /// Sample-size sweep against the weighted constant.
    #[command(args_override_self = true)]
    Exp2(Exp2Args),
    /// Chain censorship: neighbor imputation vs low-rank completion.
    #[command(args_override_self = true)]
    Exp3(Exp3Args),
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    /// Equicorrelation of the design features.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma_eps: Option<f64>,
    #[arg(long)]
    wstar_low: Option<f64>,
    #[arg(long)]
    wstar_high: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn config(&self, mut base: GenerationConfig) -> GenerationConfig {
        base.n = self.n.unwrap_or(base.n);
        base.p = self.p.unwrap_or(base.p);
        base.s = self.s.unwrap_or(base.s);
        if let Some(rho) = self.rho {
            base.sigma = SigmaSpec::Equicorrelation(rho);
        }
        base.sigma_eps = self.sigma_eps.unwrap_or(base.sigma_eps);
        base.wstar_low = self.wstar_low.unwrap_or(base.wstar_low);
        base.wstar_high = self.wstar_high.unwrap_or(base.wstar_high);
        base.seed = self.seed;
        base
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `fraction:THETA` or `chain:WIDTH`.
    #[arg(long, default_value = "fraction:0.2")]
    mask: String,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Clone)]
struct LowRankArgs {
    /// Rank budget for low-rank completion (default min(n, p)).
    #[arg(long)]
    lowrank_rank: Option<usize>,
    #[arg(long)]
    lowrank_shrinkage: Option<f64>,
    #[arg(long)]
    lowrank_max_iters: Option<usize>,
    #[arg(long)]
    lowrank_tol: Option<f64>,
}

impl LowRankArgs {
    fn config(&self, n: usize, p: usize) -> Option<LowRankConfig> {
        if self.lowrank_rank.is_none()
            && self.lowrank_shrinkage.is_none()
            && self.lowrank_max_iters.is_none()
            && self.lowrank_tol.is_none()
        {
            return None;
        }
        let mut cfg = LowRankConfig::for_shape(n, p);
        cfg.rank_budget = self.lowrank_rank.unwrap_or(cfg.rank_budget);
        cfg.shrinkage = self.lowrank_shrinkage.unwrap_or(cfg.shrinkage);
        cfg.max_iters = self.lowrank_max_iters.unwrap_or(cfg.max_iters);
        cfg.tol = self.lowrank_tol.unwrap_or(cfg.tol);
        Some(cfg)
    }
}

#[derive(Args)]
struct ImputeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "neighbor")]
    method: Method,
    #[arg(long)]
    output: PathBuf,
    /// Where to write the fallback log (default: OUTPUT with `.fallback.csv`).
    #[arg(long)]
    fallback_log: Option<PathBuf>,
    #[command(flatten)]
    lowrank: LowRankArgs,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = LassoConfig::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = LassoConfig::DEFAULT_MAX_SWEEPS)]
    max_sweeps: usize,
    #[arg(long, default_value_t = LassoConfig::DEFAULT_SUPPORT_THRESHOLD)]
    support_threshold: f64,
}

impl SolverArgs {
    fn lasso(&self, lambda: f64) -> LassoConfig {
        LassoConfig {
            lambda,
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            support_threshold: self.support_threshold,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    design: PathBuf,
    /// Single-column label file; optional when the design ends in a `y` column.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, conflicts_with = "lambda_policy")]
    lambda: Option<f64>,
    /// `scaled[:c]` or `fixed:v` (theory needs a population model).
    #[arg(long)]
    lambda_policy: Option<LambdaPolicy>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct WitnessArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Comma-separated feature indices.
    #[arg(long)]
    support: String,
    #[arg(long)]
    lambda: f64,
    /// Prefix of a `synth` bundle (`PREFIX_truth.csv`, `_xtrue.csv`,
    /// `_epsilon.csv`, `_sigma.csv`).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Directory for covariance.csv, co_counts.csv, scores.csv, ranking.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = LambdaPolicy::default())]
    lambda_policy: LambdaPolicy,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    lowrank: LowRankArgs,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn options(&self, n: usize, p: usize) -> FitOptions {
        FitOptions {
            lambda_policy: self.lambda_policy,
            lasso_tol: self.solver.tol,
            max_sweeps: self.solver.max_sweeps,
            support_threshold: self.solver.support_threshold,
            lowrank: self.lowrank.config(n, p),
        }
    }
}

#[derive(Args)]
struct Exp1Args {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4")]
    fractions: String,
    #[arg(long, default_value = "neighbor,zero,mean,median")]
    methods: String,
}

#[derive(Args)]
struct Exp2Args {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// CSV with columns n,p,s (default: built-in grid).
    #[arg(long)]
    grid: Option<PathBuf>,
}

#[derive(Args)]
struct Exp3Args {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// `a..b` (inclusive) or a comma list.
    #[arg(long, default_value = "2..20")]
    widths: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match with_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Splices `--key=value` pairs from `--config FILE` in right after the
/// subcommand so that later command-line flags override them.
fn with_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = it.next().map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let injected: Vec<OsString> = parse_key_values(&text)?
        .into_iter()
        .filter(|(k, _)| k != "config")
        .map(|(k, v)| format!("--{}={v}", k.replace('_', "-")).into())
        .collect();
    let sub = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(rest.len(), |i| i + 2);
    rest.splice(sub..sub, injected);
    Ok(rest)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Impute(a) => impute(a),
        Command::Solve(a) => solve(a),
        Command::Witness(a) => witness(a),
        Command::Inspect(a) => inspect(a),
        Command::Exp1(a) => exp1(a),
        Command::Exp2(a) => exp2(a),
        Command::Exp3(a) => exp3(a),
    }
}

fn parse_mask_spec(s: &str) -> Result<MaskSpec> {
    let bad = || Error::Validation(format!("mask must be fraction:THETA or chain:WIDTH, got {s:?}"));
    let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "fraction" => Ok(MaskSpec::Fraction(arg.parse().map_err(|_| bad())?)),
        "chain" => Ok(MaskSpec::Chain(arg.parse().map_err(|_| bad())?)),
        _ => Err(bad()),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn synth(a: SynthArgs) -> Result<()> {
    let config = a.model.config(GenerationConfig::experiment_default());
    config.validate()?;
    let spec = parse_mask_spec(&a.mask)?;
    let sigma = make_sigma(&config.sigma, config.p)?;
    let mut rng = trial_rng(config.seed, 0);
    let truth = sample_ground_truth(&config, &mut rng)?;
    let sample = sample_dataset(&config, &sigma, &truth, &mut rng)?;
    let mask = make_mask(&spec, config.n, config.p, &mut trial_rng(config.seed, 1 << 63))?;
    let design = apply_mask(&sample.x_true, &mask)?;
    let names = default_feature_names(config.p);

    let out = |suffix: &str| with_suffix(&a.out_prefix, suffix);
    if let Some(dir) = out("").parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_design(&out("_design.csv"), &names, &design, None)?;
    save_vector(&out("_labels.csv"), "y", &sample.y)?;
    save_vector(&out("_truth.csv"), "w_star", &truth.w_star)?;
    save_mask(&out("_mask.csv"), &names, &mask)?;
    save_matrix(&out("_xtrue.csv"), &names, &sample.x_true)?;
    save_vector(&out("_epsilon.csv"), "epsilon", &sample.epsilon)?;
    save_matrix(&out("_sigma.csv"), &names, &sigma)?;
    Ok(())
}

fn impute(a: ImputeArgs) -> Result<()> {
    let table = load_design_table(&a.input)?;
    let (n, p) = table.design.shape();
    let imputed = match a.method {
        Method::LowRank => {
            let cfg = a.lowrank.config(n, p).unwrap_or_else(|| LowRankConfig::for_shape(n, p));
            let out = impute_lowrank(&table.design, &cfg)?;
            if !out.converged {
                log::warn!("low-rank completion did not converge in {} iterations", out.iterations);
            }
            out.design
        }
        m => impute_with(&table.design, m, None)?,
    };
    let filled = censored_recovery::data::CensoredMatrix::fully_observed(imputed.xhat.clone())?;
    save_design(&a.output, &table.feature_names, &filled, table.labels.as_ref())?;
    if !imputed.fallback_log.is_empty() {
        let path = a
            .fallback_log
            .unwrap_or_else(|| a.output.with_extension("fallback.csv"));
        let rows: Vec<Record> = imputed.fallback_log.iter().map(|f| f.to_record()).collect();
        save_table(&path, &FALLBACK_COLUMNS, &rows)?;
        log::warn!("{} cells needed a fallback; see {}", rows.len(), path.display());
    }
    Ok(())
}

/// Loads a fully observed design with labels from `--labels` or a `y` column.
fn labeled_design(design: &Path, labels: Option<&Path>) -> Result<(DesignTable, DVector<f64>)> {
    let table = load_design_table(design)?;
    if table.design.missing_count() > 0 {
        return Err(Error::Validation(format!(
            "{} has missing cells; run `impute` first",
            design.display()
        )));
    }
    let y = match (labels, &table.labels) {
        (Some(path), _) => load_vector(path)?,
        (None, Some(y)) => y.clone(),
        (None, None) => {
            return Err(Error::Validation(
                "labels required: pass --labels or add a `y` column".into(),
            ))
        }
    };
    Ok((table, y))
}

fn solve(a: SolveArgs) -> Result<()> {
    let (table, y) = labeled_design(&a.design, a.labels.as_deref())?;
    let x = table.design.filled(0.0);
    let lambda = match (a.lambda, a.lambda_policy) {
        (Some(l), _) => l,
        (None, policy) => censored_recovery::experiments::choose_lambda(
            policy.unwrap_or_default(),
            &LambdaContext {
                design: &x,
                labels: &y,
                population: None,
                mask: None,
                w_star: None,
            },
        )?,
    };
    let sol = solve_lasso(&x, &y, &a.solver.lasso(lambda))?;
    if !sol.converged {
        log::warn!("solver stopped after {} sweeps without converging", sol.sweeps_used);
    }
    let mut out = String::from("feature,w,in_support\n");
    for (i, name) in table.feature_names.iter().enumerate() {
        let _ = writeln!(out, "{name},{},{}", sol.w[i], sol.support.contains(&i));
    }
    print!("{out}");
    eprintln!(
        "lambda={lambda} support={:?} sweeps={} converged={} kkt_residual={:e}",
        sol.support, sol.sweeps_used, sol.converged, sol.kkt_residual
    );
    Ok(())
}

fn parse_index_list(s: &str) -> Result<Vec<usize>> {
    let mut v = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Validation(format!("bad index {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

fn witness(a: WitnessArgs) -> Result<()> {
    let (table, y) = labeled_design(&a.design, a.labels.as_deref())?;
    let x = table.design.filled(0.0);
    let support = parse_index_list(&a.support)?;
    let (truth, population) = match &a.truth {
        None => (None, None),
        Some(prefix) => {
            let file = |suffix: &str| with_suffix(prefix, suffix);
            let w_star = load_vector(&file("_truth.csv"))?;
            let epsilon = load_vector(&file("_epsilon.csv"))?;
            let x_true = load_matrix(&file("_xtrue.csv"))?;
            if x_true.shape() != x.shape() {
                return Err(Error::Dimension("truth bundle does not match the design".into()));
            }
            let sigma = load_matrix(&file("_sigma.csv"))?;
            let delta = &x - &x_true;
            let eps2 = epsilon.norm_squared() / epsilon.len().max(1) as f64;
            let pop = PopulationModel::new(sigma, support.clone(), 1.0, eps2).ok();
            (Some(WitnessTruth { w_star, epsilon, delta }), pop)
        }
    };
    let report = construct_witness(&x, &y, &support, &a.solver.lasso(a.lambda), truth.as_ref())?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    println!("max_abs_zsc,strictly_feasible,sign_consistent,min_abs_restricted,decomposition_gap,beta,gamma");
    println!(
        "{},{},{},{},{},{},{}",
        report.max_abs_zsc,
        report.strictly_feasible,
        report.sign_consistent.map_or("NA".to_string(), |b| b.to_string()),
        report.min_abs_restricted,
        opt(report.decomposition_gap()),
        opt(population.as_ref().map(|p| p.beta)),
        opt(population.as_ref().map(|p| p.gamma).filter(|g| g.is_finite())),
    );
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let table = load_design_table(&a.input)?;
    let cov = pairwise_covariance(&table.design);
    let model = build_neighbor_model(&cov)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let names = &table.feature_names;
    save_matrix(&a.out.join("covariance.csv"), names, &cov.h)?;
    save_matrix(
        &a.out.join("co_counts.csv"),
        names,
        &cov.co_counts.map(|c| c as f64),
    )?;
    // unusable pairs score -inf, written as NA
    let scores = model.scores.map(|v| if v.is_finite() { v } else { f64::NAN });
    let design = censored_recovery::data::CensoredMatrix::new(
        scores.map(|v| if v.is_nan() { 0.0 } else { v }),
        scores.map(|v| !v.is_nan()),
    )?;
    save_design(&a.out.join("scores.csv"), names, &design, None)?;
    save_table(&a.out.join("ranking.csv"), &RANKING_COLUMNS, &model.ranking_records())
}

fn parse_reals(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad number {t:?}")))
        })
        .collect()
}

fn parse_widths(s: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| Error::Validation(format!("bad range {s:?}")))?;
        let hi: usize = hi
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| Error::Validation(format!("bad range {s:?}")))?;
        if lo > hi {
            return Err(Error::Validation(format!("empty range {s:?}")));
        }
        Ok((lo..=hi).collect())
    } else {
        parse_index_list(s)
    }
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<Method>())
        .collect()
}

fn load_grid(path: &Path) -> Result<Vec<(usize, usize, usize)>> {
    let (header, rows) = read_raw_table(path)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Validation(format!("grid file lacks a `{name}` column")))
    };
    let (ni, pi, si) = (col("n")?, col("p")?, col("s")?);
    rows.iter()
        .enumerate()
        .map(|(idx, r)| {
            let get = |c: usize| {
                r[c].trim().parse::<usize>().map_err(|_| Error::Parse {
                    row: idx + 1,
                    message: format!("bad grid entry {:?}", r[c]),
                })
            };
            Ok((get(ni)?, get(pi)?, get(si)?))
        })
        .collect()
}

fn sigma_text(spec: &SigmaSpec) -> String {
    match spec {
        SigmaSpec::Equicorrelation(rho) => format!("equicorrelation:{rho}"),
        SigmaSpec::Identity => "identity".into(),
        SigmaSpec::Custom(_) => "custom".into(),
    }
}

fn write_settings(dir: &Path, lines: &[(String, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut text = String::new();
    for (k, v) in lines {
        let _ = writeln!(text, "{k}={v}");
    }
    let path = dir.join("config.txt");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn common_settings(run: &RunArgs, base: &GenerationConfig) -> Vec<(String, String)> {
    let mut v = vec![
        ("trials".to_string(), run.trials.to_string()),
        ("seed".into(), base.seed.to_string()),
        ("n".into(), base.n.to_string()),
        ("p".into(), base.p.to_string()),
        ("s".into(), base.s.to_string()),
        ("sigma".into(), sigma_text(&base.sigma)),
        ("sigma-eps".into(), base.sigma_eps.to_string()),
        ("wstar-low".into(), base.wstar_low.to_string()),
        ("wstar-high".into(), base.wstar_high.to_string()),
        ("lambda-policy".into(), run.lambda_policy.to_string()),
        ("tol".into(), run.solver.tol.to_string()),
        ("max-sweeps".into(), run.solver.max_sweeps.to_string()),
        ("support-threshold".into(), run.solver.support_threshold.to_string()),
        ("rng".into(), RNG_CONTRACT.to_string()),
    ];
    if let Some(cfg) = run.lowrank.config(base.n, base.p) {
        v.push(("lowrank-rank".into(), cfg.rank_budget.to_string()));
        v.push(("lowrank-shrinkage".into(), cfg.shrinkage.to_string()));
        v.push(("lowrank-max-iters".into(), cfg.max_iters.to_string()));
        v.push(("lowrank-tol".into(), cfg.tol.to_string()));
    }
    v
}

fn finish(dir: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        log::warn!("{failures} fits failed; see the error column of records.csv");
    }
    write_run(dir, records)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Validation(format!("thread pool: {e}"))),
    }
}

fn exp1(a: Exp1Args) -> Result<()> {
    let base = a.model.config(GenerationConfig::experiment_default());
    base.validate()?;
    let fractions = parse_reals(&a.fractions)?;
    let methods = parse_methods(&a.methods)?;
    let methods = if methods.is_empty() { EXP1_METHODS.to_vec() } else { methods };
    let options = a.run.options(base.n, base.p);
    let records = with_threads(a.run.threads, || {
        run_experiment1(a.run.trials, &fractions, &base, &methods, &options)
    })?;
    let mut settings = common_settings(&a.run, &base);
    settings.push(("fractions".into(), a.fractions.clone()));
    settings.push(("methods".into(), a.methods.clone()));
    write_settings(&a.run.out, &settings)?;
    finish(&a.run.out, &records)
}

fn exp2(a: Exp2Args) -> Result<()> {
    let base = a.model.config(GenerationConfig::experiment_default());
    let grid = match &a.grid {
        Some(path) => load_grid(path)?,
        None => default_exp2_grid(),
    };
    let options = a.run.options(base.n, base.p);
    let records = with_threads(a.run.threads, || {
        run_experiment2(&grid, a.run.trials, &base, &options)
    })?;
    let mut settings = common_settings(&a.run, &base);
    settings.push(("missing-fraction".into(), EXP2_FRACTION.to_string()));
    settings.push((
        "grid".into(),
        a.grid
            .as_ref()
            .map_or_else(|| "default".to_string(), |p| p.display().to_string()),
    ));
    write_settings(&a.run.out, &settings)?;
    let mut grid_text = String::from("n,p,s\n");
    for (n, p, s) in &grid {
        let _ = writeln!(grid_text, "{n},{p},{s}");
    }
    let path = a.run.out.join("grid.csv");
    std::fs::write(&path, grid_text).map_err(|e| Error::io(&path, e))?;
    finish(&a.run.out, &records)
}

fn exp3(a: Exp3Args) -> Result<()> {
    let mut defaults = GenerationConfig::experiment_default();
    defaults.n = 200;
    let base = a.model.config(defaults);
    base.validate()?;
    let widths = parse_widths(&a.widths)?;
    let options = a.run.options(base.n, base.p);
    let records = with_threads(a.run.threads, || {
        run_experiment3(&widths, a.run.trials, &base, &options)
    })?;
    let mut settings = common_settings(&a.run, &base);
    settings.push(("widths".into(), a.widths.clone()));
    write_settings(&a.run.out, &settings)?;
    finish(&a.run.out, &records)
}
