//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; the process fails if any does.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use censored_recovery::covariance::{build_neighbor_model, pairwise_covariance};
use censored_recovery::data::CensoredMatrix;
use censored_recovery::experiments::{
    choose_lambda, default_exp2_grid, exp1_instance, fit_method, impute_with, run_experiment1,
    run_experiment2, run_experiment3, summarize, ExperimentRecord, FitOptions, LambdaContext,
    SummaryRow, EXP1_METHODS,
};
use censored_recovery::impute::{LowRankConfig, Method};
use censored_recovery::lasso::{kkt_residual, lambda_max, solve_lasso, LassoConfig};
use censored_recovery::synth::{GenerationConfig, MaskSpec};
use censored_recovery::witness::{
    construct_witness, population_incoherence, sample_incoherence, sample_min_eigen,
    WitnessTruth,
};
use censored_recovery::experiments::generate_instance;

use common::{brute_force_lasso, gaussian_matrix, gaussian_vector};

const FRACTIONS: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];
const TRIALS: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn probability(rows: &[SummaryRow], method: Method, fraction: f64) -> f64 {
    rows.iter()
        .find(|r| r.method == method && r.missing_fraction == Some(fraction))
        .map_or(f64::NAN, |r| r.recovery_probability)
}

fn exp1_base() -> GenerationConfig {
    GenerationConfig::experiment_default()
}

fn headline(summary: &[SummaryRow]) -> Outcome {
    let nb = probability(summary, Method::Neighbor, 0.2);
    let others: Vec<(Method, f64)> = [Method::Zero, Method::Mean, Method::Median]
        .iter()
        .map(|&m| (m, probability(summary, m, 0.2)))
        .collect();
    let pass = nb >= 0.45 && others.iter().all(|(_, p)| nb > *p);
    let rest: Vec<String> = others.iter().map(|(m, p)| format!("{m} {p:.2}")).collect();
    outcome(pass, format!("20% censored: neighbor {nb:.2} (>= 0.45), {}", rest.join(", ")))
}

fn trend(summary: &[SummaryRow]) -> Outcome {
    let probs: Vec<f64> = FRACTIONS
        .iter()
        .map(|&f| probability(summary, Method::Neighbor, f))
        .collect();
    let rises: Vec<f64> = probs
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .collect();
    let monotone = rises.is_empty() || (rises.len() == 1 && rises[0] <= 0.05);

    // fully observed Lasso on the same seeds and lambda policy
    let base = exp1_base();
    let options = FitOptions::default();
    let mut hits = 0;
    for t in 0..TRIALS {
        let inst = exp1_instance(&base, &FRACTIONS, 0, t).expect("instance");
        let x = &inst.sample.x_true;
        let ctx = LambdaContext {
            design: x,
            labels: &inst.sample.y,
            population: None,
            mask: None,
            w_star: None,
        };
        let lambda = choose_lambda(options.lambda_policy, &ctx).expect("lambda");
        let sol = solve_lasso(x, &inst.sample.y, &options.lasso_config(lambda)).expect("solve");
        hits += usize::from(sol.support == inst.truth.support);
    }
    let full = hits as f64 / TRIALS as f64;
    let pass = monotone && full == probs[0];
    let shown: Vec<String> = probs.iter().map(|p| format!("{p:.2}")).collect();
    outcome(
        pass,
        format!(
            "neighbor over {:?}: [{}]; fully observed Lasso {full:.2}",
            FRACTIONS,
            shown.join(", ")
        ),
    )
}

fn chain_ordering() -> Outcome {
    let start = Instant::now();
    let base = GenerationConfig {
        n: 200,
        ..GenerationConfig::experiment_default()
    };
    let widths: Vec<usize> = (2..=20).collect();
    let records = run_experiment3(&widths, 10, &base, &FitOptions::default());
    let summary = summarize(&records);
    let linf = |m: Method, w: usize| {
        summary
            .iter()
            .find(|r| r.method == m && r.chain_width == Some(w))
            .map_or(f64::NAN, |r| r.mean_linf)
    };
    let wins = widths
        .iter()
        .filter(|&&w| linf(Method::Neighbor, w) < linf(Method::LowRank, w))
        .count();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        2 * wins > widths.len() && secs <= 600.0,
        format!(
            "neighbor below low-rank mean l_inf on {wins}/{} widths ({secs:.1}s)",
            widths.len()
        ),
    )
}

fn lasso_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst_dist: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for _ in 0..200 {
        let p = rng.random_range(1..=8);
        let n = rng.random_range(p + 2..=20);
        let x = gaussian_matrix(&mut rng, n, p);
        let mut w = DVector::zeros(p);
        for i in 0..p {
            if rng.random_bool(0.5) {
                w[i] = rng.random_range(-2.0..2.0);
            }
        }
        let y = &x * &w + gaussian_vector(&mut rng, n) * 0.3;
        let lambda = lambda_max(&x, &y) * rng.random_range(0.05..0.8);
        let sol = solve_lasso(&x, &y, &LassoConfig::new(lambda)).expect("solve");
        let exact = brute_force_lasso(&x, &y, lambda);
        worst_dist = worst_dist.max((&sol.w - &exact).amax());
        worst_kkt = worst_kkt.max(kkt_residual(&x, &y, &sol.w, lambda).expect("kkt"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_dist <= 1e-5 && worst_kkt <= 1e-6 && secs <= 60.0,
        format!("200 instances: max l_inf gap {worst_dist:.2e}, max KKT residual {worst_kkt:.2e} ({secs:.1}s)"),
    )
}

/// Witness certification over every (fraction, trial, method) cell of the
/// experiment 1 corpus, plus the imputation invariants on the same designs.
fn witness_soundness_and_imputation() -> (Outcome, Outcome) {
    let base = exp1_base();
    let options = FitOptions::default();
    let mut certified = 0;
    let mut counterexamples = 0;
    let mut checked = 0;
    let mut invariant_failures = 0;
    let mut designs = 0;
    let lowrank = LowRankConfig {
        rank_budget: 3,
        shrinkage: 1.0,
        max_iters: 30,
        tol: 1e-6,
    };
    for v in 0..FRACTIONS.len() {
        for t in 0..TRIALS {
            let inst = exp1_instance(&base, &FRACTIONS, v, t).expect("instance");
            for &m in &EXP1_METHODS {
                let fit = fit_method(&inst, m, &options).expect("fit");
                invariant_failures += observed_mismatches(&inst.censored, &inst.sample.x_true, &fit.imputed.xhat);
                designs += 1;
                let truth = WitnessTruth {
                    w_star: inst.truth.w_star.clone(),
                    epsilon: inst.sample.epsilon.clone(),
                    delta: &fit.imputed.xhat - &inst.sample.x_true,
                };
                let Ok(report) = construct_witness(
                    &fit.imputed.xhat,
                    &inst.sample.y,
                    &inst.truth.support,
                    &options.lasso_config(fit.lambda),
                    Some(&truth),
                ) else {
                    continue;
                };
                checked += 1;
                if report.certifies(options.support_threshold) {
                    certified += 1;
                    if fit.solution.support != inst.truth.support {
                        counterexamples += 1;
                    }
                }
            }
            if t < 5 && v > 0 {
                for method in [Method::LowRank] {
                    for cfg in [None, Some(&lowrank)] {
                        let imp = impute_with(&inst.censored, method, cfg).expect("impute");
                        invariant_failures += observed_mismatches(&inst.censored, &inst.sample.x_true, &imp.xhat);
                        designs += 1;
                    }
                }
            }
        }
    }
    // chain masks at the experiment 3 size
    let chain_base = GenerationConfig {
        n: 200,
        ..GenerationConfig::experiment_default()
    };
    for w in [2, 5, 10, 20] {
        for t in 0..3 {
            let inst = generate_instance(&chain_base, &MaskSpec::Chain(w), t, 0).expect("instance");
            for m in [Method::Neighbor, Method::Zero, Method::Mean, Method::Median, Method::LowRank] {
                for cfg in [None, Some(&lowrank)] {
                    let imp = impute_with(&inst.censored, m, cfg).expect("impute");
                    invariant_failures += observed_mismatches(&inst.censored, &inst.sample.x_true, &imp.xhat);
                    designs += 1;
                }
            }
        }
    }
    (
        outcome(
            counterexamples == 0 && certified > 0,
            format!("{certified} certified of {checked} witnesses, {counterexamples} counterexamples"),
        ),
        outcome(
            invariant_failures == 0,
            format!("{designs} imputed designs, {invariant_failures} observed cells changed"),
        ),
    )
}

/// Observed cells whose imputed value differs bitwise from the truth or
/// whose error is not exactly zero.
fn observed_mismatches(data: &CensoredMatrix, truth: &nalgebra::DMatrix<f64>, xhat: &nalgebra::DMatrix<f64>) -> usize {
    let (n, p) = data.shape();
    let mut bad = 0;
    for k in 0..n {
        for i in 0..p {
            if data.is_observed(k, i) {
                let same = xhat[(k, i)].to_bits() == truth[(k, i)].to_bits();
                let zero = xhat[(k, i)] - truth[(k, i)] == 0.0;
                bad += usize::from(!(same && zero));
            }
        }
    }
    bad
}

fn decomposition_identity() -> Outcome {
    let config = GenerationConfig {
        n: 200,
        p: 30,
        s: 5,
        sigma: censored_recovery::synth::SigmaSpec::Equicorrelation(0.5),
        seed: 6,
        ..GenerationConfig::experiment_default()
    };
    let options = FitOptions::default();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for t in 0..50 {
        let inst = generate_instance(&config, &MaskSpec::Fraction(0.2), t, 1 << 40 | t).expect("instance");
        let fit = fit_method(&inst, Method::Neighbor, &options).expect("fit");
        let truth = WitnessTruth {
            w_star: inst.truth.w_star.clone(),
            epsilon: inst.sample.epsilon.clone(),
            delta: &fit.imputed.xhat - &inst.sample.x_true,
        };
        let report = construct_witness(
            &fit.imputed.xhat,
            &inst.sample.y,
            &inst.truth.support,
            &options.lasso_config(fit.lambda),
            Some(&truth),
        )
        .expect("witness");
        worst = worst.max(report.decomposition_gap().expect("gap"));
        count += 1;
    }
    outcome(
        count == 50 && worst <= 1e-8,
        format!("50 instances: max ||z_a + z_b - z_sc||_inf = {worst:.2e}"),
    )
}

fn concentration() -> Outcome {
    let base = exp1_base();
    let p = base.p;
    let mut lemma1 = (0, 0);
    let mut lemma3 = (0, 0);
    let mut min_eigen = 0;
    let mut incoherence = 0;
    let mut incoherence_censored = 0;
    let mut beta = 0.0;
    for t in 0..TRIALS as u64 {
        let inst = generate_instance(&base, &MaskSpec::Fraction(0.2), t, 1 << 50 | t).expect("instance");
        let sigma = &inst.population.sigma;
        let support = &inst.truth.support;
        beta = inst.population.beta;

        let full = pairwise_covariance(&CensoredMatrix::fully_observed(inst.sample.x_true.clone()).expect("full"));
        for i in 0..p {
            let ratio = full.h[(i, i)] / sigma[(i, i)];
            lemma1.0 += usize::from((0.5..=1.5).contains(&ratio));
            lemma1.1 += 1;
        }

        let h = pairwise_covariance(&inst.censored);
        let model = build_neighbor_model(&h).expect("model");
        let pop = censored_recovery::covariance::population_neighbor_model(sigma).expect("population");
        for i in 0..p {
            let tau = pop.ratio[i];
            lemma3.0 += usize::from((tau - model.ratio[i]).abs() <= 0.5 * tau.abs());
            lemma3.1 += 1;
        }
        min_eigen += usize::from(sample_min_eigen(&h, support) >= beta / 2.0);
        // the incoherence bound is a statement about the i.i.d. sample
        // covariance; the censored pairwise estimate is reported alongside
        let target = population_incoherence(sigma, support).expect("population incoherence");
        let close = |h| sample_incoherence(h, support).map_or(false, |v| (v - target).abs() <= 0.1);
        incoherence += usize::from(close(&full));
        incoherence_censored += usize::from(close(&h));
    }
    let f1 = lemma1.0 as f64 / lemma1.1 as f64;
    let f3 = lemma3.0 as f64 / lemma3.1 as f64;
    let f4 = min_eigen as f64 / TRIALS as f64;
    let f2 = incoherence as f64 / TRIALS as f64;
    let f2c = incoherence_censored as f64 / TRIALS as f64;
    outcome(
        f1 >= 0.99 && f3 >= 0.95 && f4 >= 0.99 && f2 >= 0.95,
        format!(
            "variance ratio {f1:.3} (>= 0.99), error ratio {f3:.3} (>= 0.95), \
             min eigenvalue >= beta/2 ({beta:.2}/2) {f4:.2} (>= 0.99), incoherence within 0.1 {f2:.2} (>= 0.95; \
             {f2c:.2} from the censored pairwise estimate)"
        ),
    )
}

fn strip_comments(path: &Path) -> String {
    std::fs::read_to_string(path)
        .expect("read records")
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_censored-recovery");
    let dir = tempfile::tempdir().expect("tempdir");
    let grid = dir.path().join("grid.csv");
    std::fs::write(&grid, "n,p,s\n100,20,3\n200,20,3\n").expect("grid");
    let grid = grid.to_string_lossy().into_owned();
    let runs: [(&str, Vec<&str>); 3] = [
        ("exp1", vec!["--trials", "3", "--fractions", "0,0.2", "--seed", "11"]),
        ("exp2", vec!["--trials", "3", "--grid", &grid, "--seed", "11"]),
        ("exp3", vec!["--trials", "2", "--widths", "2..5", "--seed", "11"]),
    ];
    let mut identical = 0;
    for (cmd, args) in &runs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("{cmd}_{rep}"));
            let status = Command::new(bin)
                .arg(cmd)
                .args(args)
                .arg("--out")
                .arg(&out)
                .status()
                .expect("run binary");
            assert!(status.success(), "{cmd} failed");
            outputs.push(strip_comments(&out.join("records.csv")));
        }
        identical += usize::from(outputs[0] == outputs[1] && !outputs[0].is_empty());
    }
    outcome(
        identical == runs.len(),
        format!("{identical}/{} commands produced identical records.csv", runs.len()),
    )
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn weighted_constant_shape() -> Outcome {
    let grid = default_exp2_grid();
    let records = run_experiment2(&grid, TRIALS, &exp1_base(), &FitOptions::default());
    let summary = summarize(&records);
    let c: Vec<f64> = summary.iter().map(|r| r.c_constant.unwrap_or(f64::NAN)).collect();
    let prob: Vec<f64> = summary.iter().map(|r| r.recovery_probability).collect();
    let rho = spearman(&c, &prob);
    outcome(
        rho >= 0.7,
        format!("Spearman(C, recovery) = {rho:.3} over {} grid points", grid.len()),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();

    let t = Instant::now();
    let records: Vec<ExperimentRecord> =
        run_experiment1(TRIALS, &FRACTIONS, &exp1_base(), &EXP1_METHODS, &FitOptions::default());
    let exp1_secs = t.elapsed().as_secs_f64();
    let summary = summarize(&records);
    let mut first = headline(&summary);
    first.pass &= exp1_secs <= 300.0;
    first.detail.push_str(&format!(" ({exp1_secs:.1}s for the full sweep)"));
    results.push((1, "experiment 1 headline", first));
    results.push((2, "experiment 1 trend", trend(&summary)));
    results.push((3, "experiment 3 ordering", chain_ordering()));
    results.push((4, "lasso oracle equivalence", lasso_oracle()));
    let (witness, imputation) = witness_soundness_and_imputation();
    results.push((5, "witness soundness", witness));
    results.push((6, "decomposition identity", decomposition_identity()));
    results.push((7, "concentration diagnostics", concentration()));
    results.push((8, "imputation invariants", imputation));
    results.push((9, "determinism", determinism()));
    results.push((10, "experiment 2 shape", weighted_constant_shape()));

    for (id, name, o) in &results {
        println!(
            "[{}] {id:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
