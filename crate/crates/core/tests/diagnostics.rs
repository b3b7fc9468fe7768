//! Monte Carlo checks of the concentration and consistency statements the
//! recovery guarantee rests on.

mod common;

use nalgebra::DMatrix;

use censored_recovery::covariance::{
    build_neighbor_model, pairwise_covariance, population_neighbor_model,
};
use censored_recovery::data::CensoredMatrix;
use censored_recovery::experiments::{fit_method, generate_instance, FitOptions, LambdaPolicy};
use censored_recovery::impute::{imputation_error, impute_baseline, impute_top_neighbor, BaselineStrategy, Method};
use censored_recovery::synth::{GenerationConfig, MaskSpec, SigmaSpec};
use censored_recovery::witness::{construct_witness, theorem1_condition, PopulationModel, WitnessTruth};

use common::gaussian_matrix;

const TRIALS: u64 = 100;

/// Feature 0 has a dominant variance and a strongly tied partner, so its
/// top neighbor is well separated.
fn separated_sigma() -> DMatrix<f64> {
    let p = 6;
    DMatrix::from_fn(p, p, |i, j| match (i.min(j), i.max(j)) {
        (0, 0) => 100.0,
        (0, 1) => 9.5,
        (0, _) => 0.5,
        (a, b) if a == b => 1.0,
        _ => 0.1,
    })
}

#[test]
fn top_neighbor_agreement_grows_with_n() {
    let sigma = separated_sigma();
    let model = PopulationModel::new(sigma.clone(), vec![0, 1], 1.0, 0.01).unwrap();
    let condition = theorem1_condition(&model).unwrap();
    assert!(condition[0]);
    let population = population_neighbor_model(&sigma).unwrap();

    let mut rates = Vec::new();
    for n in [100, 1000] {
        let config = GenerationConfig {
            n,
            p: 6,
            s: 2,
            sigma: SigmaSpec::Custom(sigma.clone()),
            seed: 3,
            ..GenerationConfig::experiment_default()
        };
        let mut agree = 0;
        for t in 0..TRIALS {
            let inst = generate_instance(&config, &MaskSpec::Fraction(0.2), t, 1 << 60 | t).unwrap();
            let sample = build_neighbor_model(&pairwise_covariance(&inst.censored)).unwrap();
            agree += usize::from(sample.top[0] == population.top[0]);
        }
        rates.push(agree as f64 / TRIALS as f64);
    }
    eprintln!("agreement at n=100, 1000: {rates:?}");
    assert!(rates[1] >= rates[0], "{rates:?}");
    assert!(rates[1] >= 0.95, "{rates:?}");
}

#[test]
fn neighbor_imputation_beats_zero_fill() {
    let config = GenerationConfig {
        seed: 17,
        ..GenerationConfig::experiment_default()
    };
    let mut wins = 0;
    for t in 0..TRIALS {
        let inst = generate_instance(&config, &MaskSpec::Fraction(0.2), t, 1 << 61 | t).unwrap();
        let model = build_neighbor_model(&pairwise_covariance(&inst.censored)).unwrap();
        let nb = imputation_error(&impute_top_neighbor(&inst.censored, &model).unwrap(), &inst.sample.x_true).unwrap();
        let zero = imputation_error(&impute_baseline(&inst.censored, BaselineStrategy::Zero), &inst.sample.x_true).unwrap();
        wins += usize::from(nb.frobenius < zero.frobenius);
    }
    eprintln!("neighbor beat zero fill in {wins}/100");
    assert!(wins >= 90, "neighbor won {wins}/100");
}

#[test]
fn identity_covariance_concentrates() {
    let mut rng = censored_recovery::synth::trial_rng(5, 0);
    let x = gaussian_matrix(&mut rng, 10_000, 5);
    let cov = pairwise_covariance(&CensoredMatrix::fully_observed(x).unwrap());
    let dev = (&cov.h - DMatrix::identity(5, 5)).amax();
    assert!(dev <= 0.1, "max deviation {dev}");
}

#[test]
fn complement_projection_is_idempotent() {
    let mut rng = censored_recovery::synth::trial_rng(8, 0);
    for _ in 0..20 {
        let xs = gaussian_matrix(&mut rng, 40, 4);
        let gram = xs.tr_mul(&xs).cholesky().unwrap();
        let proj = &xs * gram.solve(&xs.transpose());
        let comp = DMatrix::identity(40, 40) - proj;
        assert!((&comp * &comp - &comp).amax() <= 1e-10);
    }
}

/// Runs the witness with truth on experiment-sized censored instances and
/// returns `(||z_b||_inf, ||z_a||_inf, gamma)` per trial.
fn witness_norms(policy: LambdaPolicy) -> Vec<(f64, f64, f64)> {
    let config = GenerationConfig {
        seed: 23,
        ..GenerationConfig::experiment_default()
    };
    let options = FitOptions {
        lambda_policy: policy,
        ..FitOptions::default()
    };
    (0..TRIALS)
        .filter_map(|t| {
            let inst = generate_instance(&config, &MaskSpec::Fraction(0.2), t, 1 << 62 | t).unwrap();
            let fit = fit_method(&inst, Method::Neighbor, &options).unwrap();
            let truth = WitnessTruth {
                w_star: inst.truth.w_star.clone(),
                epsilon: inst.sample.epsilon.clone(),
                delta: &fit.imputed.xhat - &inst.sample.x_true,
            };
            let r = construct_witness(
                &fit.imputed.xhat,
                &inst.sample.y,
                &inst.truth.support,
                &options.lasso_config(fit.lambda),
                Some(&truth),
            )
            .ok()?;
            Some((r.z_b?.amax(), r.z_a?.amax(), inst.population.gamma))
        })
        .collect::<Vec<_>>()
}

#[test]
fn incoherence_part_stays_below_one() {
    let norms = witness_norms(LambdaPolicy::default());
    assert!(norms.len() >= 95, "only {} witnesses built", norms.len());
    let gamma = norms[0].2;
    assert!(gamma < 6.0 / 7.0);
    let hits = norms.iter().filter(|(zb, _, g)| *zb <= 1.0 - g / 4.0).count();
    let rate = hits as f64 / norms.len() as f64;
    eprintln!("z_b bound held in {rate} of {}", norms.len());
    assert!(rate > 0.9, "||z_b|| <= 1 - gamma/4 in {rate}");
}

#[test]
fn noise_part_is_small_above_the_lambda_bound() {
    let norms = witness_norms(LambdaPolicy::Theory);
    assert!(norms.len() >= 95, "only {} witnesses built", norms.len());
    let hits = norms.iter().filter(|(_, za, g)| *za < g / 4.0).count();
    let rate = hits as f64 / norms.len() as f64;
    eprintln!("z_a bound held in {rate} of {}", norms.len());
    assert!(rate > 0.9, "||z_a|| < gamma/4 in {rate}");
}
