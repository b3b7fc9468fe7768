#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Exact Lasso minimizer by enumerating every sign pattern `z` in
/// `{-1, 0, 1}^p`. For each pattern the stationarity equations on the active
/// set are solved directly; candidates whose signs disagree with `z` are
/// discarded and the lowest objective wins. Needs `X_A^T X_A` invertible for
/// every active set, i.e. full column rank.
pub fn brute_force_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let xty = x.transpose() * y;
    let gram = x.transpose() * x;
    let objective = |w: &DVector<f64>| {
        let r = x * w - y;
        r.dot(&r) / (2.0 * nf) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut best = DVector::zeros(p);
    let mut best_val = objective(&best);
    let patterns = 3usize.pow(p as u32);
    for code in 0..patterns {
        let mut signs = vec![0i8; p];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i8 - 1;
            c /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&i| signs[i] != 0).collect();
        if active.is_empty() {
            continue;
        }
        let k = active.len();
        let g = DMatrix::from_fn(k, k, |a, b| gram[(active[a], active[b])]);
        let rhs = DVector::from_fn(k, |a, _| xty[active[a]] - nf * lambda * signs[active[a]] as f64);
        let Some(sol) = g.lu().solve(&rhs) else { continue };
        if active
            .iter()
            .zip(sol.iter())
            .any(|(&i, &v)| v * signs[i] as f64 <= 0.0)
        {
            continue;
        }
        let mut w = DVector::zeros(p);
        for (a, &i) in active.iter().enumerate() {
            w[i] = sol[a];
        }
        let val = objective(&w);
        if val < best_val {
            best_val = val;
            best = w;
        }
    }
    best
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn equicorrelation(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}
