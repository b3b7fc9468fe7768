//! Primal-dual witness construction for the Lasso on an imputed design, and
//! the population/sample condition checks that accompany it: positive
//! definiteness and mutual incoherence on the support, neighbor-score
//! separation, the variance-proxy lower bound on lambda, and sample
//! incoherence / minimum eigenvalue diagnostics.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::covariance::{population_neighbor_model, validate_covariance_shape, SampleCovariance};
use crate::data::Mask;
use crate::error::{Error, Result};
use crate::lasso::{solve_lasso, LassoConfig};
use crate::synth::min_eigenvalue;

/// Relative pivot threshold under which a Gram matrix is treated as singular.
const SINGULAR_RCOND: f64 = 1e-12;

/// `max_i sum_j |a_ij|`; 0 for a matrix without rows.
pub fn inf_operator_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn complement(support: &[usize], p: usize) -> Vec<usize> {
    (0..p).filter(|i| !support.contains(i)).collect()
}

fn validate_support(support: &[usize], p: usize) -> Result<()> {
    if support.is_empty() {
        return Err(Error::Validation("support must be non-empty".into()));
    }
    let mut seen = vec![false; p];
    for &i in support {
        if i >= p {
            return Err(Error::Validation(format!(
                "support index {i} out of range for p = {p}"
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Validation(format!("support index {i} repeated")));
        }
    }
    Ok(())
}

/// Cholesky factor that refuses numerically singular matrices.
fn spd_factor(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = m.cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    (lo > 0.0 && (lo / hi).powi(2) > SINGULAR_RCOND).then_some(chol)
}

/// `|| m[Sc,S] m[S,S]^{-1} ||_inf`, or `None` when `m[S,S]` is singular.
fn incoherence_of(m: &DMatrix<f64>, support: &[usize]) -> Option<f64> {
    let p = m.nrows();
    let sc = complement(support, p);
    let ss = m.select_rows(support).select_columns(support);
    let chol = spd_factor(ss)?;
    let s_sc = m.select_rows(support).select_columns(&sc);
    // (m[S,S]^{-1} m[S,Sc])^T = m[Sc,S] m[S,S]^{-1}
    let coef = chol.solve(&s_sc).transpose();
    Some(inf_operator_norm(&coef))
}

/// Population covariance with a support and the sub-Gaussian scales.
/// `beta` and `gamma` are always derived from `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    pub sigma: DMatrix<f64>,
    pub support: Vec<usize>,
    pub sigma_x2: f64,
    pub sigma_eps2: f64,
    /// Smallest eigenvalue of `sigma[S,S]`.
    pub beta: f64,
    /// `1 - ||sigma[Sc,S] sigma[S,S]^{-1}||_inf`; `-inf` if `sigma[S,S]` is
    /// singular.
    pub gamma: f64,
    pub sigma_dmax: f64,
    pub sigma_dmin: f64,
}

impl PopulationModel {
    pub fn new(
        sigma: DMatrix<f64>,
        support: Vec<usize>,
        sigma_x2: f64,
        sigma_eps2: f64,
    ) -> Result<Self> {
        validate_covariance_shape(&sigma)?;
        let p = sigma.nrows();
        validate_support(&support, p)?;
        if !(sigma_x2 > 0.0) || !(sigma_eps2 >= 0.0) {
            return Err(Error::Validation(
                "sigma_x2 must be positive and sigma_eps2 non-negative".into(),
            ));
        }
        let beta = min_eigenvalue(&sigma.select_rows(&support).select_columns(&support));
        let gamma = incoherence_of(&sigma, &support).map_or(f64::NEG_INFINITY, |v| 1.0 - v);
        let diag = sigma.diagonal();
        Ok(Self {
            beta,
            gamma,
            sigma_dmax: diag.max(),
            sigma_dmin: diag.min(),
            sigma,
            support,
            sigma_x2,
            sigma_eps2,
        })
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn complement(&self) -> Vec<usize> {
        complement(&self.support, self.p())
    }

    /// `||sigma[Sc,S] sigma[S,S]^{-1}||_inf`, `None` if singular.
    pub fn incoherence(&self) -> Option<f64> {
        incoherence_of(&self.sigma, &self.support)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    pub beta: f64,
    pub gamma: f64,
    pub pass_pd: bool,
    pub pass_incoherence: bool,
}

pub fn check_assumptions(model: &PopulationModel) -> AssumptionReport {
    let scale = model.sigma_dmax.max(1.0);
    let pass_pd = model.beta > SINGULAR_RCOND * scale && model.gamma.is_finite();
    AssumptionReport {
        beta: model.beta,
        gamma: model.gamma,
        pass_pd,
        pass_incoherence: pass_pd && model.gamma > 0.0,
    }
}

/// Lasso on the support columns only.
pub fn restricted_lasso(
    xhat: &DMatrix<f64>,
    y: &DVector<f64>,
    support: &[usize],
    config: &LassoConfig,
) -> Result<DVector<f64>> {
    validate_support(support, xhat.ncols())?;
    let xs = xhat.select_columns(support);
    Ok(solve_lasso(&xs, y, config)?.w)
}

/// Quantities only a synthetic run knows.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessTruth {
    pub w_star: DVector<f64>,
    pub epsilon: DVector<f64>,
    /// Imputation error `xhat - x_true`.
    pub delta: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessReport {
    pub support: Vec<usize>,
    pub w_restricted: DVector<f64>,
    pub z_s: DVector<f64>,
    pub z_sc: DVector<f64>,
    pub z_a: Option<DVector<f64>>,
    pub z_b: Option<DVector<f64>>,
    pub max_abs_zsc: f64,
    pub strictly_feasible: bool,
    pub sign_consistent: Option<bool>,
    pub min_abs_restricted: f64,
    /// `|z_s|` exceeded `1 + 1e-10` somewhere, a solver-tolerance artifact.
    pub zs_out_of_range: bool,
    /// `||z_sc(truth) - z_sc(stationarity)||_inf` when truth is supplied.
    pub stationarity_gap: Option<f64>,
}

impl WitnessReport {
    /// `||z_a + z_b - z_sc||_inf` when the decomposition is available.
    pub fn decomposition_gap(&self) -> Option<f64> {
        match (&self.z_a, &self.z_b) {
            (Some(a), Some(b)) => Some((a + b - &self.z_sc).amax()),
            _ => None,
        }
    }

    /// Conditions under which the witness certifies exact support recovery.
    pub fn certifies(&self, support_threshold: f64) -> bool {
        self.strictly_feasible
            && self.sign_consistent == Some(true)
            && self.min_abs_restricted > support_threshold
    }
}

/// Builds the primal-dual witness for `support` at `config.lambda`.
///
/// `z_s` and the truth-free `z_sc` come from the stationarity conditions at
/// the restricted solution. With `truth`, `z_sc` is instead evaluated as
/// `-(1/(lambda n)) X_Sc^T (X_S (w~ - w*) + Delta_S w*_S - eps)` and split
/// into the projection part `z_a` and the incoherence part `z_b`.
pub fn construct_witness(
    xhat: &DMatrix<f64>,
    y: &DVector<f64>,
    support: &[usize],
    config: &LassoConfig,
    truth: Option<&WitnessTruth>,
) -> Result<WitnessReport> {
    let (n, p) = xhat.shape();
    validate_support(support, p)?;
    if y.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} samples", y.len())));
    }
    if !(config.lambda > 0.0) {
        return Err(Error::Validation(
            "the dual witness needs lambda > 0".into(),
        ));
    }
    if let Some(t) = truth {
        if t.w_star.len() != p || t.epsilon.len() != n || t.delta.shape() != (n, p) {
            return Err(Error::Dimension("truth does not match the design".into()));
        }
    }
    let sc = complement(support, p);
    let xs = xhat.select_columns(support);
    let xsc = xhat.select_columns(&sc);
    let gram = spd_factor(xs.tr_mul(&xs)).ok_or_else(|| Error::SingularGram {
        columns: support.to_vec(),
    })?;

    let w_restricted = restricted_lasso(xhat, y, support, config)?;
    let scale = -1.0 / (config.lambda * n as f64);
    let residual = &xs * &w_restricted - y;
    let z_s = xs.tr_mul(&residual) * scale;
    let z_sc_free = xsc.tr_mul(&residual) * scale;
    let zs_out_of_range = z_s.iter().any(|v| v.abs() > 1.0 + 1e-10);
    if zs_out_of_range {
        log::warn!("restricted dual variable exceeds 1 in magnitude; tighten the solver tolerance");
    }

    let (z_sc, z_a, z_b, sign_consistent, stationarity_gap) = match truth {
        None => (z_sc_free, None, None, None, None),
        Some(t) => {
            let w_star_s = t.w_star.select_rows(support);
            let delta_s = t.delta.select_columns(support);
            let delta_w = &delta_s * &w_star_s;
            let truth_residual = &xs * (&w_restricted - &w_star_s) + &delta_w - &t.epsilon;
            let z_sc = xsc.tr_mul(&truth_residual) * scale;

            // (I - X_S (X_S^T X_S)^{-1} X_S^T) (eps - Delta_S w*_S)
            let v = &t.epsilon - &delta_w;
            let projected = &v - &xs * gram.solve(&xs.tr_mul(&v));
            let z_a = xsc.tr_mul(&projected) * (-scale);
            let z_b = xsc.tr_mul(&(&xs * gram.solve(&z_s)));

            let signs = w_restricted
                .iter()
                .zip(w_star_s.iter())
                .all(|(a, b)| sign(*a) == sign(*b));
            let gap = (&z_sc - &z_sc_free).amax();
            (z_sc, Some(z_a), Some(z_b), Some(signs), Some(gap))
        }
    };

    let max_abs_zsc = if z_sc.is_empty() { 0.0 } else { z_sc.amax() };
    Ok(WitnessReport {
        support: support.to_vec(),
        min_abs_restricted: w_restricted.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min),
        w_restricted,
        z_s,
        strictly_feasible: max_abs_zsc < 1.0,
        max_abs_zsc,
        z_sc,
        z_a,
        z_b,
        sign_consistent,
        zs_out_of_range,
        stationarity_gap,
    })
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Per-feature margin `min_j (zeta_{i,top} - 3 zeta_{i,j}) - (|sigma_tt| + 3 |sigma_jj| + sigma_dmin)`
/// over competitors `j` outside `{i, top(i)}`; `+inf` when there are none.
pub fn theorem1_margins(model: &PopulationModel) -> Result<Vec<f64>> {
    let sigma = &model.sigma;
    let pop = population_neighbor_model(sigma)?;
    let p = sigma.nrows();
    Ok((0..p)
        .map(|i| {
            let t = pop.top[i];
            (0..p)
                .filter(|&j| j != i && j != t)
                .map(|j| {
                    let lhs = pop.scores[(i, t)] - 3.0 * pop.scores[(i, j)];
                    let rhs = sigma[(t, t)].abs() + 3.0 * sigma[(j, j)].abs() + model.sigma_dmin;
                    lhs - rhs
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Whether each feature satisfies the neighbor-score separation condition
/// under which its empirical top neighbor matches the population one.
pub fn theorem1_condition(model: &PopulationModel) -> Result<Vec<bool>> {
    Ok(theorem1_margins(model)?.into_iter().map(|m| m > 0.0).collect())
}

/// Error ratios and top neighbors, population or empirical.
#[derive(Debug, Clone, Copy)]
pub struct NeighborRatios<'a> {
    pub tau: &'a [f64],
    pub top: &'a [usize],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaBound {
    pub h_per_sample: DVector<f64>,
    /// Rows are samples, columns the off-support features in ascending order.
    pub g_per_entry: DMatrix<f64>,
    pub h_max: f64,
    pub g_max: f64,
    /// `20 h_max g_max / gamma`.
    pub lambda_min: f64,
}

/// Variance proxies and the lambda threshold.
///
/// `h_k^2 = sigma_eps^2 + sigma_x^2 sum_{i in S} (tau_h_i^2 sigma[t,t] + sigma[i,i]) Mc[k,i] w*_i^2`
/// uses `h_ratios`; `g_k(i)^2 = M[k,i] sigma_x^2 sigma[i,i] + (1 - M[k,i]) 9/4 sigma_x^2 sigma[t,t] tau_g_i^2`
/// uses `g_ratios`.
pub fn lambda_bound(
    model: &PopulationModel,
    mask: &Mask,
    w_star: &DVector<f64>,
    h_ratios: NeighborRatios<'_>,
    g_ratios: NeighborRatios<'_>,
) -> Result<LambdaBound> {
    let p = model.p();
    if !(model.gamma > 0.0) {
        return Err(Error::BoundUndefined { gamma: model.gamma });
    }
    if mask.ncols() != p || w_star.len() != p {
        return Err(Error::Dimension(format!(
            "mask {:?} / w* {} do not match p = {p}",
            mask.shape(),
            w_star.len()
        )));
    }
    for r in [&h_ratios, &g_ratios] {
        if r.tau.len() != p || r.top.len() != p || r.top.iter().any(|&t| t >= p) {
            return Err(Error::Dimension(
                "neighbor ratios do not match p".into(),
            ));
        }
    }
    let n = mask.nrows();
    let sigma = &model.sigma;
    let sx2 = model.sigma_x2;
    let sc = model.complement();

    let h_per_sample = DVector::from_fn(n, |k, _| {
        let censored: f64 = model
            .support
            .iter()
            .filter(|&&i| !mask[(k, i)])
            .map(|&i| {
                let t = h_ratios.top[i];
                let tau = h_ratios.tau[i];
                (tau * tau * sigma[(t, t)] + sigma[(i, i)]) * w_star[i] * w_star[i]
            })
            .sum();
        (model.sigma_eps2 + sx2 * censored).sqrt()
    });
    let g_per_entry = DMatrix::from_fn(n, sc.len(), |k, c| {
        let i = sc[c];
        let g2 = if mask[(k, i)] {
            sx2 * sigma[(i, i)]
        } else {
            let t = g_ratios.top[i];
            let tau = g_ratios.tau[i];
            2.25 * sx2 * sigma[(t, t)] * tau * tau
        };
        g2.sqrt()
    });
    let h_max = h_per_sample.iter().copied().fold(0.0, f64::max);
    let g_max = g_per_entry.iter().copied().fold(0.0, f64::max);
    Ok(LambdaBound {
        lambda_min: 20.0 * h_max * g_max / model.gamma,
        h_per_sample,
        g_per_entry,
        h_max,
        g_max,
    })
}

/// `||H[Sc,S] H[S,S]^{-1}||_inf` for a sample covariance.
pub fn sample_incoherence(h: &SampleCovariance, support: &[usize]) -> Result<f64> {
    validate_support(support, h.dim())?;
    incoherence_of(&h.h, support).ok_or_else(|| Error::SingularGram {
        columns: support.to_vec(),
    })
}

/// `||Sigma[Sc,S] Sigma[S,S]^{-1}||_inf`.
pub fn population_incoherence(sigma: &DMatrix<f64>, support: &[usize]) -> Result<f64> {
    validate_support(support, sigma.nrows())?;
    incoherence_of(sigma, support).ok_or_else(|| Error::SingularGram {
        columns: support.to_vec(),
    })
}

/// Smallest eigenvalue of `H[S,S]`.
pub fn sample_min_eigen(h: &SampleCovariance, support: &[usize]) -> f64 {
    min_eigenvalue(&h.h.select_rows(support).select_columns(support))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedCovariance {
    pub hhat: DMatrix<f64>,
}

impl ImputedCovariance {
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.hhat)
    }
}

/// `(1/n) X^T X` accumulated over samples in order, upper triangle mirrored.
pub fn imputed_covariance(xhat: &DMatrix<f64>) -> ImputedCovariance {
    let (n, p) = xhat.shape();
    let mut hhat = DMatrix::zeros(p, p);
    for i in 0..p {
        let ci = xhat.column(i);
        for j in i..p {
            let cj = xhat.column(j);
            let mut sum = 0.0;
            for k in 0..n {
                sum += ci[k] * cj[k];
            }
            let v = sum / n as f64;
            hhat[(i, j)] = v;
            hhat[(j, i)] = v;
        }
    }
    ImputedCovariance { hhat }
}
