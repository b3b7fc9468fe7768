//! Cyclic coordinate descent for
//! `minimize (1/2n) ||X w - y||^2 + lambda ||w||_1`
//! with a KKT residual certificate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoConfig {
    pub lambda: f64,
    /// Convergence threshold on the largest coordinate change in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    pub support_threshold: f64,
}

impl LassoConfig {
    pub const DEFAULT_TOL: f64 = 1e-8;
    pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
    pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-6;

    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            tol: Self::DEFAULT_TOL,
            max_sweeps: Self::DEFAULT_MAX_SWEEPS,
            support_threshold: Self::DEFAULT_SUPPORT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Validation(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Validation("tol must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Validation("max_sweeps must be at least 1".into()));
        }
        if !(self.support_threshold >= 0.0) {
            return Err(Error::Validation(
                "support_threshold must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub w: DVector<f64>,
    pub support: Vec<usize>,
    pub sweeps_used: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    /// Columns with zero norm, held at 0.
    pub frozen: Vec<usize>,
    /// Objective value after each sweep.
    pub objective_trace: Vec<f64>,
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn objective(design: &DMatrix<f64>, labels: &DVector<f64>, w: &DVector<f64>, lambda: f64) -> f64 {
    let n = design.nrows() as f64;
    let r = design * w - labels;
    r.norm_squared() / (2.0 * n) + lambda * w.lp_norm(1)
}

fn check_inputs(design: &DMatrix<f64>, labels: &DVector<f64>) -> Result<()> {
    if design.nrows() != labels.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, labels have {}",
            design.nrows(),
            labels.len()
        )));
    }
    if design.nrows() == 0 || design.ncols() == 0 {
        return Err(Error::Validation("design must be non-empty".into()));
    }
    if design.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "design and labels must be finite".into(),
        ));
    }
    Ok(())
}

/// Solves the Lasso by cyclic coordinate descent over `0..p`, starting from
/// zero, with exact soft-threshold coordinate updates.
pub fn solve_lasso(
    design: &DMatrix<f64>,
    labels: &DVector<f64>,
    config: &LassoConfig,
) -> Result<LassoSolution> {
    check_inputs(design, labels)?;
    config.validate()?;
    let (n, p) = design.shape();
    let nf = n as f64;
    let lambda = config.lambda;

    let col_sq: Vec<f64> = (0..p).map(|j| design.column(j).norm_squared() / nf).collect();
    let frozen: Vec<usize> = (0..p).filter(|&j| col_sq[j] == 0.0).collect();

    let mut w = DVector::zeros(p);
    let mut residual = labels.clone();
    let mut l1 = 0.0;
    let mut objective_trace = Vec::new();
    let mut converged = false;
    let mut sweeps_used = 0;

    while sweeps_used < config.max_sweeps {
        sweeps_used += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = design.column(j);
            let old: f64 = w[j];
            let rho = col.dot(&residual) / nf + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - old;
            if delta != 0.0 {
                residual.axpy(-delta, &col, 1.0);
                w[j] = new;
                l1 += new.abs() - old.abs();
                max_change = max_change.max(delta.abs());
            }
        }
        objective_trace.push(residual.norm_squared() / (2.0 * nf) + lambda * l1);
        if max_change < config.tol {
            converged = true;
            break;
        }
    }

    let kkt = kkt_residual(design, labels, &w, lambda)?;
    Ok(LassoSolution {
        support: extract_support(&w, config.support_threshold),
        w,
        sweeps_used,
        converged,
        kkt_residual: kkt,
        frozen,
        objective_trace,
    })
}

/// Largest violation of the Lasso optimality conditions at `w`, with
/// `g = (1/n) X^T (X w - y)`: `|g_i + lambda sign(w_i)|` on nonzeros and
/// `max(0, |g_i| - lambda)` on zeros.
pub fn kkt_residual(
    design: &DMatrix<f64>,
    labels: &DVector<f64>,
    w: &DVector<f64>,
    lambda: f64,
) -> Result<f64> {
    check_inputs(design, labels)?;
    if w.len() != design.ncols() {
        return Err(Error::Dimension(format!(
            "w has {} entries for {} columns",
            w.len(),
            design.ncols()
        )));
    }
    let n = design.nrows() as f64;
    let g = design.tr_mul(&(design * w - labels)) / n;
    Ok(g.iter()
        .zip(w.iter())
        .map(|(&gi, &wi)| {
            if wi != 0.0 {
                (gi + lambda * wi.signum()).abs()
            } else {
                (gi.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max))
}

/// Indices with `|w_i| > threshold`, ascending.
pub fn extract_support(w: &DVector<f64>, threshold: f64) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// `||(1/n) X^T y||_inf`, the smallest lambda with an all-zero solution.
pub fn lambda_max(design: &DMatrix<f64>, labels: &DVector<f64>) -> f64 {
    (design.tr_mul(labels) / design.nrows() as f64).amax()
}
