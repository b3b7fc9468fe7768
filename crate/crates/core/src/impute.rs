//! Imputers that turn a [`CensoredMatrix`] into a dense design.
//!
//! Every imputer copies observed entries unchanged; only masked cells are
//! written.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::covariance::NeighborModel;
use crate::data::{CensoredMatrix, Mask, Record};
use crate::error::{Error, Result};

/// A masked cell that was not filled from its top neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FallbackEntry {
    pub sample: usize,
    pub feature: usize,
    /// Neighbor actually used; `None` means the cell was zero-filled.
    pub neighbor: Option<usize>,
    /// Position of that neighbor in the feature's ranking.
    pub rank: Option<usize>,
}

pub const FALLBACK_COLUMNS: [&str; 4] = ["sample", "feature", "neighbor", "rank"];

impl FallbackEntry {
    pub fn to_record(&self) -> Record {
        Record::new()
            .with("sample", self.sample)
            .with("feature", self.feature)
            .with("neighbor", self.neighbor)
            .with("rank", self.rank)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedDesign {
    pub xhat: DMatrix<f64>,
    pub source_mask: Mask,
    pub fallback_log: Vec<FallbackEntry>,
}

impl ImputedDesign {
    fn from_filler(
        data: &CensoredMatrix,
        mut fill: impl FnMut(usize, usize, &mut Vec<FallbackEntry>) -> f64,
    ) -> Self {
        let (n, p) = data.shape();
        let mut log = Vec::new();
        let mut xhat = DMatrix::zeros(n, p);
        for k in 0..n {
            for i in 0..p {
                xhat[(k, i)] = match data.get(k, i) {
                    Some(v) => v,
                    None => fill(k, i, &mut log),
                };
            }
        }
        Self {
            xhat,
            source_mask: data.mask().clone(),
            fallback_log: log,
        }
    }
}

/// Fills each masked `(k, i)` from the best-ranked neighbor `j` observed in
/// row `k`, as `x[k,j] * h[i,j] / h[j,j]`. With the top neighbor this is
/// `ratio[i] * x[k, top[i]]`. Rows with no usable neighbor get 0.
pub fn impute_top_neighbor(data: &CensoredMatrix, model: &NeighborModel) -> Result<ImputedDesign> {
    let p = data.n_features();
    if model.dim() != p {
        return Err(Error::Dimension(format!(
            "neighbor model has {} features, data has {p}",
            model.dim()
        )));
    }
    Ok(ImputedDesign::from_filler(data, |k, i, log| {
        for (rank, &j) in model.ranking[i].iter().enumerate() {
            if !model.is_usable(i, j) {
                break;
            }
            if let Some(v) = data.get(k, j) {
                if rank > 0 {
                    log.push(FallbackEntry {
                        sample: k,
                        feature: i,
                        neighbor: Some(j),
                        rank: Some(rank),
                    });
                }
                return v * model.ratio_for(i, j);
            }
        }
        log.push(FallbackEntry {
            sample: k,
            feature: i,
            neighbor: None,
            rank: None,
        });
        0.0
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineStrategy {
    Zero,
    Mean,
    Median,
}

/// Per-column fill value for a baseline strategy; `None` if the column has
/// no observed samples.
fn column_fill(values: &mut [f64], strategy: BaselineStrategy) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    match strategy {
        BaselineStrategy::Zero => Some(0.0),
        BaselineStrategy::Mean => Some(values.iter().sum::<f64>() / values.len() as f64),
        BaselineStrategy::Median => {
            values.sort_by(f64::total_cmp);
            let m = values.len() / 2;
            Some(if values.len() % 2 == 0 {
                (values[m - 1] + values[m]) / 2.0
            } else {
                values[m]
            })
        }
    }
}

pub fn impute_baseline(data: &CensoredMatrix, strategy: BaselineStrategy) -> ImputedDesign {
    let fills: Vec<Option<f64>> = (0..data.n_features())
        .map(|i| match strategy {
            BaselineStrategy::Zero => Some(0.0),
            _ => column_fill(&mut data.observed_column(i), strategy),
        })
        .collect();
    ImputedDesign::from_filler(data, |k, i, log| match fills[i] {
        Some(v) => v,
        None => {
            log.push(FallbackEntry {
                sample: k,
                feature: i,
                neighbor: None,
                rank: None,
            });
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowRankConfig {
    pub rank_budget: usize,
    pub shrinkage: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl LowRankConfig {
    /// Defaults: full rank budget, no shrinkage, `tol = 1e-6`, 200 iterations.
    pub fn for_shape(n: usize, p: usize) -> Self {
        Self {
            rank_budget: n.min(p),
            shrinkage: 0.0,
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankImputation {
    pub design: ImputedDesign,
    pub converged: bool,
    pub iterations: usize,
}

/// Iterative SVD completion: starting from zeros in the masked cells,
/// repeatedly reconstruct from the shrunk, rank-truncated SVD and overwrite
/// only the masked cells, until successive iterates differ by less than
/// `tol` in Frobenius norm.
pub fn impute_lowrank(data: &CensoredMatrix, config: &LowRankConfig) -> Result<LowRankImputation> {
    let (n, p) = data.shape();
    if config.rank_budget == 0 || config.rank_budget > n.min(p) {
        return Err(Error::Validation(format!(
            "rank budget {} outside 1..={}",
            config.rank_budget,
            n.min(p)
        )));
    }
    if config.shrinkage < 0.0 || !config.shrinkage.is_finite() {
        return Err(Error::Validation("shrinkage must be non-negative".into()));
    }
    if config.max_iters == 0 || config.tol <= 0.0 {
        return Err(Error::Validation(
            "max_iters and tol must be positive".into(),
        ));
    }
    let mask = data.mask();
    let mut current = data.filled(0.0);
    let mut design = ImputedDesign {
        xhat: current.clone(),
        source_mask: mask.clone(),
        fallback_log: Vec::new(),
    };
    if data.missing_count() == 0 {
        return Ok(LowRankImputation {
            design,
            converged: true,
            iterations: 0,
        });
    }

    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let reconstruction = truncated_reconstruction(&current, config);
        let mut change = 0.0;
        for i in 0..p {
            for k in 0..n {
                if !mask[(k, i)] {
                    let next = reconstruction[(k, i)];
                    let d = next - current[(k, i)];
                    change += d * d;
                    current[(k, i)] = next;
                }
            }
        }
        if change.sqrt() < config.tol {
            converged = true;
            break;
        }
    }
    design.xhat = current;
    Ok(LowRankImputation {
        design,
        converged,
        iterations,
    })
}

fn truncated_reconstruction(z: &DMatrix<f64>, config: &LowRankConfig) -> DMatrix<f64> {
    let svd = z.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for &idx in order.iter().take(config.rank_budget) {
        let sigma = (svd.singular_values[idx] - config.shrinkage).max(0.0);
        if sigma > 0.0 {
            out += u.column(idx) * v_t.row(idx) * sigma;
        }
    }
    out
}

/// `delta = xhat - truth` with its sup and Frobenius norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationError {
    pub delta: DMatrix<f64>,
    pub sup_norm: f64,
    pub frobenius: f64,
}

pub fn imputation_error(imp: &ImputedDesign, truth: &DMatrix<f64>) -> Result<ImputationError> {
    if imp.xhat.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "imputed design is {:?}, truth is {:?}",
            imp.xhat.shape(),
            truth.shape()
        )));
    }
    let delta = &imp.xhat - truth;
    let sup_norm = delta.amax();
    let frobenius = delta.norm();
    Ok(ImputationError {
        delta,
        sup_norm,
        frobenius,
    })
}

/// Imputation methods available to the CLI and experiment drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Neighbor,
    Zero,
    Mean,
    Median,
    LowRank,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Neighbor => "neighbor",
            Method::Zero => "zero",
            Method::Mean => "mean",
            Method::Median => "median",
            Method::LowRank => "lowrank",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "neighbor" => Ok(Method::Neighbor),
            "zero" => Ok(Method::Zero),
            "mean" => Ok(Method::Mean),
            "median" => Ok(Method::Median),
            "lowrank" => Ok(Method::LowRank),
            other => Err(Error::Validation(format!("unknown method {other:?}"))),
        }
    }
}
