//! Pairwise-complete sample covariance and the neighbor model used for
//! imputation: scores `H_ij^2 / H_jj`, a per-feature ranking of neighbors,
//! the top neighbor and its error ratio `H_{i,top} / H_{top,top}`.

use nalgebra::DMatrix;

use crate::data::{CensoredMatrix, Record};
use crate::error::{Error, Result};

/// Zero-mean second-moment matrix averaged over co-observed samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    pub h: DMatrix<f64>,
    /// Number of samples observing both features of each pair.
    pub co_counts: DMatrix<usize>,
}

impl SampleCovariance {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// Wraps a known matrix, treating every pair as co-observed `n` times.
    pub fn from_matrix(h: DMatrix<f64>, n: usize) -> Self {
        let p = h.nrows();
        Self {
            h,
            co_counts: DMatrix::from_element(p, p, n),
        }
    }
}

/// `h[i,j] = mean over {k : both i and j observed in k} of x[k,i] * x[k,j]`.
///
/// No centering is applied. Pairs that are never co-observed get `h = 0`
/// and `co_counts = 0`.
pub fn pairwise_covariance(data: &CensoredMatrix) -> SampleCovariance {
    let (n, p) = data.shape();
    let x = data.filled(0.0);
    let mask = data.mask();
    let mut h = DMatrix::zeros(p, p);
    let mut co_counts = DMatrix::from_element(p, p, 0usize);
    for i in 0..p {
        for j in i..p {
            let mut sum = 0.0;
            let mut count = 0usize;
            for k in 0..n {
                if mask[(k, i)] && mask[(k, j)] {
                    sum += x[(k, i)] * x[(k, j)];
                    count += 1;
                }
            }
            let value = if count > 0 { sum / count as f64 } else { 0.0 };
            h[(i, j)] = value;
            h[(j, i)] = value;
            co_counts[(i, j)] = count;
            co_counts[(j, i)] = count;
        }
    }
    SampleCovariance { h, co_counts }
}

/// Scores `h[i,j]^2 / h[j,j]`; `-inf` marks pairs that can never be chosen
/// (the diagonal, zero-variance neighbors and never co-observed pairs).
pub fn neighbor_scores(cov: &SampleCovariance) -> DMatrix<f64> {
    scores_from(&cov.h, |i, j| cov.co_counts[(i, j)] > 0)
}

fn scores_from(h: &DMatrix<f64>, co_observed: impl Fn(usize, usize) -> bool) -> DMatrix<f64> {
    let p = h.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        let denom = h[(j, j)];
        if i == j || denom <= 0.0 || !co_observed(i, j) {
            f64::NEG_INFINITY
        } else {
            h[(i, j)] * h[(i, j)] / denom
        }
    })
}

/// Orders `j != i` by descending score, ties broken by the smaller index.
fn rank_neighbors(scores: &DMatrix<f64>, i: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.ncols()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| {
        scores[(i, b)]
            .total_cmp(&scores[(i, a)])
            .then(a.cmp(&b))
    });
    order
}

fn ratio_of(h: &DMatrix<f64>, i: usize, j: usize) -> Option<f64> {
    let denom = h[(j, j)];
    (denom != 0.0).then(|| h[(i, j)] / denom)
}

/// Empirical neighbor model built from a [`SampleCovariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborModel {
    pub covariance: SampleCovariance,
    pub scores: DMatrix<f64>,
    pub ranking: Vec<Vec<usize>>,
    pub top: Vec<usize>,
    pub ratio: Vec<f64>,
    /// Features whose top neighbor has zero variance; their ratio is 0.
    pub degenerate_ratio: Vec<bool>,
}

impl NeighborModel {
    pub fn dim(&self) -> usize {
        self.top.len()
    }

    /// Ratio `h[i,j] / h[j,j]` for an arbitrary neighbor, 0 when `h[j,j] = 0`.
    pub fn ratio_for(&self, i: usize, j: usize) -> f64 {
        ratio_of(&self.covariance.h, i, j).unwrap_or(0.0)
    }

    /// Whether `j` is a usable neighbor of `i` (finite score).
    pub fn is_usable(&self, i: usize, j: usize) -> bool {
        self.scores[(i, j)].is_finite()
    }

    /// One row per feature: top neighbor, ratio, and the full ranking.
    pub fn ranking_records(&self) -> Vec<Record> {
        (0..self.dim())
            .map(|i| {
                let ranking = self.ranking[i]
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(" ");
                Record::new()
                    .with("feature", i)
                    .with("top", self.top[i])
                    .with("ratio", self.ratio[i])
                    .with("top_score", self.scores[(i, self.top[i])])
                    .with("degenerate_ratio", self.degenerate_ratio[i])
                    .with("ranking", ranking)
            })
            .collect()
    }
}

pub const RANKING_COLUMNS: [&str; 6] = [
    "feature",
    "top",
    "ratio",
    "top_score",
    "degenerate_ratio",
    "ranking",
];

pub fn build_neighbor_model(cov: &SampleCovariance) -> Result<NeighborModel> {
    let p = cov.dim();
    if p < 2 {
        return Err(Error::Validation(
            "a neighbor model needs at least two features".into(),
        ));
    }
    let scores = neighbor_scores(cov);
    let ranking: Vec<Vec<usize>> = (0..p).map(|i| rank_neighbors(&scores, i)).collect();
    let top: Vec<usize> = ranking.iter().map(|r| r[0]).collect();
    let mut ratio = Vec::with_capacity(p);
    let mut degenerate_ratio = Vec::with_capacity(p);
    for (i, &t) in top.iter().enumerate() {
        let r = ratio_of(&cov.h, i, t);
        ratio.push(r.unwrap_or(0.0));
        degenerate_ratio.push(r.is_none());
    }
    Ok(NeighborModel {
        covariance: cov.clone(),
        scores,
        ranking,
        top,
        ratio,
        degenerate_ratio,
    })
}

/// Neighbor model computed from a population covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationNeighborModel {
    pub scores: DMatrix<f64>,
    pub top: Vec<usize>,
    pub ratio: Vec<f64>,
}

pub fn population_neighbor_model(sigma: &DMatrix<f64>) -> Result<PopulationNeighborModel> {
    validate_covariance_shape(sigma)?;
    let p = sigma.nrows();
    if p < 2 {
        return Err(Error::Validation(
            "a neighbor model needs at least two features".into(),
        ));
    }
    if let Some(i) = (0..p).find(|&i| sigma[(i, i)] <= 0.0) {
        return Err(Error::Validation(format!(
            "diagonal entry {i} of sigma is not positive"
        )));
    }
    let scores = scores_from(sigma, |_, _| true);
    let top: Vec<usize> = (0..p).map(|i| rank_neighbors(&scores, i)[0]).collect();
    let ratio = top
        .iter()
        .enumerate()
        .map(|(i, &t)| sigma[(i, t)] / sigma[(t, t)])
        .collect();
    Ok(PopulationNeighborModel { scores, top, ratio })
}

/// Square, finite and symmetric to a relative tolerance of `1e-12`.
pub(crate) fn validate_covariance_shape(sigma: &DMatrix<f64>) -> Result<()> {
    if !sigma.is_square() || sigma.nrows() == 0 {
        return Err(Error::Validation(format!(
            "covariance must be square and non-empty, got {:?}",
            sigma.shape()
        )));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("covariance has non-finite entries".into()));
    }
    let scale = sigma.amax().max(1.0);
    let p = sigma.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Validation(format!(
                    "covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Mask;

    fn cov_of(h: DMatrix<f64>) -> SampleCovariance {
        SampleCovariance::from_matrix(h, 10)
    }

    #[test]
    fn fully_observed_two_by_two() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, -2.0]);
        let cov = pairwise_covariance(&CensoredMatrix::fully_observed(x).unwrap());
        assert_eq!(cov.h, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert!(cov.co_counts.iter().all(|&c| c == 2));
    }

    #[test]
    fn partially_observed_matches_brute_force() {
        let rows = vec![vec![Some(1.0), Some(2.0)], vec![Some(-1.0), None]];
        let data = CensoredMatrix::from_rows(&rows).unwrap();
        let cov = pairwise_covariance(&data);
        // brute force over co-observed sample sets
        let expect = |i: usize, j: usize| {
            let terms: Vec<f64> = rows
                .iter()
                .filter_map(|r| Some(r[i]? * r[j]?))
                .collect();
            terms.iter().sum::<f64>() / terms.len() as f64
        };
        assert_eq!(cov.h[(0, 1)], expect(0, 1));
        assert_eq!(cov.h[(0, 1)], 2.0);
        assert_eq!(cov.h[(0, 0)], 1.0);
        assert_eq!(cov.h[(1, 1)], 4.0);
        assert_eq!(cov.co_counts[(0, 1)], 1);
        assert_eq!(cov.co_counts[(0, 0)], 2);
        assert_eq!(cov.co_counts[(1, 1)], 1);
    }

    #[test]
    fn never_co_observed_pair() {
        let rows = vec![vec![Some(1.0), None], vec![None, Some(3.0)]];
        let cov = pairwise_covariance(&CensoredMatrix::from_rows(&rows).unwrap());
        assert_eq!(cov.h[(0, 1)], 0.0);
        assert_eq!(cov.co_counts[(0, 1)], 0);
        let scores = neighbor_scores(&cov);
        assert_eq!(scores[(0, 1)], f64::NEG_INFINITY);
    }

    #[test]
    fn scores_formula_and_sentinels() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let s = neighbor_scores(&cov_of(h));
        assert!((s[(0, 1)] - 0.64).abs() < 1e-15);
        assert_eq!(s[(0, 0)], f64::NEG_INFINITY);

        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let s = neighbor_scores(&cov_of(h));
        assert_eq!(s[(0, 1)], f64::NEG_INFINITY);

        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let s = neighbor_scores(&cov_of(h));
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(s[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn two_feature_model() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let m = build_neighbor_model(&cov_of(h)).unwrap();
        assert_eq!(m.top, vec![1, 0]);
        assert_eq!(m.ratio, vec![0.8, 0.8]);
    }

    #[test]
    fn tie_goes_to_smaller_index() {
        let mut h = DMatrix::identity(6, 6);
        for j in [2, 5] {
            h[(0, j)] = 0.5;
            h[(j, 0)] = 0.5;
        }
        let m = build_neighbor_model(&cov_of(h)).unwrap();
        assert_eq!(m.top[0], 2);
        assert_eq!(&m.ranking[0][..2], &[2, 5]);
    }

    #[test]
    fn three_feature_enumeration() {
        let h = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.5, 0.9, 1.0, 0.1, 0.5, 0.1, 1.0]);
        let m = build_neighbor_model(&cov_of(h.clone())).unwrap();
        // enumerate candidate scores for feature 0
        let best = (1..3)
            .map(|j| (j, h[(0, j)] * h[(0, j)] / h[(j, j)]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(m.top[0], best.0);
        assert_eq!(m.top[0], 1);
    }

    #[test]
    fn single_feature_rejected() {
        let cov = cov_of(DMatrix::identity(1, 1));
        assert!(build_neighbor_model(&cov).is_err());
    }

    #[test]
    fn zero_variance_top_flags_ratio() {
        // every off-diagonal score is -inf because h[j,j] = 0 for j != 0
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let m = build_neighbor_model(&cov_of(h)).unwrap();
        assert_eq!(m.top[0], 1);
        assert_eq!(m.ratio[0], 0.0);
        assert!(m.degenerate_ratio[0]);
    }

    #[test]
    fn population_models() {
        let mut eq = DMatrix::from_element(3, 3, 0.8);
        eq.fill_diagonal(1.0);
        let m = population_neighbor_model(&eq).unwrap();
        assert_eq!(m.top, vec![1, 0, 0]);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((m.scores[(i, j)] - 0.64).abs() < 1e-15);
                }
            }
        }

        let id = population_neighbor_model(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(id.top, vec![1, 0, 0]);

        let s = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 2.0, 0.0, 0.2, 0.0, 1.0]);
        let m = population_neighbor_model(&s).unwrap();
        assert!((m.scores[(0, 1)] - 0.125).abs() < 1e-15);
        assert!((m.scores[(0, 2)] - 0.04).abs() < 1e-15);
        assert_eq!(m.top[0], 1);
        assert_eq!(m.ratio[0], 0.25);
    }

    #[test]
    fn population_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(population_neighbor_model(&asym).is_err());
        let bad_diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(population_neighbor_model(&bad_diag).is_err());
    }

    #[test]
    fn invariants_hold_on_random_masked_data() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (n, p) = (40, 6);
        let values = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
        let mask = Mask::from_fn(n, p, |_, _| rng.random_bool(0.7));
        let data = CensoredMatrix::new(values, mask).unwrap();
        let cov = pairwise_covariance(&data);
        assert_eq!(cov.h, cov.h.transpose());
        for i in 0..p {
            assert_eq!(cov.co_counts[(i, i)], data.observed_column(i).len());
        }
        let m = build_neighbor_model(&cov).unwrap();
        for i in 0..p {
            assert_eq!(m.top[i], m.ranking[i][0]);
            assert_ne!(m.top[i], i);
            for w in m.ranking[i].windows(2) {
                let (a, b) = (m.scores[(i, w[0])], m.scores[(i, w[1])]);
                assert!(a > b || (a == b && w[0] < w[1]));
            }
        }
        let again = build_neighbor_model(&pairwise_covariance(&data)).unwrap();
        assert_eq!(m, again);
    }
}
