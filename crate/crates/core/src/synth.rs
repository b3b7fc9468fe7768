//! Synthetic instances: covariance models, sparse ground truth, Gaussian
//! designs with labels, and deterministic censorship masks.
//!
//! # Random streams
//!
//! All randomness comes from [`trial_rng`]: ChaCha8 (`rand_chacha` 0.9)
//! seeded with `seed_from_u64(seed)` and switched to `set_stream(stream)`.
//! Distinct streams of the same seed are independent, so every trial can be
//! generated on its own thread and still be bit-reproducible. The version tag
//! [`RNG_CONTRACT`] is written next to every experiment output.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::covariance::validate_covariance_shape;
use crate::data::{CensoredMatrix, Mask};
use crate::error::{Error, Result};

pub const RNG_CONTRACT: &str = "chacha8-v1";

/// Generator for `(seed, stream)`.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSpec {
    /// Unit diagonal, constant off-diagonal `rho`.
    Equicorrelation(f64),
    Identity,
    Custom(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub sigma: SigmaSpec,
    pub wstar_low: f64,
    pub wstar_high: f64,
    /// Noise standard deviation.
    pub sigma_eps: f64,
    pub seed: u64,
}

impl GenerationConfig {
    pub const DEFAULT_SIGMA_EPS: f64 = 0.1;

    /// `n = 1000, p = 50, s = 10`, equicorrelation 0.8, `|w*_i|` in
    /// `[0.25, 1]`.
    pub fn experiment_default() -> Self {
        Self {
            n: 1000,
            p: 50,
            s: 10,
            sigma: SigmaSpec::Equicorrelation(0.8),
            wstar_low: 0.25,
            wstar_high: 1.0,
            sigma_eps: Self::DEFAULT_SIGMA_EPS,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::Validation("n and p must be positive".into()));
        }
        if self.s == 0 || self.s > self.p {
            return Err(Error::Validation(format!(
                "support size {} must be in 1..={}",
                self.s, self.p
            )));
        }
        if let SigmaSpec::Equicorrelation(rho) = self.sigma {
            let lower = if self.p > 1 {
                -1.0 / (self.p as f64 - 1.0)
            } else {
                f64::NEG_INFINITY
            };
            if !(rho > lower && rho < 1.0) {
                return Err(Error::Validation(format!(
                    "equicorrelation {rho} outside ({lower}, 1) for p = {}",
                    self.p
                )));
            }
        }
        if !(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite()) {
            return Err(Error::Validation("sigma_eps must be non-negative".into()));
        }
        if !(0.0 < self.wstar_low && self.wstar_low <= self.wstar_high) {
            return Err(Error::Validation("need 0 < wstar_low <= wstar_high".into()));
        }
        Ok(())
    }
}

/// Builds the covariance matrix for `spec` with `p` features.
pub fn make_sigma(spec: &SigmaSpec, p: usize) -> Result<DMatrix<f64>> {
    let sigma = match spec {
        SigmaSpec::Identity => DMatrix::identity(p, p),
        SigmaSpec::Equicorrelation(rho) => {
            let mut m = DMatrix::from_element(p, p, *rho);
            m.fill_diagonal(1.0);
            m
        }
        SigmaSpec::Custom(m) => {
            if m.nrows() != p {
                return Err(Error::Dimension(format!(
                    "custom sigma is {:?}, expected {p}x{p}",
                    m.shape()
                )));
            }
            m.clone()
        }
    };
    validate_covariance_shape(&sigma)?;
    let min_eig = min_eigenvalue(&sigma);
    if min_eig < -1e-10 {
        return Err(Error::Validation(format!(
            "covariance is indefinite (smallest eigenvalue {min_eig:e})"
        )));
    }
    Ok(sigma)
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone().symmetric_eigenvalues().min()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub w_star: DVector<f64>,
    /// Ascending support indices.
    pub support: Vec<usize>,
}

/// Support is the first `s` entries of a uniform permutation of `0..p`; each
/// support value has a uniform sign and magnitude uniform on
/// `[wstar_low, wstar_high]`.
pub fn sample_ground_truth(config: &GenerationConfig, rng: &mut impl Rng) -> Result<GroundTruth> {
    config.validate()?;
    let mut order: Vec<usize> = (0..config.p).collect();
    order.shuffle(rng);
    let mut support = order[..config.s].to_vec();
    let mut w_star = DVector::zeros(config.p);
    for &i in &support {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let magnitude = rng.random_range(config.wstar_low..=config.wstar_high);
        w_star[i] = sign * magnitude;
    }
    support.sort_unstable();
    Ok(GroundTruth { w_star, support })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub x_true: DMatrix<f64>,
    pub y: DVector<f64>,
    pub epsilon: DVector<f64>,
}

/// Rows `x_k = L z_k` with `L` the lower Cholesky factor of `sigma`, then
/// `y = X w* + eps` with `eps ~ N(0, sigma_eps^2)`.
pub fn sample_dataset(
    config: &GenerationConfig,
    sigma: &DMatrix<f64>,
    truth: &GroundTruth,
    rng: &mut impl Rng,
) -> Result<SyntheticSample> {
    config.validate()?;
    let (n, p) = (config.n, config.p);
    if sigma.shape() != (p, p) || truth.w_star.len() != p {
        return Err(Error::Dimension(format!(
            "sigma {:?} / w* {} do not match p = {p}",
            sigma.shape(),
            truth.w_star.len()
        )));
    }
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite {
            min_eigenvalue: min_eigenvalue(sigma),
        })?;
    let lower = chol.l();
    let mut x_true = DMatrix::zeros(n, p);
    let mut z = DVector::zeros(p);
    for k in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let row = &lower * &z;
        x_true.row_mut(k).copy_from(&row.transpose());
    }
    let epsilon = DVector::from_fn(n, |_, _| {
        config.sigma_eps * rng.sample::<f64, _>(StandardNormal)
    });
    let y = &x_true * &truth.w_star + &epsilon;
    Ok(SyntheticSample { x_true, y, epsilon })
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    /// Exactly `round(theta * n * p)` censored cells at uniform positions.
    Fraction(f64),
    /// Staircase of overlapping feature blocks of the given width.
    Chain(usize),
    Custom(Mask),
}

const MAX_MASK_REDRAWS: usize = 100;

pub fn make_mask(spec: &MaskSpec, n: usize, p: usize, rng: &mut impl Rng) -> Result<Mask> {
    match spec {
        MaskSpec::Fraction(theta) => fraction_mask(*theta, n, p, rng),
        MaskSpec::Chain(width) => chain_mask(*width, n, p),
        MaskSpec::Custom(m) => {
            if m.shape() != (n, p) {
                return Err(Error::Dimension(format!(
                    "custom mask is {:?}, expected ({n}, {p})",
                    m.shape()
                )));
            }
            Ok(m.clone())
        }
    }
}

fn fraction_mask(theta: f64, n: usize, p: usize, rng: &mut impl Rng) -> Result<Mask> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::Mask(format!("fraction {theta} outside [0, 1)")));
    }
    let cells = n * p;
    let zeros = (theta * cells as f64).round() as usize;
    for _ in 0..MAX_MASK_REDRAWS {
        // cell c is (k, i) = (c % n, c / n)
        let mut mask = Mask::from_element(n, p, true);
        for c in index::sample(rng, cells, zeros) {
            mask[(c % n, c / n)] = false;
        }
        if (0..p).all(|i| mask.column(i).iter().any(|&m| m)) {
            return Ok(mask);
        }
    }
    Err(Error::Mask(format!(
        "fraction {theta} left a feature unobserved after {MAX_MASK_REDRAWS} draws"
    )))
}

/// Feature blocks of a chain mask: `[b (w-1), b (w-1) + w)` clipped to `p`.
pub fn chain_blocks(width: usize, p: usize) -> Vec<std::ops::Range<usize>> {
    if width >= p {
        return vec![0..p];
    }
    let step = width - 1;
    let count = (p - 1).div_ceil(step);
    (0..count)
        .map(|b| {
            let start = b * step;
            start..(start + width).min(p)
        })
        .collect()
}

fn chain_mask(width: usize, n: usize, p: usize) -> Result<Mask> {
    if width > p {
        return Err(Error::Mask(format!("chain width {width} exceeds p = {p}")));
    }
    if width < 2 && p > 1 {
        return Err(Error::Mask("chain width must be at least 2".into()));
    }
    let blocks = chain_blocks(width, p);
    if n < blocks.len() {
        return Err(Error::Mask(format!(
            "{n} samples cannot cover {} chain blocks",
            blocks.len()
        )));
    }
    let b = blocks.len();
    Ok(Mask::from_fn(n, p, |k, i| blocks[k * b / n].contains(&i)))
}

/// Hides every cell where `mask` is 0.
pub fn apply_mask(x_true: &DMatrix<f64>, mask: &Mask) -> Result<CensoredMatrix> {
    CensoredMatrix::new(x_true.clone(), mask.clone())
}
