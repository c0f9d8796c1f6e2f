//! The generative model: pair distribution, comparison probabilities, and
//! the ground-truth bundle used by the sampler and the oracles.

use ndarray::Array2;
use rand::Rng;

use crate::error::{RankError, Result};
use crate::prior::{check_simplex, Prior};
use crate::ranking::RankingMatrix;
use crate::universe::{ItemUniverse, PairIndex};

/// Distribution over unordered item pairs. Every pair must have positive
/// probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistribution {
    q: usize,
    /// Probabilities in lexicographic `(min, max)` order; sum to 1.
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl PairDistribution {
    pub fn new(q: usize, probs: Vec<f64>) -> Result<Self> {
        let pairs = PairIndex::new(q);
        if probs.len() != pairs.num_unordered() {
            return Err(RankError::DimensionMismatch(format!(
                "{} pair probabilities, expected {}",
                probs.len(),
                pairs.num_unordered()
            )));
        }
        if probs.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(RankError::InvalidParameter(
                "every unordered pair needs positive probability".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(RankError::InvalidParameter(format!(
                "pair probabilities sum to {sum}"
            )));
        }
        let probs: Vec<f64> = probs.iter().map(|p| p / sum).collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cdf.push(acc);
        }
        Ok(Self { q, probs, cdf })
    }

    pub fn uniform(q: usize) -> Result<Self> {
        let n = PairIndex::new(q).num_unordered();
        Self::new(q, vec![1.0 / n as f64; n])
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// `mu_{i,j}` for any orientation of the pair.
    pub fn mu(&self, i: usize, j: usize) -> f64 {
        self.probs[PairIndex::new(self.q).unordered_index(i, j)]
    }

    /// `mu` of the unordered pair behind ordered row `w`.
    pub fn mu_of_row(&self, w: usize) -> f64 {
        let (i, j) = PairIndex::new(self.q).pair(w);
        self.mu(i, j)
    }

    /// Draw an unordered pair, returned as `(i, j)` with `i < j`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.random();
        let idx = match self
            .cdf
            .binary_search_by(|c| c.partial_cmp(&u).unwrap())
        {
            Ok(i) => (i + 1).min(self.cdf.len() - 1),
            Err(i) => i.min(self.cdf.len() - 1),
        };
        PairIndex::new(self.q).unordered_pairs()[idx]
    }
}

/// `B = P sigma`: per-ranking comparison probabilities. Column stochastic.
pub fn build_b(sigma: &RankingMatrix, mu: &PairDistribution) -> Result<Array2<f64>> {
    if sigma.q() != mu.q() {
        return Err(RankError::DimensionMismatch(format!(
            "ranking matrix over {} items, pair distribution over {}",
            sigma.q(),
            mu.q()
        )));
    }
    let w = sigma.num_rows();
    let mut b = Array2::zeros((w, sigma.k()));
    for row in 0..w {
        let m = mu.mu_of_row(row);
        for k in 0..sigma.k() {
            b[(row, k)] = m * f64::from(sigma.get(row, k));
        }
    }
    Ok(b)
}

/// Probability of each ordered comparison under mixing weights `theta`:
/// `p_w = sum_k B[w,k] theta_k`.
pub fn comparison_pmf(b: &Array2<f64>, theta: &[f64]) -> Result<Vec<f64>> {
    check_simplex(theta)?;
    if theta.len() != b.ncols() {
        return Err(RankError::DimensionMismatch(format!(
            "theta has {} components, B has {} columns",
            theta.len(),
            b.ncols()
        )));
    }
    Ok((0..b.nrows())
        .map(|w| (0..theta.len()).map(|k| b[(w, k)] * theta[k]).sum())
        .collect())
}

/// Ground-truth generative model.
#[derive(Debug, Clone)]
pub struct GroundTruthModel {
    pub universe: ItemUniverse,
    pub sigma: RankingMatrix,
    pub mu: PairDistribution,
    pub prior: Prior,
}

impl GroundTruthModel {
    pub fn new(
        universe: ItemUniverse,
        sigma: RankingMatrix,
        mu: PairDistribution,
        prior: Prior,
    ) -> Result<Self> {
        if sigma.q() != universe.q() || mu.q() != universe.q() {
            return Err(RankError::DimensionMismatch(
                "universe, ranking matrix, and pair distribution disagree on Q".into(),
            ));
        }
        if prior.k() != sigma.k() {
            return Err(RankError::DimensionMismatch(format!(
                "prior over {} rankings, sigma has {}",
                prior.k(),
                sigma.k()
            )));
        }
        Ok(Self {
            universe,
            sigma,
            mu,
            prior,
        })
    }

    pub fn q(&self) -> usize {
        self.universe.q()
    }

    pub fn k(&self) -> usize {
        self.sigma.k()
    }

    pub fn num_rows(&self) -> usize {
        self.universe.num_rows()
    }

    pub fn b_matrix(&self) -> Array2<f64> {
        build_b(&self.sigma, &self.mu).expect("dimensions validated at construction")
    }

    pub fn comparison_pmf(&self, theta: &[f64]) -> Result<Vec<f64>> {
        comparison_pmf(&self.b_matrix(), theta)
    }
}
