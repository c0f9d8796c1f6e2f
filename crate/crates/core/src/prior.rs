//! Priors over the per-user mixing weights.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{RankError, Result};

/// Tolerance for simplex membership checks on external weight vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Check that `v` is a probability vector within [`SIMPLEX_TOL`].
pub fn check_simplex(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(RankError::OffSimplex("empty vector".into()));
    }
    if v.iter().any(|&x| !x.is_finite() || x < -SIMPLEX_TOL) {
        return Err(RankError::OffSimplex(format!("negative component in {v:?}")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(RankError::OffSimplex(format!("components sum to {sum}")));
    }
    Ok(())
}

/// Dirichlet prior with parameter vector `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPrior {
    alpha: Vec<f64>,
}

impl DirichletPrior {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(RankError::InvalidParameter("empty alpha".into()));
        }
        if alpha.iter().any(|&a| !a.is_finite() || a <= 0.0) {
            return Err(RankError::InvalidParameter(format!(
                "alpha components must be positive, got {alpha:?}"
            )));
        }
        Ok(Self { alpha })
    }

    /// `alpha = alpha0 * a` for a mean vector `a` on the simplex.
    pub fn from_mean(a: &[f64], alpha0: f64) -> Result<Self> {
        check_simplex(a)?;
        if alpha0 <= 0.0 {
            return Err(RankError::InvalidParameter(format!(
                "concentration must be positive, got {alpha0}"
            )));
        }
        Self::new(a.iter().map(|&x| x * alpha0).collect())
    }

    pub fn symmetric(k: usize, alpha0: f64) -> Result<Self> {
        Self::from_mean(&vec![1.0 / k as f64; k], alpha0)
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Mean `a = alpha / alpha0`.
    pub fn mean(&self) -> Vec<f64> {
        let a0 = self.alpha0();
        self.alpha.iter().map(|&a| a / a0).collect()
    }

    /// Correlation matrix `R = E[theta theta^T]` in closed form:
    /// `R_kk = a_k (alpha_k + 1) / (alpha0 + 1)`,
    /// `R_kl = a_k alpha_l / (alpha0 + 1)`.
    pub fn correlation(&self) -> Array2<f64> {
        let k = self.k();
        let a0 = self.alpha0();
        let a = self.mean();
        let mut r = Array2::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                r[(i, j)] = if i == j {
                    a[i] * (self.alpha[i] + 1.0) / (a0 + 1.0)
                } else {
                    a[i] * self.alpha[j] / (a0 + 1.0)
                };
            }
        }
        r
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        sample_dirichlet(&self.alpha, rng)
    }
}

/// Prior placing mass `b_k` on the simplex vertex `e_k`, so every user
/// follows exactly one ranking. Mean is `b` and `R = diag(b)`, which has
/// full rank because every component is required to be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexPrior {
    b: Vec<f64>,
}

impl VertexPrior {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        check_simplex(&b)?;
        if b.iter().any(|&x| x <= 0.0) {
            return Err(RankError::RankDeficientPrior);
        }
        Ok(Self { b })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.b
    }

    pub fn mean(&self) -> Vec<f64> {
        self.b.clone()
    }

    pub fn correlation(&self) -> Array2<f64> {
        Array2::from_diag(&ndarray::Array1::from(self.b.clone()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.b.len() - 1;
        for (k, &bk) in self.b.iter().enumerate() {
            acc += bk;
            if u < acc {
                pick = k;
                break;
            }
        }
        let mut theta = vec![0.0; self.b.len()];
        theta[pick] = 1.0;
        theta
    }
}

/// Either admissible prior over mixing weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Dirichlet(DirichletPrior),
    Vertex(VertexPrior),
}

impl Prior {
    pub fn k(&self) -> usize {
        match self {
            Prior::Dirichlet(p) => p.k(),
            Prior::Vertex(p) => p.k(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Prior::Dirichlet(p) => p.mean(),
            Prior::Vertex(p) => p.mean(),
        }
    }

    pub fn correlation(&self) -> Array2<f64> {
        match self {
            Prior::Dirichlet(p) => p.correlation(),
            Prior::Vertex(p) => p.correlation(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Prior::Dirichlet(p) => p.sample(rng),
            Prior::Vertex(p) => p.sample(rng),
        }
    }
}

/// Draw from Dirichlet(alpha) through log-space gamma variates.
///
/// Small concentrations (alpha_k well below 1) underflow a direct gamma
/// draw to zero; the shape+1 boost `G(a) = G(a+1) * U^(1/a)` keeps the
/// magnitudes in log space until the final normalization.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g: f64 = Gamma::new(a + 1.0, 1.0)
                .expect("positive shape")
                .sample(rng);
            let u = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            g.max(f64::MIN_POSITIVE).ln() + u.ln() / a
        })
        .collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return vec![1.0 / alpha.len() as f64; alpha.len()];
    }
    let lse = m + logs.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
    logs.iter().map(|&l| (l - lse).exp()).collect()
}
