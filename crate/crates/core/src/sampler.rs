//! Generative sampler for comparison datasets.

use rand::Rng;

use crate::dataset::ComparisonDataset;
use crate::error::{RankError, Result};
use crate::model::GroundTruthModel;
use crate::rng::named_stream;

/// Latent variables drawn alongside a sampled dataset, kept for tests and
/// diagnostics.
#[derive(Debug, Clone)]
pub struct SampledLatents {
    /// Per-user mixing weights.
    pub thetas: Vec<Vec<f64>>,
    /// Per-comparison ranking tokens.
    pub tokens: Vec<Vec<u16>>,
}

/// Sample `m` users with `n` comparisons each.
///
/// Per user: weights from the prior, then for each comparison an unordered
/// pair from `mu`, a ranking token from the weights, and the orientation
/// dictated by that ranking. Deterministic given the seed; the prior, pair,
/// and token draws use independent named streams.
pub fn sample_dataset(
    model: &GroundTruthModel,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<(ComparisonDataset, SampledLatents)> {
    if m < 1 {
        return Err(RankError::InvalidParameter("need at least one user".into()));
    }
    if n < 2 {
        return Err(RankError::InvalidParameter(format!(
            "each user compares at least 2 pairs, got {n}"
        )));
    }
    let mut prior_rng = named_stream(seed, "prior");
    let mut pair_rng = named_stream(seed, "pairs");
    let mut token_rng = named_stream(seed, "tokens");
    let pairs = model.universe.pair_index();

    let mut users = Vec::with_capacity(m);
    let mut thetas = Vec::with_capacity(m);
    let mut tokens = Vec::with_capacity(m);
    for _ in 0..m {
        let theta = model.prior.sample(&mut prior_rng);
        let mut seq = Vec::with_capacity(n);
        let mut toks = Vec::with_capacity(n);
        for _ in 0..n {
            let (i, j) = model.mu.sample_pair(&mut pair_rng);
            let z = sample_categorical(&theta, &mut token_rng);
            let w = if model.sigma.get(pairs.row(i, j), z) == 1 {
                pairs.row(i, j)
            } else {
                pairs.row(j, i)
            };
            seq.push(w as u32);
            toks.push(z as u16);
        }
        users.push(seq);
        thetas.push(theta);
        tokens.push(toks);
    }
    Ok((
        ComparisonDataset::new(model.q(), users)?,
        SampledLatents { thetas, tokens },
    ))
}

fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}
