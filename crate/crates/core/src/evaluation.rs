//! Metrics: column-matched Kendall-tau error and prediction RMSE.

use ndarray::Array2;

use crate::error::{RankError, Result};
use crate::ranking::RankingMatrix;

/// Optimal assignment of a square nonnegative cost matrix, returned as
/// `perm[row] = column`. O(K^3) shortest-augmenting-path with potentials.
pub fn hungarian_match(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    // potentials and matching over 1-based internal indexing
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut match_of_col = vec![0usize; n + 1]; // 0 = unmatched
    for row in 1..=n {
        match_of_col[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = match_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[match_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if match_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            match_of_col[j0] = match_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        if match_of_col[j] != 0 {
            perm[match_of_col[j] - 1] = j - 1;
        }
    }
    perm
}

/// Column-matched error between two ranking matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedError {
    /// `permutation[k]` is the estimate column matched to truth column `k`.
    pub permutation: Vec<usize>,
    /// Normalized per-column errors in `[0, 1]`.
    pub per_column: Vec<f64>,
    pub mean_error: f64,
}

/// Kendall-tau distance between matched columns, normalized by
/// `W = Q(Q-1)`.
///
/// Columns are aligned by minimum-cost bipartite matching on l1 distance;
/// the l1 distance between two complementary 0/1 columns counts every
/// discordant unordered pair twice, which the `W` normalizer undoes.
pub fn kendall_tau_error(truth: &RankingMatrix, estimate: &RankingMatrix) -> Result<MatchedError> {
    if truth.q() != estimate.q() || truth.k() != estimate.k() {
        return Err(RankError::DimensionMismatch(format!(
            "truth is {}x{}, estimate is {}x{}",
            truth.num_rows(),
            truth.k(),
            estimate.num_rows(),
            estimate.k()
        )));
    }
    let k = truth.k();
    let w_dim = truth.num_rows();
    let mut cost = Array2::zeros((k, k));
    for a in 0..k {
        for b in 0..k {
            let mut l1 = 0u32;
            for w in 0..w_dim {
                l1 += u32::from(truth.get(w, a).abs_diff(estimate.get(w, b)));
            }
            cost[(a, b)] = f64::from(l1);
        }
    }
    let permutation = hungarian_match(&cost);
    let per_column: Vec<f64> = (0..k)
        .map(|a| cost[(a, permutation[a])] / w_dim as f64)
        .collect();
    let mean_error = per_column.iter().sum::<f64>() / k as f64;
    Ok(MatchedError {
        permutation,
        per_column,
        mean_error,
    })
}

/// Root-mean-square error between predictions and truths.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(RankError::DimensionMismatch(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let sum: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum / predictions.len() as f64).sqrt())
}
