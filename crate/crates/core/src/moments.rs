//! Second-order moment machinery: the split/normalize/co-occurrence
//! estimator and its exact population counterpart.
//!
//! With `X~` and `X~'` the row-normalized halves of the count matrix, the
//! estimator `E^ = M X~' X~^T` converges to `E = Bbar Rbar Bbar^T`, where
//! `Bbar = diag^-1(B a) B diag(a)` and `Rbar = diag^-1(a) R diag^-1(a)`.
//! The row geometry of `E` (its extreme points) is what detection consumes.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::dataset::{ComparisonDataset, SparseCounts};
use crate::error::{RankError, Result};
use crate::linalg::symmetric_eigenvalues;
use crate::model::GroundTruthModel;

/// Default cap on the pair-row dimension for dense `W x W` moments.
pub const DEFAULT_W_CAP: usize = 20_000;

/// Magic bytes of the binary moment dump.
pub const DUMP_MAGIC: &[u8; 4] = b"RMXE";
const DUMP_VERSION: u32 = 1;

/// A dataset split into two independent per-user halves.
///
/// Users with fewer than two comparisons cannot be split and are excluded
/// from the halves entirely; `dropped_users` reports how many.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub x: SparseCounts,
    pub x_prime: SparseCounts,
    /// Combined counts of the retained users (`x + x_prime`).
    pub combined: SparseCounts,
    pub retained_users: usize,
    pub dropped_users: usize,
}

/// Split each user's comparisons by arrival position: even positions into
/// `x`, odd into `x_prime`. Comparisons are exchangeable given the user's
/// weights, so the halves are independent copies.
pub fn split_dataset(ds: &ComparisonDataset) -> SplitDataset {
    let w_dim = ds.w_dim();
    let mut x_cols = Vec::new();
    let mut xp_cols = Vec::new();
    let mut combined_cols = Vec::new();
    let mut dropped = 0usize;
    for m in 0..ds.m() {
        let seq = ds.user(m);
        if seq.len() < 2 {
            dropped += 1;
            continue;
        }
        let even: Vec<u32> = seq.iter().step_by(2).copied().collect();
        let odd: Vec<u32> = seq.iter().skip(1).step_by(2).copied().collect();
        x_cols.push(accumulate(&even));
        xp_cols.push(accumulate(&odd));
        combined_cols.push(accumulate(seq));
    }
    SplitDataset {
        retained_users: x_cols.len(),
        dropped_users: dropped,
        x: SparseCounts {
            w_dim,
            cols: x_cols,
        },
        x_prime: SparseCounts {
            w_dim,
            cols: xp_cols,
        },
        combined: SparseCounts {
            w_dim,
            cols: combined_cols,
        },
    }
}

fn accumulate(seq: &[u32]) -> Vec<(u32, u32)> {
    let mut sorted = seq.to_vec();
    sorted.sort_unstable();
    let mut col: Vec<(u32, u32)> = Vec::new();
    for &w in &sorted {
        match col.last_mut() {
            Some((lw, c)) if *lw == w => *c += 1,
            _ => col.push((w, 1)),
        }
    }
    col
}

/// A count matrix with row-stochastic rows, stored sparsely per column.
///
/// Rows that were entirely zero stay zero and are flagged in `zero_mask`.
#[derive(Debug, Clone)]
pub struct NormalizedCounts {
    pub w_dim: usize,
    pub cols: Vec<Vec<(u32, f64)>>,
    pub row_sums: Vec<f64>,
    pub zero_mask: Vec<bool>,
}

/// Rescale every nonzero row of `x` to sum to one.
pub fn row_normalize(x: &SparseCounts) -> NormalizedCounts {
    let row_sums = x.row_sums();
    let zero_mask: Vec<bool> = row_sums.iter().map(|&s| s == 0.0).collect();
    let cols = x
        .cols
        .iter()
        .map(|col| {
            col.iter()
                .map(|&(w, c)| (w, f64::from(c) / row_sums[w as usize]))
                .collect()
        })
        .collect();
    NormalizedCounts {
        w_dim: x.w_dim,
        cols,
        row_sums,
        zero_mask,
    }
}

impl NormalizedCounts {
    pub fn m(&self) -> usize {
        self.cols.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.w_dim, self.m()));
        for (m, col) in self.cols.iter().enumerate() {
            for &(w, v) in col {
                dense[(w as usize, m)] = v;
            }
        }
        dense
    }
}

/// Where a co-occurrence matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    /// Estimated from a split dataset of `M` users.
    Empirical,
    /// Closed form from a ground-truth model.
    Exact,
}

/// Dense `W x W` co-occurrence matrix with provenance.
#[derive(Debug, Clone)]
pub struct CooccurrenceEstimate {
    pub e: Array2<f64>,
    /// Users behind the estimate (0 for exact moments).
    pub m: usize,
    /// Mean comparisons per retained user (0 for exact moments).
    pub effective_n: f64,
    pub symmetrized: bool,
    pub source: MomentSource,
    /// Rows with no observations (or zero population probability).
    pub zero_mask: Vec<bool>,
}

impl CooccurrenceEstimate {
    pub fn w_dim(&self) -> usize {
        self.e.nrows()
    }
}

/// `E^ = M X~' X~^T`, accumulated user by user in column order so the
/// result does not depend on scheduling.
pub fn estimate_cooccurrence(
    x_tilde: &NormalizedCounts,
    x_tilde_prime: &NormalizedCounts,
    m: usize,
    symmetrize: bool,
    cap: usize,
) -> Result<CooccurrenceEstimate> {
    if x_tilde.w_dim != x_tilde_prime.w_dim {
        return Err(RankError::DimensionMismatch(format!(
            "halves disagree on W: {} vs {}",
            x_tilde.w_dim, x_tilde_prime.w_dim
        )));
    }
    if x_tilde.m() != x_tilde_prime.m() {
        return Err(RankError::DimensionMismatch(format!(
            "halves disagree on M: {} vs {}",
            x_tilde.m(),
            x_tilde_prime.m()
        )));
    }
    let w_dim = x_tilde.w_dim;
    if w_dim > cap {
        return Err(RankError::DimensionCap { w: w_dim, cap });
    }
    let mut e = Array2::<f64>::zeros((w_dim, w_dim));
    for (cp, c) in x_tilde_prime.cols.iter().zip(&x_tilde.cols) {
        for &(u, a) in cp {
            let row = u as usize;
            for &(v, b) in c {
                e[(row, v as usize)] += a * b;
            }
        }
    }
    e *= m as f64;
    if symmetrize {
        symmetrize_in_place(&mut e);
    }
    let zero_mask: Vec<bool> = x_tilde
        .zero_mask
        .iter()
        .zip(&x_tilde_prime.zero_mask)
        .map(|(&a, &b)| a || b)
        .collect();
    let total: f64 = x_tilde.row_sums.iter().sum::<f64>()
        + x_tilde_prime.row_sums.iter().sum::<f64>();
    Ok(CooccurrenceEstimate {
        e,
        m,
        effective_n: if m == 0 { 0.0 } else { total / m as f64 },
        symmetrized: symmetrize,
        source: MomentSource::Empirical,
        zero_mask,
    })
}

fn symmetrize_in_place(e: &mut Array2<f64>) {
    let n = e.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (e[(i, j)] + e[(j, i)]);
            e[(i, j)] = v;
            e[(j, i)] = v;
        }
    }
}

/// Split, normalize, and estimate in one step.
pub fn cooccurrence_from_dataset(
    ds: &ComparisonDataset,
    symmetrize: bool,
    cap: usize,
) -> Result<(CooccurrenceEstimate, SplitDataset)> {
    let split = split_dataset(ds);
    let x_tilde = row_normalize(&split.x);
    let x_tilde_prime = row_normalize(&split.x_prime);
    let est = estimate_cooccurrence(
        &x_tilde,
        &x_tilde_prime,
        split.retained_users,
        symmetrize,
        cap,
    )?;
    Ok((est, split))
}

/// Normalized population quantities of a model: `Bbar` rows, the row mask,
/// and `B a`.
pub struct NormalizedModel {
    pub b_bar: Array2<f64>,
    pub ba: Vec<f64>,
    pub zero_mask: Vec<bool>,
}

fn normalized_model(model: &GroundTruthModel) -> NormalizedModel {
    let b = model.b_matrix();
    let a = model.prior.mean();
    let w_dim = b.nrows();
    let k = b.ncols();
    let mut ba = vec![0.0; w_dim];
    for w in 0..w_dim {
        for c in 0..k {
            ba[w] += b[(w, c)] * a[c];
        }
    }
    let zero_mask: Vec<bool> = ba.iter().map(|&x| x == 0.0).collect();
    let mut b_bar = Array2::zeros((w_dim, k));
    for w in 0..w_dim {
        if zero_mask[w] {
            continue;
        }
        for c in 0..k {
            b_bar[(w, c)] = b[(w, c)] * a[c] / ba[w];
        }
    }
    NormalizedModel {
        b_bar,
        ba,
        zero_mask,
    }
}

/// `Rbar = diag^-1(a) R diag^-1(a)`.
pub fn r_bar(model: &GroundTruthModel) -> Array2<f64> {
    let a = model.prior.mean();
    let mut r = model.prior.correlation();
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            r[(i, j)] /= a[i] * a[j];
        }
    }
    r
}

/// Exact population moments `E = Bbar Rbar Bbar^T`.
///
/// Requires every ordered pair to be preferred with positive probability
/// under the prior mean (`min_w (B a)_w > 0`); the first offending pair is
/// reported otherwise.
pub fn exact_e(model: &GroundTruthModel, cap: usize) -> Result<CooccurrenceEstimate> {
    let nm = normalized_model(model);
    if let Some(w) = nm.zero_mask.iter().position(|&z| z) {
        let (i, j) = model.universe.pair_index().pair(w);
        return Err(RankError::ZeroProbabilityPair { i, j, row: w });
    }
    exact_e_from_parts(model, nm, cap)
}

/// Exact moments with unsupported rows masked to zero instead of rejected,
/// mirroring how the empirical estimator treats never-observed rows.
pub fn exact_e_masked(model: &GroundTruthModel, cap: usize) -> Result<CooccurrenceEstimate> {
    let nm = normalized_model(model);
    exact_e_from_parts(model, nm, cap)
}

fn exact_e_from_parts(
    model: &GroundTruthModel,
    nm: NormalizedModel,
    cap: usize,
) -> Result<CooccurrenceEstimate> {
    let w_dim = nm.b_bar.nrows();
    if w_dim > cap {
        return Err(RankError::DimensionCap { w: w_dim, cap });
    }
    let rb = r_bar(model);
    let mut e = nm.b_bar.dot(&rb).dot(&nm.b_bar.t());
    symmetrize_in_place(&mut e);
    Ok(CooccurrenceEstimate {
        e,
        m: 0,
        effective_n: 0.0,
        symmetrized: true,
        source: MomentSource::Exact,
        zero_mask: nm.zero_mask,
    })
}

/// The scalar constants that govern identifiability and sample complexity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConstants {
    /// `eta = min_w (B a)_w`.
    pub eta: f64,
    /// `b = max_{j non-novel, k} Bbar_{j,k}`; 0 when no non-novel row exists.
    pub b_max: f64,
    /// Extreme eigenvalues of `Rbar`.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Row-statistic gap `d = (1-b)^2 lambda_min^2 / lambda_max`.
    pub d: f64,
    /// Row-distance gap `d2 = (1-b) lambda_min`.
    pub d2: f64,
}

/// Compute the identifiability constants of a separable, full-rank model.
pub fn model_constants(model: &GroundTruthModel) -> Result<ModelConstants> {
    let novel = model.sigma.find_novel_pairs();
    if !novel.separable {
        let missing: Vec<usize> = novel
            .per_ranking
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_empty())
            .map(|(k, _)| k)
            .collect();
        return Err(RankError::NotSeparable(missing));
    }
    let rb = r_bar(model);
    let eig = symmetric_eigenvalues(&rb);
    let lambda_min = eig[0];
    let lambda_max = eig[eig.len() - 1];
    if !(lambda_min > 1e-12 * lambda_max.max(1.0)) {
        return Err(RankError::RankDeficientPrior);
    }
    let nm = normalized_model(model);
    if let Some(w) = nm.zero_mask.iter().position(|&z| z) {
        let (i, j) = model.universe.pair_index().pair(w);
        return Err(RankError::ZeroProbabilityPair { i, j, row: w });
    }
    let eta = nm.ba.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut b_max = 0.0f64;
    for &w in &novel.non_novel {
        for k in 0..model.k() {
            b_max = b_max.max(nm.b_bar[(w, k)]);
        }
    }
    let d = (1.0 - b_max).powi(2) * lambda_min * lambda_min / lambda_max;
    let d2 = (1.0 - b_max) * lambda_min;
    Ok(ModelConstants {
        eta,
        b_max,
        lambda_min,
        lambda_max,
        d,
        d2,
    })
}

/// Write the binary dump: magic, version, `W`, `M`, then `W*W`
/// little-endian doubles in row-major order.
pub fn write_moment_dump<W: Write>(est: &CooccurrenceEstimate, mut out: W) -> std::io::Result<()> {
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&DUMP_VERSION.to_le_bytes())?;
    out.write_all(&(est.w_dim() as u64).to_le_bytes())?;
    out.write_all(&(est.m as u64).to_le_bytes())?;
    for row in est.e.rows() {
        for &v in row {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Parse the binary dump. The payload length must match the header exactly.
pub fn read_moment_dump(bytes: &[u8]) -> Result<(Array2<f64>, usize)> {
    let header = 4 + 4 + 8 + 8;
    if bytes.len() < header {
        return Err(RankError::malformed("moment dump", "truncated header"));
    }
    if &bytes[0..4] != DUMP_MAGIC {
        return Err(RankError::malformed("moment dump", "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != DUMP_VERSION {
        return Err(RankError::malformed(
            "moment dump",
            format!("unsupported version {version}"),
        ));
    }
    let w = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let m = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let cells = w
        .checked_mul(w)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| RankError::malformed("moment dump", "size overflow"))?;
    if bytes.len() as u64 != header as u64 + cells {
        return Err(RankError::malformed(
            "moment dump",
            format!(
                "payload is {} bytes, header promises {}",
                bytes.len() - header,
                cells
            ),
        ));
    }
    let w = w as usize;
    let mut e = Array2::zeros((w, w));
    let mut off = header;
    for i in 0..w {
        for j in 0..w {
            e[(i, j)] = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
        }
    }
    Ok((e, m as usize))
}

pub fn save_moment_dump(est: &CooccurrenceEstimate, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_moment_dump(est, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_moment_dump(path: &Path) -> Result<(Array2<f64>, usize)> {
    let bytes = std::fs::read(path)?;
    read_moment_dump(&bytes)
}
