//! End-to-end ranking recovery and the sample/runtime complexity
//! calculators.
//!
//! Pipeline: split the comparisons, row-normalize, estimate the
//! co-occurrence matrix, detect one novel pair per ranking, regress every
//! row onto the novel rows, and round the result back to a binary ranking
//! matrix.

use std::time::Instant;

use ndarray::Array2;

use crate::dataset::ComparisonDataset;
use crate::detection::{
    build_neighbor_sets, estimate_solid_angles, select_novel_pairs, DirectionLaw, NovelPairSet,
};
use crate::error::{RankError, Result};
use crate::model::GroundTruthModel;
use crate::moments::{
    estimate_cooccurrence, exact_e, model_constants, row_normalize, split_dataset,
    CooccurrenceEstimate, ModelConstants, DEFAULT_W_CAP,
};
use crate::ranking::RankingMatrix;
use crate::regression::{estimate_b, DenseTargets, TargetMatrix};
use crate::rng::indexed_stream;
use crate::universe::PairIndex;

/// Tuning knobs of the recovery pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnParams {
    /// Number of random projection directions `P`.
    pub projections: usize,
    /// Neighbor-set tolerance `zeta` (the threshold is `zeta/2`).
    pub zeta: f64,
    /// Solver precision `epsilon`.
    pub epsilon: f64,
    pub direction_law: DirectionLaw,
    pub seed: u64,
    /// Symmetrize the estimated co-occurrence matrix before detection.
    pub symmetrize: bool,
    pub max_solver_iters: usize,
    pub w_cap: usize,
}

impl LearnParams {
    /// Standard defaults: `P = 150 K`, `zeta = 0.02`, `epsilon = 1e-4`,
    /// spherical Gaussian directions.
    pub fn defaults(k: usize, seed: u64) -> Self {
        Self {
            projections: 150 * k.max(1),
            zeta: 0.02,
            epsilon: 1e-4,
            direction_law: DirectionLaw::Gaussian,
            seed,
            symmetrize: true,
            max_solver_iters: 10_000,
            w_cap: DEFAULT_W_CAP,
        }
    }
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub split_s: f64,
    pub moments_s: f64,
    pub detection_s: f64,
    pub regression_s: f64,
    pub postprocess_s: f64,
}

impl StageTimings {
    pub fn total_s(&self) -> f64 {
        self.split_s + self.moments_s + self.detection_s + self.regression_s + self.postprocess_s
    }
}

/// Everything the pipeline observed about a run.
#[derive(Debug, Clone, Default)]
pub struct LearnDiagnostics {
    pub timings: StageTimings,
    pub users_total: usize,
    pub users_retained: usize,
    pub users_dropped: usize,
    pub zero_rows: usize,
    pub solver_cap_hits: usize,
    pub tie_rounds: usize,
    pub rejected_candidates: usize,
    pub effective_n: f64,
    pub seed: u64,
}

/// Recovered model: the mixing-weighted matrix, its rounding, the selected
/// novel pairs, and run diagnostics.
#[derive(Debug, Clone)]
pub struct ModelEstimate {
    pub q: usize,
    pub k: usize,
    /// Column-normalized estimate of `B`.
    pub b_hat: Array2<f64>,
    /// Row-scaled estimate before column normalization.
    pub scaled: Array2<f64>,
    pub sigma_hat: RankingMatrix,
    pub novel: NovelPairSet,
    pub diagnostics: LearnDiagnostics,
}

/// A pipeline failure carrying whatever diagnostics were collected before
/// the failing stage.
#[derive(Debug)]
pub struct LearnFailure {
    pub error: RankError,
    pub diagnostics: LearnDiagnostics,
}

impl std::fmt::Display for LearnFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for LearnFailure {}

impl From<LearnFailure> for RankError {
    fn from(f: LearnFailure) -> Self {
        f.error
    }
}

/// Round a nonnegative `B^` into a binary ranking matrix:
/// `sigma^_(i,j),k = B^_(i,j),k / (B^_(i,j),k + B^_(j,i),k)` rounded at 1/2.
///
/// An exact 1/2 (including the 0/0 case, defined as 1/2) rounds to 1 exactly
/// when `i < j`; the number of such ties is returned. Complementarity holds
/// by construction.
pub fn postprocess(b_hat: &Array2<f64>, q: usize) -> Result<(RankingMatrix, usize)> {
    let pairs = PairIndex::new(q);
    if b_hat.nrows() != pairs.num_rows() {
        return Err(RankError::DimensionMismatch(format!(
            "B^ has {} rows, expected {}",
            b_hat.nrows(),
            pairs.num_rows()
        )));
    }
    for ((row, k), &v) in b_hat.indexed_iter() {
        if !(v >= 0.0) {
            return Err(RankError::NegativeEntry { row, k });
        }
    }
    let k_dim = b_hat.ncols();
    let mut sigma = Array2::<u8>::zeros((pairs.num_rows(), k_dim));
    let mut ties = 0usize;
    for w in 0..pairs.num_rows() {
        let (i, j) = pairs.pair(w);
        if i > j {
            continue;
        }
        let flip = pairs.flip(w);
        for k in 0..k_dim {
            let num = b_hat[(w, k)];
            let den = num + b_hat[(flip, k)];
            let ratio = if den == 0.0 { 0.5 } else { num / den };
            let preferred = if ratio > 0.5 {
                1
            } else if ratio < 0.5 {
                0
            } else {
                ties += 1;
                u8::from(i < j)
            };
            sigma[(w, k)] = preferred;
            sigma[(flip, k)] = 1 - preferred;
        }
    }
    Ok((RankingMatrix::from_matrix(q, sigma)?, ties))
}

/// Learn `k` rankings from a comparison dataset.
pub fn learn_rankings(
    ds: &ComparisonDataset,
    k: usize,
    params: &LearnParams,
) -> std::result::Result<ModelEstimate, Box<LearnFailure>> {
    let mut diag = LearnDiagnostics {
        seed: params.seed,
        users_total: ds.m(),
        ..Default::default()
    };
    let fail = |error: RankError, diagnostics: LearnDiagnostics| {
        Box::new(LearnFailure { error, diagnostics })
    };
    if k < 1 {
        return Err(fail(
            RankError::InvalidParameter("need k >= 1".into()),
            diag,
        ));
    }
    if ds.m() == 0 {
        return Err(fail(
            RankError::InvalidParameter("dataset has no users".into()),
            diag,
        ));
    }

    let t = Instant::now();
    let split = split_dataset(ds);
    let x_tilde = row_normalize(&split.x);
    let x_tilde_prime = row_normalize(&split.x_prime);
    diag.users_retained = split.retained_users;
    diag.users_dropped = split.dropped_users;
    diag.timings.split_s = t.elapsed().as_secs_f64();
    if split.retained_users == 0 {
        return Err(fail(
            RankError::InvalidParameter(
                "no user has the two comparisons needed for splitting".into(),
            ),
            diag,
        ));
    }

    let t = Instant::now();
    let est = match estimate_cooccurrence(
        &x_tilde,
        &x_tilde_prime,
        split.retained_users,
        params.symmetrize,
        params.w_cap,
    ) {
        Ok(e) => e,
        Err(e) => return Err(fail(e, diag)),
    };
    diag.zero_rows = est.zero_mask.iter().filter(|&&z| z).count();
    diag.effective_n = est.effective_n;
    diag.timings.moments_s = t.elapsed().as_secs_f64();

    // row weights (1/M) X 1 over the retained users
    let inv_m = (split.retained_users as f64).recip();
    let row_weights: Vec<f64> = split
        .combined
        .row_sums()
        .iter()
        .map(|&s| s * inv_m)
        .collect();

    finish_pipeline(
        est,
        &x_tilde,
        &x_tilde_prime,
        &row_weights,
        split.retained_users as f64,
        ds.q(),
        k,
        params,
        diag,
    )
}

/// Run detection, regression, and rounding on exact population moments.
///
/// Regression targets are the rows of `E` themselves and the row scale is
/// `B a`; the neighbor threshold comes from the model's known gap, as the
/// printed tolerance default is tuned for empirical moments.
pub fn learn_noiseless(
    model: &GroundTruthModel,
    params: &LearnParams,
) -> std::result::Result<ModelEstimate, Box<LearnFailure>> {
    let diag = LearnDiagnostics {
        seed: params.seed,
        ..Default::default()
    };
    let fail = |error: RankError, diagnostics: LearnDiagnostics| {
        Box::new(LearnFailure { error, diagnostics })
    };
    let est = match exact_e(model, params.w_cap) {
        Ok(e) => e,
        Err(e) => return Err(fail(e, diag)),
    };
    let consts = match model_constants(model) {
        Ok(c) => c,
        Err(e) => return Err(fail(e, diag)),
    };
    let b = model.b_matrix();
    let a = model.prior.mean();
    let ba: Vec<f64> = (0..b.nrows())
        .map(|w| (0..b.ncols()).map(|c| b[(w, c)] * a[c]).sum())
        .collect();
    let mut params = *params;
    params.zeta = consts.d / 2.0;
    let values = est.e.clone();
    let mask = est.zero_mask.clone();
    let targets = DenseTargets {
        values: values.view(),
        zero_mask: &mask,
    };
    finish_pipeline(
        est,
        &targets,
        &targets,
        &ba,
        1.0,
        model.q(),
        model.k(),
        &params,
        diag,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish_pipeline<T: TargetMatrix, U: TargetMatrix>(
    est: CooccurrenceEstimate,
    x: &T,
    x_prime: &U,
    row_weights: &[f64],
    m_factor: f64,
    q: usize,
    k: usize,
    params: &LearnParams,
    mut diag: LearnDiagnostics,
) -> std::result::Result<ModelEstimate, Box<LearnFailure>> {
    let fail = |error: RankError, diagnostics: LearnDiagnostics| {
        Box::new(LearnFailure { error, diagnostics })
    };

    let t = Instant::now();
    let neighbors = build_neighbor_sets(&est, params.zeta);
    let angles = match estimate_solid_angles(
        &est,
        &neighbors,
        params.projections,
        params.direction_law,
        params.seed,
    ) {
        Ok(a) => a,
        Err(e) => return Err(fail(e, diag)),
    };
    let novel = match select_novel_pairs(&angles, &neighbors, k, &est.zero_mask) {
        Ok(n) => n,
        Err(e) => {
            diag.timings.detection_s = t.elapsed().as_secs_f64();
            return Err(fail(e, diag));
        }
    };
    diag.rejected_candidates = novel.rejected.len();
    diag.timings.detection_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let b_est = match estimate_b(
        &novel,
        x,
        x_prime,
        row_weights,
        m_factor,
        params.epsilon,
        params.max_solver_iters,
    ) {
        Ok(b) => b,
        Err(e) => return Err(fail(e, diag)),
    };
    diag.solver_cap_hits = b_est.solver_cap_hits;
    diag.timings.regression_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (sigma_hat, ties) = match postprocess(&b_est.b_hat, q) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, diag)),
    };
    diag.tie_rounds = ties;
    diag.timings.postprocess_s = t.elapsed().as_secs_f64();

    Ok(ModelEstimate {
        q,
        k,
        b_hat: b_est.b_hat,
        scaled: b_est.scaled,
        sigma_hat,
        novel,
        diagnostics: diag,
    })
}

/// Sample- and projection-complexity bounds with the constants they are
/// built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub w: usize,
    pub k: usize,
    pub n: usize,
    pub delta: f64,
    pub direction_law: DirectionLaw,
    /// `eta = min_w (B a)_w`.
    pub eta: f64,
    /// Largest non-novel entry of `Bbar`.
    pub b_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub d: f64,
    pub d2: f64,
    /// Monte Carlo minimum solid angle over the extreme clusters.
    pub q_wedge: f64,
    pub q_wedge_stderr: f64,
    pub q_wedge_projections: usize,
    pub rho: f64,
    pub m_bound: f64,
    pub p_bound: f64,
}

/// The moment-accuracy radius `rho` for a direction law.
pub fn rho_for_law(
    consts: &ModelConstants,
    q_wedge: f64,
    w: usize,
    k: usize,
    law: DirectionLaw,
) -> f64 {
    let w_f = w as f64;
    match law {
        DirectionLaw::Gaussian => {
            let denom = 4.0 * k as f64 * (w_f * (2.0 * w_f / q_wedge).ln()).sqrt();
            (consts.d / 8.0).min(std::f64::consts::PI.sqrt() * consts.d2 * q_wedge / denom)
        }
        DirectionLaw::Sphere => (consts.d / 8.0)
            .min(std::f64::consts::PI * consts.d2 * q_wedge / (4.0 * w_f.powf(1.5))),
    }
}

/// Bounds on users and projections sufficient for recovery with failure
/// probability at most `delta`:
/// `M >= max(40 log(3W/delta) / (N rho^2 eta^4),
///           320 sqrt(W) log(3W/delta) / (N eta^6 lambda_min))` and
/// `P >= 16 log(3W/delta) / q_wedge^2`.
///
/// `q_wedge` has no closed form and is estimated by the detection oracle at
/// `q_projections` directions; its binomial standard error is reported.
pub fn theory_bounds(
    model: &GroundTruthModel,
    delta: f64,
    n: usize,
    law: DirectionLaw,
    q_projections: usize,
    seed: u64,
) -> Result<ComplexityReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(RankError::InvalidParameter(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    if n < 2 {
        return Err(RankError::InvalidParameter(format!(
            "need n >= 2 comparisons per user, got {n}"
        )));
    }
    let consts = model_constants(model)?;
    let exact = exact_e(model, DEFAULT_W_CAP)?;
    let (angles, _) =
        crate::detection::oracle_solid_angles(&exact, consts.d, q_projections, law, seed)?;
    let novel = model.sigma.find_novel_pairs();
    let q_wedge = novel
        .per_ranking
        .iter()
        .map(|cluster| angles.q_hat[cluster[0]])
        .fold(f64::INFINITY, f64::min);
    if q_wedge <= 0.0 {
        return Err(RankError::InvalidParameter(
            "estimated minimum solid angle is zero; raise q_projections".into(),
        ));
    }
    let q_wedge_stderr = (q_wedge * (1.0 - q_wedge) / q_projections as f64).sqrt();
    let w = model.num_rows();
    let k = model.k();
    let rho = rho_for_law(&consts, q_wedge, w, k, law);
    let log_term = (3.0 * w as f64 / delta).ln();
    let n_f = n as f64;
    let m1 = 40.0 * log_term / (n_f * rho * rho * consts.eta.powi(4));
    let m2 = 320.0 * (w as f64).sqrt() * log_term
        / (n_f * consts.eta.powi(6) * consts.lambda_min);
    let p_bound = 16.0 * log_term / (q_wedge * q_wedge);
    Ok(ComplexityReport {
        w,
        k,
        n,
        delta,
        direction_law: law,
        eta: consts.eta,
        b_max: consts.b_max,
        lambda_min: consts.lambda_min,
        lambda_max: consts.lambda_max,
        d: consts.d,
        d2: consts.d2,
        q_wedge,
        q_wedge_stderr,
        q_wedge_projections: q_projections,
        rho,
        m_bound: m1.max(m2),
        p_bound,
    })
}

/// Log-log scaling fit of wall-clock measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares slope of `log(time)` against `log(size)`.
pub fn runtime_profile(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(RankError::InvalidParameter(format!(
            "need at least 3 timing points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(RankError::InvalidParameter(
            "timing points must be positive".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ScalingFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Random permutation of `0..q` as an item-position vector.
pub fn random_permutation<R: rand::Rng + ?Sized>(q: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..q).collect();
    p.shuffle(rng);
    p
}

/// Sample a separable ranking matrix from random permutations, retrying
/// until separability holds.
pub fn random_separable_rankings<R: rand::Rng + ?Sized>(
    q: usize,
    k: usize,
    rng: &mut R,
    max_tries: usize,
) -> Result<(RankingMatrix, usize)> {
    for tries in 1..=max_tries {
        let perms: Vec<Vec<usize>> = (0..k).map(|_| random_permutation(q, rng)).collect();
        let sigma = RankingMatrix::from_permutations(q, &perms)?;
        if sigma.find_novel_pairs().separable {
            return Ok((sigma, tries));
        }
    }
    Err(RankError::InvalidParameter(format!(
        "no separable ranking matrix found in {max_tries} tries (q={q}, k={k})"
    )))
}

/// Sample a separable ranking matrix in which every ordered pair is
/// preferred by at least one ranking, so the exact-moment oracle is defined
/// on every row.
///
/// For `k = 2` the only such matrices pair a permutation with its reversal;
/// larger `k` rejection-samples random permutations.
pub fn random_grounded_rankings<R: rand::Rng + ?Sized>(
    q: usize,
    k: usize,
    rng: &mut R,
    max_tries: usize,
) -> Result<RankingMatrix> {
    if k < 2 {
        return Err(RankError::InvalidParameter(
            "a single ranking always leaves its reversed pairs unpreferred".into(),
        ));
    }
    if k == 2 {
        let base = random_permutation(q, rng);
        let reversed: Vec<usize> = base.iter().map(|&p| q - 1 - p).collect();
        return RankingMatrix::from_permutations(q, &[base, reversed]);
    }
    for _ in 0..max_tries {
        let perms: Vec<Vec<usize>> = (0..k).map(|_| random_permutation(q, rng)).collect();
        let sigma = RankingMatrix::from_permutations(q, &perms)?;
        let novel = sigma.find_novel_pairs();
        if !novel.separable {
            continue;
        }
        let grounded = (0..sigma.num_rows())
            .all(|w| (0..k).any(|c| sigma.get(w, c) == 1));
        if grounded {
            return Ok(sigma);
        }
    }
    Err(RankError::InvalidParameter(format!(
        "no grounded separable ranking matrix found in {max_tries} tries (q={q}, k={k})"
    )))
}

/// Deterministic per-purpose RNG for test-model generation.
pub fn model_gen_rng(seed: u64, index: u64) -> impl rand::Rng {
    indexed_stream(seed, "model-gen", index)
}
