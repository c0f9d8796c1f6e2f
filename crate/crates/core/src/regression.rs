//! Simplex-constrained regression of every pair row onto the novel rows.
//!
//! Each row `w` solves `min_b  M (x~_w - b Y)(x~'_w - b Y')^T` over the
//! probability simplex, where `Y` and `Y'` stack the novel-pair rows of the
//! two halves. The bilinear objective is symmetrized into the quadratic
//! `b H b^T - 2 g b^T` (same minimizers up to a constant) and solved by
//! projected gradient with a fixed `1/L` step. Solutions are row-scaled by
//! the empirical row marginal and column-normalized into `B^`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::detection::NovelPairSet;
use crate::error::{RankError, Result};
use crate::moments::NormalizedCounts;

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        acc += s;
        let t = (acc - 1.0) / (i + 1) as f64;
        if i + 1 == n || sorted[i + 1] <= t {
            tau = t;
            if i + 1 < n {
                break;
            }
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Quadratic simplex solve outcome.
#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub b: Vec<f64>,
    pub iterations: usize,
    pub hit_cap: bool,
    /// Final value of `b H b^T - 2 g b^T`.
    pub objective: f64,
}

/// Minimize `b H b^T - 2 g b^T` over the simplex by projected gradient with
/// step `1/L`, `L` the Frobenius norm of `H`. Stops when the per-step
/// objective decrease falls below `epsilon` or the iteration cap is hit.
pub fn solve_simplex_qp(
    h: &ArrayView2<f64>,
    g: &ArrayView1<f64>,
    epsilon: f64,
    max_iters: usize,
) -> SolverOutcome {
    let k = g.len();
    debug_assert_eq!(h.nrows(), k);
    debug_assert_eq!(h.ncols(), k);
    if k == 1 {
        return SolverOutcome {
            b: vec![1.0],
            iterations: 0,
            hit_cap: false,
            objective: h[(0, 0)] - 2.0 * g[0],
        };
    }
    // gradient 2(Hb - g) has Lipschitz constant 2*lambda_max(H) <= 2*frob(H)
    let lipschitz = h.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let step = 0.5 / lipschitz;
    let objective = |b: &[f64]| -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..k {
            lin += g[i] * b[i];
            for j in 0..k {
                quad += b[i] * h[(i, j)] * b[j];
            }
        }
        quad - 2.0 * lin
    };
    let mut b = vec![1.0 / k as f64; k];
    let mut obj = objective(&b);
    let mut iterations = 0;
    let mut hit_cap = true;
    while iterations < max_iters {
        iterations += 1;
        let mut trial = vec![0.0; k];
        for i in 0..k {
            let mut grad = -2.0 * g[i];
            for j in 0..k {
                grad += 2.0 * h[(i, j)] * b[j];
            }
            trial[i] = b[i] - step * grad;
        }
        let trial = project_to_simplex(&trial);
        let trial_obj = objective(&trial);
        let decrease = obj - trial_obj;
        if trial_obj <= obj {
            b = trial;
            obj = trial_obj;
        }
        if decrease < epsilon {
            hit_cap = false;
            break;
        }
    }
    SolverOutcome {
        b,
        iterations,
        hit_cap,
        objective: obj,
    }
}

/// One row's regression problem in explicit form.
#[derive(Debug, Clone)]
pub struct SimplexRegressionProblem<'a> {
    /// Target row of the first half.
    pub x: ArrayView1<'a, f64>,
    /// Target row of the second half.
    pub x_prime: ArrayView1<'a, f64>,
    /// `K x M` novel rows of the first half.
    pub y: ArrayView2<'a, f64>,
    /// `K x M` novel rows of the second half.
    pub y_prime: ArrayView2<'a, f64>,
    /// Scale factor `M`.
    pub m_factor: f64,
    /// Solver precision.
    pub epsilon: f64,
    pub max_iters: usize,
}

/// Regression result with both the symmetrized and the raw objective.
#[derive(Debug, Clone)]
pub struct RegressionOutcome {
    pub b: Vec<f64>,
    pub iterations: usize,
    pub hit_cap: bool,
    /// Raw bilinear objective `M (x - bY)(x' - bY')^T` at the solution.
    pub raw_objective: f64,
}

/// Solve one row's problem.
pub fn simplex_regress(p: &SimplexRegressionProblem) -> Result<RegressionOutcome> {
    let k = p.y.nrows();
    let m = p.x.len();
    if p.x_prime.len() != m || p.y.ncols() != m || p.y_prime.ncols() != m || p.y_prime.nrows() != k
    {
        return Err(RankError::DimensionMismatch(
            "regression problem shapes disagree".into(),
        ));
    }
    if !(p.epsilon > 0.0) {
        return Err(RankError::InvalidParameter(format!(
            "epsilon must be positive, got {}",
            p.epsilon
        )));
    }
    let mut h = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            let mut yy = 0.0;
            for c in 0..m {
                yy += p.y[(i, c)] * p.y_prime[(j, c)] + p.y_prime[(i, c)] * p.y[(j, c)];
            }
            h[(i, j)] = 0.5 * p.m_factor * yy;
        }
    }
    let mut g = Array1::<f64>::zeros(k);
    for i in 0..k {
        let mut acc = 0.0;
        for c in 0..m {
            acc += p.y[(i, c)] * p.x_prime[c] + p.y_prime[(i, c)] * p.x[c];
        }
        g[i] = 0.5 * p.m_factor * acc;
    }
    let xxp: f64 = (0..m).map(|c| p.x[c] * p.x_prime[c]).sum();
    let out = solve_simplex_qp(&h.view(), &g.view(), p.epsilon, p.max_iters);
    Ok(RegressionOutcome {
        raw_objective: p.m_factor * xxp + out.objective,
        b: out.b,
        iterations: out.iterations,
        hit_cap: out.hit_cap,
    })
}

/// Column access to a row-targets matrix, generic over the sparse empirical
/// halves and dense exact moments.
///
/// `for_col` must visit entries in ascending row order.
pub trait TargetMatrix {
    fn num_rows(&self) -> usize;
    fn num_cols(&self) -> usize;
    fn for_col(&self, col: usize, f: &mut dyn FnMut(usize, f64));
    fn is_zero_row(&self, row: usize) -> bool;
}

impl TargetMatrix for NormalizedCounts {
    fn num_rows(&self) -> usize {
        self.w_dim
    }
    fn num_cols(&self) -> usize {
        self.m()
    }
    fn for_col(&self, col: usize, f: &mut dyn FnMut(usize, f64)) {
        for &(w, v) in &self.cols[col] {
            f(w as usize, v);
        }
    }
    fn is_zero_row(&self, row: usize) -> bool {
        self.zero_mask[row]
    }
}

/// Dense targets: rows regressed, columns as samples.
pub struct DenseTargets<'a> {
    pub values: ArrayView2<'a, f64>,
    pub zero_mask: &'a [bool],
}

impl TargetMatrix for DenseTargets<'_> {
    fn num_rows(&self) -> usize {
        self.values.nrows()
    }
    fn num_cols(&self) -> usize {
        self.values.ncols()
    }
    fn for_col(&self, col: usize, f: &mut dyn FnMut(usize, f64)) {
        for (row, &v) in self.values.column(col).iter().enumerate() {
            if v != 0.0 {
                f(row, v);
            }
        }
    }
    fn is_zero_row(&self, row: usize) -> bool {
        self.zero_mask[row]
    }
}

/// `B^` with its pre-normalization companion and solver diagnostics.
#[derive(Debug, Clone)]
pub struct BEstimate {
    /// Column-normalized estimate.
    pub b_hat: Array2<f64>,
    /// Row-scaled estimate before column normalization.
    pub scaled: Array2<f64>,
    /// Column sums of `scaled` (the normalization divisors).
    pub column_sums: Vec<f64>,
    /// Rows whose solver hit the iteration cap.
    pub solver_cap_hits: usize,
    /// Zero rows that skipped regression.
    pub skipped_rows: usize,
    /// Summed raw objectives of the solved rows.
    pub total_raw_objective: f64,
}

/// Regress every row onto the novel rows, row-scale by `row_weights`
/// (empirically `(1/M) X 1`), and column-normalize.
pub fn estimate_b<T: TargetMatrix, U: TargetMatrix>(
    novel: &NovelPairSet,
    x: &T,
    x_prime: &U,
    row_weights: &[f64],
    m_factor: f64,
    epsilon: f64,
    max_iters: usize,
) -> Result<BEstimate> {
    let k = novel.rows.len();
    let w_dim = x.num_rows();
    let m = x.num_cols();
    if x_prime.num_rows() != w_dim || x_prime.num_cols() != m || row_weights.len() != w_dim {
        return Err(RankError::DimensionMismatch(
            "targets and row weights disagree on shape".into(),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(RankError::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut novel_of_row = vec![usize::MAX; w_dim];
    for (idx, &row) in novel.rows.iter().enumerate() {
        novel_of_row[row] = idx;
    }

    // One pass over the columns builds the shared Hessian
    // H = M (Y Y'^T + Y' Y^T) / 2, the per-row linear terms
    // g_w = M (Y x~'_w + Y' x~_w) / 2, and the constants x~_w x~'_w.
    let mut h = Array2::<f64>::zeros((k, k));
    let mut g1 = Array2::<f64>::zeros((k, w_dim)); // Y X~'^T
    let mut g2 = Array2::<f64>::zeros((k, w_dim)); // Y' X~^T
    let mut cross = vec![0.0; w_dim];
    let mut col_x: Vec<(usize, f64)> = Vec::new();
    let mut col_xp: Vec<(usize, f64)> = Vec::new();
    let mut y_col = vec![0.0; k];
    let mut yp_col = vec![0.0; k];
    for c in 0..m {
        col_x.clear();
        col_xp.clear();
        x.for_col(c, &mut |row, v| col_x.push((row, v)));
        x_prime.for_col(c, &mut |row, v| col_xp.push((row, v)));
        y_col.iter_mut().for_each(|v| *v = 0.0);
        yp_col.iter_mut().for_each(|v| *v = 0.0);
        for &(row, v) in &col_x {
            let idx = novel_of_row[row];
            if idx != usize::MAX {
                y_col[idx] = v;
            }
        }
        for &(row, v) in &col_xp {
            let idx = novel_of_row[row];
            if idx != usize::MAX {
                yp_col[idx] = v;
            }
        }
        for i in 0..k {
            if y_col[i] != 0.0 {
                for j in 0..k {
                    h[(i, j)] += 0.5 * m_factor * y_col[i] * yp_col[j];
                }
            }
            if yp_col[i] != 0.0 {
                for j in 0..k {
                    h[(i, j)] += 0.5 * m_factor * yp_col[i] * y_col[j];
                }
            }
        }
        for i in 0..k {
            if y_col[i] != 0.0 {
                for &(row, v) in &col_xp {
                    g1[(i, row)] += y_col[i] * v;
                }
            }
            if yp_col[i] != 0.0 {
                for &(row, v) in &col_x {
                    g2[(i, row)] += yp_col[i] * v;
                }
            }
        }
        // ascending-row order lets a single merge pass collect the products
        let mut a = col_x.iter().peekable();
        let mut b = col_xp.iter().peekable();
        while let (Some(&&(ra, va)), Some(&&(rb, vb))) = (a.peek(), b.peek()) {
            match ra.cmp(&rb) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    cross[ra] += va * vb;
                    a.next();
                    b.next();
                }
            }
        }
    }

    let mut scaled = Array2::<f64>::zeros((w_dim, k));
    let mut cap_hits = 0;
    let mut skipped = 0;
    let mut total_raw = 0.0;
    let mut g = Array1::<f64>::zeros(k);
    for w in 0..w_dim {
        if x.is_zero_row(w) || x_prime.is_zero_row(w) {
            skipped += 1;
            continue;
        }
        for i in 0..k {
            g[i] = 0.5 * m_factor * (g1[(i, w)] + g2[(i, w)]);
        }
        let out = solve_simplex_qp(&h.view(), &g.view(), epsilon, max_iters);
        if out.hit_cap {
            cap_hits += 1;
        }
        total_raw += m_factor * cross[w] + out.objective;
        for i in 0..k {
            scaled[(w, i)] = row_weights[w] * out.b[i];
        }
    }

    let column_sums: Vec<f64> = (0..k).map(|i| scaled.column(i).sum()).collect();
    if let Some(kk) = column_sums.iter().position(|&s| s <= 0.0) {
        return Err(RankError::EmptyColumn { k: kk });
    }
    let mut b_hat = scaled.clone();
    for i in 0..k {
        b_hat.column_mut(i).mapv_inplace(|v| v / column_sums[i]);
    }
    Ok(BEstimate {
        b_hat,
        scaled,
        column_sums,
        solver_cap_hits: cap_hits,
        skipped_rows: skipped,
        total_raw_objective: total_raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_on_simplex(b: &[f64]) {
        assert!(b.iter().all(|&x| x >= 0.0), "{b:?}");
        assert_abs_diff_eq!(b.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_handles_interior_and_exterior_points() {
        assert_on_simplex(&project_to_simplex(&[0.2, 0.3, 0.5]));
        assert_on_simplex(&project_to_simplex(&[5.0, -3.0, 0.1]));
        let p = project_to_simplex(&[2.0, 0.0]);
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
        let interior = project_to_simplex(&[0.25, 0.75]);
        assert_abs_diff_eq!(interior[0], 0.25, epsilon = 1e-15);
    }

    fn toy_problem<'a>(
        x: &'a Array1<f64>,
        xp: &'a Array1<f64>,
        y: &'a Array2<f64>,
        yp: &'a Array2<f64>,
    ) -> SimplexRegressionProblem<'a> {
        SimplexRegressionProblem {
            x: x.view(),
            x_prime: xp.view(),
            y: y.view(),
            y_prime: yp.view(),
            m_factor: 1.0,
            epsilon: 1e-10,
            max_iters: 10_000,
        }
    }

    #[test]
    fn vertex_target_recovers_the_basis_vector() {
        let y = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let yp = array![[0.8, 0.2, 0.0], [0.1, 0.6, 0.3]];
        let x = y.row(1).to_owned();
        let xp = yp.row(1).to_owned();
        let out = simplex_regress(&toy_problem(&x, &xp, &y, &yp)).unwrap();
        assert_on_simplex(&out.b);
        assert!(out.b[1] > 1.0 - 1e-4, "{:?}", out.b);
        assert!(out.raw_objective.abs() < 1e-8);
    }

    #[test]
    fn even_mixture_recovers_half_half() {
        let y = array![[1.0, 0.0, 0.0, 0.4], [0.0, 1.0, 0.0, 0.2]];
        let yp = array![[0.9, 0.1, 0.2, 0.3], [0.0, 0.7, 0.5, 0.1]];
        let mix = |m: &Array2<f64>| -> Array1<f64> {
            let mut v = Array1::zeros(m.ncols());
            for c in 0..m.ncols() {
                v[c] = 0.5 * m[(0, c)] + 0.5 * m[(1, c)];
            }
            v
        };
        let x = mix(&y);
        let xp = mix(&yp);
        let out = simplex_regress(&toy_problem(&x, &xp, &y, &yp)).unwrap();
        assert_on_simplex(&out.b);
        assert_abs_diff_eq!(out.b[0], 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(out.b[1], 0.5, epsilon = 1e-3);
    }

    #[test]
    fn identical_design_rows_return_the_uniform_vector() {
        let y = array![[0.3, 0.7], [0.3, 0.7]];
        let x = array![0.3, 0.7];
        let out = simplex_regress(&toy_problem(&x, &x.clone(), &y, &y.clone())).unwrap();
        assert_abs_diff_eq!(out.b[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.b[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn objective_sequence_is_monotone() {
        // trace the objective by re-running with growing caps
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 3;
        let mut h = Array2::<f64>::zeros((k, k));
        for i in 0..k {
            for j in i..k {
                let v: f64 = rng.random_range(-0.5..1.5);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        // make it PSD-ish by adding a diagonal shift
        for i in 0..k {
            h[(i, i)] += 2.0;
        }
        let g = Array1::from(vec![
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ]);
        let mut last = f64::INFINITY;
        for cap in 1..40 {
            let out = solve_simplex_qp(&h.view(), &g.view(), 0.0, cap);
            assert!(out.objective <= last + 1e-12);
            last = out.objective;
        }
    }

    /// Exhaustive-grid oracle over the simplex at the given resolution.
    pub(crate) fn grid_min_objective(
        h: &Array2<f64>,
        g: &Array1<f64>,
        resolution: usize,
    ) -> f64 {
        let k = g.len();
        let eval = |b: &[f64]| -> f64 {
            let mut quad = 0.0;
            let mut lin = 0.0;
            for i in 0..k {
                lin += g[i] * b[i];
                for j in 0..k {
                    quad += b[i] * h[(i, j)] * b[j];
                }
            }
            quad - 2.0 * lin
        };
        let mut best = f64::INFINITY;
        match k {
            1 => best = eval(&[1.0]),
            2 => {
                for i in 0..=resolution {
                    let a = i as f64 / resolution as f64;
                    best = best.min(eval(&[a, 1.0 - a]));
                }
            }
            3 => {
                for i in 0..=resolution {
                    for j in 0..=(resolution - i) {
                        let a = i as f64 / resolution as f64;
                        let b = j as f64 / resolution as f64;
                        best = best.min(eval(&[a, b, 1.0 - a - b]));
                    }
                }
            }
            _ => unimplemented!("grid oracle built for k <= 3"),
        }
        best
    }

    #[test]
    fn solver_matches_grid_search_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..30 {
            let k = 1 + trial % 3;
            let m = 6;
            let mut y = Array2::<f64>::zeros((k, m));
            let mut yp = Array2::<f64>::zeros((k, m));
            for i in 0..k {
                for c in 0..m {
                    y[(i, c)] = rng.random_range(0.0..1.0);
                    yp[(i, c)] = rng.random_range(0.0..1.0);
                }
            }
            let x = Array1::from((0..m).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>());
            let xp = Array1::from((0..m).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>());
            let mut h = Array2::<f64>::zeros((k, k));
            for i in 0..k {
                for j in 0..k {
                    let mut acc = 0.0;
                    for c in 0..m {
                        acc += y[(i, c)] * yp[(j, c)] + yp[(i, c)] * y[(j, c)];
                    }
                    h[(i, j)] = 0.5 * acc;
                }
            }
            let mut g = Array1::<f64>::zeros(k);
            for i in 0..k {
                for c in 0..m {
                    g[i] += 0.5 * (y[(i, c)] * xp[c] + yp[(i, c)] * x[c]);
                }
            }
            let out = solve_simplex_qp(&h.view(), &g.view(), 1e-9, 100_000);
            let grid = grid_min_objective(&h, &g, 1000);
            assert!(
                out.objective <= grid + 1e-6,
                "trial {trial}: solver {} vs grid {grid}",
                out.objective
            );
            assert_on_simplex(&out.b);
        }
    }

    #[test]
    fn estimate_b_recovers_vertices_on_a_synthetic_design() {
        use crate::detection::NovelPairSet;
        // 4 rows, rows 0 and 1 are the novel rows; rows 2, 3 mix them
        let dense = array![
            [0.6, 0.1, 0.0, 0.3],
            [0.0, 0.5, 0.4, 0.1],
            [0.3, 0.3, 0.2, 0.2],
            [0.42, 0.22, 0.12, 0.24],
        ];
        let mask = vec![false; 4];
        let targets = DenseTargets {
            values: dense.view(),
            zero_mask: &mask,
        };
        let novel = NovelPairSet {
            rows: vec![0, 1],
            q_values: vec![0.5, 0.5],
            rejected: vec![],
        };
        let weights = vec![1.0; 4];
        let est = estimate_b(&novel, &targets, &targets, &weights, 1.0, 1e-12, 50_000).unwrap();
        // novel rows regress onto themselves, mixtures onto their weights:
        // row 2 = 0.5 r0 + 0.5 r1, row 3 = 0.7 r0 + 0.3 r1
        assert_abs_diff_eq!(est.scaled[(0, 0)], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(est.scaled[(1, 1)], 1.0, epsilon = 1e-4);
        let row2 = est.scaled.row(2);
        assert_abs_diff_eq!(row2[0], 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(row2[1], 0.5, epsilon = 1e-4);
        let row3 = est.scaled.row(3);
        assert_abs_diff_eq!(row3[0], 0.7, epsilon = 1e-4);
        assert_abs_diff_eq!(row3[1], 0.3, epsilon = 1e-4);
    }

    #[test]
    fn zero_columns_are_reported() {
        use crate::detection::NovelPairSet;
        let dense = array![[0.5, 0.5], [0.0, 0.0]];
        let mask = vec![false, true];
        let targets = DenseTargets {
            values: dense.view(),
            zero_mask: &mask,
        };
        let novel = NovelPairSet {
            rows: vec![0, 1],
            q_values: vec![0.5, 0.5],
            rejected: vec![],
        };
        // row weights kill column contributions entirely
        let weights = vec![0.0, 0.0];
        match estimate_b(&novel, &targets, &targets, &weights, 1.0, 1e-8, 100) {
            Err(RankError::EmptyColumn { .. }) => {}
            other => panic!("expected empty column, got {other:?}"),
        }
    }
}
