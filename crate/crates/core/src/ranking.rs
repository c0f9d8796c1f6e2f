//! Binary ranking matrices over ordered item pairs.

use ndarray::{Array1, Array2};

use crate::error::{RankError, Result};
use crate::universe::PairIndex;

/// `W x K` binary matrix whose column `k` encodes a total order: entry
/// `(i, j)` is 1 exactly when item `i` is preferred over item `j` in
/// ranking `k`.
///
/// Every column satisfies complementarity (`(i,j)` and `(j,i)` sum to 1).
/// Columns built from permutations are additionally transitive; estimated
/// columns need not be and are stored as-is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingMatrix {
    q: usize,
    data: Array2<u8>,
}

/// Per-ranking novel pairs plus the shared non-novel rows.
///
/// Row `w` is novel for ranking `k` when `k` is the only ranking preferring
/// that orientation. The matrix is separable when every ranking owns at
/// least one novel pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NovelPairs {
    pub per_ranking: Vec<Vec<usize>>,
    pub non_novel: Vec<usize>,
    pub separable: bool,
}

impl RankingMatrix {
    /// Wrap a `W x K` 0/1 matrix, validating complementarity of every column.
    pub fn from_matrix(q: usize, data: Array2<u8>) -> Result<Self> {
        let pairs = PairIndex::new(q);
        if data.nrows() != pairs.num_rows() {
            return Err(RankError::DimensionMismatch(format!(
                "ranking matrix has {} rows, expected {}",
                data.nrows(),
                pairs.num_rows()
            )));
        }
        if data.ncols() == 0 {
            return Err(RankError::InvalidParameter("no ranking columns".into()));
        }
        for k in 0..data.ncols() {
            for w in 0..data.nrows() {
                let v = data[(w, k)];
                if v > 1 {
                    return Err(RankError::InvalidParameter(format!(
                        "ranking entry ({w}, {k}) is {v}, expected 0 or 1"
                    )));
                }
                let f = pairs.flip(w);
                if w < f && data[(w, k)] + data[(f, k)] != 1 {
                    let (i, j) = pairs.pair(w);
                    return Err(RankError::InvalidParameter(format!(
                        "column {k} breaks complementarity on pair ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { q, data })
    }

    /// Column encoding of a permutation given as item positions:
    /// `perm[i]` is the position of item `i`, smaller position ranks higher.
    pub fn column_from_permutation(q: usize, perm: &[usize]) -> Result<Array1<u8>> {
        validate_permutation(q, perm)?;
        let pairs = PairIndex::new(q);
        let mut col = Array1::zeros(pairs.num_rows());
        for i in 0..q {
            for j in 0..q {
                if i != j && perm[i] < perm[j] {
                    col[pairs.row(i, j)] = 1;
                }
            }
        }
        Ok(col)
    }

    /// Assemble a ranking matrix from `K` permutations.
    pub fn from_permutations(q: usize, perms: &[Vec<usize>]) -> Result<Self> {
        if perms.is_empty() {
            return Err(RankError::InvalidParameter("no permutations given".into()));
        }
        let pairs = PairIndex::new(q);
        let mut data = Array2::zeros((pairs.num_rows(), perms.len()));
        for (k, perm) in perms.iter().enumerate() {
            let col = Self::column_from_permutation(q, perm)?;
            data.column_mut(k).assign(&col);
        }
        Ok(Self { q, data })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.data.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, w: usize, k: usize) -> u8 {
        self.data[(w, k)]
    }

    pub fn matrix(&self) -> &Array2<u8> {
        &self.data
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    pub fn pair_index(&self) -> PairIndex {
        PairIndex::new(self.q)
    }

    /// Whether column `k` is transitive: `(i,j)` and `(j,l)` preferred
    /// implies `(i,l)` preferred.
    pub fn is_transitive(&self, k: usize) -> bool {
        let pairs = self.pair_index();
        for i in 0..self.q {
            for j in 0..self.q {
                if i == j || self.data[(pairs.row(i, j), k)] == 0 {
                    continue;
                }
                for l in 0..self.q {
                    if l == i || l == j {
                        continue;
                    }
                    if self.data[(pairs.row(j, l), k)] == 1
                        && self.data[(pairs.row(i, l), k)] == 0
                    {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Partition rows into per-ranking novel pairs and the non-novel rest.
    pub fn find_novel_pairs(&self) -> NovelPairs {
        let k = self.k();
        let mut per_ranking = vec![Vec::new(); k];
        let mut non_novel = Vec::new();
        for w in 0..self.num_rows() {
            let mut owner = None;
            let mut count = 0;
            for c in 0..k {
                if self.data[(w, c)] == 1 {
                    count += 1;
                    owner = Some(c);
                }
            }
            match (count, owner) {
                (1, Some(c)) => per_ranking[c].push(w),
                _ => non_novel.push(w),
            }
        }
        let separable = per_ranking.iter().all(|s| !s.is_empty());
        NovelPairs {
            per_ranking,
            non_novel,
            separable,
        }
    }

    /// Reorder columns by `perm` (`new column c = old column perm[c]`).
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        validate_permutation(self.k(), perm)?;
        let mut data = Array2::zeros(self.data.raw_dim());
        for (c, &src) in perm.iter().enumerate() {
            data.column_mut(c).assign(&self.data.column(src));
        }
        Ok(Self { q: self.q, data })
    }
}

fn validate_permutation(n: usize, perm: &[usize]) -> Result<()> {
    if perm.len() != n {
        return Err(RankError::InvalidPermutation(format!(
            "length {} does not match {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(RankError::InvalidPermutation(format!(
                "{perm:?} is not a permutation of 0..{n}"
            )));
        }
        seen[p] = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::universe::PairIndex;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The three cyclic orders over three items; each ranking owns exactly
    /// one novel pair: (0,2), (1,0), (2,1).
    pub(crate) fn cyclic_q3() -> RankingMatrix {
        RankingMatrix::from_permutations(
            3,
            &[vec![0, 1, 2], vec![2, 0, 1], vec![1, 2, 0]],
        )
        .unwrap()
    }

    #[test]
    fn identity_order_q3() {
        let pairs = PairIndex::new(3);
        let col = RankingMatrix::column_from_permutation(3, &[0, 1, 2]).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_eq!(col[pairs.row(i, j)], 1);
            assert_eq!(col[pairs.row(j, i)], 0);
        }
    }

    #[test]
    fn two_item_reversal() {
        let pairs = PairIndex::new(2);
        let col = RankingMatrix::column_from_permutation(2, &[1, 0]).unwrap();
        assert_eq!(col[pairs.row(1, 0)], 1);
        assert_eq!(col[pairs.row(0, 1)], 0);
    }

    #[test]
    fn non_permutation_rejected() {
        assert!(RankingMatrix::column_from_permutation(3, &[0, 0, 2]).is_err());
        assert!(RankingMatrix::column_from_permutation(3, &[0, 1]).is_err());
        assert!(RankingMatrix::column_from_permutation(3, &[0, 1, 3]).is_err());
    }

    #[test]
    fn cyclic_orders_have_the_expected_novel_pairs() {
        let sigma = cyclic_q3();
        let pairs = PairIndex::new(3);
        let novel = sigma.find_novel_pairs();
        assert!(novel.separable);
        assert_eq!(novel.per_ranking[0], vec![pairs.row(0, 2)]);
        assert_eq!(novel.per_ranking[1], vec![pairs.row(1, 0)]);
        assert_eq!(novel.per_ranking[2], vec![pairs.row(2, 1)]);
    }

    #[test]
    fn single_ranking_every_preferred_pair_is_novel() {
        let sigma = RankingMatrix::from_permutations(4, &[vec![0, 1, 2, 3]]).unwrap();
        let novel = sigma.find_novel_pairs();
        assert!(novel.separable);
        assert_eq!(novel.per_ranking[0].len(), 6);
        assert_eq!(novel.non_novel.len(), 6);
    }

    #[test]
    fn identical_columns_are_not_separable() {
        let sigma =
            RankingMatrix::from_permutations(3, &[vec![0, 1, 2], vec![0, 1, 2]]).unwrap();
        let novel = sigma.find_novel_pairs();
        assert!(!novel.separable);
        assert!(novel.per_ranking.iter().all(|s| s.is_empty()));
    }

    /// Independent novel-pair scan straight from the definition: column k is
    /// the unique column with a 1 in row w.
    fn brute_force_novel(sigma: &RankingMatrix) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); sigma.k()];
        for w in 0..sigma.num_rows() {
            for k in 0..sigma.k() {
                let unique = sigma.get(w, k) == 1
                    && (0..sigma.k()).all(|l| l == k || sigma.get(w, l) == 0);
                if unique {
                    out[k].push(w);
                }
            }
        }
        out
    }

    #[test]
    fn novel_pairs_match_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let q = 2 + (rand::Rng::random_range(&mut rng, 0..5)) as usize;
            let k = 1 + (rand::Rng::random_range(&mut rng, 0..4)) as usize;
            let perms: Vec<Vec<usize>> = (0..k)
                .map(|_| {
                    let mut p: Vec<usize> = (0..q).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect();
            let sigma = RankingMatrix::from_permutations(q, &perms).unwrap();
            assert_eq!(sigma.find_novel_pairs().per_ranking, brute_force_novel(&sigma));
        }
    }

    #[test]
    fn permutation_columns_are_complementary_and_transitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for q in 2..=12usize {
            let mut p: Vec<usize> = (0..q).collect();
            p.shuffle(&mut rng);
            let sigma = RankingMatrix::from_permutations(q, &[p]).unwrap();
            let pairs = sigma.pair_index();
            for w in 0..sigma.num_rows() {
                assert_eq!(sigma.get(w, 0) + sigma.get(pairs.flip(w), 0), 1);
            }
            assert!(sigma.is_transitive(0));
        }
    }
}
