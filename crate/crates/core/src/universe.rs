//! Item universe and the ordered-pair row indexing convention.

use crate::error::{RankError, Result};

/// The set of `Q` items under comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemUniverse {
    q: usize,
    labels: Option<Vec<String>>,
}

impl ItemUniverse {
    pub fn new(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(RankError::InvalidParameter(format!(
                "universe needs at least 2 items, got {q}"
            )));
        }
        Ok(Self { q, labels: None })
    }

    /// Universe with one display label per item. Labels must be unique.
    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        let u = Self::new(labels.len())?;
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(RankError::InvalidParameter(format!(
                    "duplicate item label {l:?}"
                )));
            }
        }
        Ok(Self {
            labels: Some(labels),
            ..u
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of ordered pairs, `W = Q(Q-1)`.
    pub fn num_rows(&self) -> usize {
        self.q * (self.q - 1)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn pair_index(&self) -> PairIndex {
        PairIndex::new(self.q)
    }
}

/// Bijection between ordered item pairs `(i, j)`, `i != j`, and row indices
/// `w` in `[0, Q(Q-1))`.
///
/// Layout: `w = i*(Q-1) + (j if j < i else j-1)`, so the rows preferred by
/// item `i` are contiguous and `flip` is O(1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    q: usize,
}

impl PairIndex {
    pub fn new(q: usize) -> Self {
        debug_assert!(q >= 2);
        Self { q }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn num_rows(&self) -> usize {
        self.q * (self.q - 1)
    }

    /// Row index of the ordered pair `(i, j)`.
    ///
    /// Panics if `i == j` or either index is out of range; callers parsing
    /// external data must validate first.
    pub fn row(&self, i: usize, j: usize) -> usize {
        assert!(
            i != j && i < self.q && j < self.q,
            "invalid ordered pair ({i}, {j}) for q = {}",
            self.q
        );
        i * (self.q - 1) + if j < i { j } else { j - 1 }
    }

    /// Ordered pair stored at row `w`.
    pub fn pair(&self, w: usize) -> (usize, usize) {
        assert!(w < self.num_rows(), "row {w} out of range");
        let i = w / (self.q - 1);
        let r = w % (self.q - 1);
        let j = if r < i { r } else { r + 1 };
        (i, j)
    }

    /// Row of the reversed pair: `(i, j) -> (j, i)`.
    pub fn flip(&self, w: usize) -> usize {
        let (i, j) = self.pair(w);
        self.row(j, i)
    }

    /// Number of unordered pairs, `Q(Q-1)/2`.
    pub fn num_unordered(&self) -> usize {
        self.q * (self.q - 1) / 2
    }

    /// Index of the unordered pair `{i, j}` in lexicographic `(min, max)`
    /// order.
    pub fn unordered_index(&self, i: usize, j: usize) -> usize {
        assert!(i != j && i < self.q && j < self.q);
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * self.q - a * (a + 1) / 2 + (b - a - 1)
    }

    /// Unordered pairs in lexicographic order.
    pub fn unordered_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_unordered());
        for i in 0..self.q {
            for j in (i + 1)..self.q {
                out.push((i, j));
            }
        }
        out
    }
}
