//! Comparison datasets and their sparse count representation.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{RankError, Result};
use crate::universe::PairIndex;

/// Version tag of the on-disk pair-index convention.
pub const CONVENTION_VERSION: &str = "pairidx-v1";

/// Cap on the total comparisons accepted from a dataset file.
const MAX_FILE_COMPARISONS: u64 = 100_000_000;

/// Per-user sequences of ordered comparisons, stored as row indices into the
/// pair layout of [`PairIndex`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonDataset {
    q: usize,
    users: Vec<Vec<u32>>,
}

impl ComparisonDataset {
    pub fn new(q: usize, users: Vec<Vec<u32>>) -> Result<Self> {
        if q < 2 {
            return Err(RankError::InvalidParameter(format!(
                "dataset needs q >= 2, got {q}"
            )));
        }
        let w_dim = q * (q - 1);
        for (m, seq) in users.iter().enumerate() {
            if let Some(&w) = seq.iter().find(|&&w| w as usize >= w_dim) {
                return Err(RankError::InvalidParameter(format!(
                    "user {m} holds row {w}, valid range is 0..{w_dim}"
                )));
            }
        }
        Ok(Self { q, users })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn w_dim(&self) -> usize {
        self.q * (self.q - 1)
    }

    /// Number of users `M`.
    pub fn m(&self) -> usize {
        self.users.len()
    }

    pub fn user(&self, m: usize) -> &[u32] {
        &self.users[m]
    }

    pub fn users(&self) -> &[Vec<u32>] {
        &self.users
    }

    pub fn total_comparisons(&self) -> usize {
        self.users.iter().map(Vec::len).sum()
    }

    pub fn pair_index(&self) -> PairIndex {
        PairIndex::new(self.q)
    }

    /// Sufficient statistics: per-user counts of each comparison row.
    pub fn counts(&self) -> SparseCounts {
        let cols = self
            .users
            .iter()
            .map(|seq| {
                let mut sorted = seq.clone();
                sorted.sort_unstable();
                let mut col: Vec<(u32, u32)> = Vec::new();
                for &w in &sorted {
                    match col.last_mut() {
                        Some((lw, c)) if *lw == w => *c += 1,
                        _ => col.push((w, 1)),
                    }
                }
                col
            })
            .collect();
        SparseCounts {
            w_dim: self.w_dim(),
            cols,
        }
    }

    /// Write the triplet text format: a header line
    /// `pairidx-v1 <M> <Q>` followed by `user row count` lines sorted by
    /// `(user, row)`.
    ///
    /// Arrival order within a user is not preserved; loading expands counts
    /// in ascending row order. Comparisons are exchangeable given the user's
    /// weights, so downstream position-based splits remain valid.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", CONVENTION_VERSION, self.m(), self.q)?;
        let counts = self.counts();
        for (m, col) in counts.cols.iter().enumerate() {
            for &(w, c) in col {
                writeln!(out, "{m} {w} {c}")?;
            }
        }
        Ok(())
    }

    /// Parse the triplet text format. Strict: unknown header, out-of-range
    /// indices, duplicate entries, or oversized counts are errors.
    pub fn read_triplets(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| RankError::malformed("dataset file", format!("not utf-8: {e}")))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| RankError::malformed("dataset file", "empty file"))?;
        let mut fields = header.split_ascii_whitespace();
        let tag = fields.next().unwrap_or("");
        if tag != CONVENTION_VERSION {
            return Err(RankError::malformed(
                "dataset file",
                format!("unknown convention {tag:?}"),
            ));
        }
        let m: u64 = parse_field(fields.next(), "user count")?;
        let q: u64 = parse_field(fields.next(), "item count")?;
        if fields.next().is_some() {
            return Err(RankError::malformed("dataset file", "trailing header fields"));
        }
        if !(2..=1_000_000).contains(&q) || m > MAX_FILE_COMPARISONS {
            return Err(RankError::malformed(
                "dataset file",
                format!("implausible sizes M={m} Q={q}"),
            ));
        }
        let w_dim = q * (q - 1);
        let mut users: Vec<Vec<(u32, u32)>> = vec![Vec::new(); m as usize];
        let mut total: u64 = 0;
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_ascii_whitespace();
            let um: u64 = parse_field(f.next(), "user id")?;
            let w: u64 = parse_field(f.next(), "row index")?;
            let c: u64 = parse_field(f.next(), "count")?;
            if f.next().is_some() {
                return Err(RankError::malformed(
                    "dataset file",
                    format!("trailing fields on line {}", lineno + 2),
                ));
            }
            if um >= m || w >= w_dim || c == 0 {
                return Err(RankError::malformed(
                    "dataset file",
                    format!("bad triplet ({um}, {w}, {c}) on line {}", lineno + 2),
                ));
            }
            total += c;
            if total > MAX_FILE_COMPARISONS {
                return Err(RankError::malformed(
                    "dataset file",
                    "comparison total exceeds the load cap",
                ));
            }
            users[um as usize].push((w as u32, c as u32));
        }
        let mut seqs = Vec::with_capacity(users.len());
        for (um, mut col) in users.into_iter().enumerate() {
            col.sort_unstable();
            if col.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(RankError::malformed(
                    "dataset file",
                    format!("duplicate row entry for user {um}"),
                ));
            }
            let mut seq = Vec::new();
            for (w, c) in col {
                seq.extend(std::iter::repeat_n(w, c as usize));
            }
            seqs.push(seq);
        }
        ComparisonDataset::new(q as usize, seqs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = BufWriter::new(file);
        self.write_triplets(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_triplets(&bytes)
    }
}

fn parse_field(field: Option<&str>, what: &str) -> Result<u64> {
    field
        .ok_or_else(|| RankError::malformed("dataset file", format!("missing {what}")))?
        .parse()
        .map_err(|e| RankError::malformed("dataset file", format!("bad {what}: {e}")))
}

/// Sparse `W x M` nonnegative integer count matrix stored per user column,
/// each column sorted by row index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseCounts {
    pub w_dim: usize,
    pub cols: Vec<Vec<(u32, u32)>>,
}

impl SparseCounts {
    pub fn m(&self) -> usize {
        self.cols.len()
    }

    pub fn col_sum(&self, m: usize) -> u64 {
        self.cols[m].iter().map(|&(_, c)| u64::from(c)).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.w_dim];
        for col in &self.cols {
            for &(w, c) in col {
                sums[w as usize] += f64::from(c);
            }
        }
        sums
    }

    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut dense = ndarray::Array2::zeros((self.w_dim, self.m()));
        for (m, col) in self.cols.iter().enumerate() {
            for &(w, c) in col {
                dense[(w as usize, m)] = f64::from(c);
            }
        }
        dense
    }
}
