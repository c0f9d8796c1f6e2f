//! Novel-pair detection by random projections.
//!
//! Extreme rows of the co-occurrence matrix are exactly the novel pairs.
//! Each row's solid angle — the probability that it attains the maximum
//! projection along an isotropic random direction among the rows that are
//! provably distinct from it — is positive only at extreme rows, so a
//! Monte Carlo estimate of the angles followed by a greedy scan picks one
//! representative per ranking.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{RankError, Result};
use crate::moments::CooccurrenceEstimate;
use crate::rng::indexed_stream;

/// Law of the random projection directions. Indicator events are invariant
/// to positive per-direction scaling, so both laws agree draw-for-draw;
/// `Sphere` exists to exercise the general isotropic contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionLaw {
    Gaussian,
    Sphere,
}

impl DirectionLaw {
    pub fn as_str(&self) -> &'static str {
        match self {
            DirectionLaw::Gaussian => "gaussian",
            DirectionLaw::Sphere => "sphere",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DirectionLaw::Gaussian),
            "sphere" => Ok(DirectionLaw::Sphere),
            other => Err(RankError::InvalidParameter(format!(
                "unknown direction law {other:?}"
            ))),
        }
    }
}

/// Per-row sets `J_w` of rows whose squared row distance statistic
/// `E_ww - 2 E_wu + E_uu` clears `zeta / 2`.
///
/// Rows flagged in the zero mask get every other row as neighbors; they are
/// excluded from selection separately.
#[derive(Debug, Clone)]
pub struct NeighborSets {
    pub sets: Vec<Vec<u32>>,
    pub zeta: f64,
}

pub fn build_neighbor_sets(est: &CooccurrenceEstimate, zeta: f64) -> NeighborSets {
    let w_dim = est.w_dim();
    let e = &est.e;
    let mut sets = Vec::with_capacity(w_dim);
    for w in 0..w_dim {
        let mut set = Vec::new();
        if est.zero_mask[w] {
            set.extend((0..w_dim as u32).filter(|&u| u as usize != w));
        } else {
            for u in 0..w_dim {
                if u == w {
                    continue;
                }
                let stat = e[(w, w)] - 2.0 * e[(w, u)] + e[(u, u)];
                if stat >= zeta / 2.0 {
                    set.push(u as u32);
                }
            }
        }
        sets.push(set);
    }
    NeighborSets { sets, zeta }
}

/// Monte Carlo solid-angle estimates.
#[derive(Debug, Clone)]
pub struct SolidAngleEstimates {
    pub q_hat: Vec<f64>,
    pub projections: usize,
    pub direction_law: DirectionLaw,
}

/// Estimate every row's solid angle from `p` random directions:
/// `q^_w = (1/P) sum_r 1{ E_u d_r <= E_w d_r  for all u in J_w }`.
///
/// Direction `r` is drawn from its own seed-derived substream, so the
/// result is independent of chunking or scheduling.
pub fn estimate_solid_angles(
    est: &CooccurrenceEstimate,
    neighbors: &NeighborSets,
    p: usize,
    law: DirectionLaw,
    seed: u64,
) -> Result<SolidAngleEstimates> {
    if p < 1 {
        return Err(RankError::InvalidParameter(
            "need at least one projection".into(),
        ));
    }
    let w_dim = est.w_dim();
    if neighbors.sets.len() != w_dim {
        return Err(RankError::DimensionMismatch(format!(
            "{} neighbor sets for {} rows",
            neighbors.sets.len(),
            w_dim
        )));
    }
    let mut counts = vec![0u64; w_dim];
    const CHUNK: usize = 4096;
    let mut start = 0usize;
    while start < p {
        let block = CHUNK.min(p - start);
        let mut dirs = Array2::<f64>::zeros((w_dim, block));
        for c in 0..block {
            let mut rng = indexed_stream(seed, "projections", (start + c) as u64);
            let mut norm_sq = 0.0;
            for w in 0..w_dim {
                let v: f64 = StandardNormal.sample(&mut rng);
                dirs[(w, c)] = v;
                norm_sq += v * v;
            }
            if law == DirectionLaw::Sphere && norm_sq > 0.0 {
                let inv = norm_sq.sqrt().recip();
                for w in 0..w_dim {
                    dirs[(w, c)] *= inv;
                }
            }
        }
        let proj = est.e.dot(&dirs);
        for w in 0..w_dim {
            let set = &neighbors.sets[w];
            'dir: for c in 0..block {
                let own = proj[(w, c)];
                for &u in set {
                    if proj[(u as usize, c)] > own {
                        continue 'dir;
                    }
                }
                counts[w] += 1;
            }
        }
        start += block;
    }
    Ok(SolidAngleEstimates {
        q_hat: counts.iter().map(|&c| c as f64 / p as f64).collect(),
        projections: p,
        direction_law: law,
    })
}

/// Why a scanned row was not accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectionReason {
    /// Row never observed; ineligible.
    ZeroRow,
    /// Not in the neighbor sets of every previously accepted row.
    SameClusterAsAccepted,
}

/// The `K` selected novel-pair rows with selection provenance.
#[derive(Debug, Clone)]
pub struct NovelPairSet {
    pub rows: Vec<usize>,
    /// Solid-angle estimates of the selected rows, in selection order.
    pub q_values: Vec<f64>,
    /// Rows visited but rejected before selection finished.
    pub rejected: Vec<(usize, RejectionReason)>,
}

/// Greedy scan by descending solid angle (ties to the lower row index),
/// accepting a row only when every previously accepted row lists it as a
/// neighbor, until exactly `k` rows are accepted.
pub fn select_novel_pairs(
    angles: &SolidAngleEstimates,
    neighbors: &NeighborSets,
    k: usize,
    zero_mask: &[bool],
) -> Result<NovelPairSet> {
    if k < 1 {
        return Err(RankError::InvalidParameter("need k >= 1".into()));
    }
    let w_dim = angles.q_hat.len();
    let mut order: Vec<usize> = (0..w_dim).collect();
    order.sort_by(|&a, &b| {
        angles.q_hat[b]
            .partial_cmp(&angles.q_hat[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut rows = Vec::with_capacity(k);
    let mut q_values = Vec::with_capacity(k);
    let mut rejected = Vec::new();
    for w in order {
        if rows.len() == k {
            break;
        }
        if zero_mask.get(w).copied().unwrap_or(false) {
            rejected.push((w, RejectionReason::ZeroRow));
            continue;
        }
        let distinct = rows
            .iter()
            .all(|&acc: &usize| neighbors.sets[acc].binary_search(&(w as u32)).is_ok());
        if distinct {
            rows.push(w);
            q_values.push(angles.q_hat[w]);
        } else {
            rejected.push((w, RejectionReason::SameClusterAsAccepted));
        }
    }
    if rows.len() < k {
        return Err(RankError::InsufficientClusters {
            found: rows.len(),
            needed: k,
            partial: rows,
        });
    }
    Ok(NovelPairSet {
        rows,
        q_values,
        rejected,
    })
}

/// High-projection-count oracle on exact moments: neighbor sets from the
/// known gap (`zeta = d/2`) and the same estimator as the empirical path.
pub fn oracle_solid_angles(
    exact: &CooccurrenceEstimate,
    gap_d: f64,
    p: usize,
    law: DirectionLaw,
    seed: u64,
) -> Result<(SolidAngleEstimates, NeighborSets)> {
    let neighbors = build_neighbor_sets(exact, gap_d / 2.0);
    let angles = estimate_solid_angles(exact, &neighbors, p, law, seed)?;
    Ok((angles, neighbors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GroundTruthModel, PairDistribution};
    use crate::moments::{
        exact_e, model_constants, CooccurrenceEstimate, MomentSource, DEFAULT_W_CAP,
    };
    use crate::prior::{Prior, VertexPrior};
    use crate::ranking::RankingMatrix;
    use crate::universe::{ItemUniverse, PairIndex};
    use ndarray::array;

    fn cyclic_q3_vertex() -> GroundTruthModel {
        let sigma = RankingMatrix::from_permutations(
            3,
            &[vec![0, 1, 2], vec![2, 0, 1], vec![1, 2, 0]],
        )
        .unwrap();
        GroundTruthModel::new(
            ItemUniverse::new(3).unwrap(),
            sigma,
            PairDistribution::uniform(3).unwrap(),
            Prior::Vertex(VertexPrior::uniform(3).unwrap()),
        )
        .unwrap()
    }

    fn plain_estimate(e: Array2<f64>) -> CooccurrenceEstimate {
        let w = e.nrows();
        CooccurrenceEstimate {
            e,
            m: 0,
            effective_n: 0.0,
            symmetrized: true,
            source: MomentSource::Exact,
            zero_mask: vec![false; w],
        }
    }

    #[test]
    fn neighbor_sets_on_cyclic_exact_e_follow_cluster_structure() {
        let model = cyclic_q3_vertex();
        let est = exact_e(&model, DEFAULT_W_CAP).unwrap();
        let consts = model_constants(&model).unwrap();
        let neighbors = build_neighbor_sets(&est, consts.d / 2.0);
        let pairs = PairIndex::new(3);
        // every cluster here is a single novel pair, so J of a novel row is
        // everything except the row itself
        for novel in [pairs.row(0, 2), pairs.row(1, 0), pairs.row(2, 1)] {
            let expect: Vec<u32> = (0..est.w_dim() as u32)
                .filter(|&u| u as usize != novel)
                .collect();
            assert_eq!(neighbors.sets[novel], expect);
        }
    }

    #[test]
    fn identical_rows_are_never_neighbors() {
        let e = array![[1.0, 1.0], [1.0, 1.0]];
        let neighbors = build_neighbor_sets(&plain_estimate(e), 0.1);
        assert!(neighbors.sets[0].is_empty());
        assert!(neighbors.sets[1].is_empty());
    }

    #[test]
    fn huge_zeta_empties_all_sets() {
        let model = cyclic_q3_vertex();
        let est = exact_e(&model, DEFAULT_W_CAP).unwrap();
        let max = est.e.iter().cloned().fold(0.0f64, f64::max);
        let neighbors = build_neighbor_sets(&est, 8.0 * max);
        assert!(neighbors.sets.iter().all(Vec::is_empty));
    }

    #[test]
    fn two_distinct_rows_split_directions_evenly() {
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        let est = plain_estimate(e);
        let neighbors = build_neighbor_sets(&est, 1.0);
        assert_eq!(neighbors.sets[0], vec![1]);
        assert_eq!(neighbors.sets[1], vec![0]);
        let p = 20_000;
        let angles =
            estimate_solid_angles(&est, &neighbors, p, DirectionLaw::Gaussian, 9).unwrap();
        let band = 3.0 * (0.25 / p as f64).sqrt();
        assert!((angles.q_hat[0] - 0.5).abs() < band);
        assert!((angles.q_hat[1] - 0.5).abs() < band);
    }

    #[test]
    fn cyclic_exact_angles_concentrate_on_novel_rows() {
        let model = cyclic_q3_vertex();
        let est = exact_e(&model, DEFAULT_W_CAP).unwrap();
        let consts = model_constants(&model).unwrap();
        let (angles, _) =
            oracle_solid_angles(&est, consts.d, 100_000, DirectionLaw::Gaussian, 4).unwrap();
        let pairs = PairIndex::new(3);
        let novel = [pairs.row(0, 2), pairs.row(1, 0), pairs.row(2, 1)];
        let band = 3.0 * (0.25f64 / 100_000.0).sqrt();
        for w in 0..est.w_dim() {
            if novel.contains(&w) {
                // three symmetric clusters carry a third of the mass each
                assert!(
                    (angles.q_hat[w] - 1.0 / 3.0).abs() < band,
                    "row {w}: {}",
                    angles.q_hat[w]
                );
            } else {
                assert_eq!(angles.q_hat[w], 0.0, "non-novel row {w} got mass");
            }
        }
    }

    #[test]
    fn gaussian_and_sphere_agree_draw_for_draw() {
        let model = cyclic_q3_vertex();
        let est = exact_e(&model, DEFAULT_W_CAP).unwrap();
        let neighbors = build_neighbor_sets(&est, 0.05);
        let a =
            estimate_solid_angles(&est, &neighbors, 2000, DirectionLaw::Gaussian, 7).unwrap();
        let b =
            estimate_solid_angles(&est, &neighbors, 2000, DirectionLaw::Sphere, 7).unwrap();
        assert_eq!(a.q_hat, b.q_hat);
    }

    #[test]
    fn oracle_matches_estimator_on_identical_inputs() {
        let model = cyclic_q3_vertex();
        let est = exact_e(&model, DEFAULT_W_CAP).unwrap();
        let consts = model_constants(&model).unwrap();
        let (a, neighbors) =
            oracle_solid_angles(&est, consts.d, 5000, DirectionLaw::Gaussian, 12).unwrap();
        let b =
            estimate_solid_angles(&est, &neighbors, 5000, DirectionLaw::Gaussian, 12).unwrap();
        assert_eq!(a.q_hat, b.q_hat);
    }

    #[test]
    fn doubling_projections_shrinks_the_standard_error() {
        let model = cyclic_q3_vertex();
        let est = exact_e(&model, DEFAULT_W_CAP).unwrap();
        let consts = model_constants(&model).unwrap();
        let novel_row = PairIndex::new(3).row(0, 2);
        let spread = |p: usize| -> f64 {
            let vals: Vec<f64> = (0..20)
                .map(|s| {
                    oracle_solid_angles(&est, consts.d, p, DirectionLaw::Gaussian, 100 + s)
                        .unwrap()
                        .0
                        .q_hat[novel_row]
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
        };
        let s1 = spread(500);
        let s2 = spread(4000);
        // an eightfold P increase should shrink sigma by ~sqrt(8); allow slack
        assert!(s2 < s1 / 1.6, "{s1} vs {s2}");
    }

    #[test]
    fn selection_picks_one_representative_per_cluster() {
        let model = cyclic_q3_vertex();
        let est = exact_e(&model, DEFAULT_W_CAP).unwrap();
        let consts = model_constants(&model).unwrap();
        let (angles, neighbors) =
            oracle_solid_angles(&est, consts.d, 10_000, DirectionLaw::Gaussian, 3).unwrap();
        let picked = select_novel_pairs(&angles, &neighbors, 3, &est.zero_mask).unwrap();
        let pairs = PairIndex::new(3);
        let mut rows = picked.rows.clone();
        rows.sort_unstable();
        let mut expect = vec![pairs.row(0, 2), pairs.row(1, 0), pairs.row(2, 1)];
        expect.sort_unstable();
        assert_eq!(rows, expect);
    }

    #[test]
    fn k1_takes_the_argmax_row() {
        let angles = SolidAngleEstimates {
            q_hat: vec![0.1, 0.7, 0.2],
            projections: 10,
            direction_law: DirectionLaw::Gaussian,
        };
        let neighbors = NeighborSets {
            sets: vec![vec![1, 2], vec![0, 2], vec![0, 1]],
            zeta: 0.1,
        };
        let picked = select_novel_pairs(&angles, &neighbors, 1, &[false; 3]).unwrap();
        assert_eq!(picked.rows, vec![1]);
    }

    #[test]
    fn tied_maxima_in_one_cluster_resolve_to_the_lower_row() {
        // rows 0 and 1 are duplicates (not each other's neighbors)
        let angles = SolidAngleEstimates {
            q_hat: vec![0.5, 0.5, 0.3],
            projections: 10,
            direction_law: DirectionLaw::Gaussian,
        };
        let neighbors = NeighborSets {
            sets: vec![vec![2], vec![2], vec![0, 1]],
            zeta: 0.1,
        };
        let picked = select_novel_pairs(&angles, &neighbors, 2, &[false; 3]).unwrap();
        assert_eq!(picked.rows, vec![0, 2]);
        assert!(picked
            .rejected
            .contains(&(1, RejectionReason::SameClusterAsAccepted)));
    }

    #[test]
    fn selection_is_invariant_to_positive_rescaling() {
        let model = cyclic_q3_vertex();
        let est = exact_e(&model, DEFAULT_W_CAP).unwrap();
        let consts = model_constants(&model).unwrap();
        let (mut angles, neighbors) =
            oracle_solid_angles(&est, consts.d, 3000, DirectionLaw::Gaussian, 8).unwrap();
        let base = select_novel_pairs(&angles, &neighbors, 3, &est.zero_mask).unwrap();
        for q in angles.q_hat.iter_mut() {
            *q *= 17.5;
        }
        let scaled = select_novel_pairs(&angles, &neighbors, 3, &est.zero_mask).unwrap();
        assert_eq!(base.rows, scaled.rows);
    }

    #[test]
    fn masked_rows_are_never_selected() {
        let angles = SolidAngleEstimates {
            q_hat: vec![0.9, 0.1],
            projections: 10,
            direction_law: DirectionLaw::Gaussian,
        };
        let neighbors = NeighborSets {
            sets: vec![vec![1], vec![0]],
            zeta: 0.1,
        };
        let picked = select_novel_pairs(&angles, &neighbors, 1, &[true, false]).unwrap();
        assert_eq!(picked.rows, vec![1]);
        assert!(picked.rejected.contains(&(0, RejectionReason::ZeroRow)));
    }

    #[test]
    fn too_few_clusters_errors_with_partial_set() {
        let angles = SolidAngleEstimates {
            q_hat: vec![0.6, 0.4],
            projections: 10,
            direction_law: DirectionLaw::Gaussian,
        };
        // duplicates of one another: no mutual neighborhood
        let neighbors = NeighborSets {
            sets: vec![vec![], vec![]],
            zeta: 0.1,
        };
        match select_novel_pairs(&angles, &neighbors, 2, &[false, false]) {
            Err(RankError::InsufficientClusters {
                found,
                needed,
                partial,
            }) => {
                assert_eq!((found, needed), (1, 2));
                assert_eq!(partial, vec![0]);
            }
            other => panic!("expected cluster failure, got {other:?}"),
        }
    }
}
