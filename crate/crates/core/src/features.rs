//! Pairwise distance features derived from alignments.
//!
//! For a path of length `L` between sequences of lengths `I` and `J`:
//!
//! | feature     | value                                  |
//! |-------------|----------------------------------------|
//! | `cost`      | `cumulative_cost / L`                  |
//! | `warp_opt`  | `(L - max(I, J)) / max(I, J)`          |
//! | `warp_mean` | `(L - max(I, J)) / ((I + J) / 2)`      |
//! | `len`       | `1 - min(I, J) / max(I, J)`            |
//!
//! `max(I, J)` is the length of the shortest admissible path, so both warp
//! features are zero for a maximally diagonal alignment.

use alloc::string::String;
use alloc::vec::Vec;

use crate::align::{dtw_align, AlignError, AlignParams, AlignmentResult};
use crate::chordify::ChordSequence;
use crate::matrix::DistanceMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("alignment has no path; warp features need one")]
    MissingPath,
    #[error("a piece needs at least two transcriptions, got {0}")]
    UnclusterablePiece(usize),
    #[error("aligning `{i_id}` with `{j_id}`: {source}")]
    Pair {
        i_id: String,
        j_id: String,
        source: AlignError,
    },
    #[error("feature weights must be finite, non-negative and not all zero")]
    InvalidWeights,
}

/// How the cumulative alignment cost is scaled into `cost`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostNorm {
    /// Divide by the warping path length.
    #[default]
    PathLength,
    /// Divide by `max(I, J)`.
    MaxLength,
    /// Use the raw cumulative cost.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairFeatures {
    pub cost: f64,
    pub warp_opt: f64,
    pub warp_mean: f64,
    pub len: f64,
}

pub fn pair_features(a: &AlignmentResult) -> Result<PairFeatures, FeatureError> {
    pair_features_with(a, CostNorm::default())
}

pub fn pair_features_with(a: &AlignmentResult, norm: CostNorm) -> Result<PairFeatures, FeatureError> {
    let path = a.path.as_ref().ok_or(FeatureError::MissingPath)?;
    let steps = path.len() as f64;
    let longest = a.len_i.max(a.len_j) as f64;
    let shortest = a.len_i.min(a.len_j) as f64;
    let mean = (a.len_i + a.len_j) as f64 / 2.0;
    let excess = steps - longest;
    let cost = match norm {
        CostNorm::PathLength => a.cumulative_cost / steps,
        CostNorm::MaxLength => a.cumulative_cost / longest,
        CostNorm::None => a.cumulative_cost,
    };
    Ok(PairFeatures {
        cost,
        warp_opt: excess / longest,
        warp_mean: excess / mean,
        len: 1.0 - shortest / longest,
    })
}

/// The four pairwise feature matrices of one piece.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrices {
    pub ids: Vec<String>,
    pub cost: DistanceMatrix,
    pub warp_opt: DistanceMatrix,
    pub warp_mean: DistanceMatrix,
    pub len: DistanceMatrix,
}

impl FeatureMatrices {
    pub const NAMES: [&'static str; 4] = ["cost", "warp_opt", "warp_mean", "len"];

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// The matrices in [`FeatureMatrices::NAMES`] order.
    pub fn matrices(&self) -> [&DistanceMatrix; 4] {
        [&self.cost, &self.warp_opt, &self.warp_mean, &self.len]
    }

    pub fn pair(&self, i: usize, j: usize) -> PairFeatures {
        PairFeatures {
            cost: self.cost.get(i, j),
            warp_opt: self.warp_opt.get(i, j),
            warp_mean: self.warp_mean.get(i, j),
            len: self.len.get(i, j),
        }
    }

    /// Assembles matrices from per-pair features listed in `i < j` row order.
    pub fn from_pairs(ids: Vec<String>, pairs: &[PairFeatures]) -> Self {
        let n = ids.len();
        debug_assert_eq!(pairs.len(), n * n.saturating_sub(1) / 2);
        let mut m = FeatureMatrices {
            ids,
            cost: DistanceMatrix::zeros(n),
            warp_opt: DistanceMatrix::zeros(n),
            warp_mean: DistanceMatrix::zeros(n),
            len: DistanceMatrix::zeros(n),
        };
        for ((i, j), f) in upper_pairs(n).zip(pairs) {
            m.cost.set_sym(i, j, f.cost);
            m.warp_opt.set_sym(i, j, f.warp_opt);
            m.warp_mean.set_sym(i, j, f.warp_mean);
            m.len.set_sym(i, j, f.len);
        }
        m
    }

    /// Same piece with transcriptions reordered (`order[k]` is the old index).
    pub fn permuted(&self, order: &[usize]) -> Self {
        FeatureMatrices {
            ids: order.iter().map(|&k| self.ids[k].clone()).collect(),
            cost: self.cost.permuted(order),
            warp_opt: self.warp_opt.permuted(order),
            warp_mean: self.warp_mean.permuted(order),
            len: self.len.permuted(order),
        }
    }
}

/// All `(i, j)` with `i < j < n`, row by row.
pub fn upper_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> + Clone {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Aligns every unordered pair of a piece and fills the four matrices.
pub fn build_matrices(piece: &[ChordSequence], params: &AlignParams) -> Result<FeatureMatrices, FeatureError> {
    build_matrices_with(piece, params, CostNorm::default())
}

pub fn build_matrices_with(
    piece: &[ChordSequence],
    params: &AlignParams,
    norm: CostNorm,
) -> Result<FeatureMatrices, FeatureError> {
    if piece.len() < 2 {
        return Err(FeatureError::UnclusterablePiece(piece.len()));
    }
    let pairs: Vec<(usize, usize)> = upper_pairs(piece.len()).collect();
    let one = |&(i, j): &(usize, usize)| -> Result<PairFeatures, FeatureError> {
        let (a, b) = (&piece[i], &piece[j]);
        let annotate = |source| FeatureError::Pair {
            i_id: a.transcription_id.clone(),
            j_id: b.transcription_id.clone(),
            source,
        };
        let alignment = dtw_align(&a.chords, &b.chords, params).map_err(annotate)?;
        if alignment.path.is_none() {
            return Err(annotate(AlignError::PathBudgetExceeded {
                cells: a.len() * b.len(),
                budget: params.max_cells(),
            }));
        }
        pair_features_with(&alignment, norm)
    };

    #[cfg(feature = "parallel")]
    let features: Result<Vec<_>, _> = {
        use rayon::prelude::*;
        pairs.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let features: Result<Vec<_>, _> = pairs.iter().map(one).collect();

    let ids = piece.iter().map(|c| c.transcription_id.clone()).collect();
    Ok(FeatureMatrices::from_pairs(ids, &features?))
}

/// Non-negative weights over the four matrices, stored normalised to sum 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureWeights([f64; 4]);

impl FeatureWeights {
    pub fn new(cost: f64, warp_opt: f64, warp_mean: f64, len: f64) -> Result<Self, FeatureError> {
        Self::from_array([cost, warp_opt, warp_mean, len])
    }

    pub fn from_array(w: [f64; 4]) -> Result<Self, FeatureError> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(FeatureError::InvalidWeights);
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(FeatureError::InvalidWeights);
        }
        Ok(FeatureWeights(w.map(|x| x / total)))
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn cost(&self) -> f64 {
        self.0[0]
    }

    pub fn warp_opt(&self) -> f64 {
        self.0[1]
    }

    pub fn warp_mean(&self) -> f64 {
        self.0[2]
    }

    pub fn len(&self) -> f64 {
        self.0[3]
    }

    /// All points of the simplex whose coordinates are multiples of
    /// `1 / divisions`, in lexicographic order of the integer counts.
    pub fn simplex_lattice(divisions: u32) -> Vec<FeatureWeights> {
        let mut out = Vec::new();
        for a in 0..=divisions {
            for b in 0..=divisions - a {
                for c in 0..=divisions - a - b {
                    let d = divisions - a - b - c;
                    let w = [a, b, c, d].map(|k| f64::from(k) / f64::from(divisions));
                    out.push(FeatureWeights(w));
                }
            }
        }
        out
    }
}

impl Default for FeatureWeights {
    fn default() -> Self {
        FeatureWeights([0.25; 4])
    }
}

/// Min-max scales the off-diagonal entries onto `[0, 1]`. A constant matrix
/// becomes all zeros; the diagonal stays zero.
pub fn min_max_normalize(m: &DistanceMatrix) -> DistanceMatrix {
    let (lo, hi) = m
        .upper()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let span = hi - lo;
    let mut out = DistanceMatrix::zeros(m.n());
    if !(span > 0.0) {
        return out;
    }
    for (i, j) in upper_pairs(m.n()) {
        out.set_sym(i, j, (m.get(i, j) - lo) / span);
    }
    out
}

/// Weighted sum of the four matrices, optionally min-max normalising each first.
pub fn combine(m: &FeatureMatrices, w: &FeatureWeights, normalize: bool) -> DistanceMatrix {
    let n = m.n();
    let mut out = DistanceMatrix::zeros(n);
    for (weight, matrix) in w.0.iter().zip(m.matrices()) {
        if *weight == 0.0 {
            continue;
        }
        let scaled;
        let source = if normalize {
            scaled = min_max_normalize(matrix);
            &scaled
        } else {
            matrix
        };
        for (i, j) in upper_pairs(n) {
            let v = out.get(i, j) + weight * source.get(i, j);
            out.set_sym(i, j, v);
        }
    }
    out
}
