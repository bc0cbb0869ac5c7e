//! Pairwise DTW between chord sequences.
//!
//! The local cost mixes pitch-class Jaccard distance and the difference of
//! normalised onsets:
//!
//! ```text
//! cost(a, b) = alpha * jaccard(a, b) + (1 - alpha) * |t_a - t_b|
//! ```
//!
//! Steps are `(1,0)`, `(0,1)` and `(1,1)` with unit weights and no window.
//! Backtracking prefers the diagonal, then the vertical step, then the
//! horizontal one.

use alloc::vec;
use alloc::vec::Vec;

use crate::chordify::{Chord, PitchClassSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("cannot align an empty chord sequence")]
    EmptySequence,
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("{cells} cost cells exceed the budget of {budget}; no path was stored")]
    PathBudgetExceeded { cells: usize, budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignParams {
    alpha: f64,
    max_cells: usize,
}

impl AlignParams {
    pub const DEFAULT_ALPHA: f64 = 0.5;
    /// Largest `I * J` for which the full cost matrix is kept for backtracking.
    pub const DEFAULT_MAX_CELLS: usize = 1 << 25;

    pub fn new(alpha: f64) -> Result<Self, AlignError> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(AlignParams {
                alpha,
                max_cells: Self::DEFAULT_MAX_CELLS,
            })
        } else {
            Err(AlignError::InvalidAlpha(alpha))
        }
    }

    pub fn with_max_cells(mut self, max_cells: usize) -> Self {
        self.max_cells = max_cells;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_cells(&self) -> usize {
        self.max_cells
    }
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams {
            alpha: Self::DEFAULT_ALPHA,
            max_cells: Self::DEFAULT_MAX_CELLS,
        }
    }
}

/// Outcome of aligning `C_i` (rows) against `C_j` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Warping path from `(0, 0)` to `(I-1, J-1)`. `None` when the pair was
    /// too large for the cell budget and only the cost was computed.
    pub path: Option<Vec<(usize, usize)>>,
    pub cumulative_cost: f64,
    pub len_i: usize,
    pub len_j: usize,
}

impl AlignmentResult {
    /// The same alignment seen from the other side.
    pub fn transposed(&self) -> AlignmentResult {
        AlignmentResult {
            path: self
                .path
                .as_ref()
                .map(|p| p.iter().map(|&(i, j)| (j, i)).collect()),
            cumulative_cost: self.cumulative_cost,
            len_i: self.len_j,
            len_j: self.len_i,
        }
    }
}

/// `1 - |a ∩ b| / |a ∪ b|`, and 0 when both sets are empty.
pub fn jaccard_distance(a: PitchClassSet, b: PitchClassSet) -> f64 {
    let union = a.union(b).len();
    if union == 0 {
        return 0.0;
    }
    1.0 - f64::from(a.intersection(b).len()) / f64::from(union)
}

pub fn time_distance(a: &Chord, b: &Chord) -> f64 {
    libm::fabs(a.onset_norm - b.onset_norm)
}

pub fn chord_cost(a: &Chord, b: &Chord, params: &AlignParams) -> f64 {
    let alpha = params.alpha;
    alpha * jaccard_distance(a.pitch_classes, b.pitch_classes) + (1.0 - alpha) * time_distance(a, b)
}

/// Globally optimal DTW alignment of `ci` against `cj`.
///
/// When `I * J` exceeds the cell budget the cost is computed in linear memory
/// and the result carries no path.
pub fn dtw_align(ci: &[Chord], cj: &[Chord], params: &AlignParams) -> Result<AlignmentResult, AlignError> {
    if ci.is_empty() || cj.is_empty() {
        return Err(AlignError::EmptySequence);
    }
    let (rows, cols) = (ci.len(), cj.len());
    let cells = rows.saturating_mul(cols);
    if cells > params.max_cells {
        return Ok(AlignmentResult {
            path: None,
            cumulative_cost: dtw_cost(ci, cj, params)?,
            len_i: rows,
            len_j: cols,
        });
    }

    let mut acc = vec![0.0f64; cells];
    for i in 0..rows {
        for j in 0..cols {
            let local = chord_cost(&ci[i], &cj[j], params);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[j - 1],
                (_, 0) => acc[(i - 1) * cols],
                _ => acc[(i - 1) * cols + j - 1]
                    .min(acc[(i - 1) * cols + j])
                    .min(acc[i * cols + j - 1]),
            };
            acc[i * cols + j] = local + best;
        }
    }

    let mut path = Vec::with_capacity(rows + cols - 1);
    let (mut i, mut j) = (rows - 1, cols - 1);
    path.push((i, j));
    while (i, j) != (0, 0) {
        (i, j) = match (i, j) {
            (0, _) => (0, j - 1),
            (_, 0) => (i - 1, 0),
            _ => {
                let diag = acc[(i - 1) * cols + j - 1];
                let vert = acc[(i - 1) * cols + j];
                let horiz = acc[i * cols + j - 1];
                if diag <= vert && diag <= horiz {
                    (i - 1, j - 1)
                } else if vert <= horiz {
                    (i - 1, j)
                } else {
                    (i, j - 1)
                }
            }
        };
        path.push((i, j));
    }
    path.reverse();

    Ok(AlignmentResult {
        path: Some(path),
        cumulative_cost: acc[cells - 1],
        len_i: rows,
        len_j: cols,
    })
}

/// Like [`dtw_align`], but fails instead of dropping the path when the pair
/// exceeds the cell budget.
pub fn dtw_align_with_path(
    ci: &[Chord],
    cj: &[Chord],
    params: &AlignParams,
) -> Result<AlignmentResult, AlignError> {
    let cells = ci.len().saturating_mul(cj.len());
    if cells > params.max_cells {
        return Err(AlignError::PathBudgetExceeded {
            cells,
            budget: params.max_cells,
        });
    }
    dtw_align(ci, cj, params)
}

/// DTW cost only, using two rows of memory.
pub fn dtw_cost(ci: &[Chord], cj: &[Chord], params: &AlignParams) -> Result<f64, AlignError> {
    if ci.is_empty() || cj.is_empty() {
        return Err(AlignError::EmptySequence);
    }
    let cols = cj.len();
    let mut prev = vec![0.0f64; cols];
    let mut cur = vec![0.0f64; cols];
    for (i, a) in ci.iter().enumerate() {
        for j in 0..cols {
            let local = chord_cost(a, &cj[j], params);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j - 1].min(prev[j]).min(cur[j - 1]),
            };
            cur[j] = local + best;
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[cols - 1])
}
