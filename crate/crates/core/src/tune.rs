//! End-to-end evaluation and exhaustive parameter search.
//!
//! A parameter set is `(weights, linkage method, threshold, alpha)`. Each
//! labelled piece is run through chordify, alignment, features, combination,
//! linkage and cut, scored against its labels, and the per-piece scores are
//! averaged.
//!
//! The leaderboard is ordered by the objective (descending), then mean
//! completeness (descending), then by parameters: weights compared as
//! `(cost, warp_opt, warp_mean, len)` descending, then linkage method in
//! declaration order, then threshold and alpha ascending. The order is total,
//! so the winner does not depend on grid order or scheduling.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::align::AlignParams;
use crate::chordify::{chordify, ChordSequence, ChordifyParams};
use crate::cluster::{cut, linkage, ClusterAssignment, ClusterError, Dendrogram, LinkageMethod};
use crate::features::{build_matrices_with, combine, CostNorm, FeatureError, FeatureMatrices, FeatureWeights};
use crate::matrix::DistanceMatrix;
use crate::metrics::{mean_scores, Averaging, LabeledPartition, MetricsError, PieceScore, Scores};
use crate::model::{Corpus, Transcription};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TuneError {
    #[error("piece `{piece}`: transcription `{id}` has no label")]
    MissingLabels { piece: String, id: String },
    #[error("corpus has no labels")]
    Unlabelled,
    #[error("no pieces to evaluate")]
    NoPieces,
    #[error("parameter grid has no {0}")]
    EmptyGrid(&'static str),
    #[error("threshold must be non-negative, got {0}")]
    InvalidThreshold(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("piece `{piece}`: {source}")]
    Piece { piece: String, source: PipelineError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Align(#[from] crate::align::AlignError),
}

/// Settings that stay fixed while parameters are searched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub chordify: ChordifyParams,
    /// Min-max scale each feature matrix before weighting.
    pub normalize: bool,
    pub cost_norm: CostNorm,
    pub max_cells: usize,
    pub averaging: Averaging,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            chordify: ChordifyParams::default(),
            normalize: true,
            cost_norm: CostNorm::default(),
            max_cells: AlignParams::DEFAULT_MAX_CELLS,
            averaging: Averaging::Macro,
        }
    }
}

impl PipelineConfig {
    fn align_params(&self, alpha: f64) -> Result<AlignParams, PipelineError> {
        Ok(AlignParams::new(alpha)?.with_max_cells(self.max_cells))
    }
}

/// One point of the search space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    pub weights: FeatureWeights,
    pub method: LinkageMethod,
    pub threshold: f64,
    pub alpha: f64,
}

impl Default for PipelineParams {
    /// Cost-dominated weights `(0.75, 0, 0, 0.25)`, average linkage, cut at
    /// 0.35. On the built-in synthetic corpora the warping features alone do
    /// not separate structure variants, and after min-max scaling they mostly
    /// add noise, so they get no default weight.
    fn default() -> Self {
        PipelineParams {
            weights: FeatureWeights::from_array([0.75, 0.0, 0.0, 0.25]).expect("valid weights"),
            method: LinkageMethod::Average,
            threshold: 0.35,
            alpha: AlignParams::DEFAULT_ALPHA,
        }
    }
}

impl PipelineParams {
    /// The parameter part of the leaderboard order.
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        let (a, b) = (self.weights.as_array(), other.weights.as_array());
        a.iter()
            .zip(&b)
            .map(|(x, y)| y.total_cmp(x))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then(self.method.cmp(&other.method))
            .then(self.threshold.total_cmp(&other.threshold))
            .then(self.alpha.total_cmp(&other.alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    #[default]
    Homogeneity,
    Completeness,
    VMeasure,
}

impl Objective {
    pub fn of(self, s: &Scores) -> f64 {
        match self {
            Objective::Homogeneity => s.homogeneity,
            Objective::Completeness => s.completeness,
            Objective::VMeasure => s.v_measure,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub weight_candidates: Vec<FeatureWeights>,
    pub methods: Vec<LinkageMethod>,
    pub thresholds: Vec<f64>,
    pub alpha_candidates: Vec<f64>,
    pub objective: Objective,
}

impl Default for ParamGrid {
    /// 35 simplex weights at step 0.25, all four linkages, thresholds
    /// 0.05..=0.95 in steps of 0.05, and alpha in {0.25, 0.5, 0.75, 1.0}.
    fn default() -> Self {
        ParamGrid {
            weight_candidates: FeatureWeights::simplex_lattice(4),
            methods: LinkageMethod::ALL.to_vec(),
            thresholds: (1..=19).map(|k| f64::from(k) / 20.0).collect(),
            alpha_candidates: alloc::vec![0.25, 0.5, 0.75, 1.0],
            objective: Objective::Homogeneity,
        }
    }
}

impl ParamGrid {
    pub fn single(params: PipelineParams, objective: Objective) -> Self {
        ParamGrid {
            weight_candidates: alloc::vec![params.weights],
            methods: alloc::vec![params.method],
            thresholds: alloc::vec![params.threshold],
            alpha_candidates: alloc::vec![params.alpha],
            objective,
        }
    }

    pub fn len(&self) -> usize {
        self.weight_candidates.len() * self.methods.len() * self.thresholds.len() * self.alpha_candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        if self.weight_candidates.is_empty() {
            return Err(TuneError::EmptyGrid("weight candidates"));
        }
        if self.methods.is_empty() {
            return Err(TuneError::EmptyGrid("linkage methods"));
        }
        if self.thresholds.is_empty() {
            return Err(TuneError::EmptyGrid("thresholds"));
        }
        if self.alpha_candidates.is_empty() {
            return Err(TuneError::EmptyGrid("alpha candidates"));
        }
        if let Some(&t) = self.thresholds.iter().find(|t| !(**t >= 0.0)) {
            return Err(TuneError::InvalidThreshold(t));
        }
        if let Some(&a) = self.alpha_candidates.iter().find(|&&a| AlignParams::new(a).is_err()) {
            return Err(TuneError::InvalidAlpha(a));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_piece: Vec<PieceScore>,
    pub mean: Scores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardEntry {
    pub params: PipelineParams,
    pub mean: Scores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best_params: PipelineParams,
    pub best_score: f64,
    pub objective: Objective,
    pub leaderboard: Vec<LeaderboardEntry>,
}

/// Chord sequences for every transcription of a piece, in input order.
pub fn piece_sequences(piece: &[Transcription], params: &ChordifyParams) -> Vec<ChordSequence> {
    piece.iter().map(|t| chordify(t, params)).collect()
}

/// Chordifies and aligns a piece.
pub fn piece_features(
    piece: &[Transcription],
    config: &PipelineConfig,
    alpha: f64,
) -> Result<FeatureMatrices, PipelineError> {
    let sequences = piece_sequences(piece, &config.chordify);
    Ok(build_matrices_with(&sequences, &config.align_params(alpha)?, config.cost_norm)?)
}

/// Everything the clustering stage produces for one piece.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceClustering {
    pub combined: DistanceMatrix,
    pub dendrogram: Dendrogram,
    pub assignment: ClusterAssignment,
}

pub fn cluster_features(
    m: &FeatureMatrices,
    params: &PipelineParams,
    normalize: bool,
) -> Result<PieceClustering, PipelineError> {
    let combined = combine(m, &params.weights, normalize);
    let dendrogram = linkage(&combined, params.method)?;
    let assignment = cut(&dendrogram, params.threshold);
    Ok(PieceClustering {
        combined,
        dendrogram,
        assignment,
    })
}

/// Reference labels of a piece, in transcription order.
fn piece_labels<'a>(corpus: &'a Corpus, piece_id: &str, piece: &[Transcription]) -> Result<Vec<&'a str>, TuneError> {
    piece
        .iter()
        .map(|t| {
            corpus.label(t.id()).ok_or_else(|| TuneError::MissingLabels {
                piece: piece_id.into(),
                id: t.id().into(),
            })
        })
        .collect()
}

fn score_piece(piece_id: &str, truth: &[&str], assignment: &ClusterAssignment) -> Result<PieceScore, TuneError> {
    Ok(PieceScore {
        piece_id: piece_id.into(),
        scores: LabeledPartition::new(truth, &assignment.labels)?.scores(),
        n: truth.len(),
    })
}

fn labelled_pieces(corpus: &Corpus) -> Result<Vec<(&str, &[Transcription], Vec<&str>)>, TuneError> {
    if corpus.labels().is_none() {
        return Err(TuneError::Unlabelled);
    }
    if corpus.pieces().is_empty() {
        return Err(TuneError::NoPieces);
    }
    corpus
        .pieces()
        .iter()
        .map(|(id, ts)| Ok((id.as_str(), ts.as_slice(), piece_labels(corpus, id, ts)?)))
        .collect()
}

/// Runs the whole pipeline on every piece of a labelled corpus.
pub fn evaluate_params(
    corpus: &Corpus,
    config: &PipelineConfig,
    params: &PipelineParams,
) -> Result<Evaluation, TuneError> {
    if !(params.threshold >= 0.0) {
        return Err(TuneError::InvalidThreshold(params.threshold));
    }
    let pieces = labelled_pieces(corpus)?;
    let per_piece = pieces
        .iter()
        .map(|(piece_id, ts, truth)| {
            let annotate = |source| TuneError::Piece {
                piece: (*piece_id).into(),
                source,
            };
            let m = piece_features(ts, config, params.alpha).map_err(annotate)?;
            let c = cluster_features(&m, params, config.normalize).map_err(annotate)?;
            score_piece(piece_id, truth, &c.assignment)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mean = mean_scores(&per_piece, config.averaging)?;
    Ok(Evaluation { per_piece, mean })
}

fn rank(objective: Objective) -> impl Fn(&LeaderboardEntry, &LeaderboardEntry) -> Ordering {
    move |a, b| {
        objective
            .of(&b.mean)
            .total_cmp(&objective.of(&a.mean))
            .then(b.mean.completeness.total_cmp(&a.mean.completeness))
            .then(a.params.cmp_key(&b.params))
    }
}

/// Exhaustive search over `grid`. Alignments are computed once per
/// `(piece, alpha)` and reused for every weight, method and threshold.
pub fn grid_search(corpus: &Corpus, config: &PipelineConfig, grid: &ParamGrid) -> Result<TuneResult, TuneError> {
    grid.validate()?;
    let pieces = labelled_pieces(corpus)?;

    // features[a][p]: matrices of piece p at alpha a.
    let jobs: Vec<(usize, usize)> = (0..grid.alpha_candidates.len())
        .flat_map(|a| (0..pieces.len()).map(move |p| (a, p)))
        .collect();
    let feature_job = |&(a, p): &(usize, usize)| {
        let (piece_id, ts, _) = &pieces[p];
        piece_features(ts, config, grid.alpha_candidates[a]).map_err(|source| TuneError::Piece {
            piece: (*piece_id).into(),
            source,
        })
    };
    #[cfg(feature = "parallel")]
    let flat: Vec<FeatureMatrices> = {
        use rayon::prelude::*;
        jobs.par_iter().map(feature_job).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let flat: Vec<FeatureMatrices> = jobs.iter().map(feature_job).collect::<Result<_, _>>()?;
    let features: Vec<&[FeatureMatrices]> = flat.chunks(pieces.len()).collect();

    let combos: Vec<(usize, usize, LinkageMethod)> = (0..grid.alpha_candidates.len())
        .flat_map(|a| {
            (0..grid.weight_candidates.len())
                .flat_map(move |w| grid.methods.iter().map(move |&m| (a, w, m)))
        })
        .collect();
    let combo_job = |&(a, w, method): &(usize, usize, LinkageMethod)| -> Result<Vec<LeaderboardEntry>, TuneError> {
        let weights = grid.weight_candidates[w];
        let mut scores: Vec<Vec<PieceScore>> = alloc::vec![Vec::with_capacity(pieces.len()); grid.thresholds.len()];
        for (p, (piece_id, _, truth)) in pieces.iter().enumerate() {
            let combined = combine(&features[a][p], &weights, config.normalize);
            let dendrogram = linkage(&combined, method).map_err(|e| TuneError::Piece {
                piece: (*piece_id).into(),
                source: e.into(),
            })?;
            for (t, &threshold) in grid.thresholds.iter().enumerate() {
                scores[t].push(score_piece(piece_id, truth, &cut(&dendrogram, threshold))?);
            }
        }
        grid.thresholds
            .iter()
            .zip(scores)
            .map(|(&threshold, per_piece)| {
                Ok(LeaderboardEntry {
                    params: PipelineParams {
                        weights,
                        method,
                        threshold,
                        alpha: grid.alpha_candidates[a],
                    },
                    mean: mean_scores(&per_piece, config.averaging)?,
                })
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let nested: Vec<Vec<LeaderboardEntry>> = {
        use rayon::prelude::*;
        combos.par_iter().map(combo_job).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let nested: Vec<Vec<LeaderboardEntry>> = combos.iter().map(combo_job).collect::<Result<_, _>>()?;

    let mut leaderboard: Vec<LeaderboardEntry> = nested.into_iter().flatten().collect();
    leaderboard.sort_by(rank(grid.objective));
    let best = &leaderboard[0];
    Ok(TuneResult {
        best_params: best.params,
        best_score: grid.objective.of(&best.mean),
        objective: grid.objective,
        leaderboard,
    })
}
