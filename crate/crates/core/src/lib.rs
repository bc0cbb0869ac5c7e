//! Reference-free grouping of piano performance transcriptions by the
//! structure they realise.
//!
//! The pipeline for a single piece is:
//!
//! 1. [`chordify`] turns each [`Transcription`] into a [`ChordSequence`] of
//!    pitch-class sets with normalised onsets.
//! 2. [`align`] runs DTW between every pair of chord sequences.
//! 3. [`features`] turns each alignment into four pairwise distances and
//!    combines them into one matrix.
//! 4. [`cluster`] runs agglomerative clustering on that matrix and cuts the
//!    dendrogram at a distance threshold.
//!
//! [`metrics`] scores a grouping against reference labels, [`tune`] searches
//! pipeline parameters, and [`synth`] renders labelled toy corpora.
//!
//! The crate is `no_std` (with `alloc`). Enabling the `parallel` feature pulls
//! in `std` and evaluates alignment pairs and grid points on the rayon pool;
//! results are identical to the sequential path.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod align;
pub mod chordify;
pub mod cluster;
pub mod features;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tune;

pub use align::{dtw_align, AlignError, AlignParams, AlignmentResult};
pub use chordify::{chordify, Chord, ChordSequence, ChordifyParams, PitchClassSet};
pub use cluster::{cut, linkage, ClusterAssignment, ClusterError, Dendrogram, LinkageMethod, Merge};
pub use features::{
    build_matrices, combine, pair_features, CostNorm, FeatureError, FeatureMatrices, FeatureWeights,
    PairFeatures,
};
pub use matrix::DistanceMatrix;
pub use metrics::{Averaging, LabeledPartition, PieceScore, Scores};
pub use model::{Corpus, ModelError, Note, Transcription};
pub use tune::{grid_search, evaluate_params, Objective, ParamGrid, PipelineConfig, PipelineParams, TuneResult};
