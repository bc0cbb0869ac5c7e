//! Whole-corpus runs: clustering every piece and writing its artifacts, and
//! scoring stored assignments against reference labels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use structura_core::chordify::ChordSequence;
use structura_core::features::{build_matrices_with, FeatureMatrices};
use structura_core::metrics::{mean_scores, Averaging, LabeledPartition, MetricsError, PieceScore};
use structura_core::model::{Corpus, Transcription};
use structura_core::tune::{cluster_features, piece_sequences, Evaluation, PieceClustering, PipelineError};

use crate::config::{CostNormName, RunConfig};
use crate::export::{
    dendrogram_json, features_json, params_json, piece_dir_name, write_assignment_csv, write_atomic, write_json,
    write_matrix_csv, ExportError,
};

/// Everything computed for one piece.
#[derive(Debug, Clone)]
pub struct PieceRun {
    pub piece_id: String,
    pub sequences: Vec<ChordSequence>,
    pub features: FeatureMatrices,
    pub clustering: PieceClustering,
}

pub fn run_piece(piece_id: &str, piece: &[Transcription], config: &RunConfig) -> Result<PieceRun, PipelineError> {
    let sequences = piece_sequences(piece, &config.pipeline.chordify);
    let align = structura_core::align::AlignParams::new(config.params.alpha)?.with_max_cells(config.pipeline.max_cells);
    let features = build_matrices_with(&sequences, &align, config.pipeline.cost_norm)?;
    let clustering = cluster_features(&features, &config.params, config.pipeline.normalize)?;
    Ok(PieceRun {
        piece_id: piece_id.into(),
        sequences,
        features,
        clustering,
    })
}

/// Writes the artifacts of one piece into `dir`.
pub fn write_piece(dir: &Path, run: &PieceRun) -> Result<(), ExportError> {
    let ids = &run.features.ids;
    write_json(&dir.join("features.json"), &features_json(&run.features, &run.clustering.combined))?;
    for (name, m) in FeatureMatrices::NAMES.iter().zip(run.features.matrices()) {
        write_matrix_csv(&dir.join(format!("{name}.csv")), ids, m)?;
    }
    write_matrix_csv(&dir.join("combined.csv"), ids, &run.clustering.combined)?;
    let dendrogram = &run.clustering.dendrogram;
    write_json(&dir.join("dendrogram.json"), &dendrogram_json(dendrogram, ids))?;
    let mut newick = dendrogram.to_newick(ids)?;
    newick.push('\n');
    write_atomic(&dir.join("dendrogram.nwk"), newick.as_bytes())?;
    write_assignment_csv(&dir.join("assignment.csv"), ids, &run.clustering.assignment)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PieceStatus {
    Clustered,
    /// Fewer than two transcriptions.
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSummary {
    pub pieces: Vec<(String, PieceStatus)>,
}

impl ClusterSummary {
    pub fn failures(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pieces.iter().filter_map(|(p, s)| match s {
            PieceStatus::Failed(e) => Some((p.as_str(), e.as_str())),
            _ => None,
        })
    }
}

/// Clusters every piece of `corpus` and writes `<out>/<piece>/...` plus
/// `<out>/summary.json`. Runs on the current rayon pool; the output does not
/// depend on its size. Per-piece failures are logged and reported in the
/// summary; only a failure to write the summary itself is an error.
pub fn cluster_corpus(corpus: &Corpus, config: &RunConfig, out: &Path) -> Result<ClusterSummary, ExportError> {
    let pieces: Vec<(&String, &Vec<Transcription>)> = corpus.pieces().iter().collect();
    let statuses: Vec<PieceStatus> = pieces
        .par_iter()
        .map(|(piece_id, ts)| {
            if ts.len() < 2 {
                log::warn!("piece `{piece_id}` has {} transcription(s); skipped", ts.len());
                return PieceStatus::Skipped;
            }
            let result = run_piece(piece_id, ts, config)
                .map_err(|e| e.to_string())
                .and_then(|run| write_piece(&out.join(piece_dir_name(piece_id)), &run).map_err(|e| e.to_string()));
            match result {
                Ok(()) => {
                    log::info!("piece `{piece_id}`: clustered {} transcriptions", ts.len());
                    PieceStatus::Clustered
                }
                Err(e) => {
                    log::error!("piece `{piece_id}`: {e}");
                    PieceStatus::Failed(e)
                }
            }
        })
        .collect();
    let summary = ClusterSummary {
        pieces: pieces.iter().map(|(p, _)| (*p).clone()).zip(statuses).collect(),
    };
    write_summary(out, config, &summary)?;
    Ok(summary)
}

fn write_summary(out: &Path, config: &RunConfig, summary: &ClusterSummary) -> Result<(), ExportError> {
    let pieces: Vec<_> = summary
        .pieces
        .iter()
        .map(|(p, s)| {
            let (status, error) = match s {
                PieceStatus::Clustered => ("clustered", None),
                PieceStatus::Skipped => ("skipped", None),
                PieceStatus::Failed(e) => ("failed", Some(e.as_str())),
            };
            json!({ "piece_id": p, "dir": piece_dir_name(p), "status": status, "error": error })
        })
        .collect();
    let c = &config.pipeline;
    let settings = json!({
        "params": params_json(&config.params),
        "tau_ioi": c.chordify.tau_ioi(),
        "tau_chord": c.chordify.tau_chord(),
        "normalize": c.normalize,
        "cost_norm": CostNormName::from(c.cost_norm),
        "max_cells": c.max_cells,
    });
    write_json(&out.join("summary.json"), &json!({ "settings": settings, "pieces": pieces }))
}

#[derive(Debug, thiserror::Error)]
pub enum EvaluateError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: expected columns transcription_id,cluster_label", path.display())]
    Header { path: PathBuf },
    #[error("transcription `{0}` is assigned more than once")]
    DuplicateAssignment(String),
    #[error("assigned transcription `{0}` is not in the manifest")]
    UnknownTranscription(String),
    #[error("transcription `{0}` has no reference label")]
    MissingLabel(String),
    #[error("piece `{piece}`: transcription `{id}` has no assignment")]
    MissingAssignment { piece: String, id: String },
    #[error("no piece has assignments")]
    NothingToScore,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn read_assignment_file(path: &Path, into: &mut BTreeMap<String, String>) -> Result<(), EvaluateError> {
    let csv_err = |source| EvaluateError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?;
    if header.len() != 2 || &header[0] != "transcription_id" || &header[1] != "cluster_label" {
        return Err(EvaluateError::Header { path: path.to_path_buf() });
    }
    for record in r.records() {
        let record = record.map_err(csv_err)?;
        let id = record[0].to_string();
        if into.insert(id.clone(), record[1].to_string()).is_some() {
            return Err(EvaluateError::DuplicateAssignment(id));
        }
    }
    Ok(())
}

/// Reads `assignment.csv` from `dir` and from each of its subdirectories.
pub fn read_assignments(dir: &Path) -> Result<BTreeMap<String, String>, EvaluateError> {
    let read_err = |source| EvaluateError::Read {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    let top = dir.join("assignment.csv");
    if top.is_file() {
        files.push(top);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(read_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(read_err)?;
    subdirs.sort();
    files.extend(
        subdirs
            .into_iter()
            .map(|d| d.join("assignment.csv"))
            .filter(|f| f.is_file()),
    );
    let mut out = BTreeMap::new();
    for f in files {
        read_assignment_file(&f, &mut out)?;
    }
    Ok(out)
}

/// Scores assignments piece by piece. Pieces without any assignment are
/// skipped; a piece that is only partly assigned is an error.
pub fn evaluate_assignments(
    corpus: &Corpus,
    assignments: &BTreeMap<String, String>,
    averaging: Averaging,
) -> Result<Evaluation, EvaluateError> {
    let known: std::collections::BTreeSet<&str> = corpus.pieces().values().flatten().map(|t| t.id()).collect();
    if let Some(id) = assignments.keys().find(|id| !known.contains(id.as_str())) {
        return Err(EvaluateError::UnknownTranscription(id.clone()));
    }
    let mut per_piece = Vec::new();
    for (piece_id, ts) in corpus.pieces() {
        let assigned = ts.iter().filter(|t| assignments.contains_key(t.id())).count();
        if assigned == 0 {
            log::warn!("piece `{piece_id}` has no assignments; skipped");
            continue;
        }
        let mut truth = Vec::with_capacity(ts.len());
        let mut pred = Vec::with_capacity(ts.len());
        for t in ts {
            let cluster = assignments.get(t.id()).ok_or_else(|| EvaluateError::MissingAssignment {
                piece: piece_id.clone(),
                id: t.id().into(),
            })?;
            let label = corpus
                .label(t.id())
                .ok_or_else(|| EvaluateError::MissingLabel(t.id().into()))?;
            truth.push(label);
            pred.push(cluster.as_str());
        }
        per_piece.push(PieceScore {
            piece_id: piece_id.clone(),
            scores: LabeledPartition::new(&truth, &pred)?.scores(),
            n: ts.len(),
        });
    }
    if per_piece.is_empty() {
        return Err(EvaluateError::NothingToScore);
    }
    let mean = mean_scores(&per_piece, averaging)?;
    Ok(Evaluation { per_piece, mean })
}
