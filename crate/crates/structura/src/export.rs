//! Artifact writers. Every file is written to a temporary sibling first and
//! renamed into place, so an interrupted run never leaves a truncated file.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use structura_core::align::AlignmentResult;
use structura_core::chordify::ChordSequence;
use structura_core::cluster::{ClusterAssignment, Dendrogram};
use structura_core::features::{FeatureMatrices, PairFeatures};
use structura_core::matrix::DistanceMatrix;
use structura_core::metrics::Scores;
use structura_core::tune::{Evaluation, LeaderboardEntry, PipelineParams};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot encode {}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Cluster(#[from] structura_core::cluster::ClusterError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExportError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(path))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ExportError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact values serialize");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn csv_bytes(path: &Path, rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, ExportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).map_err(|source| ExportError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    }
    w.into_inner().map_err(|e| io_err(path)(e.into_error()))
}

/// Directory name for a piece id: characters outside `[A-Za-z0-9_-]`, and a
/// leading dot, are percent-encoded so distinct ids never share a directory.
pub fn piece_dir_name(piece_id: &str) -> String {
    let mut out = String::with_capacity(piece_id.len());
    for (i, b) in piece_id.bytes().enumerate() {
        let keep = b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || (b == b'.' && i > 0);
        if keep {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.is_empty() {
        out.push_str("%00");
    }
    out
}

fn matrix_rows(m: &DistanceMatrix) -> Vec<Vec<f64>> {
    m.rows().map(<[f64]>::to_vec).collect()
}

/// Full symmetric matrix with the ids as header row and first column.
pub fn write_matrix_csv(path: &Path, ids: &[String], m: &DistanceMatrix) -> Result<(), ExportError> {
    let header = std::iter::once(String::new()).chain(ids.iter().cloned()).collect();
    let body = ids.iter().zip(m.rows()).map(|(id, row)| {
        std::iter::once(id.clone())
            .chain(row.iter().map(|v| v.to_string()))
            .collect()
    });
    let bytes = csv_bytes(path, std::iter::once(header).chain(body))?;
    write_atomic(path, &bytes)
}

pub fn features_json(m: &FeatureMatrices, combined: &DistanceMatrix) -> Value {
    let matrices: serde_json::Map<String, Value> = FeatureMatrices::NAMES
        .iter()
        .zip(m.matrices())
        .map(|(name, mat)| (name.to_string(), json!(matrix_rows(mat))))
        .collect();
    json!({
        "ids": m.ids,
        "matrices": matrices,
        "combined": matrix_rows(combined),
    })
}

pub fn dendrogram_json(d: &Dendrogram, ids: &[String]) -> Value {
    let merges: Vec<Value> = d
        .merges()
        .iter()
        .enumerate()
        .map(|(k, m)| {
            json!({
                "id": d.n_leaves() + k,
                "left": m.left,
                "right": m.right,
                "height": m.height,
                "size": m.size,
            })
        })
        .collect();
    json!({ "leaves": ids, "merges": merges })
}

pub fn write_assignment_csv(path: &Path, ids: &[String], a: &ClusterAssignment) -> Result<(), ExportError> {
    let header = vec!["transcription_id".to_string(), "cluster_label".to_string()];
    let body = ids.iter().zip(&a.labels).map(|(id, l)| vec![id.clone(), l.to_string()]);
    let bytes = csv_bytes(path, std::iter::once(header).chain(body))?;
    write_atomic(path, &bytes)
}

fn scores_json(s: &Scores) -> Value {
    json!({ "h": s.homogeneity, "c": s.completeness, "v": s.v_measure })
}

pub fn score_report_json(e: &Evaluation) -> Value {
    let per_piece: Vec<Value> = e
        .per_piece
        .iter()
        .map(|p| {
            json!({
                "piece_id": p.piece_id,
                "h": p.scores.homogeneity,
                "c": p.scores.completeness,
                "v": p.scores.v_measure,
                "n": p.n,
            })
        })
        .collect();
    json!({ "per_piece": per_piece, "mean": scores_json(&e.mean) })
}

pub fn params_json(p: &PipelineParams) -> Value {
    let w = p.weights;
    json!({
        "weights": {
            "cost": w.cost(),
            "warp_opt": w.warp_opt(),
            "warp_mean": w.warp_mean(),
            "len": w.len(),
        },
        "method": p.method.as_str(),
        "threshold": p.threshold,
        "alpha": p.alpha,
    })
}

pub fn pair_features_json(f: &PairFeatures) -> Value {
    json!({ "cost": f.cost, "warp_opt": f.warp_opt, "warp_mean": f.warp_mean, "len": f.len })
}

pub fn alignment_json(i_id: &str, j_id: &str, a: &AlignmentResult) -> Value {
    json!({
        "i_id": i_id,
        "j_id": j_id,
        "cost": a.cumulative_cost,
        "I": a.len_i,
        "J": a.len_j,
        "path": a.path.as_ref().map(|p| p.iter().map(|&(i, j)| [i, j]).collect::<Vec<_>>()),
    })
}

pub fn chord_sequence_json(cs: &ChordSequence) -> Value {
    let chords: Vec<Value> = cs
        .chords
        .iter()
        .map(|c| {
            json!({
                "pcs": c.pitch_classes.iter().collect::<Vec<_>>(),
                "t": c.onset_norm,
                "t_raw": c.onset_raw,
            })
        })
        .collect();
    json!({
        "id": cs.transcription_id,
        "params": { "tau_ioi": cs.params.tau_ioi(), "tau_chord": cs.params.tau_chord() },
        "chords": chords,
    })
}

pub fn leaderboard_json(entries: &[LeaderboardEntry]) -> Value {
    Value::Array(
        entries
            .iter()
            .enumerate()
            .map(|(rank, e)| {
                let mut v = params_json(&e.params);
                v["rank"] = json!(rank + 1);
                v["mean"] = scores_json(&e.mean);
                v
            })
            .collect(),
    )
}

pub fn write_leaderboard_csv(path: &Path, entries: &[LeaderboardEntry]) -> Result<(), ExportError> {
    let header = [
        "rank", "w_cost", "w_warp_opt", "w_warp_mean", "w_len", "method", "threshold", "alpha", "h", "c", "v",
    ]
    .map(String::from)
    .to_vec();
    let body = entries.iter().enumerate().map(|(rank, e)| {
        let w = e.params.weights.as_array();
        let mut row = vec![(rank + 1).to_string()];
        row.extend(w.iter().map(f64::to_string));
        row.push(e.params.method.as_str().into());
        row.push(e.params.threshold.to_string());
        row.push(e.params.alpha.to_string());
        row.push(e.mean.homogeneity.to_string());
        row.push(e.mean.completeness.to_string());
        row.push(e.mean.v_measure.to_string());
        row
    });
    let bytes = csv_bytes(path, std::iter::once(header).chain(body))?;
    write_atomic(path, &bytes)
}
