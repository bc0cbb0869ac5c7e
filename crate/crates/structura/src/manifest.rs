//! Corpus manifests: a JSON array of
//! `{"piece_id", "transcription_id", "path", "group_label"}` objects, with
//! paths relative to the manifest file. An optional `"holdout": true` on any
//! entry of a piece keeps that piece out of tuning.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use structura_core::model::{Corpus, ModelError, Transcription};

use crate::midi::{parse_midi_detailed, MidiError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub piece_id: String,
    pub transcription_id: String,
    pub path: String,
    #[serde(default)]
    pub group_label: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub holdout: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read manifest {}: {source}", path.display())]
    ManifestRead { path: PathBuf, source: io::Error },
    #[error("cannot parse manifest {}: {source}", path.display())]
    ManifestParse { path: PathBuf, source: serde_json::Error },
    #[error("transcription `{id}`: file {} does not exist", path.display())]
    MissingFile { id: String, path: PathBuf },
    #[error("transcription id `{0}` appears more than once")]
    DuplicateId(String),
    #[error("transcription `{id}`: cannot read {}: {source}", path.display())]
    Read { id: String, path: PathBuf, source: io::Error },
    #[error("transcription `{id}` ({}): {source}", path.display())]
    Midi { id: String, path: PathBuf, source: MidiError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A piece that could not be loaded in lenient mode.
#[derive(Debug)]
pub struct PieceFailure {
    pub piece_id: String,
    pub error: IngestError,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::ManifestRead {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| IngestError::ManifestParse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn manifest_json(entries: &[ManifestEntry]) -> String {
    let mut s = serde_json::to_string_pretty(entries).expect("manifest entries serialize");
    s.push('\n');
    s
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    rel.split('/').fold(base.to_path_buf(), |p, part| p.join(part))
}

/// Checks ids and file existence before anything is parsed.
fn check_entries(entries: &[ManifestEntry], base: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let mut seen = BTreeSet::new();
    entries
        .iter()
        .map(|e| {
            if !seen.insert(e.transcription_id.as_str()) {
                return Err(IngestError::DuplicateId(e.transcription_id.clone()));
            }
            let path = resolve(base, &e.path);
            if !path.is_file() {
                return Err(IngestError::MissingFile {
                    id: e.transcription_id.clone(),
                    path,
                });
            }
            Ok(path)
        })
        .collect()
}

fn parse_entry(e: &ManifestEntry, path: &Path) -> Result<Transcription, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Read {
        id: e.transcription_id.clone(),
        path: path.to_path_buf(),
        source,
    })?;
    let parsed = parse_midi_detailed(&bytes, &e.transcription_id).map_err(|source| IngestError::Midi {
        id: e.transcription_id.clone(),
        path: path.to_path_buf(),
        source,
    })?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", e.transcription_id);
    }
    Ok(parsed.transcription)
}

fn assemble(entries: &[ManifestEntry], parsed: Vec<Option<Transcription>>) -> Result<Corpus, IngestError> {
    let mut pieces: BTreeMap<String, Vec<Transcription>> = BTreeMap::new();
    let mut labels = BTreeMap::new();
    let mut holdout = BTreeSet::new();
    for (e, t) in entries.iter().zip(parsed) {
        let Some(t) = t else { continue };
        if let Some(label) = &e.group_label {
            labels.insert(e.transcription_id.clone(), label.clone());
        }
        if e.holdout {
            holdout.insert(e.piece_id.clone());
        }
        pieces.entry(e.piece_id.clone()).or_default().push(t);
    }
    let labels = (!labels.is_empty()).then_some(labels);
    Ok(Corpus::new(pieces, labels)?.with_holdout(holdout))
}

/// Loads every transcription of a manifest; any failure is an error.
pub fn load_corpus(manifest: &Path) -> Result<Corpus, IngestError> {
    let entries = read_manifest(manifest)?;
    load_entries(&entries, manifest.parent().unwrap_or(Path::new(".")))
}

pub fn load_entries(entries: &[ManifestEntry], base: &Path) -> Result<Corpus, IngestError> {
    let paths = check_entries(entries, base)?;
    let parsed = entries
        .par_iter()
        .zip(&paths)
        .map(|(e, p)| parse_entry(e, p).map(Some))
        .collect::<Result<Vec<_>, _>>()?;
    assemble(entries, parsed)
}

/// Like [`load_corpus`], but a transcription that fails to parse drops its
/// whole piece instead of failing the load. Manifest-level problems (bad
/// JSON, missing files, duplicate ids) are still errors.
pub fn load_corpus_lenient(manifest: &Path) -> Result<(Corpus, Vec<PieceFailure>), IngestError> {
    let entries = read_manifest(manifest)?;
    let paths = check_entries(&entries, manifest.parent().unwrap_or(Path::new(".")))?;
    let results: Vec<Result<Transcription, IngestError>> =
        entries.par_iter().zip(&paths).map(|(e, p)| parse_entry(e, p)).collect();

    let mut failed: BTreeMap<String, IngestError> = BTreeMap::new();
    let mut parsed = Vec::with_capacity(results.len());
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok(t) => parsed.push(Some(t)),
            Err(err) => {
                failed.entry(e.piece_id.clone()).or_insert(err);
                parsed.push(None);
            }
        }
    }
    let parsed = entries
        .iter()
        .zip(parsed)
        .map(|(e, t)| t.filter(|_| !failed.contains_key(&e.piece_id)))
        .collect();
    let corpus = assemble(&entries, parsed)?;
    let failures = failed
        .into_iter()
        .map(|(piece_id, error)| PieceFailure { piece_id, error })
        .collect();
    Ok((corpus, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_json_shape() {
        let e: ManifestEntry = serde_json::from_str(
            r#"{"piece_id":"p","transcription_id":"t","path":"a/b.mid","group_label":null}"#,
        )
        .unwrap();
        assert_eq!(e.group_label, None);
        assert!(!e.holdout);
        let back = serde_json::to_string(&e).unwrap();
        assert_eq!(back, r#"{"piece_id":"p","transcription_id":"t","path":"a/b.mid","group_label":null}"#);
        assert!(serde_json::from_str::<ManifestEntry>(r#"{"piece_id":"p"}"#).is_err());
    }

    #[test]
    fn forward_slash_paths_resolve_against_base() {
        assert_eq!(resolve(Path::new("/m"), "x/y.mid"), Path::new("/m").join("x").join("y.mid"));
    }
}
