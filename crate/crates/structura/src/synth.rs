//! JSON templates and corpus specs for the synthetic corpus generator, and
//! writing a rendered corpus to disk as MIDI files plus a manifest.
//!
//! A corpus spec looks like
//!
//! ```json
//! {
//!   "artifacts": {"p_miss": 0.02, "p_insert": 0.01, "onset_jitter_sd": 0.01,
//!                 "tempo_range": [0.85, 1.15], "seed": 7},
//!   "pieces": [
//!     {"template": "builtin:aria", "performances_per_variant": 4},
//!     {"template": "my_template.json", "performances_per_variant": 2, "holdout": true}
//!   ]
//! }
//! ```
//!
//! `template` is a built-in name, a path relative to the spec file, or an
//! inline template object.

use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use structura_core::model::Corpus;
use structura_core::synth::{
    render_corpus, ArtifactModel, ChordEvent, CorpusSpec, PieceSpec, ScoreTemplate, Section, StructureVariant,
    SynthError,
};

use crate::export::{piece_dir_name, write_atomic, ExportError};
use crate::manifest::{manifest_json, ManifestEntry};
use crate::midi::write_smf0;

pub const BUILTIN_TEMPLATES: [(&str, &str); 5] = [
    ("aria", include_str!("../templates/aria.json")),
    ("minuet", include_str!("../templates/minuet.json")),
    ("rondo", include_str!("../templates/rondo.json")),
    ("sonatina", include_str!("../templates/sonatina.json")),
    ("variations", include_str!("../templates/variations.json")),
];

#[derive(Debug, thiserror::Error)]
pub enum SynthIoError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot parse {what}: {source}")]
    Parse { what: String, source: serde_json::Error },
    #[error("unknown built-in template `{0}`")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Export(#[from] ExportError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventFile {
    pub beat: f64,
    pub pitches: Vec<u8>,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionFile {
    pub label: String,
    pub length_beats: f64,
    pub events: Vec<EventFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantFile {
    pub variant_id: String,
    pub section_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateFile {
    pub piece_id: String,
    pub bpm: f64,
    pub sections: Vec<SectionFile>,
    pub variants: Vec<VariantFile>,
}

impl From<TemplateFile> for ScoreTemplate {
    fn from(t: TemplateFile) -> Self {
        ScoreTemplate {
            piece_id: t.piece_id,
            bpm: t.bpm,
            sections: t
                .sections
                .into_iter()
                .map(|s| Section {
                    label: s.label,
                    length_beats: s.length_beats,
                    events: s
                        .events
                        .into_iter()
                        .map(|e| ChordEvent {
                            beat: e.beat,
                            pitches: e.pitches,
                            duration: e.duration,
                        })
                        .collect(),
                })
                .collect(),
            variants: t
                .variants
                .into_iter()
                .map(|v| StructureVariant {
                    variant_id: v.variant_id,
                    section_order: v.section_order,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactsFile {
    #[serde(default)]
    pub p_miss: f64,
    #[serde(default)]
    pub p_insert: f64,
    #[serde(default)]
    pub onset_jitter_sd: f64,
    #[serde(default = "unit_range")]
    pub tempo_range: [f64; 2],
    #[serde(default)]
    pub seed: u64,
}

fn unit_range() -> [f64; 2] {
    [1.0, 1.0]
}

impl From<ArtifactsFile> for ArtifactModel {
    fn from(a: ArtifactsFile) -> Self {
        ArtifactModel {
            p_miss: a.p_miss,
            p_insert: a.p_insert,
            onset_jitter_sd: a.onset_jitter_sd,
            tempo_range: (a.tempo_range[0], a.tempo_range[1]),
            seed: a.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateRef {
    Named(String),
    Inline(TemplateFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceFile {
    pub template: TemplateRef,
    pub performances_per_variant: usize,
    #[serde(default)]
    pub holdout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpecFile {
    pub artifacts: ArtifactsFile,
    pub pieces: Vec<PieceFile>,
}

pub fn parse_template(text: &str, what: &str) -> Result<ScoreTemplate, SynthIoError> {
    let file: TemplateFile = serde_json::from_str(text).map_err(|source| SynthIoError::Parse {
        what: what.into(),
        source,
    })?;
    let t = ScoreTemplate::from(file);
    t.validate()?;
    Ok(t)
}

pub fn builtin_template(name: &str) -> Result<ScoreTemplate, SynthIoError> {
    let (_, text) = BUILTIN_TEMPLATES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| SynthIoError::UnknownBuiltin(name.into()))?;
    parse_template(text, &format!("built-in template `{name}`"))
}

pub fn load_template(path: &Path) -> Result<ScoreTemplate, SynthIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| SynthIoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_template(&text, &path.display().to_string())
}

/// Resolves a parsed spec file; relative template paths are taken from `base`.
pub fn resolve_spec(file: CorpusSpecFile, base: &Path) -> Result<CorpusSpec, SynthIoError> {
    let pieces = file
        .pieces
        .into_iter()
        .map(|p| {
            let template = match p.template {
                TemplateRef::Inline(t) => {
                    let t = ScoreTemplate::from(t);
                    t.validate()?;
                    t
                }
                TemplateRef::Named(name) => match name.strip_prefix("builtin:") {
                    Some(builtin) => builtin_template(builtin)?,
                    None => load_template(&base.join(name))?,
                },
            };
            Ok(PieceSpec {
                template,
                performances_per_variant: p.performances_per_variant,
                holdout: p.holdout,
            })
        })
        .collect::<Result<Vec<_>, SynthIoError>>()?;
    let spec = CorpusSpec {
        pieces,
        artifacts: file.artifacts.into(),
    };
    spec.artifacts.validate()?;
    Ok(spec)
}

pub fn load_corpus_spec(path: &Path) -> Result<CorpusSpec, SynthIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| SynthIoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let file: CorpusSpecFile = serde_json::from_str(&text).map_err(|source| SynthIoError::Parse {
        what: path.display().to_string(),
        source,
    })?;
    resolve_spec(file, path.parent().unwrap_or(Path::new(".")))
}

/// Renders the corpus, writes `<out>/<piece>/<id>.mid` for every performance
/// and `<out>/manifest.json` labelled by variant, and returns the in-memory
/// corpus.
pub fn generate_corpus(spec: &CorpusSpec, out: &Path) -> Result<Corpus, SynthIoError> {
    let rendered = render_corpus(spec)?;
    let mut entries = Vec::with_capacity(rendered.len());
    for r in &rendered {
        let dir = piece_dir_name(&r.piece_id);
        let file = format!("{}.mid", piece_dir_name(r.transcription.id()));
        write_atomic(&out.join(&dir).join(&file), &write_smf0(&r.transcription))?;
        let holdout = spec
            .pieces
            .iter()
            .any(|p| p.holdout && p.template.piece_id == r.piece_id);
        entries.push(ManifestEntry {
            piece_id: r.piece_id.clone(),
            transcription_id: r.transcription.id().into(),
            path: format!("{dir}/{file}"),
            group_label: Some(r.variant_id.clone()),
            holdout,
        });
    }
    write_atomic(&out.join("manifest.json"), manifest_json(&entries).as_bytes())?;
    Ok(structura_core::synth::synth_corpus(spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_are_valid() {
        for (name, _) in BUILTIN_TEMPLATES {
            let t = builtin_template(name).unwrap();
            assert_eq!(t.piece_id, name);
            assert!((2..=3).contains(&t.variants.len()), "{name}");
        }
        let aria = builtin_template("aria").unwrap();
        assert!(aria.variant("AABA").is_some() && aria.variant("ABA").is_some());
        assert!(matches!(builtin_template("nope"), Err(SynthIoError::UnknownBuiltin(_))));
    }

    #[test]
    fn spec_with_inline_template() {
        let text = r#"{
            "artifacts": {"seed": 3},
            "pieces": [{"template": {"piece_id": "p", "bpm": 60,
                "sections": [{"label": "A", "length_beats": 2,
                              "events": [{"beat": 0, "pitches": [60], "duration": 1}]}],
                "variants": [{"variant_id": "AA", "section_order": ["A", "A"]}]},
                "performances_per_variant": 2}]
        }"#;
        let file: CorpusSpecFile = serde_json::from_str(text).unwrap();
        let spec = resolve_spec(file, Path::new(".")).unwrap();
        assert_eq!(spec.pieces[0].template.piece_id, "p");
        assert_eq!(spec.artifacts, ArtifactModel::noise_free(3));
    }

    #[test]
    fn invalid_artifacts_are_rejected() {
        let text = r#"{"artifacts": {"p_miss": 1.5}, "pieces": []}"#;
        let file: CorpusSpecFile = serde_json::from_str(text).unwrap();
        assert!(matches!(resolve_spec(file, Path::new(".")), Err(SynthIoError::Synth(_))));
    }
}
