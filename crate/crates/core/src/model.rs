//! Notes, transcriptions and corpora.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("note {index} of `{id}` is invalid: {reason}")]
    InvalidNote {
        id: String,
        index: usize,
        reason: &'static str,
    },
    #[error("transcription `{0}` has no notes")]
    EmptyTranscription(String),
    #[error("transcription id `{0}` occurs more than once")]
    DuplicateId(String),
    #[error("label given for unknown transcription `{0}`")]
    UnknownLabel(String),
}

/// A performed note. Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Note {
    pub onset: f64,
    pub pitch: u8,
    pub duration: f64,
    pub velocity: u8,
}

impl Note {
    pub fn new(onset: f64, pitch: u8, duration: f64, velocity: u8) -> Self {
        Note {
            onset,
            pitch,
            duration,
            velocity,
        }
    }

    fn check(&self) -> Result<(), &'static str> {
        if !(self.onset.is_finite() && self.onset >= 0.0) {
            return Err("onset must be finite and non-negative");
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err("duration must be finite and positive");
        }
        if self.pitch > 127 {
            return Err("pitch out of MIDI range");
        }
        if self.velocity == 0 || self.velocity > 127 {
            return Err("velocity must be in 1..=127");
        }
        Ok(())
    }
}

fn note_order(a: &Note, b: &Note) -> Ordering {
    a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch))
}

/// One performed rendition: a non-empty list of notes sorted by onset, then pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcription {
    id: String,
    notes: Vec<Note>,
}

impl Transcription {
    /// Validates every note and sorts them by `(onset, pitch)`.
    pub fn new(id: impl Into<String>, mut notes: Vec<Note>) -> Result<Self, ModelError> {
        let id = id.into();
        if notes.is_empty() {
            return Err(ModelError::EmptyTranscription(id));
        }
        for (index, note) in notes.iter().enumerate() {
            if let Err(reason) = note.check() {
                return Err(ModelError::InvalidNote { id, index, reason });
            }
        }
        notes.sort_by(note_order);
        Ok(Transcription { id, notes })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

/// Transcriptions grouped by piece, with optional structure-group labels.
///
/// Pieces with fewer than two transcriptions are kept but are not
/// clusterable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pieces: BTreeMap<String, Vec<Transcription>>,
    labels: Option<BTreeMap<String, String>>,
    holdout: BTreeSet<String>,
}

impl Corpus {
    pub fn new(
        pieces: BTreeMap<String, Vec<Transcription>>,
        labels: Option<BTreeMap<String, String>>,
    ) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for t in pieces.values().flatten() {
            if !seen.insert(t.id()) {
                return Err(ModelError::DuplicateId(t.id().into()));
            }
        }
        if let Some(labels) = &labels {
            if let Some(unknown) = labels.keys().find(|k| !seen.contains(k.as_str())) {
                return Err(ModelError::UnknownLabel(unknown.clone()));
            }
        }
        Ok(Corpus {
            pieces,
            labels,
            holdout: BTreeSet::new(),
        })
    }

    /// Marks pieces as held out from tuning. Unknown piece ids are ignored.
    pub fn with_holdout<I, S>(mut self, pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for p in pieces {
            let p = p.into();
            if self.pieces.contains_key(&p) {
                self.holdout.insert(p);
            }
        }
        self
    }

    pub fn pieces(&self) -> &BTreeMap<String, Vec<Transcription>> {
        &self.pieces
    }

    pub fn piece(&self, piece_id: &str) -> Option<&[Transcription]> {
        self.pieces.get(piece_id).map(Vec::as_slice)
    }

    pub fn labels(&self) -> Option<&BTreeMap<String, String>> {
        self.labels.as_ref()
    }

    pub fn label(&self, transcription_id: &str) -> Option<&str> {
        self.labels.as_ref()?.get(transcription_id).map(String::as_str)
    }

    pub fn holdout(&self) -> &BTreeSet<String> {
        &self.holdout
    }

    pub fn num_transcriptions(&self) -> usize {
        self.pieces.values().map(Vec::len).sum()
    }

    pub fn is_clusterable(&self, piece_id: &str) -> bool {
        self.pieces.get(piece_id).is_some_and(|p| p.len() >= 2)
    }

    /// Copy of the corpus restricted to the clusterable pieces.
    pub fn clusterable(&self) -> Corpus {
        self.filter(|_, ts| ts.len() >= 2)
    }

    /// Splits into (tuning pieces, held-out pieces).
    pub fn split_holdout(&self) -> (Corpus, Corpus) {
        let train = self.filter(|id, _| !self.holdout.contains(id));
        let test = self.filter(|id, _| self.holdout.contains(id));
        (train, test)
    }

    fn filter(&self, keep: impl Fn(&str, &[Transcription]) -> bool) -> Corpus {
        let pieces: BTreeMap<_, _> = self
            .pieces
            .iter()
            .filter(|(id, ts)| keep(id, ts))
            .map(|(id, ts)| (id.clone(), ts.clone()))
            .collect();
        let kept: BTreeSet<&str> = pieces.values().flatten().map(Transcription::id).collect();
        let labels = self.labels.as_ref().map(|labels| {
            labels
                .iter()
                .filter(|(tid, _)| kept.contains(tid.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        });
        let holdout = self
            .holdout
            .iter()
            .filter(|p| pieces.contains_key(*p))
            .cloned()
            .collect();
        Corpus {
            pieces,
            labels,
            holdout,
        }
    }
}
