//! Chordwise representation of a transcription.
//!
//! Notes are grouped greedily: a note joins the current chord when its gap to
//! the previous note is at most `tau_ioi` and its distance to the chord's
//! first note is at most `tau_chord`. A chord's onset is the mean onset of its
//! notes and its pitches are reduced to pitch classes. Onsets are then
//! rescaled to `[0, 1]` over the sequence.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::model::{Note, Transcription};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChordifyError {
    #[error("thresholds must satisfy 0 < tau_ioi <= tau_chord (got tau_ioi={tau_ioi}, tau_chord={tau_chord})")]
    InvalidParams { tau_ioi: f64, tau_chord: f64 },
    #[error("pitch class {0} is outside 0..12")]
    InvalidPitchClass(u8),
}

/// Chord grouping thresholds, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChordifyParams {
    tau_ioi: f64,
    tau_chord: f64,
}

impl ChordifyParams {
    pub const DEFAULT_TAU_IOI: f64 = 0.05;
    pub const DEFAULT_TAU_CHORD: f64 = 0.30;

    pub fn new(tau_ioi: f64, tau_chord: f64) -> Result<Self, ChordifyError> {
        if tau_ioi > 0.0 && tau_ioi <= tau_chord && tau_chord.is_finite() {
            Ok(ChordifyParams { tau_ioi, tau_chord })
        } else {
            Err(ChordifyError::InvalidParams { tau_ioi, tau_chord })
        }
    }

    /// Maximum gap between consecutive notes of one chord.
    pub fn tau_ioi(&self) -> f64 {
        self.tau_ioi
    }

    /// Maximum onset spread between a chord's first and last note.
    pub fn tau_chord(&self) -> f64 {
        self.tau_chord
    }
}

impl Default for ChordifyParams {
    fn default() -> Self {
        ChordifyParams {
            tau_ioi: Self::DEFAULT_TAU_IOI,
            tau_chord: Self::DEFAULT_TAU_CHORD,
        }
    }
}

/// A set of pitch classes stored as a 12-bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PitchClassSet(u16);

impl PitchClassSet {
    pub const EMPTY: PitchClassSet = PitchClassSet(0);

    pub fn from_pitches<I: IntoIterator<Item = u8>>(pitches: I) -> Self {
        pitches
            .into_iter()
            .fold(Self::EMPTY, |s, p| PitchClassSet(s.0 | 1 << (p % 12)))
    }

    pub fn from_classes<I: IntoIterator<Item = u8>>(classes: I) -> Result<Self, ChordifyError> {
        let mut mask = 0u16;
        for pc in classes {
            if pc >= 12 {
                return Err(ChordifyError::InvalidPitchClass(pc));
            }
            mask |= 1 << pc;
        }
        Ok(PitchClassSet(mask))
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, pc: u8) -> bool {
        pc < 12 && self.0 & (1 << pc) != 0
    }

    pub fn intersection(self, other: Self) -> Self {
        PitchClassSet(self.0 & other.0)
    }

    pub fn union(self, other: Self) -> Self {
        PitchClassSet(self.0 | other.0)
    }

    /// Members in ascending order.
    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0u8..12).filter(move |&pc| self.contains(pc))
    }
}

impl fmt::Debug for PitchClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chord {
    pub pitch_classes: PitchClassSet,
    /// Onset rescaled to `[0, 1]` over the sequence.
    pub onset_norm: f64,
    /// Mean onset of the member notes, in seconds.
    pub onset_raw: f64,
    pub note_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChordSequence {
    pub transcription_id: String,
    pub chords: Vec<Chord>,
    pub params: ChordifyParams,
}

impl ChordSequence {
    pub fn len(&self) -> usize {
        self.chords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chords.is_empty()
    }
}

/// Greedy left-to-right chord grouping. `notes` must be sorted by onset; the
/// returned ranges partition `0..notes.len()`.
pub fn group_chords(notes: &[Note], params: &ChordifyParams) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..notes.len() {
        let gap = notes[i].onset - notes[i - 1].onset;
        let span = notes[i].onset - notes[start].onset;
        if gap > params.tau_ioi || span > params.tau_chord {
            groups.push(start..i);
            start = i;
        }
    }
    if !notes.is_empty() {
        groups.push(start..notes.len());
    }
    groups
}

/// Builds the normalised chord sequence of a transcription.
pub fn chordify(t: &Transcription, params: &ChordifyParams) -> ChordSequence {
    let notes = t.notes();
    let chords = group_chords(notes, params)
        .into_iter()
        .map(|range| {
            let members = &notes[range];
            let sum: f64 = members.iter().map(|n| n.onset).sum();
            Chord {
                pitch_classes: PitchClassSet::from_pitches(members.iter().map(|n| n.pitch)),
                onset_norm: 0.0,
                onset_raw: sum / members.len() as f64,
                note_count: members.len(),
            }
        })
        .collect();
    normalize_onsets(ChordSequence {
        transcription_id: t.id().into(),
        chords,
        params: *params,
    })
}

/// Rescales `onset_raw` affinely onto `[0, 1]`. A zero span maps every chord to 0.
pub fn normalize_onsets(mut cs: ChordSequence) -> ChordSequence {
    let (first, last) = match (cs.chords.first(), cs.chords.last()) {
        (Some(f), Some(l)) => (f.onset_raw, l.onset_raw),
        _ => return cs,
    };
    let span = last - first;
    for chord in &mut cs.chords {
        chord.onset_norm = if span > 0.0 {
            ((chord.onset_raw - first) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
    cs
}
