//! Synthetic, labelled performance corpora.
//!
//! A [`ScoreTemplate`] holds named sections of chord events and a list of
//! structure variants (section orders such as `AABA` or `ABA`). Rendering a
//! variant concatenates its sections, applies a global tempo factor with a
//! smooth per-section drift, and then simulates transcription artifacts:
//! deleted notes, spurious notes near real onsets, and onset jitter.
//!
//! All randomness comes from [`SplitMix64`] streams keyed by the artifact
//! seed and a per-performance seed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{Corpus, ModelError, Note, Transcription};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("template `{piece}`: {reason}")]
    InvalidTemplate { piece: String, reason: String },
    #[error("artifact model: {0}")]
    InvalidArtifacts(&'static str),
    #[error("corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChordEvent {
    /// Position within the section, in beats.
    pub beat: f64,
    pub pitches: Vec<u8>,
    /// Sounding length in beats.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub label: String,
    pub length_beats: f64,
    pub events: Vec<ChordEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureVariant {
    pub variant_id: String,
    pub section_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTemplate {
    pub piece_id: String,
    /// Nominal tempo in beats per minute.
    pub bpm: f64,
    pub sections: Vec<Section>,
    pub variants: Vec<StructureVariant>,
}

impl ScoreTemplate {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |reason: String| {
            Err(SynthError::InvalidTemplate {
                piece: self.piece_id.clone(),
                reason,
            })
        };
        if !(self.bpm.is_finite() && self.bpm > 0.0) {
            return fail(format!("bpm must be positive, got {}", self.bpm));
        }
        if self.sections.is_empty() {
            return fail("no sections".into());
        }
        let mut labels = BTreeSet::new();
        for s in &self.sections {
            if !labels.insert(s.label.as_str()) {
                return fail(format!("section `{}` defined twice", s.label));
            }
            if !(s.length_beats.is_finite() && s.length_beats > 0.0) {
                return fail(format!("section `{}` has non-positive length", s.label));
            }
            if s.events.is_empty() {
                return fail(format!("section `{}` has no events", s.label));
            }
            for e in &s.events {
                if !(e.beat >= 0.0 && e.beat < s.length_beats) {
                    return fail(format!("section `{}`: event at beat {} is outside the section", s.label, e.beat));
                }
                if !(e.duration.is_finite() && e.duration > 0.0) {
                    return fail(format!("section `{}`: event duration must be positive", s.label));
                }
                if e.pitches.is_empty() || e.pitches.iter().any(|&p| p > 127) {
                    return fail(format!("section `{}`: event pitches must be non-empty MIDI pitches", s.label));
                }
            }
        }
        if self.variants.is_empty() {
            return fail("no structure variants".into());
        }
        let mut ids = BTreeSet::new();
        for v in &self.variants {
            if !ids.insert(v.variant_id.as_str()) {
                return fail(format!("variant `{}` defined twice", v.variant_id));
            }
            if v.section_order.is_empty() {
                return fail(format!("variant `{}` has an empty section order", v.variant_id));
            }
            if let Some(bad) = v.section_order.iter().find(|l| !labels.contains(l.as_str())) {
                return fail(format!("variant `{}` references unknown section `{}`", v.variant_id, bad));
            }
        }
        Ok(())
    }

    pub fn section(&self, label: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.label == label)
    }

    pub fn variant(&self, variant_id: &str) -> Option<&StructureVariant> {
        self.variants.iter().find(|v| v.variant_id == variant_id)
    }
}

/// Transcription artifacts and tempo variation applied while rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArtifactModel {
    pub p_miss: f64,
    pub p_insert: f64,
    /// Standard deviation of Gaussian onset noise, in seconds.
    pub onset_jitter_sd: f64,
    /// Multiplicative tempo factor range `(min, max)`.
    pub tempo_range: (f64, f64),
    pub seed: u64,
}

impl ArtifactModel {
    /// No artifacts and nominal tempo.
    pub fn noise_free(seed: u64) -> Self {
        ArtifactModel {
            p_miss: 0.0,
            p_insert: 0.0,
            onset_jitter_sd: 0.0,
            tempo_range: (1.0, 1.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let prob = |p: f64| (0.0..1.0).contains(&p);
        if !prob(self.p_miss) {
            return Err(SynthError::InvalidArtifacts("p_miss must lie in [0, 1)"));
        }
        if !prob(self.p_insert) {
            return Err(SynthError::InvalidArtifacts("p_insert must lie in [0, 1)"));
        }
        if !(self.onset_jitter_sd >= 0.0 && self.onset_jitter_sd.is_finite()) {
            return Err(SynthError::InvalidArtifacts("onset_jitter_sd must be non-negative"));
        }
        let (lo, hi) = self.tempo_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(SynthError::InvalidArtifacts("tempo_range must satisfy 0 < min <= max"));
        }
        Ok(())
    }

    /// Half-width of the per-section drift step, relative to the tempo.
    fn drift_step(&self) -> f64 {
        let (lo, hi) = self.tempo_range;
        0.5 * (hi - lo) / (hi + lo)
    }
}

/// Spurious notes are placed within this many seconds of a real onset.
const INSERT_SPREAD: f64 = 0.03;
const INSERT_PITCH_RANGE: (u32, u32) = (36, 96);
const VELOCITY: u8 = 80;
const INSERT_VELOCITY: u8 = 60;

/// Seconds elapsed at `beat` inside a section whose seconds-per-beat moves
/// linearly from `spb / f_start` to `spb / f_end`.
fn section_time(beat: f64, length: f64, spb: f64, f_start: f64, f_end: f64) -> f64 {
    let (a, b) = (1.0 / f_start, 1.0 / f_end);
    spb * (beat * a + (b - a) * beat * beat / (2.0 * length))
}

/// Renders one performance of `variant`. The output depends only on the
/// inputs, including `(artifacts.seed, perf_seed)`.
pub fn render_performance(
    template: &ScoreTemplate,
    variant: &StructureVariant,
    artifacts: &ArtifactModel,
    perf_seed: u64,
) -> Result<Transcription, SynthError> {
    template.validate()?;
    artifacts.validate()?;
    let sections: Vec<&Section> = variant
        .section_order
        .iter()
        .map(|l| {
            template.section(l).ok_or_else(|| SynthError::InvalidTemplate {
                piece: template.piece_id.clone(),
                reason: format!("unknown section `{l}`"),
            })
        })
        .collect::<Result<_, _>>()?;
    if sections.is_empty() {
        return Err(SynthError::InvalidTemplate {
            piece: template.piece_id.clone(),
            reason: format!("variant `{}` is empty", variant.variant_id),
        });
    }

    let mut rng = SplitMix64::derive(artifacts.seed, perf_seed);
    let (lo, hi) = artifacts.tempo_range;
    let global = rng.uniform(lo, hi);
    let spb = 60.0 / template.bpm / global;

    let step = artifacts.drift_step();
    let mut factors = Vec::with_capacity(sections.len() + 1);
    let mut f = 1.0 + rng.uniform(-step, step);
    factors.push(f);
    for _ in 0..sections.len() {
        f = (f + rng.uniform(-step, step)).clamp(1.0 - 2.0 * step, 1.0 + 2.0 * step);
        factors.push(f);
    }

    let mut notes = Vec::new();
    let mut start = 0.0;
    for (k, section) in sections.iter().enumerate() {
        let (fs, fe) = (factors[k], factors[k + 1]);
        let len = section.length_beats;
        let at = |beat: f64| start + section_time(beat, len, spb, fs, fe);
        for event in &section.events {
            let onset = at(event.beat);
            let duration = at(event.beat + event.duration) - onset;
            for &pitch in &event.pitches {
                let missed = rng.bernoulli(artifacts.p_miss);
                let inserted = rng.bernoulli(artifacts.p_insert);
                let jitter = rng.standard_normal() * artifacts.onset_jitter_sd;
                let insert_offset = rng.uniform(-INSERT_SPREAD, INSERT_SPREAD);
                let mut insert_pitch = rng.range_inclusive(INSERT_PITCH_RANGE.0, INSERT_PITCH_RANGE.1) as u8;

                if !missed {
                    notes.push(Note::new((onset + jitter).max(0.0), pitch, duration, VELOCITY));
                }
                if inserted {
                    while event.pitches.contains(&insert_pitch) {
                        insert_pitch = if u32::from(insert_pitch) >= INSERT_PITCH_RANGE.1 {
                            INSERT_PITCH_RANGE.0 as u8
                        } else {
                            insert_pitch + 1
                        };
                    }
                    notes.push(Note::new(
                        (onset + insert_offset).max(0.0),
                        insert_pitch,
                        duration,
                        INSERT_VELOCITY,
                    ));
                }
            }
        }
        start = at(len);
    }

    if notes.is_empty() {
        // Every note was dropped; keep the first one so the rendering stays valid.
        let first = &sections[0].events[0];
        let onset = section_time(first.beat, sections[0].length_beats, spb, factors[0], factors[1]);
        let end = section_time(first.beat + first.duration, sections[0].length_beats, spb, factors[0], factors[1]);
        notes.push(Note::new(onset, first.pitches[0], end - onset, VELOCITY));
    }

    let id = format!("{}-{}-{}", template.piece_id, variant.variant_id, perf_seed);
    Ok(Transcription::new(id, notes)?)
}

/// One piece of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceSpec {
    pub template: ScoreTemplate,
    pub performances_per_variant: usize,
    /// Exclude this piece from tuning.
    pub holdout: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub pieces: Vec<PieceSpec>,
    pub artifacts: ArtifactModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPerformance {
    pub piece_id: String,
    pub variant_id: String,
    pub transcription: Transcription,
}

/// Renders every performance of the corpus.
///
/// Transcription ids are `<piece>-<k>` with `k` counting performances
/// round-robin over variants, so ids do not reveal the variant.
pub fn render_corpus(spec: &CorpusSpec) -> Result<Vec<RenderedPerformance>, SynthError> {
    spec.artifacts.validate()?;
    if spec.pieces.is_empty() {
        return Err(SynthError::InvalidSpec("no pieces".into()));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (piece_index, piece) in spec.pieces.iter().enumerate() {
        let t = &piece.template;
        t.validate()?;
        if piece.performances_per_variant == 0 {
            return Err(SynthError::InvalidSpec(format!(
                "piece `{}` has zero performances per variant",
                t.piece_id
            )));
        }
        if !seen.insert(t.piece_id.clone()) {
            return Err(SynthError::InvalidSpec(format!("piece `{}` listed twice", t.piece_id)));
        }
        let mut k = 0usize;
        for _ in 0..piece.performances_per_variant {
            for v in &t.variants {
                let perf_seed = ((piece_index as u64) << 32) | k as u64;
                let id = format!("{}-{:02}", t.piece_id, k);
                let transcription = render_performance(t, v, &spec.artifacts, perf_seed)?.with_id(id);
                out.push(RenderedPerformance {
                    piece_id: t.piece_id.clone(),
                    variant_id: v.variant_id.clone(),
                    transcription,
                });
                k += 1;
            }
        }
    }
    Ok(out)
}

/// Renders the corpus in memory, labelled by variant.
pub fn synth_corpus(spec: &CorpusSpec) -> Result<Corpus, SynthError> {
    let rendered = render_corpus(spec)?;
    let mut pieces: BTreeMap<String, Vec<Transcription>> = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for r in rendered {
        labels.insert(r.transcription.id().into(), r.variant_id);
        pieces.entry(r.piece_id).or_default().push(r.transcription);
    }
    let holdout: Vec<String> = spec
        .pieces
        .iter()
        .filter(|p| p.holdout)
        .map(|p| p.template.piece_id.clone())
        .collect();
    Ok(Corpus::new(pieces, Some(labels))?.with_holdout(holdout))
}

/// Parameters for [`random_template`].
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateShape {
    pub sections: usize,
    pub events_per_section: usize,
    pub bpm: f64,
}

impl Default for TemplateShape {
    fn default() -> Self {
        TemplateShape {
            sections: 3,
            events_per_section: 16,
            bpm: 96.0,
        }
    }
}

/// A random template with sections `A`, `B`, ... Events fall on half-beat
/// grid points, one or two beats apart, each holding a two- to four-note chord.
/// Variants must be supplied by the caller.
pub fn random_template(
    piece_id: &str,
    shape: &TemplateShape,
    variants: Vec<StructureVariant>,
    seed: u64,
) -> ScoreTemplate {
    let mut rng = SplitMix64::new(seed);
    let sections = (0..shape.sections)
        .map(|s| {
            let label = String::from(char::from(b'A' + (s % 26) as u8));
            let mut beat = 0.0;
            let mut events = Vec::with_capacity(shape.events_per_section);
            for _ in 0..shape.events_per_section {
                let root = rng.range_inclusive(48, 72) as u8;
                let size = rng.range_inclusive(2, 4);
                let mut pitches = Vec::new();
                let intervals = [0u8, 4, 7, 10, 3, 9];
                let offset = rng.range_inclusive(0, 2) as usize;
                for i in 0..size as usize {
                    pitches.push(root + intervals[(i + offset) % intervals.len()]);
                }
                pitches.sort_unstable();
                pitches.dedup();
                let gap = 0.5 * f64::from(rng.range_inclusive(2, 4));
                events.push(ChordEvent {
                    beat,
                    pitches,
                    duration: gap * 0.8,
                });
                beat += gap;
            }
            Section {
                label,
                length_beats: beat,
                events,
            }
        })
        .collect();
    ScoreTemplate {
        piece_id: piece_id.into(),
        bpm: shape.bpm,
        sections,
        variants,
    }
}

/// Shorthand for a variant whose section labels are single characters.
pub fn variant(order: &str) -> StructureVariant {
    StructureVariant {
        variant_id: order.into(),
        section_order: order.chars().map(String::from).collect(),
    }
}
