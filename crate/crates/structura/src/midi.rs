//! Standard MIDI File reading and writing.
//!
//! Reading merges all tracks of a format 0 or 1 file, applies the tempo map
//! (or SMPTE timing), drops channel 10 and pairs note-ons with note-offs. A
//! second note-on for a sounding pitch on the same channel closes the earlier
//! note at the new onset. Notes still sounding when their track ends are
//! closed at the track's last event and reported as warnings.
//!
//! Writing produces a format 0 file at 480 ticks per quarter and 120 BPM, so
//! one tick is 1/960 s.

use std::collections::HashMap;
use std::fmt;

use structura_core::model::{Note, Transcription};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MidiError {
    #[error("malformed MIDI at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: &'static str },
    #[error("SMF format {0} is not supported")]
    UnsupportedFormat(u16),
    #[error("no notes could be read")]
    EmptyTranscription,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MidiWarning {
    /// Note still on when its track ended; closed at the track end.
    Unclosed { channel: u8, pitch: u8, onset: f64 },
    /// Note whose on and off fell on the same tick; dropped.
    ZeroLength { channel: u8, pitch: u8, onset: f64 },
}

impl fmt::Display for MidiWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MidiWarning::Unclosed { channel, pitch, onset } => write!(
                f,
                "note {pitch} on channel {} at {onset:.3}s has no note-off; closed at end of track",
                channel + 1
            ),
            MidiWarning::ZeroLength { channel, pitch, onset } => write!(
                f,
                "note {pitch} on channel {} at {onset:.3}s has zero length; dropped",
                channel + 1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMidi {
    pub transcription: Transcription,
    pub warnings: Vec<MidiWarning>,
}

const PERCUSSION_CHANNEL: u8 = 9;
const DEFAULT_TEMPO: u32 = 500_000;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8 },
    Tempo(u32),
    Other,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    fn malformed(&self, reason: &'static str) -> MidiError {
        MidiError::Malformed {
            offset: self.base + self.pos,
            reason,
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self.bytes.get(self.pos).ok_or_else(|| self.malformed("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.malformed("length runs past end of data"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7F);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(self.malformed("variable-length quantity longer than four bytes"))
    }
}

#[derive(Debug, Clone, Copy)]
enum Timing {
    PerQuarter(u16),
    Smpte { seconds_per_tick: f64 },
}

struct Header {
    format: u16,
    tracks: u16,
    timing: Timing,
}

fn parse_header(r: &mut Reader<'_>) -> Result<Header, MidiError> {
    if r.take(4).map_err(|_| r.malformed("missing MThd header"))? != b"MThd" {
        return Err(MidiError::Malformed {
            offset: 0,
            reason: "missing MThd header",
        });
    }
    let len = r.u32()? as usize;
    if len < 6 {
        return Err(r.malformed("header chunk shorter than six bytes"));
    }
    let body = r.take(len)?;
    let format = u16::from_be_bytes([body[0], body[1]]);
    let tracks = u16::from_be_bytes([body[2], body[3]]);
    let division = u16::from_be_bytes([body[4], body[5]]);
    match format {
        0 | 1 => {}
        2 => return Err(MidiError::UnsupportedFormat(2)),
        _ => return Err(MidiError::Malformed { offset: 8, reason: "unknown SMF format" }),
    }
    let timing = if division & 0x8000 == 0 {
        if division == 0 {
            return Err(MidiError::Malformed { offset: 12, reason: "zero ticks per quarter note" });
        }
        Timing::PerQuarter(division)
    } else {
        let fps = match -((division >> 8) as u8 as i8) {
            24 => 24.0,
            25 => 25.0,
            29 => 29.97,
            30 => 30.0,
            _ => return Err(MidiError::Malformed { offset: 12, reason: "invalid SMPTE frame rate" }),
        };
        let per_frame = f64::from(division & 0xFF);
        if per_frame == 0.0 {
            return Err(MidiError::Malformed { offset: 12, reason: "zero ticks per SMPTE frame" });
        }
        Timing::Smpte {
            seconds_per_tick: 1.0 / (fps * per_frame),
        }
    };
    Ok(Header { format, tracks, timing })
}

fn parse_track(data: &[u8], base: usize) -> Result<Vec<(u64, Event)>, MidiError> {
    let mut r = Reader { bytes: data, pos: 0, base };
    let mut events = Vec::new();
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while !r.at_end() {
        tick += u64::from(r.vlq()?);
        let first = r.u8()?;
        let event = match first {
            0xFF => {
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let body = r.take(len)?;
                match kind {
                    0x51 if len == 3 => Event::Tempo(u32::from_be_bytes([0, body[0], body[1], body[2]])),
                    0x2F => {
                        events.push((tick, Event::Other));
                        break;
                    }
                    _ => Event::Other,
                }
            }
            0xF0 | 0xF7 => {
                let len = r.vlq()? as usize;
                r.take(len)?;
                Event::Other
            }
            0xF1..=0xFE => return Err(r.malformed("unexpected system message in track")),
            _ => {
                let (status, first_data) = if first & 0x80 != 0 {
                    running = Some(first);
                    (first, r.u8()?)
                } else {
                    (running.ok_or_else(|| r.malformed("data byte without running status"))?, first)
                };
                let channel = status & 0x0F;
                match status & 0xF0 {
                    0x80 => {
                        r.u8()?;
                        Event::NoteOff { channel, pitch: first_data & 0x7F }
                    }
                    0x90 => {
                        let velocity = r.u8()? & 0x7F;
                        let pitch = first_data & 0x7F;
                        if velocity == 0 {
                            Event::NoteOff { channel, pitch }
                        } else {
                            Event::NoteOn { channel, pitch, velocity }
                        }
                    }
                    0xA0 | 0xB0 | 0xE0 => {
                        r.u8()?;
                        Event::Other
                    }
                    _ => Event::Other,
                }
            }
        };
        events.push((tick, event));
    }
    Ok(events)
}

/// Converts ticks to seconds through a piecewise-constant tempo map.
struct TempoMap {
    timing: Timing,
    /// `(tick, seconds at tick, microseconds per quarter from here on)`.
    segments: Vec<(u64, f64, u32)>,
}

impl TempoMap {
    fn new(timing: Timing, mut changes: Vec<(u64, u32)>) -> Self {
        let mut map = TempoMap {
            timing,
            segments: vec![(0, 0.0, DEFAULT_TEMPO)],
        };
        changes.sort_by_key(|c| c.0);
        for (tick, tempo) in changes {
            let seconds = map.seconds(tick);
            if map.segments.last().is_some_and(|s| s.0 == tick) {
                map.segments.pop();
            }
            map.segments.push((tick, seconds, tempo));
        }
        map
    }

    fn seconds(&self, tick: u64) -> f64 {
        match self.timing {
            Timing::Smpte { seconds_per_tick } => tick as f64 * seconds_per_tick,
            Timing::PerQuarter(tpq) => {
                let k = self.segments.partition_point(|s| s.0 <= tick) - 1;
                let (t0, s0, tempo) = self.segments[k];
                s0 + (tick - t0) as f64 * f64::from(tempo) / (1e6 * f64::from(tpq))
            }
        }
    }
}

/// Parses a Standard MIDI File into a transcription called `id`.
pub fn parse_midi(bytes: &[u8], id: &str) -> Result<Transcription, MidiError> {
    parse_midi_detailed(bytes, id).map(|p| p.transcription)
}

/// Like [`parse_midi`], also returning what had to be repaired.
pub fn parse_midi_detailed(bytes: &[u8], id: &str) -> Result<ParsedMidi, MidiError> {
    let mut r = Reader { bytes, pos: 0, base: 0 };
    let header = parse_header(&mut r)?;

    let mut tracks = Vec::new();
    while !r.at_end() && tracks.len() < usize::from(header.tracks) {
        let kind = r.take(4)?;
        let len = r.u32()? as usize;
        let base = r.pos;
        let body = r.take(len)?;
        if kind == b"MTrk" {
            tracks.push(parse_track(body, base)?);
        }
    }
    if tracks.is_empty() {
        return Err(MidiError::EmptyTranscription);
    }
    if header.format == 0 && tracks.len() > 1 {
        log::debug!("format 0 file declares {} tracks; reading all of them", tracks.len());
    }

    let tempo_changes = tracks
        .iter()
        .flatten()
        .filter_map(|&(tick, e)| match e {
            Event::Tempo(t) => Some((tick, t)),
            _ => None,
        })
        .collect();
    let map = TempoMap::new(header.timing, tempo_changes);

    let mut notes = Vec::new();
    let mut warnings = Vec::new();
    for track in &tracks {
        let end_tick = track.last().map_or(0, |e| e.0);
        let mut open: HashMap<(u8, u8), (u64, u8)> = HashMap::new();
        let mut close = |channel: u8, pitch: u8, on: u64, velocity: u8, off: u64, warnings: &mut Vec<MidiWarning>| {
            let onset = map.seconds(on);
            if off <= on {
                warnings.push(MidiWarning::ZeroLength { channel, pitch, onset });
                return;
            }
            notes.push(Note::new(onset, pitch, map.seconds(off) - onset, velocity));
        };
        for &(tick, event) in track {
            match event {
                Event::NoteOn { channel, .. } | Event::NoteOff { channel, .. } if channel == PERCUSSION_CHANNEL => {}
                Event::NoteOn { channel, pitch, velocity } => {
                    if let Some((on, vel)) = open.insert((channel, pitch), (tick, velocity)) {
                        close(channel, pitch, on, vel, tick, &mut warnings);
                    }
                }
                Event::NoteOff { channel, pitch } => {
                    if let Some((on, vel)) = open.remove(&(channel, pitch)) {
                        close(channel, pitch, on, vel, tick, &mut warnings);
                    }
                }
                _ => {}
            }
        }
        let mut dangling: Vec<_> = open.into_iter().collect();
        dangling.sort_by_key(|&((ch, p), (on, _))| (on, ch, p));
        for ((channel, pitch), (on, vel)) in dangling {
            warnings.push(MidiWarning::Unclosed { channel, pitch, onset: map.seconds(on) });
            close(channel, pitch, on, vel, end_tick, &mut warnings);
        }
    }
    if notes.is_empty() {
        return Err(MidiError::EmptyTranscription);
    }
    let transcription = Transcription::new(id, notes).map_err(|_| MidiError::EmptyTranscription)?;
    Ok(ParsedMidi { transcription, warnings })
}

pub const WRITE_TICKS_PER_QUARTER: u16 = 480;
const WRITE_TEMPO: u32 = 500_000;
/// Ticks per second for files produced by [`write_smf0`].
pub const WRITE_TICKS_PER_SECOND: f64 = 960.0;

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7F) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for k in (0..n).rev() {
        out.push(if k > 0 { buf[k] | 0x80 } else { buf[k] });
    }
}

/// Encodes a transcription as a format 0 SMF.
///
/// Overlapping notes of the same pitch are spread over different channels
/// (skipping channel 10) so that reading the file back recovers every note.
pub fn write_smf0(t: &Transcription) -> Vec<u8> {
    let to_tick = |s: f64| (s * WRITE_TICKS_PER_SECOND).round().max(0.0) as u64;
    // (tick, is_on, channel, pitch, velocity)
    let mut events: Vec<(u64, bool, u8, u8, u8)> = Vec::with_capacity(2 * t.len());
    // busy[pitch] lists, per channel, the tick at which that channel frees up.
    let mut busy: HashMap<u8, Vec<u64>> = HashMap::new();
    let channels: Vec<u8> = (0u8..16).filter(|&c| c != PERCUSSION_CHANNEL).collect();
    for n in t.notes() {
        let on = to_tick(n.onset);
        let off = to_tick(n.onset + n.duration).max(on + 1);
        let slots = busy.entry(n.pitch).or_insert_with(|| vec![0; channels.len()]);
        let slot = slots.iter().position(|&free| free <= on).unwrap_or(0);
        slots[slot] = off;
        let channel = channels[slot];
        events.push((on, true, channel, n.pitch, n.velocity));
        events.push((off, false, channel, n.pitch, 0));
    }
    events.sort_by_key(|&(tick, is_on, channel, pitch, _)| (tick, is_on, channel, pitch));

    let mut track = Vec::new();
    track.extend_from_slice(&[0x00, 0xFF, 0x51, 0x03]);
    track.extend_from_slice(&WRITE_TEMPO.to_be_bytes()[1..]);
    let mut last = 0u64;
    for (tick, is_on, channel, pitch, velocity) in events {
        push_vlq(&mut track, (tick - last) as u32);
        last = tick;
        if is_on {
            track.extend_from_slice(&[0x90 | channel, pitch, velocity]);
        } else {
            track.extend_from_slice(&[0x80 | channel, pitch, 0x40]);
        }
    }
    track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&WRITE_TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
