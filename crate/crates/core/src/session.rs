//! Recording types and readers/writers for the on-disk session layout.
//!
//! A session store is a directory with one JSON manifest per participant
//! under `manifests/` and the raw gaze CSV files under `gaze/<participant_id>/`.
//! Each manifest is a JSON array with one object per viewed image; every
//! object repeats `participant_id` and `label` and names the CSV file holding
//! the gaze samples recorded while that image was on screen.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GAZE_CSV_HEADER: [&str; 4] = ["t", "x", "y", "confidence"];
pub const DEFAULT_SAMPLING_RATE: f64 = 200.0;
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    /// Seconds from session start.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl GazeSample {
    pub fn new(t: f64, x: f64, y: f64, confidence: f64) -> Self {
        Self {
            t,
            x,
            y,
            confidence,
        }
    }
}

/// Time-ordered gaze samples with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct GazeTrack {
    samples: Vec<GazeSample>,
    nominal_rate: f64,
    dropped: usize,
}

impl GazeTrack {
    pub fn new(samples: Vec<GazeSample>, nominal_rate: f64) -> Result<Self> {
        if !(nominal_rate > 0.0 && nominal_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "nominal rate must be positive, got {nominal_rate}"
            )));
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::Validation(format!(
                "timestamps not strictly increasing at sample {}",
                i + 1
            )));
        }
        if samples.iter().any(|s| s.t < 0.0 || !s.t.is_finite()) {
            return Err(Error::Validation("negative or non-finite timestamp".into()));
        }
        Ok(Self {
            samples,
            nominal_rate,
            dropped: 0,
        })
    }

    pub fn empty(nominal_rate: f64) -> Self {
        Self {
            samples: Vec::new(),
            nominal_rate,
            dropped: 0,
        }
    }

    pub fn samples(&self) -> &[GazeSample] {
        &self.samples
    }

    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    pub fn period(&self) -> f64 {
        1.0 / self.nominal_rate
    }

    /// Records how many low-confidence rows were discarded while building the track.
    pub fn with_dropped(mut self, dropped: usize) -> Self {
        self.dropped = dropped;
        self
    }

    /// Rows discarded for low confidence when the track was parsed.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// End of the recording: the last timestamp plus one nominal sample period.
    pub fn duration(&self) -> f64 {
        self.samples
            .last()
            .map(|s| s.t + self.period())
            .unwrap_or(0.0)
    }

    pub fn max_gap(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[1].t - w[0].t)
            .fold(0.0, f64::max)
    }

    /// Samples with `start <= t < end`.
    pub fn range(&self, start: f64, end: f64) -> &[GazeSample] {
        let lo = self.samples.partition_point(|s| s.t < start);
        let hi = self.samples.partition_point(|s| s.t < end);
        &self.samples[lo..hi.max(lo)]
    }

    pub fn into_samples(self) -> Vec<GazeSample> {
        self.samples
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(alias = "Non-Expert", alias = "nonexpert", alias = "non-expert")]
    NonExpert,
    #[serde(alias = "expert")]
    Expert,
}

impl Label {
    /// Class index used by the classifier; experts are class 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::NonExpert => 0,
            Label::Expert => 1,
        }
    }

    pub fn is_expert(self) -> bool {
        self == Label::Expert
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NonExpert => "NonExpert",
            Label::Expert => "Expert",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Normal,
    Abnormal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageEvent {
    pub image_id: String,
    pub shown_at: f64,
    pub initial_decision_at: f64,
    pub final_decision_at: f64,
    pub initial_decision: Decision,
    pub final_decision: Decision,
    pub ground_truth: String,
}

impl ImageEvent {
    fn check(&self) -> Result<()> {
        if !(self.shown_at < self.initial_decision_at
            && self.initial_decision_at <= self.final_decision_at)
        {
            return Err(Error::Validation(format!(
                "image {}: expected shown_at < initial_decision_at <= final_decision_at",
                self.image_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub participant_id: String,
    pub label: Label,
    pub track: GazeTrack,
    pub events: Vec<ImageEvent>,
}

impl Session {
    pub fn duration(&self) -> f64 {
        self.track.duration()
    }

    /// Per-image `[shown_at, initial_decision_at)` intervals, in order.
    pub fn initial_phase_intervals(&self) -> Vec<(f64, f64)> {
        self.events
            .iter()
            .map(|e| (e.shown_at, e.initial_decision_at))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParseOptions {
    pub min_confidence: f64,
    pub nominal_rate: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            nominal_rate: DEFAULT_SAMPLING_RATE,
        }
    }
}

/// Parses a `t,x,y,confidence` CSV. Coordinates are clamped to `[0, 1]`,
/// low-confidence rows are dropped and duplicate timestamps keep the first row.
pub fn parse_gaze_csv<R: Read>(input: R, opts: &ParseOptions) -> Result<GazeTrack> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::EmptyTrack),
        Some(h) => h?,
    };
    if header.iter().ne(GAZE_CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                GAZE_CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut samples = Vec::new();
    let mut rows = 0usize;
    let mut dropped = 0usize;
    for record in records {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 columns, found {}", record.len()),
            });
        }
        let mut vals = [0.0f64; 4];
        for (v, field) in vals.iter_mut().zip(record.iter()) {
            *v = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("non-numeric value `{field}`"),
                })?;
        }
        rows += 1;
        let [t, x, y, confidence] = vals;
        if t < 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("negative timestamp {t}"),
            });
        }
        if confidence < opts.min_confidence {
            dropped += 1;
            continue;
        }
        samples.push(GazeSample::new(
            t,
            x.clamp(0.0, 1.0),
            y.clamp(0.0, 1.0),
            confidence,
        ));
    }
    if rows == 0 {
        return Err(Error::EmptyTrack);
    }

    samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    samples.dedup_by(|later, earlier| later.t == earlier.t);

    let mut track = GazeTrack::new(samples, opts.nominal_rate)?;
    track.dropped = dropped;
    Ok(track)
}

pub fn write_gaze_csv<W: Write>(samples: &[GazeSample], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(GAZE_CSV_HEADER)?;
    for s in samples {
        writer.write_record(&[
            s.t.to_string(),
            s.x.to_string(),
            s.y.to_string(),
            s.confidence.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// One object of a participant manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub participant_id: String,
    pub label: Label,
    pub image_source: String,
    pub ground_truth: String,
    pub initial_decision: Decision,
    pub final_decision: Decision,
    pub raw_gaze_pointer: String,
    pub shown_at: f64,
    pub initial_decision_at: f64,
    pub final_decision_at: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_fixation_time_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixation_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixation_times_ms: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gri: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gri_normalized: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<String>,
}

impl ManifestEntry {
    fn event(&self) -> ImageEvent {
        ImageEvent {
            image_id: self.image_source.clone(),
            shown_at: self.shown_at,
            initial_decision_at: self.initial_decision_at,
            final_decision_at: self.final_decision_at,
            initial_decision: self.initial_decision,
            final_decision: self.final_decision,
            ground_truth: self.ground_truth.clone(),
        }
    }
}

pub fn read_manifest<R: Read>(manifest: R) -> Result<Vec<ManifestEntry>> {
    Ok(serde_json::from_reader(manifest)?)
}

/// Builds a session from a participant manifest, reading each referenced
/// gaze CSV from `gaze_dir` and concatenating the tracks.
pub fn parse_session<R: Read>(
    manifest: R,
    gaze_dir: &Path,
    opts: &ParseOptions,
) -> Result<Session> {
    let entries = read_manifest(manifest)?;
    session_from_entries(&entries, gaze_dir, opts)
}

pub fn session_from_entries(
    entries: &[ManifestEntry],
    gaze_dir: &Path,
    opts: &ParseOptions,
) -> Result<Session> {
    let first = entries
        .first()
        .ok_or_else(|| Error::Validation("manifest has no image objects".into()))?;
    if let Some(e) = entries
        .iter()
        .find(|e| e.participant_id != first.participant_id || e.label != first.label)
    {
        return Err(Error::Validation(format!(
            "image {} disagrees on participant_id/label with the first object",
            e.image_source
        )));
    }

    let mut events: Vec<ImageEvent> = entries.iter().map(ManifestEntry::event).collect();
    for e in &events {
        e.check()?;
    }
    events.sort_by(|a, b| a.shown_at.total_cmp(&b.shown_at));
    if let Some(w) = events
        .windows(2)
        .find(|w| w[1].shown_at < w[0].final_decision_at)
    {
        return Err(Error::Validation(format!(
            "images {} and {} have overlapping time spans",
            w[0].image_id, w[1].image_id
        )));
    }

    let mut samples = Vec::new();
    let mut dropped = 0;
    for entry in entries {
        let path = gaze_dir.join(&entry.raw_gaze_pointer);
        if !path.is_file() {
            return Err(Error::MissingGazeFile {
                pointer: entry.raw_gaze_pointer.clone(),
            });
        }
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let part = parse_gaze_csv(std::io::BufReader::new(file), opts)?;
        dropped += part.dropped;
        samples.extend(part.into_samples());
    }
    samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    samples.dedup_by(|later, earlier| later.t == earlier.t);
    let mut track = GazeTrack::new(samples, opts.nominal_rate)?;
    track.dropped = dropped;

    Ok(Session {
        participant_id: first.participant_id.clone(),
        label: first.label,
        track,
        events,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationThresholds {
    pub max_dropped_fraction: f64,
    pub max_gap_s: f64,
}

impl Default for ValidationThresholds {
    fn default() -> Self {
        Self {
            max_dropped_fraction: 0.5,
            max_gap_s: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub participant_id: String,
    pub dropped_fraction: f64,
    pub max_gap_s: f64,
    pub violations: Vec<String>,
    pub usable: bool,
}

pub fn validate_session(s: &Session, thresholds: &ValidationThresholds) -> ValidationReport {
    let total = s.track.len() + s.track.dropped();
    let dropped_fraction = if total == 0 {
        0.0
    } else {
        s.track.dropped() as f64 / total as f64
    };
    let max_gap_s = s.track.max_gap();
    let mut violations = Vec::new();
    let mut usable = true;

    if s.track.is_empty() {
        violations.push("track has no samples".to_string());
        usable = false;
    }
    if dropped_fraction > thresholds.max_dropped_fraction {
        violations.push(format!(
            "dropped fraction {dropped_fraction:.3} exceeds {}",
            thresholds.max_dropped_fraction
        ));
        usable = false;
    }
    if max_gap_s > thresholds.max_gap_s {
        violations.push(format!(
            "maximum inter-sample gap {max_gap_s:.3} s exceeds {} s",
            thresholds.max_gap_s
        ));
        usable = false;
    }
    for e in &s.events {
        if e.check().is_err() {
            violations.push(format!("image {}: decision times out of order", e.image_id));
        }
    }
    for w in s.events.windows(2) {
        if w[1].shown_at < w[0].shown_at {
            violations.push(format!(
                "image {} shown before preceding image {}",
                w[1].image_id, w[0].image_id
            ));
        } else if w[1].shown_at < w[0].final_decision_at {
            violations.push(format!(
                "images {} and {} overlap",
                w[0].image_id, w[1].image_id
            ));
        }
    }
    if let (Some(first), Some(last)) = (s.track.samples().first(), s.events.last()) {
        let end = s.track.duration();
        if s.events
            .iter()
            .any(|e| e.shown_at < first.t - s.track.period())
            || last.final_decision_at > end + s.track.period()
        {
            violations.push("image time spans extend beyond the gaze track".to_string());
        }
    }

    ValidationReport {
        participant_id: s.participant_id.clone(),
        dropped_fraction,
        max_gap_s,
        violations,
        usable,
    }
}

pub const MANIFEST_DIR: &str = "manifests";
pub const GAZE_DIR: &str = "gaze";

/// Writes a session in the store layout; gaze samples are split per image at
/// each image's `shown_at`, with any leading samples going to the first image.
pub fn write_session(session: &Session, store: &Path) -> Result<Vec<ManifestEntry>> {
    let entries = manifest_entries(session);
    let gaze_dir = store.join(GAZE_DIR).join(&session.participant_id);
    let manifest_dir = store.join(MANIFEST_DIR);
    fs::create_dir_all(&gaze_dir).map_err(|e| Error::io(&gaze_dir, e))?;
    fs::create_dir_all(&manifest_dir).map_err(|e| Error::io(&manifest_dir, e))?;

    let samples = session.track.samples();
    for (i, entry) in entries.iter().enumerate() {
        let lo = if i == 0 {
            0
        } else {
            samples.partition_point(|s| s.t < session.events[i].shown_at)
        };
        let hi = match session.events.get(i + 1) {
            Some(next) => samples.partition_point(|s| s.t < next.shown_at),
            None => samples.len(),
        };
        let path = gaze_dir.join(&entry.raw_gaze_pointer);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_gaze_csv(&samples[lo..hi.max(lo)], std::io::BufWriter::new(file))?;
    }
    write_manifest(
        &entries,
        &manifest_dir.join(format!("{}.json", session.participant_id)),
    )?;
    Ok(entries)
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), entries)?;
    Ok(())
}

pub fn manifest_entries(session: &Session) -> Vec<ManifestEntry> {
    session
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| ManifestEntry {
            participant_id: session.participant_id.clone(),
            label: session.label,
            image_source: e.image_id.clone(),
            ground_truth: e.ground_truth.clone(),
            initial_decision: e.initial_decision,
            final_decision: e.final_decision,
            raw_gaze_pointer: format!("seq_{}.csv", i + 1),
            shown_at: e.shown_at,
            initial_decision_at: e.initial_decision_at,
            final_decision_at: e.final_decision_at,
            average_fixation_time_ms: None,
            fixation_count: None,
            fixation_times_ms: None,
            gri: None,
            gri_normalized: None,
            heatmap: None,
        })
        .collect()
}

/// Loads every participant in a store, ordered by participant id.
pub fn load_store(store: &Path, opts: &ParseOptions) -> Result<Vec<Session>> {
    let manifest_dir = store.join(MANIFEST_DIR);
    let mut paths: Vec<_> = fs::read_dir(&manifest_dir)
        .map_err(|e| Error::io(&manifest_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    let mut sessions = Vec::with_capacity(paths.len());
    for path in paths {
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let entries = read_manifest(std::io::BufReader::new(file))?;
        let pid = entries
            .first()
            .map(|e| e.participant_id.clone())
            .unwrap_or_default();
        sessions.push(session_from_entries(
            &entries,
            &store.join(GAZE_DIR).join(&pid),
            opts,
        )?);
    }
    sessions.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    Ok(sessions)
}
