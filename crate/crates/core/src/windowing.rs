//! Half-stride sliding windows over a session.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixation::Fixation;
use crate::session::{GazeSample, Label, Session};

pub const DEFAULT_WINDOW_SIZES: [f64; 5] = [5.0, 10.0, 15.0, 20.0, 30.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpan {
    pub start: f64,
    pub size: f64,
    pub index: usize,
}

impl WindowSpan {
    pub fn end(&self) -> f64 {
        self.start + self.size
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseTag {
    InitialOnly,
    Mixed,
}

impl PhaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseTag::InitialOnly => "InitialOnly",
            PhaseTag::Mixed => "Mixed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowData<'a> {
    pub span: WindowSpan,
    pub gaze: &'a [GazeSample],
    pub fixations: &'a [Fixation],
    pub label: Label,
    pub phase_tag: PhaseTag,
}

/// Spans of `size` seconds advancing by `size / 2`, keeping only those that
/// end at or before `duration`.
pub fn generate_windows(duration: f64, size: f64) -> Result<Vec<WindowSpan>> {
    if !(size > 0.0 && size.is_finite()) {
        return Err(Error::Parameter(format!(
            "window size must be positive, got {size}"
        )));
    }
    if !(duration >= size) {
        return Ok(Vec::new());
    }
    let stride = size / 2.0;
    let count = ((duration - size) / stride).floor() as usize + 1;
    Ok((0..count)
        .map(|index| WindowSpan {
            start: index as f64 * stride,
            size,
            index,
        })
        .collect())
}

/// Gaze samples in `[start, start + size)` and the fixations starting inside it.
/// `fixations` must be sorted by start time.
pub fn slice_window<'a>(
    session: &'a Session,
    span: WindowSpan,
    fixations: &'a [Fixation],
) -> WindowData<'a> {
    let initial = merged_intervals(&session.initial_phase_intervals());
    window_data(session, span, fixations, &initial)
}

fn window_data<'a>(
    session: &'a Session,
    span: WindowSpan,
    fixations: &'a [Fixation],
    initial: &[(f64, f64)],
) -> WindowData<'a> {
    let lo = fixations.partition_point(|f| f.start < span.start);
    let hi = fixations.partition_point(|f| f.start < span.end());
    WindowData {
        span,
        gaze: session.track.range(span.start, span.end()),
        fixations: &fixations[lo..hi.max(lo)],
        label: session.label,
        phase_tag: phase_tag(initial, &span),
    }
}

/// All windows of one session at one size, in temporal order.
pub fn session_windows<'a>(
    session: &'a Session,
    size: f64,
    fixations: &'a [Fixation],
) -> Result<Vec<WindowData<'a>>> {
    let initial = merged_intervals(&session.initial_phase_intervals());
    Ok(generate_windows(session.duration(), size)?
        .into_iter()
        .map(|span| window_data(session, span, fixations, &initial))
        .collect())
}

/// Keeps spans lying entirely inside the union of the per-image
/// `[shown_at, initial_decision_at)` intervals. Order is preserved.
pub fn filter_initial_phase(session: &Session, spans: &[WindowSpan]) -> Vec<WindowSpan> {
    let initial = merged_intervals(&session.initial_phase_intervals());
    spans
        .iter()
        .copied()
        .filter(|s| phase_tag(&initial, s) == PhaseTag::InitialOnly)
        .collect()
}

fn phase_tag(merged: &[(f64, f64)], span: &WindowSpan) -> PhaseTag {
    // merged intervals are disjoint and sorted, so at most one can contain the span
    let k = merged.partition_point(|iv| iv.0 <= span.start);
    match k.checked_sub(1).map(|k| merged[k]) {
        Some((a, b)) if a <= span.start && span.end() <= b => PhaseTag::InitialOnly,
        _ => PhaseTag::Mixed,
    }
}

/// Union of half-open intervals, as sorted disjoint intervals.
pub fn merged_intervals(intervals: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = intervals.iter().copied().filter(|iv| iv.1 > iv.0).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (a, b) in sorted {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

pub struct InventoryRow<'a> {
    pub participant_id: &'a str,
    pub window: &'a WindowData<'a>,
}

pub fn write_inventory_csv<'a, W: Write>(
    rows: impl IntoIterator<Item = InventoryRow<'a>>,
    out: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "participant_id",
        "window_index",
        "start_s",
        "size_s",
        "phase_tag",
        "label",
    ])?;
    for row in rows {
        let w = row.window;
        writer.write_record(&[
            row.participant_id.to_string(),
            w.span.index.to_string(),
            w.span.start.to_string(),
            w.span.size.to_string(),
            w.phase_tag.as_str().to_string(),
            w.label.as_str().to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
