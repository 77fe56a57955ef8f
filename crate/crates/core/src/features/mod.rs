//! Per-window classifier inputs and dataset-level gaze statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixation::{detect_fixations, Fixation, IdtParams};
use crate::session::{GazeSample, Label, Session};
use crate::windowing::{session_windows, PhaseTag, WindowData};

pub mod heatmap;

pub use heatmap::{render_heatmap, Heatmap};

/// Number of scalar streams fed to the classifier (AFD, FC, AED).
pub const SCALAR_FEATURES: usize = 3;
pub const SCALAR_NAMES: [&str; SCALAR_FEATURES] = ["afd_ms", "fc", "aed"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub window_index: usize,
    pub start: f64,
    /// Channel-major gaze sequence: `x` then `y`, each of length `seq_len`.
    pub gaze_seq: Vec<f64>,
    pub afd_ms: f64,
    pub fc: f64,
    pub aed: f64,
    pub label: Label,
    pub phase_tag: PhaseTag,
    /// Set when the window held no gaze samples and `gaze_seq` is the constant fill.
    pub empty_gaze: bool,
}

impl WindowFeatures {
    pub fn seq_len(&self) -> usize {
        self.gaze_seq.len() / 2
    }

    pub fn x(&self) -> &[f64] {
        &self.gaze_seq[..self.seq_len()]
    }

    pub fn y(&self) -> &[f64] {
        &self.gaze_seq[self.seq_len()..]
    }

    pub fn scalars(&self) -> [f64; SCALAR_FEATURES] {
        [self.afd_ms, self.fc, self.aed]
    }

    fn set_scalars(&mut self, v: [f64; SCALAR_FEATURES]) {
        [self.afd_ms, self.fc, self.aed] = v;
    }
}

pub fn average_fixation_duration(fixations: &[Fixation]) -> f64 {
    if fixations.is_empty() {
        return 0.0;
    }
    fixations.iter().map(|f| f.duration).sum::<f64>() / fixations.len() as f64
}

pub fn fixation_count(fixations: &[Fixation]) -> usize {
    fixations.len()
}

/// Mean distance between consecutive fixation centroids.
pub fn average_euclidean_distance(fixations: &[Fixation]) -> f64 {
    if fixations.len() < 2 {
        return 0.0;
    }
    let total: f64 = fixations
        .windows(2)
        .map(|w| (w[1].centroid_x - w[0].centroid_x).hypot(w[1].centroid_y - w[0].centroid_y))
        .sum();
    total / (fixations.len() - 1) as f64
}

/// Average fixation duration divided by fixation count, in ms per fixation.
pub fn gaze_relational_index(afd_ms: f64, fc: usize) -> f64 {
    if fc == 0 {
        0.0
    } else {
        afd_ms / fc as f64
    }
}

/// Min-max rescaling to `[0, 1]`; a constant input maps to zeros.
pub fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|&v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect()
}

/// Linear interpolation of the gaze coordinates onto `len` timestamps
/// `start + k * size / len`. Values before the first sample or after the last
/// are held at the nearest sample. Returns the channel-major sequence and
/// whether the slice was empty (in which case every value is 0.5).
pub fn resample_gaze(slice: &[GazeSample], start: f64, size: f64, len: usize) -> (Vec<f64>, bool) {
    assert!(len >= 2, "resampled length must be at least 2");
    let mut out = vec![0.5; 2 * len];
    if slice.is_empty() {
        return (out, true);
    }
    let (xs, ys) = out.split_at_mut(len);
    let step = size / len as f64;
    let mut seg = 0;
    for k in 0..len {
        let t = start + k as f64 * step;
        while seg + 1 < slice.len() && slice[seg + 1].t <= t {
            seg += 1;
        }
        let a = &slice[seg];
        let (x, y) = match slice.get(seg + 1) {
            Some(b) if t > a.t => {
                let w = (t - a.t) / (b.t - a.t);
                (a.x + w * (b.x - a.x), a.y + w * (b.y - a.y))
            }
            _ => (a.x, a.y),
        };
        xs[k] = x;
        ys[k] = y;
    }
    (out, false)
}

/// Sequence length for a window: `round(rate * size)`.
pub fn sequence_length(nominal_rate: f64, size: f64) -> usize {
    (nominal_rate * size).round() as usize
}

pub fn extract_window_features(w: &WindowData<'_>, nominal_rate: f64) -> WindowFeatures {
    let len = sequence_length(nominal_rate, w.span.size);
    let (gaze_seq, empty_gaze) = resample_gaze(w.gaze, w.span.start, w.span.size, len);
    WindowFeatures {
        window_index: w.span.index,
        start: w.span.start,
        gaze_seq,
        afd_ms: average_fixation_duration(w.fixations),
        fc: fixation_count(w.fixations) as f64,
        aed: average_euclidean_distance(w.fixations),
        label: w.label,
        phase_tag: w.phase_tag,
        empty_gaze,
    }
}

/// Detects fixations on the whole session, then extracts features for every
/// window of the given size in temporal order.
pub fn session_window_features(
    session: &Session,
    size: f64,
    idt: &IdtParams,
) -> Result<Vec<WindowFeatures>> {
    let fixations = detect_fixations(&session.track, idt);
    let rate = session.track.nominal_rate();
    Ok(session_windows(session, size, &fixations)?
        .iter()
        .map(|w| extract_window_features(w, rate))
        .collect())
}

/// AFD, FC and AED over each image's `[shown_at, final_decision_at)` span,
/// with fixations assigned by start time.
pub fn image_scalar_features(
    session: &Session,
    fixations: &[Fixation],
) -> Vec<[f64; SCALAR_FEATURES]> {
    session
        .events
        .iter()
        .map(|e| {
            let lo = fixations.partition_point(|f| f.start < e.shown_at);
            let hi = fixations.partition_point(|f| f.start < e.final_decision_at);
            let fx = &fixations[lo..hi.max(lo)];
            [
                average_fixation_duration(fx),
                fixation_count(fx) as f64,
                average_euclidean_distance(fx),
            ]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarStats {
    pub mean: f64,
    pub std: f64,
    pub constant: bool,
}

impl ScalarStats {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            mean,
            std,
            constant: !(std > 1e-12 * mean.abs().max(1.0)),
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            (v - self.mean) / self.std
        }
    }
}

/// Training-set z-score statistics for AFD, FC and AED (population std).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub scalars: [ScalarStats; SCALAR_FEATURES],
}

pub fn fit_normalizer(train: &[WindowFeatures]) -> Result<FeatureStats> {
    if train.is_empty() {
        return Err(Error::Parameter(
            "cannot fit normalizer on an empty set".into(),
        ));
    }
    let scalars =
        std::array::from_fn(|k| ScalarStats::of(train.iter().map(move |f| f.scalars()[k])));
    Ok(FeatureStats { scalars })
}

/// Z-scores the scalar fields; the gaze sequence is left in `[0, 1]`.
pub fn apply_normalizer(stats: &FeatureStats, f: &WindowFeatures) -> WindowFeatures {
    let mut out = f.clone();
    let raw = f.scalars();
    out.set_scalars(std::array::from_fn(|k| stats.scalars[k].apply(raw[k])));
    out
}

pub struct FeatureRow<'a> {
    pub participant_id: &'a str,
    pub features: &'a WindowFeatures,
}

pub fn write_feature_csv<'a, W: Write>(
    rows: impl IntoIterator<Item = FeatureRow<'a>>,
    out: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "participant_id",
        "window_index",
        "afd_ms",
        "fc",
        "aed",
        "label",
        "phase_tag",
    ])?;
    for row in rows {
        let f = row.features;
        writer.write_record(&[
            row.participant_id.to_string(),
            f.window_index.to_string(),
            f.afd_ms.to_string(),
            f.fc.to_string(),
            f.aed.to_string(),
            f.label.as_str().to_string(),
            f.phase_tag.as_str().to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
