//! Dispersion-threshold (I-DT) fixation identification.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{GazeSample, GazeTrack};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    /// Seconds from session start.
    pub start: f64,
    /// Milliseconds.
    pub duration: f64,
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub sample_count: usize,
}

impl Fixation {
    pub fn end(&self) -> f64 {
        self.start + self.duration / 1000.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdtParams {
    /// Maximum `(max x - min x) + (max y - min y)` of a fixation, normalized units.
    pub dispersion_threshold: f64,
    pub min_duration_ms: f64,
    pub max_duration_ms: f64,
}

impl Default for IdtParams {
    fn default() -> Self {
        Self {
            dispersion_threshold: 0.05,
            min_duration_ms: 80.0,
            max_duration_ms: 4000.0,
        }
    }
}

impl IdtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dispersion_threshold > 0.0 && self.dispersion_threshold < 1.0) {
            return Err(Error::Parameter(format!(
                "dispersion threshold must lie in (0, 1), got {}",
                self.dispersion_threshold
            )));
        }
        if !(self.min_duration_ms > 0.0 && self.min_duration_ms <= self.max_duration_ms) {
            return Err(Error::Parameter(format!(
                "need 0 < min_duration_ms <= max_duration_ms, got {} and {}",
                self.min_duration_ms, self.max_duration_ms
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Bounds {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Bounds {
    fn of(s: &GazeSample) -> Self {
        Self {
            min_x: s.x,
            max_x: s.x,
            min_y: s.y,
            max_y: s.y,
        }
    }

    fn with(mut self, s: &GazeSample) -> Self {
        self.min_x = self.min_x.min(s.x);
        self.max_x = self.max_x.max(s.x);
        self.min_y = self.min_y.min(s.y);
        self.max_y = self.max_y.max(s.y);
        self
    }

    fn dispersion(&self) -> f64 {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }
}

/// Dispersion of a set of samples: x-range plus y-range.
pub fn dispersion(samples: &[GazeSample]) -> f64 {
    match samples.split_first() {
        None => 0.0,
        Some((first, rest)) => rest
            .iter()
            .fold(Bounds::of(first), |b, s| b.with(s))
            .dispersion(),
    }
}

/// Detects fixations with I-DT.
///
/// Each sample stands for one nominal sample period, so a run of samples
/// `i..=j` covers `t[j] - t[i] + period` (capped at the next sample's time so
/// consecutive fixations never overlap). A window is opened once it covers
/// `min_duration_ms`, grown while its dispersion stays within the threshold,
/// and closed early when it would exceed `max_duration_ms`; the remaining
/// dwell then starts a fresh window.
pub fn detect_fixations(track: &GazeTrack, params: &IdtParams) -> Vec<Fixation> {
    let samples = track.samples();
    let period = track.period();
    let n = samples.len();
    let covered_ms = |i: usize, j: usize| -> f64 {
        let tail = match samples.get(j + 1) {
            Some(next) => (next.t - samples[j].t).min(period),
            None => period,
        };
        (samples[j].t - samples[i].t + tail) * 1000.0
    };

    let mut fixations = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        let mut bounds = Bounds::of(&samples[i]);
        while covered_ms(i, j) < params.min_duration_ms && j + 1 < n {
            j += 1;
            bounds = bounds.with(&samples[j]);
        }
        if covered_ms(i, j) < params.min_duration_ms {
            break;
        }
        if bounds.dispersion() > params.dispersion_threshold {
            i += 1;
            continue;
        }
        while j + 1 < n {
            let grown = bounds.with(&samples[j + 1]);
            if grown.dispersion() > params.dispersion_threshold
                || covered_ms(i, j + 1) > params.max_duration_ms
            {
                break;
            }
            bounds = grown;
            j += 1;
        }

        let members = &samples[i..=j];
        let count = members.len() as f64;
        fixations.push(Fixation {
            start: samples[i].t,
            duration: covered_ms(i, j),
            centroid_x: members.iter().map(|s| s.x).sum::<f64>() / count,
            centroid_y: members.iter().map(|s| s.y).sum::<f64>() / count,
            sample_count: members.len(),
        });
        i = j + 1;
    }
    fixations
}

pub fn write_fixations_csv<W: Write>(fixations: &[Fixation], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["start_s", "duration_ms", "cx", "cy", "sample_count"])?;
    for f in fixations {
        writer.write_record(&[
            f.start.to_string(),
            f.duration.to_string(),
            f.centroid_x.to_string(),
            f.centroid_y.to_string(),
            f.sample_count.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
