//! Gaze heatmaps: a Gaussian splat per sample, scaled so the peak is 1.

use std::path::Path;

use crate::error::{Error, Result};
use crate::session::GazeSample;

/// Row-major intensity grid with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Rescales so the maximum is 1; an all-zero grid is left unchanged.
    pub fn normalize(&mut self) {
        let peak = self.max();
        if peak > 0.0 {
            for v in &mut self.data {
                *v /= peak;
            }
        }
    }

    pub fn to_gray8(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |c, r| {
            let v = self.get(c as usize, r as usize).clamp(0.0, 1.0);
            image::Luma([(v * 255.0).round() as u8])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray8()
            .save(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }
}

/// Renders samples onto a `width x height` grid. A sample at `(x, y)` lands
/// on pixel `(x * (width - 1), y * (height - 1))`; the kernel is cut off at
/// four standard deviations.
pub fn render_heatmap(
    gaze: &[GazeSample],
    width: usize,
    height: usize,
    kernel_sigma_px: f64,
) -> Result<Heatmap> {
    if width == 0 || height == 0 {
        return Err(Error::Parameter(
            "heatmap dimensions must be at least 1".into(),
        ));
    }
    if !(kernel_sigma_px > 0.0) {
        return Err(Error::Parameter("kernel sigma must be positive".into()));
    }
    let mut map = Heatmap {
        width,
        height,
        data: vec![0.0; width * height],
    };
    let radius = 4.0 * kernel_sigma_px;
    let profile = |center: f64, len: usize| -> Vec<f64> {
        (0..len)
            .map(|i| {
                let d = i as f64 - center;
                if d.abs() <= radius {
                    (-0.5 * (d / kernel_sigma_px).powi(2)).exp()
                } else {
                    0.0
                }
            })
            .collect()
    };
    let span = |p: &[f64]| -> (usize, usize) {
        let lo = p.iter().position(|&v| v > 0.0).unwrap_or(p.len());
        let hi = p.iter().rposition(|&v| v > 0.0).map_or(lo, |i| i + 1);
        (lo, hi)
    };

    for s in gaze {
        let gx = profile(s.x * (width - 1) as f64, width);
        let gy = profile(s.y * (height - 1) as f64, height);
        let (x0, x1) = span(&gx);
        let (y0, y1) = span(&gy);
        for (r, &wy) in gy.iter().enumerate().take(y1).skip(y0) {
            let row = &mut map.data[r * width..(r + 1) * width];
            for (cell, &wx) in row[x0..x1].iter_mut().zip(&gx[x0..x1]) {
                *cell += wx * wy;
            }
        }
    }
    map.normalize();
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(x: f64, y: f64) -> GazeSample {
        GazeSample::new(0.0, x, y, 1.0)
    }

    #[test]
    fn single_sample_peaks_at_center() {
        let m = render_heatmap(&[at(0.5, 0.5)], 65, 33, 3.0).unwrap();
        assert_eq!(m.get(32, 16), 1.0);
        assert!(m.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn empty_track_gives_zeros() {
        let m = render_heatmap(&[], 16, 16, 2.0).unwrap();
        assert!(m.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mirrored_samples_are_symmetric() {
        let m = render_heatmap(&[at(0.2, 0.4), at(0.8, 0.4)], 50, 20, 4.0).unwrap();
        for r in 0..m.height {
            for c in 0..m.width {
                assert!((m.get(c, r) - m.get(m.width - 1 - c, r)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalization_is_idempotent() {
        let mut m =
            render_heatmap(&[at(0.1, 0.3), at(0.6, 0.6), at(0.62, 0.6)], 40, 40, 2.5).unwrap();
        let before = m.clone();
        m.normalize();
        assert_eq!(m, before);
    }

    #[test]
    fn rejects_zero_dimensions() {
        assert!(render_heatmap(&[], 0, 4, 1.0).is_err());
    }
}
