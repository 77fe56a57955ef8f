//! Minimal line plots rendered straight to PNG, for quick looks at ROC
//! curves and softmax traces without an external plotting stack.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

const WIDTH: u32 = 480;
const HEIGHT: u32 = 360;
const MARGIN: u32 = 30;

/// Axis ranges of a plot, `(x_min, x_max, y_min, y_max)`.
pub type Bounds = (f64, f64, f64, f64);

pub struct LinePlot {
    bounds: Bounds,
    image: RgbImage,
}

impl LinePlot {
    pub fn new(bounds: Bounds) -> Result<Self> {
        let (x0, x1, y0, y1) = bounds;
        if !(x1 > x0 && y1 > y0) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter(format!(
                "degenerate plot bounds {bounds:?}"
            )));
        }
        let mut image = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
        let axis = Rgb([0, 0, 0]);
        for x in MARGIN..WIDTH - MARGIN {
            image.put_pixel(x, HEIGHT - MARGIN, axis);
        }
        for y in MARGIN..=HEIGHT - MARGIN {
            image.put_pixel(MARGIN, y, axis);
        }
        Ok(Self { bounds, image })
    }

    fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.bounds;
        let w = f64::from(WIDTH - 2 * MARGIN);
        let h = f64::from(HEIGHT - 2 * MARGIN);
        let px = f64::from(MARGIN) + (x - x0) / (x1 - x0) * w;
        let py = f64::from(HEIGHT - MARGIN) - (y - y0) / (y1 - y0) * h;
        (px, py)
    }

    fn dot(&mut self, px: f64, py: f64, color: Rgb<u8>) {
        let (x, y) = (px.round(), py.round());
        if x >= 0.0 && y >= 0.0 && x < f64::from(WIDTH) && y < f64::from(HEIGHT) {
            self.image.put_pixel(x as u32, y as u32, color);
        }
    }

    pub fn line(&mut self, points: &[(f64, f64)], color: [u8; 3]) {
        let color = Rgb(color);
        for pair in points.windows(2) {
            let (ax, ay) = self.to_pixel(pair[0].0, pair[0].1);
            let (bx, by) = self.to_pixel(pair[1].0, pair[1].1);
            let steps = (bx - ax).abs().max((by - ay).abs()).ceil().max(1.0) as usize;
            for k in 0..=steps {
                let f = k as f64 / steps as f64;
                self.dot(ax + f * (bx - ax), ay + f * (by - ay), color);
            }
        }
        if let [(x, y)] = points {
            let (px, py) = self.to_pixel(*x, *y);
            self.dot(px, py, color);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.image
            .save(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }
}
