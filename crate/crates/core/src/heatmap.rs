//! Binary PPM (P6) heatmaps: green at the low clamp, red at the high clamp,
//! each channel interpolated linearly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{self, FormatError};
use crate::raster::{DepthMap, Mask};

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("heatmap clamp needs min < max, got [{0}, {1}]")]
    BadRange(f64, f64),
    #[error("cannot render an empty map")]
    Empty,
    #[error(transparent)]
    Format(#[from] FormatError),
}

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapStyle {
    pub min_mm: f64,
    pub max_mm: f64,
    pub invalid: Rgb,
    pub low: Rgb,
    pub high: Rgb,
}

impl HeatmapStyle {
    pub fn new(min_mm: f64, max_mm: f64) -> Result<Self, HeatmapError> {
        if !(min_mm < max_mm && min_mm.is_finite() && max_mm.is_finite()) {
            return Err(HeatmapError::BadRange(min_mm, max_mm));
        }
        Ok(HeatmapStyle { min_mm, max_mm, invalid: [128, 128, 128], low: [0, 255, 0], high: [255, 0, 0] })
    }

    /// Clamp range `[0, max valid value]`, or `[0, 1]` when the map holds
    /// nothing positive.
    pub fn auto(map: &DepthMap) -> Self {
        let hi = map.valid_range().map(|(_, hi)| hi).filter(|&h| h > 0.0).unwrap_or(1.0);
        Self::new(0.0, hi).expect("positive upper clamp")
    }

    pub fn color(&self, v: f64) -> Rgb {
        if v.is_nan() {
            return self.invalid;
        }
        let f = ((v.clamp(self.min_mm, self.max_mm) - self.min_mm) / (self.max_mm - self.min_mm)).clamp(0.0, 1.0);
        let mut out = [0u8; 3];
        for (c, (&lo, &hi)) in out.iter_mut().zip(self.low.iter().zip(&self.high)) {
            *c = (lo as f64 + f * (hi as f64 - lo as f64)).round() as u8;
        }
        out
    }
}

fn ppm(width: usize, height: usize, pixels: impl Iterator<Item = Rgb>) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for px in pixels {
        out.extend_from_slice(&px);
    }
    out
}

pub fn render_heatmap(map: &DepthMap, style: &HeatmapStyle) -> Result<Vec<u8>, HeatmapError> {
    if map.is_empty() {
        return Err(HeatmapError::Empty);
    }
    Ok(ppm(map.width(), map.height(), map.data().iter().map(|&v| style.color(v))))
}

pub fn write_heatmap(map: &DepthMap, style: &HeatmapStyle, path: &Path) -> Result<(), HeatmapError> {
    Ok(formats::write_bytes(path, &render_heatmap(map, style)?)?)
}

/// White inside the mask, black outside.
pub fn write_mask(mask: &Mask, path: &Path) -> Result<(), HeatmapError> {
    if mask.is_empty() {
        return Err(HeatmapError::Empty);
    }
    let px = mask.data().iter().map(|&b| if b { [255; 3] } else { [0; 3] });
    Ok(formats::write_bytes(path, &ppm(mask.width(), mask.height(), px))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(bytes: &[u8]) -> &[u8] {
        // three header lines
        let mut newlines = 0;
        let start = bytes.iter().position(|&b| {
            newlines += (b == b'\n') as usize;
            newlines == 3
        });
        &bytes[start.unwrap() + 1..]
    }

    #[test]
    fn endpoints_and_midpoint() {
        let s = HeatmapStyle::new(0.0, 1.0).unwrap();
        let zeros = DepthMap::filled(3, 2, 0.0);
        let bytes = render_heatmap(&zeros, &s).unwrap();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        assert!(body(&bytes).chunks(3).all(|c| c == [0, 255, 0]));
        assert_eq!(s.color(1.0), [255, 0, 0]);
        assert_eq!(s.color(7.0), [255, 0, 0]);
        assert_eq!(s.color(-1.0), [0, 255, 0]);
        assert_eq!(s.color(f64::NAN), [128, 128, 128]);
    }

    #[test]
    fn channels_interpolate_independently() {
        let s = HeatmapStyle::new(2.0, 6.0).unwrap();
        for i in 0..=40 {
            let v = 2.0 + i as f64 * 0.1;
            let f = (v - 2.0) / 4.0;
            let r = (255.0 * f).round() as u8;
            let g = (255.0 - 255.0 * f).round() as u8;
            assert_eq!(s.color(v), [r, g, 0], "v = {v}");
        }
        assert_eq!(s.color(4.0), [128, 128, 0]);
    }

    #[test]
    fn bad_ranges() {
        assert!(HeatmapStyle::new(1.0, 1.0).is_err());
        assert!(HeatmapStyle::new(0.0, f64::NAN).is_err());
        assert_eq!(HeatmapStyle::auto(&DepthMap::invalid(2, 2)).max_mm, 1.0);
        assert!(render_heatmap(&DepthMap::invalid(0, 0), &HeatmapStyle::new(0.0, 1.0).unwrap()).is_err());
    }
}
