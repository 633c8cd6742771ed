use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma};

use super::ProjectionError;

/// Row-major grayscale image with intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    /// Values are clamped into [0, 1]; NaN becomes 0.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size mismatch");
        let pixels = pixels
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Foreground mask: pixels strictly above `threshold`.
    pub fn mask(&self, threshold: f32) -> Vec<bool> {
        self.pixels.iter().map(|&v| v > threshold).collect()
    }

    pub fn count_above(&self, threshold: f32) -> usize {
        self.pixels.iter().filter(|&&v| v > threshold).count()
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of pixels above `threshold`.
    pub fn bounding_box(&self, threshold: f32) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) > threshold {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bb
    }

    /// Rotate about the image center by `degrees` (counter-clockwise on
    /// screen) with nearest-neighbour sampling.
    pub fn rotated(&self, degrees: f64) -> GrayImage {
        let (s, c) = degrees.to_radians().sin_cos();
        let cx = self.width as f64 / 2.0;
        let cy = self.height as f64 / 2.0;
        let mut out = GrayImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                // inverse map; screen y points down
                let sx = c * dx - s * dy + cx;
                let sy = s * dx + c * dy + cy;
                if sx >= 0.0 && sy >= 0.0 {
                    let (ix, iy) = (sx.floor() as usize, sy.floor() as usize);
                    if ix < self.width && iy < self.height {
                        out.pixels[y * self.width + x] = self.get(ix, iy);
                    }
                }
            }
        }
        out
    }

    pub fn to_luma8(&self) -> ImageBuffer<Luma<u8>, Vec<u8>> {
        let data = self
            .pixels
            .iter()
            .map(|&v| {
                let q = (255.0 * v).round() as u8;
                // keep covered pixels covered
                if v > 0.0 {
                    q.max(1)
                } else {
                    q
                }
            })
            .collect();
        ImageBuffer::from_raw(self.width as u32, self.height as u32, data)
            .expect("buffer size matches dimensions")
    }

    pub fn from_luma8(img: &ImageBuffer<Luma<u8>, Vec<u8>>) -> Self {
        let pixels = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels,
        }
    }

    /// 8-bit grayscale PNG, intensity `round(255 · value)`, at least 1 for any
    /// nonzero pixel so masks survive the round trip.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        self.to_luma8()
            .write_to(&mut buf, ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        buf.into_inner()
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, ProjectionError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| ProjectionError::Image(e.to_string()))?;
        Ok(Self::from_luma8(&img.to_luma8()))
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ProjectionError> {
        self.to_luma8()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|e| ProjectionError::Image(format!("{}: {e}", path.display())))
    }

    pub fn load_png(path: &Path) -> Result<Self, ProjectionError> {
        let img = image::open(path)
            .map_err(|e| ProjectionError::Image(format!("{}: {e}", path.display())))?;
        Ok(Self::from_luma8(&img.to_luma8()))
    }
}

/// Intersection-over-union of two equally sized masks. Two empty masks
/// have IoU 0.
pub fn mask_iou(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "mask size mismatch");
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_quantizes_to_8_bits() {
        let mut img = GrayImage::new(4, 3);
        img.set(1, 2, 0.5);
        img.set(3, 0, 1.0);
        let back = GrayImage::decode_png(&img.encode_png()).unwrap();
        assert_eq!(back.width(), 4);
        assert_eq!(back.get(3, 0), 1.0);
        assert!((back.get(1, 2) - 128.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn iou_basics() {
        assert_eq!(mask_iou(&[true, false], &[true, false]), 1.0);
        assert_eq!(mask_iou(&[true, false], &[false, true]), 0.0);
        assert_eq!(mask_iou(&[false, false], &[false, false]), 0.0);
        assert_eq!(mask_iou(&[true, true], &[true, false]), 0.5);
    }

    #[test]
    fn quarter_turn_moves_pixels() {
        let mut img = GrayImage::new(8, 8);
        img.set(6, 4, 1.0);
        let r = img.rotated(90.0);
        assert_eq!(r.count_above(0.5), 1);
        let full = img.rotated(360.0);
        assert_eq!(full, img);
    }
}
